"""ConvMF: a convolutional network that maps a snapshot X (m x n) to factors U, V.

Layout::

    X -> [conv -> act] * len(conv_layers) -> flatten
      -> [linear -> act] * len(stem_dims)                       (shared stem)
      -> U fork: [linear -> act] * len(fork_dims) -> linear(m*r)
      -> V fork: [linear -> act] * len(fork_dims) -> linear(r*n)

The final linear layer of each fork has no activation so the factors are
unbounded.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import Activation, Conv2D, Flatten, Linear, ShapeError

# Values tried in the original hyperparameter search, per axis.
SEARCH_GRID = {
    "activation": ("relu", "tanh", "leaky_relu", "sigmoid"),
    "optimizer": ("adam", "sgd", "adagrad"),
    "learning_rate": (1e-3, 5e-4, 1e-4),
    "conv_layer_count": (1, 2, 3, 4, 5),
    "kernel": (3, 5, 6),
    "stride": (1, 2, 3),
    "padding": (0, 1, 2, 3),
    "dilation": (1,),
    "stem_layer_count": (1, 2, 3, 4, 5, 6),
    "fork_layer_count": (1, 2, 3, 4, 5, 6),
}


def stem_dim_options(m: int, n: int) -> tuple[int, ...]:
    return (100, 200, 500, 1000, 2000) + tuple(n * m // 2**i for i in range(1, 6))


def fork_dim_options(m: int, r: int) -> tuple[int, ...]:
    extra = tuple(m * r // (9 - 2**i) for i in range(1, 6) if 9 - 2**i > 0)
    return tuple(range(100, 1001, 100)) + extra


@dataclass
class ConvSpec:
    kernel: int
    stride: int = 1
    padding: int = 0
    dilation: int = 1
    out_channels: int = 8


def _default_conv_layers() -> list[ConvSpec]:
    return [ConvSpec(kernel=5, stride=1, padding=3, out_channels=8), ConvSpec(kernel=3, stride=1, padding=0, out_channels=1)]


@dataclass
class Hyperparameters:
    activation: str = "tanh"
    optimizer: str = "adam"
    learning_rate: float = 1e-4
    conv_layers: list[ConvSpec] = field(default_factory=_default_conv_layers)
    stem_dims: list[int] = field(default_factory=lambda: [500, 200])
    fork_dims: list[int] = field(default_factory=lambda: [300, 200])
    rank: int = 12
    epochs: int = 200
    batch_size: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.activation not in SEARCH_GRID["activation"]:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.optimizer not in SEARCH_GRID["optimizer"]:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        for spec in self.conv_layers:
            if min(spec.kernel, spec.stride, spec.dilation, spec.out_channels) < 1 or spec.padding < 0:
                raise ValueError(f"invalid conv layer {spec}")
        if any(d < 1 for d in list(self.stem_dims) + list(self.fork_dims)):
            raise ValueError("layer widths must be positive")

    def extensions(self, m: int, n: int) -> list[str]:
        """Settings that fall outside the tested hyperparameter grid."""
        out = []
        checks = [
            ("activation", self.activation),
            ("optimizer", self.optimizer),
            ("learning_rate", self.learning_rate),
            ("conv_layer_count", len(self.conv_layers)),
            ("stem_layer_count", len(self.stem_dims)),
            ("fork_layer_count", len(self.fork_dims)),
        ]
        for spec in self.conv_layers:
            checks += [("kernel", spec.kernel), ("stride", spec.stride), ("padding", spec.padding), ("dilation", spec.dilation)]
        for axis, value in checks:
            if value not in SEARCH_GRID[axis]:
                out.append(f"{axis}={value}")
        out += [f"stem_dim={d}" for d in self.stem_dims if d not in stem_dim_options(m, n)]
        out += [f"fork_dim={d}" for d in self.fork_dims if d not in fork_dim_options(m, self.rank)]
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparameters":
        data = dict(data)
        if "conv_layers" in data:
            data["conv_layers"] = [c if isinstance(c, ConvSpec) else ConvSpec(**c) for c in data["conv_layers"]]
        for key in ("stem_dims", "fork_dims"):
            if key in data:
                data[key] = [int(d) for d in data[key]]
        known = cls.__dataclass_fields__
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown hyperparameter fields: {sorted(unknown)}")
        return cls(**data)


class ConvMFModel:
    """Parameters plus the layer graph they feed.

    ``params`` maps tensor names to arrays in a fixed insertion order; that
    order is also the checkpoint order.
    """

    def __init__(self, m: int, n: int, hyper: Hyperparameters, params: dict[str, np.ndarray] | None = None):
        hyper.validate()
        self.m, self.n, self.hyper = m, n, hyper
        self.rank = hyper.rank
        self.stem, self.fork_u, self.fork_v = _layer_graph(m, n, hyper)
        self.param_shapes = {}
        for layer in self.stem + self.fork_u + self.fork_v:
            self.param_shapes.update(layer.param_shapes())
        if params is None:
            params = _init_params(self, hyper.seed)
        self.params = params
        self._check_params()

    @property
    def input_shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def _check_params(self):
        if list(self.params) != list(self.param_shapes):
            raise ShapeError("parameter names do not match the declared architecture")
        for name, shape in self.param_shapes.items():
            if self.params[name].shape != tuple(shape):
                raise ShapeError(f"{name}: shape {self.params[name].shape}, expected {tuple(shape)}")

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    # -- forward / backward --------------------------------------------------

    def forward_batch(self, x: np.ndarray, keep_cache: bool = False):
        """``x`` is (B, m, n). Returns ``U`` (B, m, r), ``V`` (B, r, n) and the cache."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != (self.m, self.n):
            raise ShapeError(f"expected input (B, {self.m}, {self.n}), got {x.shape}")
        h = x[..., None]
        stem_cache = []
        for layer in self.stem:
            h, c = layer.forward(self.params, h)
            stem_cache.append(c)
        u, u_cache = _run(self.fork_u, self.params, h)
        v, v_cache = _run(self.fork_v, self.params, h)
        b = x.shape[0]
        u = u.reshape(b, self.m, self.rank)
        v = v.reshape(b, self.rank, self.n)
        cache = (stem_cache, u_cache, v_cache) if keep_cache else None
        return u, v, cache

    def forward(self, x: np.ndarray):
        """Factor a single ``m x n`` snapshot. Returns ``(U, V)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.m, self.n):
            raise ShapeError(f"expected input ({self.m}, {self.n}), got {x.shape}")
        u, v, _ = self.forward_batch(x[None])
        return u[0], v[0]

    def backward(self, cache, du: np.ndarray, dv: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given upstream gradients w.r.t. ``U`` and ``V``."""
        if cache is None:
            raise ShapeError("backward needs a cache from forward_batch(keep_cache=True)")
        stem_cache, u_cache, v_cache = cache
        if len(stem_cache) != len(self.stem) or len(u_cache) != len(self.fork_u) or len(v_cache) != len(self.fork_v):
            raise ShapeError("cache does not belong to this model")
        b = du.shape[0]
        if du.shape != (b, self.m, self.rank) or dv.shape != (b, self.rank, self.n):
            raise ShapeError(f"upstream gradient shapes {du.shape}, {dv.shape} do not match outputs")
        grads: dict[str, np.ndarray] = {}
        gh = _run_back(self.fork_u, self.params, du.reshape(b, -1), u_cache, grads)
        gh = gh + _run_back(self.fork_v, self.params, dv.reshape(b, -1), v_cache, grads)
        _run_back(self.stem, self.params, gh, stem_cache, grads)  # input gradient unused
        return {name: grads[name] for name in self.param_shapes}

    def loss_and_grad(self, x: np.ndarray):
        """Mean over the batch of ``||X - U V||_F^2`` and its parameter gradient."""
        u, v, cache = self.forward_batch(x, keep_cache=True)
        resid = u @ v - x
        b = x.shape[0]
        loss = float(np.sum(resid * resid)) / b
        du = (2.0 / b) * resid @ v.transpose(0, 2, 1)
        dv = (2.0 / b) * u.transpose(0, 2, 1) @ resid
        return loss, self.backward(cache, du, dv)

    def predict(self, frames: np.ndarray, chunk: int = 64):
        frames = np.asarray(frames, dtype=np.float64)
        us, vs = [], []
        for i in range(0, frames.shape[0], chunk):
            u, v, _ = self.forward_batch(frames[i : i + chunk])
            us.append(u)
            vs.append(v)
        return np.concatenate(us), np.concatenate(vs)


def _run(layers, params, h):
    caches = []
    for layer in layers:
        h, c = layer.forward(params, h)
        caches.append(c)
    return h, caches


def _run_back(layers, params, g, caches, grads):
    for layer, c in zip(reversed(layers), reversed(caches)):
        g, pg = layer.backward(params, g, c)
        grads.update(pg)
    return g


def _layer_graph(m: int, n: int, hyper: Hyperparameters):
    stem: list = []
    h, w, c = m, n, 1
    for i, spec in enumerate(hyper.conv_layers):
        conv = Conv2D(
            f"conv{i}", c, spec.out_channels, spec.kernel, spec.stride, spec.padding, spec.dilation, need_input_grad=i > 0
        )
        h, w, c = conv.output_shape(h, w)
        if h < 1 or w < 1:
            raise ShapeError(f"conv layer {i} produces non-positive output size {h}x{w}")
        stem += [conv, Activation(hyper.activation)]
    stem.append(Flatten())
    width = h * w * c
    for i, d in enumerate(hyper.stem_dims):
        stem += [Linear(f"stem{i}", width, d), Activation(hyper.activation)]
        width = d

    def fork(tag: str, out: int):
        layers: list = []
        wdt = width
        for i, d in enumerate(hyper.fork_dims):
            layers += [Linear(f"{tag}{i}", wdt, d), Activation(hyper.activation)]
            wdt = d
        layers.append(Linear(f"{tag}_out", wdt, out))
        return layers

    return stem, fork("fork_u", m * hyper.rank), fork("fork_v", hyper.rank * n)


def _init_params(model: ConvMFModel, seed: int) -> dict[str, np.ndarray]:
    # uniform in +-sqrt(1/fan_in) for weights and biases alike
    rng = np.random.default_rng(seed)
    params = {}
    for layer in model.stem + model.fork_u + model.fork_v:
        shapes = layer.param_shapes()
        if not shapes:
            continue
        bound = np.sqrt(1.0 / layer.fan_in())
        for name, shape in shapes.items():
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def build_convmf(m: int, n: int, hyper: Hyperparameters | None = None) -> ConvMFModel:
    return ConvMFModel(m, n, hyper if hyper is not None else Hyperparameters())
