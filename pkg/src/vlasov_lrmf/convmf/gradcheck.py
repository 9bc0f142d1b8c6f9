"""Central finite-difference check of ConvMF backpropagation.

Parameters are grouped by where they sit in the graph: ``conv``, ``stem``
(shared linear layers), ``fork_u`` and ``fork_v``. For each sampled entry the
loss is re-evaluated at ``p +- h``. Only the layers from the perturbed one
onward are rerun; everything upstream is cached from a single clean pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Conv2D
from .model import ConvMFModel


@dataclass
class GroupCheck:
    group: str
    names: list[str]
    analytic: np.ndarray
    numeric: np.ndarray

    @property
    def count(self) -> int:
        return self.analytic.size

    @property
    def relative_error(self) -> float:
        """``||numeric - analytic|| / ||analytic||`` over the sampled entries."""
        scale = np.linalg.norm(self.analytic)
        diff = np.linalg.norm(self.numeric - self.analytic)
        return float(diff / scale) if scale > 0 else float(diff)

    @property
    def max_entry_error(self) -> float:
        """Largest entrywise error relative to the largest sampled gradient."""
        scale = np.max(np.abs(self.analytic))
        diff = np.max(np.abs(self.numeric - self.analytic))
        return float(diff / scale) if scale > 0 else float(diff)


def _group_of(name: str) -> str:
    if name.startswith("conv"):
        return "conv"
    if name.startswith("stem"):
        return "stem"
    return "fork_u" if name.startswith("fork_u") else "fork_v"


def _loss(model, u, v, x):
    b = x.shape[0]
    resid = u.reshape(b, model.m, model.rank) @ v.reshape(b, model.rank, model.n) - x
    return float(np.sum(resid * resid)) / b


class _Replay:
    """Reruns the graph from a given layer with everything upstream cached."""

    def __init__(self, model: ConvMFModel, x: np.ndarray):
        self.model, self.x = model, x
        self.stem_inputs = []
        h = x[..., None]
        for layer in model.stem:
            self.stem_inputs.append(h)
            h, _ = layer.forward(model.params, h)
        self.stem_out = h
        self.u_inputs, self.u_out = self._trace(model.fork_u, h)
        self.v_inputs, self.v_out = self._trace(model.fork_v, h)
        self.owner = {}
        for where, layers in (("stem", model.stem), ("fork_u", model.fork_u), ("fork_v", model.fork_v)):
            for i, layer in enumerate(layers):
                for pname in layer.param_shapes():
                    self.owner[pname] = (where, i)

    def _trace(self, layers, h):
        inputs = []
        for layer in layers:
            inputs.append(h)
            h, _ = layer.forward(self.model.params, h)
        return inputs, h

    @staticmethod
    def _run(layers, params, h):
        for layer in layers:
            h, _ = layer.forward(params, h)
        return h

    def loss(self, pname: str) -> float:
        m, p = self.model, self.model.params
        where, i = self.owner[pname]
        if where == "stem":
            h = self._run(m.stem[i:], p, self.stem_inputs[i])
            u, v = self._run(m.fork_u, p, h), self._run(m.fork_v, p, h)
        elif where == "fork_u":
            u, v = self._run(m.fork_u[i:], p, self.u_inputs[i]), self.v_out
        else:
            u, v = self.u_out, self._run(m.fork_v[i:], p, self.v_inputs[i])
        return _loss(m, u, v, self.x)


def gradient_check(
    model: ConvMFModel,
    x: np.ndarray,
    samples_per_group: int = 1000,
    h: float = 1e-5,
    seed: int = 0,
) -> dict[str, GroupCheck]:
    """Compare ``model.loss_and_grad(x)`` against central differences.

    Up to ``samples_per_group`` entries are drawn without replacement from
    each group; groups with fewer entries are checked exhaustively.
    """
    x = np.asarray(x, dtype=np.float64)
    _, grads = model.loss_and_grad(x)
    replay = _Replay(model, x)
    rng = np.random.default_rng(seed)

    groups: dict[str, list[str]] = {}
    for name in model.params:
        groups.setdefault(_group_of(name), []).append(name)

    out = {}
    for group, names in groups.items():
        sizes = np.array([model.params[nm].size for nm in names])
        total = int(sizes.sum())
        picks = rng.choice(total, size=min(samples_per_group, total), replace=False)
        picks.sort()
        tensor_of = np.searchsorted(np.cumsum(sizes), picks, side="right")
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        analytic = np.empty(picks.size)
        numeric = np.empty(picks.size)
        for k, (flat, t) in enumerate(zip(picks, tensor_of)):
            name = names[t]
            arr = model.params[name].reshape(-1)
            j = flat - offsets[t]
            orig = arr[j]
            arr[j] = orig + h
            lp = replay.loss(name)
            arr[j] = orig - h
            lm = replay.loss(name)
            arr[j] = orig
            numeric[k] = (lp - lm) / (2 * h)
            analytic[k] = grads[name].reshape(-1)[j]
        out[group] = GroupCheck(group, names, analytic, numeric)
    return out


def has_conv(model: ConvMFModel) -> bool:
    return any(isinstance(layer, Conv2D) for layer in model.stem)
