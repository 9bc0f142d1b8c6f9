import numpy as np
import pytest

from vlasov_lrmf.convmf import (
    SEARCH_GRID,
    ConvMFModel,
    ConvSpec,
    Hyperparameters,
    ShapeError,
    build_convmf,
)
from vlasov_lrmf.convmf.gradcheck import gradient_check
from vlasov_lrmf.convmf.model import fork_dim_options, stem_dim_options
from vlasov_lrmf.evalbench.metrics import normalized_loss, svd_loss


def tiny_hyper(**kw):
    base = dict(
        conv_layers=[ConvSpec(3, 1, 1, out_channels=3), ConvSpec(3, 1, 0, out_channels=2)],
        stem_dims=[24, 16],
        fork_dims=[20, 12],
        rank=3,
        epochs=2,
        batch_size=4,
    )
    base.update(kw)
    return Hyperparameters(**base)


def closed_form_count(m, n, r):
    h1, w1 = m + 6 - 4, n + 6 - 4
    h2, w2 = h1 - 2, w1 - 2
    conv = (25 * 1 * 8 + 8) + (9 * 8 * 1 + 1)
    flat = h2 * w2 * 1
    stem = (flat * 500 + 500) + (500 * 200 + 200)
    head = (200 * 300 + 300) + (300 * 200 + 200)
    return conv + stem + 2 * head + (200 * m * r + m * r) + (200 * r * n + r * n)


def test_default_architecture_head_sizes():
    model = build_convmf(64, 128, Hyperparameters(rank=12))
    assert model.param_shapes["fork_u_out.weight"] == (200, 768)
    assert model.param_shapes["fork_v_out.weight"] == (200, 1536)
    assert [k for k in model.param_shapes if k.endswith(".weight")] == [
        "conv0.weight", "conv1.weight", "stem0.weight", "stem1.weight",
        "fork_u0.weight", "fork_u1.weight", "fork_u_out.weight",
        "fork_v0.weight", "fork_v1.weight", "fork_v_out.weight",
    ]


@pytest.mark.parametrize("m, n, r", [(64, 128, 12), (64, 128, 5), (128, 256, 30)])
def test_parameter_count_matches_closed_form(m, n, r):
    assert build_convmf(m, n, Hyperparameters(rank=r)).parameter_count == closed_form_count(m, n, r)


def test_same_seed_same_initialization():
    a = build_convmf(16, 32, tiny_hyper(seed=3))
    b = build_convmf(16, 32, tiny_hyper(seed=3))
    c = build_convmf(16, 32, tiny_hyper(seed=4))
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert not np.array_equal(a.params["stem0.weight"], c.params["stem0.weight"])


def test_initialization_bounds():
    model = build_convmf(16, 32, tiny_hyper())
    for layer in model.stem + model.fork_u + model.fork_v:
        for name in layer.param_shapes():
            assert np.max(np.abs(model.params[name])) <= np.sqrt(1.0 / layer.fan_in())


def test_forward_shape_contract_for_all_ranks():
    for m, n in ((64, 128), (128, 256)):
        x = np.zeros((m, n))
        for r in range(5, 31):
            hp = Hyperparameters(rank=r, stem_dims=[8], fork_dims=[8])
            u, v = ConvMFModel(m, n, hp).forward(x)
            assert u.shape == (m, r) and v.shape == (r, n)


def test_forward_is_pure(rng):
    model = build_convmf(16, 32, tiny_hyper())
    x = rng.random((16, 32))
    u1, v1 = model.forward(x)
    u2, v2 = model.forward(x)
    assert np.array_equal(u1, u2) and np.array_equal(v1, v2)


def test_zero_output_layers_give_unit_loss(rng):
    model = build_convmf(16, 32, tiny_hyper())
    for name in ("fork_u_out.weight", "fork_u_out.bias", "fork_v_out.weight", "fork_v_out.bias"):
        model.params[name][:] = 0.0
    x = rng.random((16, 32))
    u, v = model.forward(x)
    assert not u.any() and not v.any()
    assert normalized_loss(x, u, v) == 1.0


def test_forward_rejects_wrong_shape():
    model = build_convmf(16, 32, tiny_hyper())
    with pytest.raises(ShapeError):
        model.forward(np.zeros((32, 16)))
    with pytest.raises(ShapeError):
        model.forward_batch(np.zeros((2, 16, 31)))


def test_zero_upstream_gradient_gives_zero_gradients(rng):
    model = build_convmf(16, 32, tiny_hyper())
    x = rng.random((3, 16, 32))
    _, _, cache = model.forward_batch(x, keep_cache=True)
    grads = model.backward(cache, np.zeros((3, 16, 3)), np.zeros((3, 3, 32)))
    assert set(grads) == set(model.params)
    assert all(not g.any() for g in grads.values())


def test_backward_rejects_mismatched_gradients(rng):
    model = build_convmf(16, 32, tiny_hyper())
    _, _, cache = model.forward_batch(rng.random((2, 16, 32)), keep_cache=True)
    with pytest.raises(ShapeError):
        model.backward(cache, np.zeros((2, 16, 4)), np.zeros((2, 4, 32)))
    with pytest.raises(ShapeError):
        model.backward(None, np.zeros((2, 16, 3)), np.zeros((2, 3, 32)))


def test_invalid_chain_raises():
    with pytest.raises(ShapeError):
        ConvMFModel(8, 8, tiny_hyper(conv_layers=[ConvSpec(5, 3, 0), ConvSpec(5, 3, 0)]))


@pytest.mark.parametrize("activation", sorted(SEARCH_GRID["activation"]))
def test_gradients_match_finite_differences(activation, small_series):
    model = build_convmf(16, 32, tiny_hyper(activation=activation, seed=2))
    x = small_series.frames[[3, 17]]
    for group, res in gradient_check(model, x, samples_per_group=300).items():
        assert res.relative_error < 1e-5, (group, res.relative_error)


def test_gradient_check_covers_every_group(small_series):
    model = build_convmf(16, 32, tiny_hyper())
    res = gradient_check(model, small_series.frames[:2], samples_per_group=50)
    assert set(res) == {"conv", "stem", "fork_u", "fork_v"}
    assert all(r.count == 50 for r in res.values())


def test_hyperparameter_validation():
    for bad in (dict(learning_rate=0.0), dict(rank=0), dict(activation="gelu"), dict(optimizer="rmsprop"),
                dict(stem_dims=[0]), dict(conv_layers=[ConvSpec(0)])):
        with pytest.raises(ValueError):
            Hyperparameters(**bad).validate()


def test_default_hyperparameters_sit_on_the_grid():
    assert Hyperparameters().extensions(64, 128) == []


def test_extensions_are_flagged():
    hp = Hyperparameters(learning_rate=2e-3, stem_dims=[123], conv_layers=[ConvSpec(7)])
    ext = hp.extensions(64, 128)
    assert "learning_rate=0.002" in ext and "stem_dim=123" in ext and "kernel=7" in ext


def test_grid_dimension_options():
    assert stem_dim_options(64, 128) == (100, 200, 500, 1000, 2000, 4096, 2048, 1024, 512, 256)
    assert 500 in fork_dim_options(64, 12)


def test_hyperparameters_dict_round_trip():
    hp = tiny_hyper(activation="relu", learning_rate=5e-4)
    assert Hyperparameters.from_dict(hp.to_dict()) == hp
    with pytest.raises(ValueError, match="unknown"):
        Hyperparameters.from_dict({"rank": 3, "width": 9})


def test_trained_model_beats_rank_one_svd_on_training_frame(small_series):
    from vlasov_lrmf.convmf import train
    from vlasov_lrmf.evalbench.splits import SplitSpec

    hp = tiny_hyper(rank=12, epochs=60, learning_rate=1e-3, batch_size=4, stem_dims=[64, 32], fork_dims=[48, 32])
    model = build_convmf(16, 32, hp)
    report = train(model, small_series, SplitSpec("random"), hp)
    # the initial Landau frame is exactly rank one, so it is left out
    for i in report.split.train[report.split.train > 0]:
        x = small_series.frames[i]
        assert normalized_loss(x, *model.forward(x)) < svd_loss(x, 1)
