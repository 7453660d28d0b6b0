import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asmplan import nn


def quadratic_loss(target):
    """loss(mlp) = 0.5 * sum((f(x) - target)^2) over a fixed input batch."""

    def fn(x):
        def loss_and_grad(mlp):
            out, cache = nn.forward(mlp, x)
            diff = out - target
            loss = 0.5 * float((diff * diff).sum())
            grads = nn.backward(mlp, cache, diff)
            return loss, grads

        return loss_and_grad

    return fn


def test_init_deterministic_per_seed():
    a = nn.init([11, 64, 8], seed=5)
    b = nn.init([11, 64, 8], seed=5)
    c = nn.init([11, 64, 8], seed=6)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    assert not all(
        np.array_equal(wa, wc) for wa, wc in zip(a.weights, c.weights)
    )


def test_init_biases_zero_and_weight_bounds():
    mlp = nn.init([11, 64, 8], seed=0)
    for b in mlp.biases:
        assert not b.any()
    for w, fan_in, fan_out in zip(mlp.weights, (11, 64), (64, 8)):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        assert np.abs(w).max() <= bound


def test_init_rejects_bad_sizes():
    with pytest.raises(ValueError):
        nn.init([4])
    with pytest.raises(ValueError):
        nn.init([4, 0, 2])
    with pytest.raises(ValueError):
        nn.init([4, 3], hidden="sigmoid")


def test_forward_zero_parameters():
    mlp = nn.init([3, 5, 2], seed=0)
    for w in mlp.weights:
        w[:] = 0.0
    out, _ = nn.forward(mlp, np.ones((4, 3)))
    assert not out.any()


def test_forward_identity_linear_layer():
    mlp = nn.init([3, 3], seed=0)
    mlp.weights[0][:] = np.eye(3)
    x = np.arange(6, dtype=float).reshape(2, 3)
    out, _ = nn.forward(mlp, x)
    assert np.array_equal(out, x)


def test_forward_batch_rows_independent():
    mlp = nn.init([4, 8, 3], seed=1)
    x = np.random.default_rng(2).normal(size=(2, 4))
    both, _ = nn.forward(mlp, x)
    one, _ = nn.forward(mlp, x[:1])
    two, _ = nn.forward(mlp, x[1:])
    # BLAS may pick different kernels for the two shapes, so compare to
    # double-precision tolerance rather than bit for bit
    assert np.allclose(both, np.vstack([one, two]), rtol=0, atol=1e-12)


def test_forward_shape_check():
    mlp = nn.init([4, 3], seed=0)
    with pytest.raises(ValueError):
        nn.forward(mlp, np.ones((2, 5)))


def test_backward_zero_grad_and_linearity():
    mlp = nn.init([4, 6, 2], seed=3)
    x = np.random.default_rng(4).normal(size=(5, 4))
    out, cache = nn.forward(mlp, x)
    zero = nn.backward(mlp, cache, np.zeros_like(out))
    assert all(not g.any() for g in zero.parameters())
    g = np.random.default_rng(5).normal(size=out.shape)
    g1 = nn.backward(mlp, cache, g)
    g3 = nn.backward(mlp, cache, 3.0 * g)
    for a, b in zip(g1.parameters(), g3.parameters()):
        assert np.allclose(3.0 * a, b, atol=1e-12)


def test_gradient_check_random_net_passes():
    rng = np.random.default_rng(42)
    mlp = nn.init([11, 16, 8], seed=7)
    x = rng.normal(size=(4, 11))
    target = rng.normal(size=(4, 8))
    report = nn.gradient_check(mlp, quadratic_loss(target)(x))
    assert report["passed"], report
    assert report["max_rel_error"] < 1e-6


def test_gradient_check_tanh_net_passes():
    rng = np.random.default_rng(10)
    mlp = nn.init([6, 12, 12, 3], seed=11, hidden="tanh")
    x = rng.normal(size=(3, 6))
    target = rng.normal(size=(3, 3))
    report = nn.gradient_check(mlp, quadratic_loss(target)(x))
    assert report["passed"], report


def test_gradient_check_catches_corruption():
    rng = np.random.default_rng(12)
    mlp = nn.init([5, 7, 2], seed=13)
    x = rng.normal(size=(3, 5))
    target = rng.normal(size=(3, 2))
    honest = quadratic_loss(target)(x)

    def corrupted(m):
        loss, grads = honest(m)
        grads.d_weights[0] = grads.d_weights[0] * 1.01
        return loss, grads

    assert not nn.gradient_check(mlp, corrupted)["passed"]


def test_gradient_check_zero_tolerance_fails():
    rng = np.random.default_rng(14)
    mlp = nn.init([5, 7, 2], seed=15)
    x = rng.normal(size=(3, 5))
    target = rng.normal(size=(3, 2))
    report = nn.gradient_check(mlp, quadratic_loss(target)(x), tolerance=0.0)
    assert not report["passed"]


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_gradient_property_random_tanh_nets(seed):
    # tanh keeps the loss smooth, so finite differences are sharp everywhere
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(2, 7)) for _ in range(int(rng.integers(2, 4)))]
    mlp = nn.init(sizes, seed=seed, hidden="tanh")
    x = rng.normal(size=(2, sizes[0]))
    target = rng.normal(size=(2, sizes[-1]))
    report = nn.gradient_check(mlp, quadratic_loss(target)(x))
    assert report["passed"], report


def test_sgd_updates():
    mlp = nn.init([3, 2], seed=0)
    before = [p.copy() for p in mlp.parameters()]
    grads = nn.Gradients(
        d_weights=[np.ones_like(mlp.weights[0])],
        d_biases=[np.ones_like(mlp.biases[0])],
    )
    nn.apply_update(mlp, grads, nn.OptimizerState.sgd(lr=0.0))
    for p, b in zip(mlp.parameters(), before):
        assert np.array_equal(p, b)
    self_grads = nn.Gradients(
        d_weights=[mlp.weights[0].copy()], d_biases=[mlp.biases[0].copy()]
    )
    nn.apply_update(mlp, self_grads, nn.OptimizerState.sgd(lr=1.0))
    for p in mlp.parameters():
        assert not p.any()


def test_adam_first_step_magnitude():
    mlp = nn.init([3, 2], seed=1)
    grads = nn.Gradients(
        d_weights=[np.full_like(mlp.weights[0], 0.7)],
        d_biases=[np.full_like(mlp.biases[0], -0.3)],
    )
    before = [p.copy() for p in mlp.parameters()]
    nn.apply_update(mlp, grads, nn.OptimizerState.adam(lr=1e-3))
    for p, b, g in zip(mlp.parameters(), before, grads.parameters()):
        step = b - p
        assert np.allclose(np.abs(step), 1e-3, rtol=1e-4)
        assert np.all(np.sign(step) == np.sign(g))


def test_adam_against_reference_iteration():
    # three Adam steps on a single scalar parameter, checked against the
    # update rule evaluated longhand
    mlp = nn.Mlp(layer_sizes=(1, 1), weights=[np.array([[0.5]])],
                 biases=[np.array([0.0])], hidden="relu")
    opt = nn.OptimizerState.adam(lr=0.01)
    gs = [0.2, -0.4, 0.1]
    p = 0.5
    m = v = 0.0
    for t, g in enumerate(gs, start=1):
        nn.apply_update(
            mlp,
            nn.Gradients(d_weights=[np.array([[g]])], d_biases=[np.array([0.0])]),
            opt,
        )
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        p -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert mlp.weights[0][0, 0] == pytest.approx(p, abs=1e-15)


def test_apply_update_keeps_parameters_finite():
    mlp = nn.init([4, 4], seed=2)
    opt = nn.OptimizerState.adam(lr=0.1)
    rng = np.random.default_rng(3)
    for _ in range(50):
        grads = nn.Gradients(
            d_weights=[rng.normal(size=w.shape) * 100 for w in mlp.weights],
            d_biases=[rng.normal(size=b.shape) * 100 for b in mlp.biases],
        )
        nn.apply_update(mlp, grads, opt)
    assert all(np.isfinite(p).all() for p in mlp.parameters())


def test_snapshot_roundtrip(tmp_path):
    mlp = nn.init([5, 9, 4], seed=21, hidden="tanh")
    path = tmp_path / "net.json"
    nn.save_snapshot(mlp, path)
    loaded = nn.load_snapshot(path)
    assert loaded.layer_sizes == mlp.layer_sizes
    assert loaded.hidden == "tanh"
    for a, b in zip(mlp.parameters(), loaded.parameters()):
        assert np.array_equal(a, b)  # JSON float repr round-trips exactly


def test_snapshot_rejects_foreign_files(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"format": "something-else", "version": 1}')
    with pytest.raises(ValueError, match="not an mlp snapshot"):
        nn.load_snapshot(path)
