import numpy as np
import pytest

from conkd.nn import Adam, Tensor, clip_gradients, global_norm


def _param(val):
    return Tensor(np.asarray(val, dtype=np.float32), requires_grad=True)


def test_zero_gradient_leaves_params_unchanged():
    p = _param([1.0, -2.0, 3.0])
    opt = Adam({"p": p}, lr=0.1)
    p.grad = np.zeros(3, dtype=np.float32)
    before = p.data.copy()
    opt.step()
    np.testing.assert_array_equal(p.data, before)
    assert opt.step_count == 1


def test_adam_hand_computed_single_step():
    # m=0.1, v=0.001, mhat=1, vhat=1 -> update = lr * 1/(1+eps) ~ 0.1
    p = _param(1.0)
    opt = Adam({"p": p}, lr=0.1, betas=(0.9, 0.999), eps=1e-8)
    p.grad = np.asarray(1.0, dtype=np.float32)
    opt.step()
    assert abs(float(p.data) - 0.9) < 1e-6


def test_adam_step_size_bound():
    rng = np.random.default_rng(3)
    p = _param(rng.normal(size=8))
    lr = 0.05
    opt = Adam({"p": p}, lr=lr)
    p.grad = rng.normal(size=8).astype(np.float32)
    before = p.data.copy()
    opt.step()
    delta = p.data - before
    assert (np.abs(delta) <= lr * (1 + 1e-5)).all()
    moved = np.abs(p.grad) > 1e-12
    assert (np.sign(delta[moved]) == -np.sign(p.grad[moved])).all()


def test_adam_shape_mismatch_rejected():
    p = _param([1.0, 2.0])
    opt = Adam({"p": p})
    p.grad = np.zeros(3, dtype=np.float32)
    with pytest.raises(ValueError):
        opt.step()


def test_clip_noop_within_bound():
    p = _param([0.3, 0.4])
    p.grad = np.array([0.3, 0.4], dtype=np.float32)  # norm 0.5
    clip_gradients({"p": p}, 1.0)
    np.testing.assert_allclose(p.grad, [0.3, 0.4])


def test_clip_scales_down():
    p = _param([0.0, 0.0])
    p.grad = np.array([3.0, 4.0], dtype=np.float32)  # norm 4 after scale 0.25? norm 5
    clip_gradients({"p": p}, 1.0)
    np.testing.assert_allclose(p.grad, [0.6, 0.8], atol=1e-7)


def test_clip_scale_factor():
    p = _param(np.zeros(4))
    p.grad = np.full(4, 2.0, dtype=np.float32)  # norm 4
    clip_gradients({"p": p}, 1.0)
    np.testing.assert_allclose(p.grad, np.full(4, 0.5), atol=1e-7)


def test_clip_rejects_nonpositive():
    p = _param([1.0])
    p.grad = np.ones(1, dtype=np.float32)
    with pytest.raises(ValueError):
        clip_gradients({"p": p}, 0.0)


def test_clip_never_increases_norm_and_preserves_direction():
    rng = np.random.default_rng(11)
    for _ in range(50):
        ps = {f"p{i}": _param(np.zeros(3)) for i in range(3)}
        for p in ps.values():
            p.grad = rng.normal(size=3).astype(np.float32) * rng.uniform(0.1, 5)
        before = {k: p.grad.copy() for k, p in ps.items()}
        norm0 = global_norm(p.grad for p in ps.values())
        max_norm = float(rng.uniform(0.2, 3.0))
        clip_gradients(ps, max_norm)
        norm1 = global_norm(p.grad for p in ps.values())
        assert norm1 <= max(norm0, max_norm) + 1e-5
        assert norm1 <= max_norm + 1e-4 or norm0 <= max_norm
        for k, p in ps.items():
            ratio = p.grad / before[k]
            np.testing.assert_allclose(ratio, ratio.flat[0], rtol=1e-4)
