"""Shared test utilities: finite-difference gradient oracle."""

from __future__ import annotations

import numpy as np

from conkd.nn import Tape, Tensor, backward, record


def finite_diff(build_loss, param: Tensor, step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of build_loss() w.r.t. one tensor.

    build_loss must rerun the forward pass (no tape needed) and return a float.
    Run under conkd.nn.precision(np.float64) or the comparison is noise.
    """
    g = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        lp = build_loss()
        flat[i] = orig - step
        lm = build_loss()
        flat[i] = orig
        gf[i] = (lp - lm) / (2.0 * step)
    return g


def analytic_grads(build_loss_tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    for p in params.values():
        p.grad = None
    tape = Tape()
    with record(tape):
        loss = build_loss_tensor()
    backward(tape, loss, params=params.values())
    return {k: p.grad for k, p in params.items()}


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    # floor the denominator so structurally zero gradients compare against
    # an absolute scale instead of finite-difference noise
    denom = max(float(np.linalg.norm(b.ravel())),
                float(np.linalg.norm(a.ravel())), 1e-6)
    return float(np.linalg.norm((a - b).ravel())) / denom


def assert_grads_close(build_loss_tensor, params: dict[str, Tensor],
                       tol: float = 1e-3, step: float = 1e-4):
    analytic = analytic_grads(build_loss_tensor, params)
    for name, p in params.items():
        fd = finite_diff(lambda: float(build_loss_tensor().data), p, step=step)
        err = rel_err(analytic[name], fd)
        assert err < tol, f"gradient mismatch for {name}: rel err {err:.2e}"
