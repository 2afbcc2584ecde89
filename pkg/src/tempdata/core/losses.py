"""Scalar loss pieces shared by the representation, dynamics and policy losses.

Each helper returns the value together with its derivative so callers can
feed the result straight into an :meth:`MLP.vjp` pullback.
"""

from __future__ import annotations

import numpy as np


def expectile_weight(x: np.ndarray, tau: float) -> np.ndarray:
    """``|tau - 1(x < 0)|``."""
    return np.where(x < 0.0, 1.0 - tau, tau)


def expectile_loss(x: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Asymmetric squared loss ``|tau - 1(x < 0)| * x^2`` and its derivative in ``x``."""
    w = expectile_weight(x, tau)
    return w * x * x, 2.0 * w * x


def fit_expectile(
    samples: np.ndarray,
    tau: float,
    *,
    lr: float = 0.5,
    steps: int = 20_000,
    tol: float = 1e-12,
) -> float:
    """Minimize ``mean(L_tau(x_i - m))`` over ``m`` by gradient descent.

    The gradient-based counterpart of :func:`tempdata.core.oracle.expectile_closed_form`.
    """
    x = np.asarray(samples, dtype=np.float64)
    m = float(x.mean())
    # Curvature is at most 2 * max(tau, 1 - tau); scale the step to stay stable.
    step = lr / max(tau, 1.0 - tau)
    for _ in range(steps):
        _, d = expectile_loss(x - m, tau)
        g = -float(d.mean())
        m -= step * g
        if abs(g) < tol:
            break
    return m


def row_norm(diff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise Euclidean norm and its gradient ``diff / ‖diff‖`` (zero at the origin)."""
    norm = np.linalg.norm(diff, axis=-1)
    safe = np.where(norm > 0.0, norm, 1.0)
    unit = np.where((norm > 0.0)[..., None], diff / safe[..., None], 0.0)
    return norm, unit
