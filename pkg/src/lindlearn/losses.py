"""Point-wise losses on observable series and their derivatives."""
from __future__ import annotations

import numpy as np

__all__ = ["LOSS_KINDS", "loss", "loss_derivative"]

LOSS_KINDS = ("MSE", "MAE")
# residuals below this magnitude give no MAE impulse (subgradient tie-break)
MAE_DEADBAND = 1e-12


def _kind(kind: str) -> str:
    k = kind.upper()
    if k not in LOSS_KINDS:
        raise ValueError(f"loss kind must be one of {LOSS_KINDS}, got {kind!r}")
    return k


def loss(pred, real, kind: str = "MSE", n: int | None = None) -> float:
    """``(1/N) sum (pred - real)^2`` or ``(1/N) sum |pred - real|``.

    ``N`` defaults to the number of entries; pass ``n`` to normalize by a
    different data count (e.g. points per observable).
    """
    pred = np.asarray(pred, dtype=float)
    real = np.asarray(real, dtype=float)
    if pred.shape != real.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {real.shape}")
    r = pred - real
    n = r.size if n is None else n
    if _kind(kind) == "MSE":
        return float(np.sum(r * r) / n)
    return float(np.sum(np.abs(r)) / n)


def loss_derivative(pred, real, kind: str = "MSE", n: int | None = None) -> np.ndarray:
    """Derivative of :func:`loss` with respect to each prediction."""
    pred = np.asarray(pred, dtype=float)
    real = np.asarray(real, dtype=float)
    r = pred - real
    n = r.size if n is None else n
    if _kind(kind) == "MSE":
        return 2.0 * r / n
    s = np.sign(r)
    s[np.abs(r) < MAE_DEADBAND] = 0.0
    return s / n
