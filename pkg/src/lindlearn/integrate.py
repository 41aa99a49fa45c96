"""Fixed-step explicit integrators (forward Euler and classic RK4)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels

__all__ = ["IntegrationPlan", "StepGrid", "integrate", "propagate", "uniform_times"]

METHODS = {"euler": 0, "rk4": 1}


def uniform_times(t_final: float, n: int) -> np.ndarray:
    """``t_k = k t_final / n`` for ``k = 0 .. n-1``."""
    return np.arange(n) * (t_final / n)


@dataclass(frozen=True)
class IntegrationPlan:
    """Where to record and how finely to step.

    Each interval between consecutive recorded times (and between ``t_start``
    and the first observation, if they differ) is split into exactly
    ``substeps_per_interval`` equal steps.
    """

    observation_times: tuple
    t_start: float = 0.0
    substeps_per_interval: int = 10
    method: str = "rk4"
    t_end: float | None = None

    def __post_init__(self):
        times = tuple(float(t) for t in np.atleast_1d(self.observation_times))
        object.__setattr__(self, "observation_times", times)
        if not times:
            raise ValueError("at least one observation time is required")
        if self.substeps_per_interval < 1:
            raise ValueError("substeps_per_interval must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {sorted(METHODS)}")
        if np.any(np.diff(times) <= 0):
            raise ValueError("observation times must be strictly increasing")
        if times[0] < self.t_start:
            raise ValueError("observation times must not precede t_start")
        t_end = times[-1] if self.t_end is None else float(self.t_end)
        if times[-1] > t_end:
            raise ValueError("observation times must lie within [t_start, t_end]")
        object.__setattr__(self, "t_end", t_end)

    def grid(self) -> "StepGrid":
        nodes = (self.t_start,) + self.observation_times
        seg, hs, starts = [], [], []
        for a, b in zip(nodes[:-1], nodes[1:]):
            m = 0 if b == a else self.substeps_per_interval
            h = (b - a) / m if m else 0.0
            seg.append(m)
            hs.extend([h] * m)
            starts.extend(a + h * np.arange(m))
        return StepGrid(
            seg_steps=np.array(seg, dtype=np.int64),
            hs=np.array(hs, dtype=np.float64),
            t_steps=np.array(starts, dtype=np.float64),
            method=METHODS[self.method],
        )


@dataclass(frozen=True)
class StepGrid:
    seg_steps: np.ndarray
    hs: np.ndarray
    t_steps: np.ndarray
    method: int

    @property
    def n_steps(self) -> int:
        return len(self.hs)

    def control_values(self, probe, n_ctrl: int) -> np.ndarray:
        """Control amplitudes at every step's start, midpoint and end: ``(n_steps, 3, n_ctrl)``."""
        if probe is None or n_ctrl == 0:
            return np.zeros((self.n_steps, 3, max(n_ctrl, 0)))
        t = np.stack([self.t_steps, self.t_steps + 0.5 * self.hs, self.t_steps + self.hs], axis=1)
        return np.ascontiguousarray(probe.values(t), dtype=np.float64)

    def batch_control_values(self, probes, n_ctrl: int) -> np.ndarray:
        """Stacked :meth:`control_values` for several trajectories: ``(n_steps, 3, n_ctrl, B)``."""
        return np.ascontiguousarray(np.stack([self.control_values(p, n_ctrl) for p in probes], axis=-1))


def integrate(f: Callable, y0, plan: IntegrationPlan, dense: bool = False):
    """Integrate ``dy/dt = f(t, y)`` for an arbitrary array state.

    Returns the states at the observation times (stacked along axis 0) and,
    with ``dense=True``, also ``(times, states)`` of every substep.
    """
    g = plan.grid()
    y = np.array(y0, dtype=np.result_type(np.asarray(y0), np.float64))
    out, trace_t, trace_y = [], [plan.t_start], [y.copy()]
    k = 0
    for s, m in enumerate(g.seg_steps):
        for _ in range(m):
            t, h = g.t_steps[k], g.hs[k]
            if g.method == 0:
                y = y + h * f(t, y)
            else:
                k1 = f(t, y)
                k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
                k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
                k4 = f(t + h, y + h * k3)
                y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            k += 1
            if not np.all(np.isfinite(y)):
                raise FloatingPointError(f"non-finite state at t={t + h:.6g}")
            if dense:
                trace_t.append(t + h)
                trace_y.append(y.copy())
        out.append(y.copy())
    out = np.array(out)
    if dense:
        return out, (np.array(trace_t), np.array(trace_y))
    return out


def propagate(system, theta, x0, plan: IntegrationPlan, probe=None, backend: str | None = None,
              include_start: bool = False) -> np.ndarray:
    """Propagate a :class:`~lindlearn.superop.RealSystem`; returns states at the observation times.

    ``x0`` is one real state ``(n,)`` or a batch ``(n, B)``; with a batch,
    ``probe`` may be a sequence holding one probe per column. The output has
    shape ``(n_times, n)`` or ``(n_times, n, B)`` accordingly.
    """
    impl = kernels.get_backend(backend)
    g = plan.grid()
    a, _ = system.drift_arrays(theta)
    x0 = np.asarray(x0, dtype=np.float64)
    single = x0.ndim == 1
    X0 = x0[:, None] if single else x0
    probes = probe if isinstance(probe, (list, tuple)) else [probe] * X0.shape[1]
    if len(probes) != X0.shape[1]:
        raise ValueError("need one probe per initial state")
    pvals = g.batch_control_values(probes, system.n_controls)
    rec = impl.forward(a, system.ctrl, system.n_controls, g.hs, pvals, g.seg_steps,
                       np.ascontiguousarray(X0), g.method)
    if single:
        rec = rec[..., 0]
    return rec if include_start else rec[1:]
