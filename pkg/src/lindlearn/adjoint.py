"""Adjoint-state gradients of observation losses with respect to ``theta = (alpha, gamma)``.

The forward solve checkpoints the state at every observation time. The
backward sweep walks the segments from the last observation to the first:
the loss impulse ``dL_n/dx(t_n)`` is added to the adjoint at ``t_n``, the
segment is replayed forward from its checkpoint, and the adjoint and the
parameter accumulator are carried back through the integrator stages. The
sweep is the exact transpose of the discrete integrator, so the result is the
gradient of the loss actually computed by the forward pass.
"""
from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .engine import LindbladModel, resolve_operator
from .integrate import IntegrationPlan, StepGrid
from .losses import loss as loss_value
from .losses import loss_derivative
from .superop import RealSystem

__all__ = [
    "AdjointState",
    "BatchProblem",
    "param_jacobians",
    "prepare_batch",
    "forward_pass",
    "backward_pass",
    "value_and_grad",
    "loss_only",
    "predictions",
    "observable_gradients",
]

# stage inputs are kept from the forward pass (no backward replay) when they fit
STAGE_BUDGET_MB = float(os.environ.get("LINDLEARN_STAGE_MB", "1024"))


@dataclass
class AdjointState:
    """Adjoint at ``t_0`` (``a``), parameter accumulator ``a_theta`` and the
    time component ``a_t = a(t_N) . f(t_N)`` (reported only)."""

    a: np.ndarray
    a_theta: np.ndarray
    a_t: float


@dataclass(eq=False)
class BatchProblem:
    """Batches that share one time grid, reduced to real arrays.

    ``x0`` is ``(n, B)``, ``pvals`` is ``(n_steps, 3, n_ctrl, B)``, ``O`` holds
    the observable rows (``n_obs x n``) and ``targets`` is
    ``(B, n_times, n_obs)``.
    """

    grid: StepGrid
    pvals: np.ndarray
    x0: np.ndarray
    O: np.ndarray
    targets: np.ndarray
    probes: tuple = ()
    _stages: dict = field(default_factory=dict, repr=False)

    def stage_buffer(self):
        """Reusable buffer for the forward stage inputs (one per thread), or ``None`` if over budget."""
        n_stage = 1 if self.grid.method == 0 else 4
        shape = (self.grid.n_steps, n_stage, self.x0.size)
        if self.grid.n_steps == 0 or 8 * np.prod(shape) > STAGE_BUDGET_MB * 2 ** 20:
            return None
        key = threading.get_ident()
        buf = self._stages.get(key)
        if buf is None or buf.shape != shape:
            buf = self._stages[key] = np.empty(shape)
        return buf

    @property
    def n_batches(self) -> int:
        return self.targets.shape[0]

    @property
    def n_times(self) -> int:
        return self.targets.shape[1]


def param_jacobians(model: LindbladModel, rho, t: float = 0.0):
    """Partial derivatives of the right-hand side at ``rho``.

    Returns two lists: ``+i[g_mu, rho]`` for every Hamiltonian coefficient and
    ``g rho g^dag - {g^dag g, rho}/2`` for every dissipation strength. They
    do not depend on ``t`` because the probe carries no learned parameters.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    d_alpha = [1j * (g @ rho - rho @ g) for g in model.h_ops]
    d_gamma = []
    for g in model.c_ops:
        gd = g.conj().T
        gdg = gd @ g
        d_gamma.append(g @ rho @ gd - 0.5 * (gdg @ rho + rho @ gdg))
    return d_alpha, d_gamma


def prepare_batch(system: RealSystem, batches, substeps: int = 10, method: str = "rk4",
                  observables=None) -> list[BatchProblem]:
    """Compile :class:`~lindlearn.dataset.Batch` objects against ``system``.

    Accepts one batch or a sequence; batches with identical times and
    observables are grouped into a single problem, preserving their order.
    """
    if not isinstance(batches, (list, tuple)):
        batches = [batches]
    model, frame = system.model, system.frame
    groups: dict = {}
    for b in batches:
        labels = tuple(b.observables if observables is None else observables)
        groups.setdefault((tuple(np.asarray(b.times, dtype=float)), labels), []).append(b)
    out = []
    for (times, labels), members in groups.items():
        grid = IntegrationPlan(times, substeps_per_interval=substeps, method=method).grid()
        for b in members:
            if b.probe is not None and system.n_controls != b.probe.n_controls:
                raise ValueError("system controls do not match the batch probe")
        O = np.array([frame.observable(resolve_operator(model.family, lab, model.n_sites)) for lab in labels])
        probes = tuple(b.probe for b in members)
        out.append(BatchProblem(
            grid=grid,
            pvals=grid.batch_control_values(probes, system.n_controls),
            x0=np.ascontiguousarray(np.stack([frame.to_real(b.rho0) for b in members], axis=1)),
            O=O,
            targets=np.stack([np.asarray(b.values, dtype=float) for b in members]),
            probes=probes,
        ))
    return out


def forward_pass(system: RealSystem, theta, prob: BatchProblem, backend: str | None = None,
                 drift=None, stages=None) -> np.ndarray:
    """Checkpoints ``x`` at ``t_start`` and every observation time: ``(n_times + 1, n, B)``.

    ``stages`` (see :meth:`BatchProblem.stage_buffer`) receives the stage inputs.
    """
    impl = kernels.get_backend(backend)
    a = system.drift_arrays(theta)[0] if drift is None else drift[0]
    g = prob.grid
    return impl.forward(a, system.ctrl, system.n_controls, g.hs, prob.pvals, g.seg_steps, prob.x0, g.method,
                        stages=stages)


def predictions(checkpoints: np.ndarray, prob: BatchProblem) -> np.ndarray:
    """Observable series, ``(B, n_times, n_obs)``."""
    return np.einsum("tnb,kn->btk", checkpoints[1:], prob.O)


def backward_pass(system: RealSystem, theta, prob: BatchProblem, checkpoints, loss_kind: str = "MSE",
                  n_norm: int | None = None, backend: str | None = None, drift=None,
                  impulse_weights=None, stages=None):
    """Gradient of the problem's loss by the reverse sweep.

    ``n_norm`` is the data count ``N`` in the loss normalization (defaults to
    the number of times per observable in this problem). ``impulse_weights``
    (``B x n_times x n_obs``) replaces the loss derivative, which is how
    per-point sensitivities are obtained. ``stages`` must come from the
    forward pass that produced ``checkpoints``; without it every segment is
    replayed from its checkpoint. Returns ``(grad, AdjointState)``.
    """
    if checkpoints is None or len(checkpoints) != prob.n_times + 1:
        raise ValueError("forward checkpoints missing or incomplete")
    impl = kernels.get_backend(backend)
    a, at = system.drift_arrays(theta) if drift is None else drift
    n = prob.n_times * prob.n_batches if n_norm is None else n_norm
    if impulse_weights is None:
        impulse_weights = loss_derivative(predictions(checkpoints, prob), prob.targets, loss_kind, n=n)
    impulses = np.zeros_like(checkpoints)
    impulses[1:] = np.einsum("btk,kn->tnb", impulse_weights, prob.O)
    g = prob.grid
    grad, lam0 = impl.backward(a, at, system.ctrl, system.ctrl_t, system.n_controls, system.pattern,
                               system.n_params, g.hs, prob.pvals, g.seg_steps,
                               np.ascontiguousarray(checkpoints), impulses, g.method, stages=stages)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite adjoint gradient")
    # a_t at the final observation: sum_b a_b(t_N) . f_b(t_N)
    t_end = g.t_steps[-1] + g.hs[-1] if g.n_steps else 0.0
    x_end = checkpoints[-1]
    f_end = system.assemble(theta) @ x_end
    for b, probe in enumerate(prob.probes):
        if probe is not None and system.n_controls:
            for pc, c in zip(probe.values(t_end), system.controls):
                f_end[:, b] += pc * (c @ x_end[:, b])
    a_t = float(np.sum(impulses[-1] * f_end))
    return grad, AdjointState(a=lam0, a_theta=grad, a_t=a_t)


def value_and_grad(system: RealSystem, theta, problems, loss_kind: str = "MSE", n_norm: int | None = None,
                   backend: str | None = None, store_stages: bool = True):
    """Total loss and gradient over several problems (ordered reduction).

    ``n_norm`` defaults to the total number of observation times over all
    batches. ``store_stages=False`` forces the checkpoint-replay sweep.
    """
    if isinstance(problems, BatchProblem):
        problems = [problems]
    n = sum(p.n_times * p.n_batches for p in problems) if n_norm is None else n_norm
    drift = system.drift_arrays(theta)
    total = 0.0
    grad = np.zeros(system.n_params)
    for prob in problems:
        buf = prob.stage_buffer() if store_stages else None
        ck = forward_pass(system, theta, prob, backend, drift=drift, stages=buf)
        total += loss_value(predictions(ck, prob), prob.targets, loss_kind, n=n)
        g, _ = backward_pass(system, theta, prob, ck, loss_kind, n_norm=n, backend=backend, drift=drift,
                             stages=buf)
        grad += g
    return total, grad


def loss_only(system: RealSystem, theta, problems, loss_kind: str = "MSE", n_norm: int | None = None,
              backend: str | None = None) -> float:
    """Forward-only counterpart of :func:`value_and_grad`."""
    if isinstance(problems, BatchProblem):
        problems = [problems]
    n = sum(p.n_times * p.n_batches for p in problems) if n_norm is None else n_norm
    drift = system.drift_arrays(theta)
    return sum(loss_value(predictions(forward_pass(system, theta, p, backend, drift=drift), p),
                          p.targets, loss_kind, n=n) for p in problems)


def observable_gradients(system: RealSystem, theta, prob: BatchProblem, backend: str | None = None,
                         checkpoints=None) -> np.ndarray:
    """``d<O_k>(t_n)/d theta_j`` for every point, shape ``(B, n_times, n_obs, n_params)``.

    One single-impulse reverse sweep per data point.
    """
    drift = system.drift_arrays(theta)
    buf = prob.stage_buffer() if checkpoints is None else None
    ck = forward_pass(system, theta, prob, backend, drift=drift, stages=buf) if checkpoints is None else checkpoints
    B, n_t, n_o = prob.targets.shape
    out = np.zeros((B, n_t, n_o, system.n_params))
    for b in range(B):
        for i in range(n_t):
            for k in range(n_o):
                w = np.zeros((B, n_t, n_o))
                w[b, i, k] = 1.0
                out[b, i, k], _ = backward_pass(system, theta, prob, ck, drift=drift, backend=backend,
                                                impulse_weights=w, stages=buf)
    return out
