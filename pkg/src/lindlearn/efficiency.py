"""Learning efficiency of dissipation strengths versus the measurement window.

``eta`` is the mean per-point loss sensitivity to ``gamma``, ``chi(t)`` the
sensitivity of an observable to a uniform rescaling of all ``gamma``, and
the closed forms give ``eta`` in the large-N limit for windows measured in
units of the dissipative time ``t_dc``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .adjoint import forward_pass, observable_gradients, predictions, prepare_batch
from .dataset import Dataset, generate_dataset, sample_initial_state
from .engine import LindbladModel, resolve_operator, spectral_analysis, vectorize_liouvillian
from .integrate import IntegrationPlan, propagate
from .superop import compile_model
from .trainer import OptimizerConfig, train

__all__ = [
    "StepUnderflowError",
    "EfficiencyReport",
    "eta_closed_form",
    "find_optimal_tN",
    "chi",
    "eta_numeric",
    "dissipative_time",
    "sweep_tN",
    "sweep_N",
    "window_preset",
]

MSE_OFFSET = 0.01
# gamma-only sweeps; GD and Adam stall far above E_gamma = 0.1 within an hour
SWEEP_DEFAULTS = dict(name="lbfgs", epochs=200, early_stop=False)
# sweeps keep the RK4 step of the main spin-3/2 preset, whatever the window
STEP_MAX = 0.02


class StepUnderflowError(ArithmeticError):
    """The finite-difference step in gamma-bar is zero or below resolution."""


def eta_closed_form(t, kind: str = "MSE"):
    """Large-N efficiency for a window ``t`` in units of ``t_dc`` (vectorized)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t_N must be positive")
    k = kind.upper()
    if k == "MAE":
        out = (1.0 - np.exp(-t) - t * np.exp(-t)) / t
    elif k == "MSE":
        out = (1.0 - np.exp(-2 * t) - 2 * t * (t + 1) * np.exp(-2 * t)) / (4 * t)
    else:
        raise ValueError("kind must be MAE or MSE")
    return out if out.ndim else float(out)


def find_optimal_tN(kind: str = "MSE", bounds=(0.1, 10.0), xatol: float = 1e-6) -> float:
    """Bounded scalar maximization of :func:`eta_closed_form`."""
    res = minimize_scalar(lambda t: -eta_closed_form(t, kind), bounds=bounds, method="bounded",
                          options={"xatol": xatol})
    return float(res.x)


def _default_state(model: LindbladModel) -> np.ndarray:
    if model.family == "su4":
        return sample_initial_state("magnetized32")
    psi = np.zeros(model.dim, dtype=np.complex128)
    psi[0] = 1.0
    return np.outer(psi, psi.conj())


def _with_gamma_scale(model: LindbladModel, s: float) -> LindbladModel:
    return model.with_params(gamma=np.asarray(model.gamma) * s)


def _expectations(model: LindbladModel, O, t, rho0, probe, substeps, system=None) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    order = np.argsort(t)
    ts = t[order]
    if system is None:
        system = compile_model(model.with_probe(probe))
    frame = system.frame
    plan = IntegrationPlan(tuple(ts), substeps_per_interval=substeps)
    X = propagate(system, model.theta, frame.to_real(rho0), plan, probe=probe)
    vals = X @ frame.observable(O)
    out = np.empty_like(vals)
    out[order] = vals
    return out


def chi(model: LindbladModel, observable, t, rel_step: float = 1e-3, rho0=None, probe=None,
        substeps: int = 10):
    """``|d<O(t)>/d gamma_bar|`` by a central difference along ``gamma -> gamma (1 +- rel_step)``.

    ``observable`` is a label of the model's operator family or a matrix.
    ``t`` may be a scalar or an array of distinct times.
    """
    gbar = float(np.mean(model.gamma)) if model.n_gamma else 0.0
    h = gbar * rel_step
    if not h > 0 or not np.isfinite(h) or gbar + h == gbar:
        raise StepUnderflowError(f"gamma-bar step {h!r} underflows")
    O = resolve_operator(model.family, observable, model.n_sites) if isinstance(observable, str) else observable
    rho0 = _default_state(model) if rho0 is None else rho0
    probe = model.probe if probe is None else probe
    system = compile_model(model.with_probe(probe))
    plus = _expectations(_with_gamma_scale(model, 1 + rel_step), O, t, rho0, probe, substeps, system)
    minus = _expectations(_with_gamma_scale(model, 1 - rel_step), O, t, rho0, probe, substeps, system)
    out = np.abs(plus - minus) / (2 * h)
    return out if np.ndim(t) else float(out[0])


def eta_numeric(model: LindbladModel, dataset: Dataset, loss_kind: str = "MSE", mode: str = "per_parameter",
                offset: float | None = None) -> float:
    """Mean per-point loss sensitivity to the dissipation strengths.

    ``mode="per_parameter"`` averages ``|dL_n/d gamma_mu|`` over points and
    channels; ``mode="mean"`` uses the derivative along a uniform rescaling
    of all ``gamma`` (the ``gamma_bar`` direction). The model is evaluated at
    ``gamma (1 + offset)``; ``offset`` defaults to 1% for MSE (whose per-point
    gradients vanish at the truth) and 0 for MAE. For MAE the magnitude of a
    per-point gradient is ``|d<O>/d gamma|`` regardless of the residual sign.
    """
    if dataset.n_bs != 1:
        raise ValueError("eta is defined for a single-batch dataset")
    kind = loss_kind.upper()
    if mode not in ("per_parameter", "mean"):
        raise ValueError("mode must be 'per_parameter' or 'mean'")
    if offset is None:
        offset = MSE_OFFSET if kind == "MSE" else 0.0
    m = _with_gamma_scale(model, 1.0 + offset)
    batch = dataset.batches[0]
    system = compile_model(m.with_probe(batch.probe))
    preset = dataset.preset
    prob = prepare_batch(system, [batch], preset.substeps, preset.method)[0]
    theta = m.theta
    ck = forward_pass(system, theta, prob)
    dobs = observable_gradients(system, theta, prob, checkpoints=ck)[0][..., m.n_alpha:]
    resid = predictions(ck, prob)[0] - prob.targets[0]
    if mode == "mean":
        gbar = float(np.mean(m.gamma))
        dobs = (dobs @ (np.asarray(m.gamma) / gbar))[..., None]
    if kind == "MSE":
        per_point = 2.0 * resid[..., None] * dobs
    elif kind == "MAE":
        per_point = dobs
    else:
        raise ValueError("loss kind must be MSE or MAE")
    n_points = resid.size
    return float(np.sum(np.abs(per_point)) / (n_points * per_point.shape[-1]))


def dissipative_time(model: LindbladModel) -> float:
    """``t_dc = 1/Delta1`` of the undriven Liouvillian (spectral; intended for small ``d``)."""
    return spectral_analysis(vectorize_liouvillian(model.with_probe(None))).t_dc


@dataclass
class EfficiencyReport:
    kind: str
    t_dc: float
    tN_grid: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eta_numeric: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eta_closed_form: np.ndarray = field(default_factory=lambda: np.zeros(0))
    N_grid: np.ndarray = field(default_factory=lambda: np.zeros(0))
    curves: dict = field(default_factory=dict)  # config value -> (n_ini, n_epochs + 1) E_gamma
    chi_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    chi_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    metadata: dict = field(default_factory=dict)

    def mean_curve(self, key) -> np.ndarray:
        return np.mean(self.curves[key], axis=0)

    def std_curve(self, key) -> np.ndarray:
        return np.std(self.curves[key], axis=0)

    def final_mean(self, key) -> float:
        return float(self.mean_curve(key)[-1])

    @property
    def fast_factor(self) -> np.ndarray:
        """``chi(t)`` divided by its envelope ``t exp(-t/t_dc)``."""
        t = self.chi_t
        env = t * np.exp(-t / self.t_dc)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(env > 0, self.chi_values / env, 0.0)

    def export_eta(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_N", "t_N_over_t_dc", "eta_numeric", "eta_closed_form"])
            for x, en, ec in zip(self.tN_grid, self.eta_numeric, self.eta_closed_form):
                w.writerow([repr(float(x * self.t_dc)), repr(float(x)), repr(float(en)), repr(float(ec))])

    def export_curves(self, path, label: str) -> None:
        """Rows of ``(label value, epoch, mean E_gamma, std E_gamma)``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([label, "epoch", "mean_E_gamma", "std_E_gamma"])
            for key in self.curves:
                mu, sd = self.mean_curve(key), self.std_curve(key)
                for e in range(len(mu)):
                    w.writerow([key, e, repr(float(mu[e])), repr(float(sd[e]))])


def window_preset(preset, t_final: float, n_points: int, step_max: float = STEP_MAX):
    """Single-batch variant of ``preset`` over ``[0, t_final)`` with RK4 steps of at most ``step_max``."""
    substeps = max(1, int(np.ceil(t_final / n_points / step_max)))
    return preset.updated(t_final=float(t_final), n_ts=int(n_points), n_bs=1, substeps=substeps)


def _pad(curves) -> np.ndarray:
    # early-stopped runs hold their last value
    n = max(len(c) for c in curves)
    return np.array([np.concatenate([c, np.full(n - len(c), c[-1])]) for c in curves])


def _gamma_curves(model, preset, seed, config, n_ini) -> tuple[np.ndarray, Dataset]:
    ds = generate_dataset(model, preset, seed)
    rep = train(preset.family, ds, config, n_ini=n_ini, rng_seed=seed, truth=model)
    curves = [r.e_gamma for r in rep.results if r.status == "ok"]
    if not curves:
        raise FloatingPointError("every initialization diverged")
    return _pad(curves), ds


def _sweep_config(config: OptimizerConfig | None, kind: str) -> OptimizerConfig:
    cfg = config or OptimizerConfig(**SWEEP_DEFAULTS)
    return OptimizerConfig(**{**cfg.to_dict(), "freeze_alpha": True, "loss_kind": kind})


def sweep_tN(preset, tN_grid, N_fixed: int, epochs: int, N_ini: int, model: LindbladModel,
             seed: int = 0, kind: str = "MSE", config: OptimizerConfig | None = None,
             t_dc: float | None = None) -> EfficiencyReport:
    """gamma-only training for each window ``t_N = tN_grid * t_dc`` with ``N_fixed`` points."""
    cfg = _sweep_config(config, kind)
    cfg = OptimizerConfig(**{**cfg.to_dict(), "epochs": epochs})
    t_dc = dissipative_time(model) if t_dc is None else t_dc
    grid = np.asarray(tN_grid, dtype=float)
    rep = EfficiencyReport(kind=kind, t_dc=t_dc, tN_grid=grid,
                           eta_closed_form=eta_closed_form(grid, kind))
    etas = []
    for x in grid:
        p = window_preset(preset, x * t_dc, N_fixed)
        curves, ds = _gamma_curves(model, p, seed, cfg, N_ini)
        rep.curves[float(x)] = curves
        etas.append(eta_numeric(model, ds, kind))
    rep.eta_numeric = np.array(etas)
    rep.metadata = {"N": int(N_fixed), "epochs": int(epochs), "N_ini": int(N_ini), "seed": int(seed),
                    "config": cfg.to_dict()}
    return rep


def sweep_N(preset, N_grid, tN_fixed: float, epochs: int, N_ini: int, model: LindbladModel,
            seed: int = 0, kind: str = "MSE", config: OptimizerConfig | None = None,
            t_dc: float | None = None) -> EfficiencyReport:
    """gamma-only training for each data count at the window ``tN_fixed * t_dc``."""
    cfg = _sweep_config(config, kind)
    cfg = OptimizerConfig(**{**cfg.to_dict(), "epochs": epochs})
    t_dc = dissipative_time(model) if t_dc is None else t_dc
    rep = EfficiencyReport(kind=kind, t_dc=t_dc, N_grid=np.asarray(N_grid, dtype=int))
    for n in rep.N_grid:
        p = window_preset(preset, tN_fixed * t_dc, n)
        rep.curves[int(n)], _ = _gamma_curves(model, p, seed, cfg, N_ini)
    rep.metadata = {"tN": float(tN_fixed), "epochs": int(epochs), "N_ini": int(N_ini), "seed": int(seed),
                    "config": cfg.to_dict()}
    return rep
