"""Fitting model coefficients to observation datasets.

The optimizer works on ``(alpha, u)`` with ``gamma = u**2``, so realized
dissipation strengths stay non-negative without constraints. One epoch is one
full-dataset gradient evaluation (for L-BFGS, one quasi-Newton iteration).
"""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import __version__
from .adjoint import forward_pass, predictions, prepare_batch, value_and_grad
from .dataset import _INIT, Dataset, _hamiltonian_labels, ansatz_model, rng_for
from .engine import LindbladModel, model_to_dict
from .losses import LOSS_KINDS
from .losses import loss as _loss
from .superop import compile_model

__all__ = [
    "ThetaParams",
    "OptimizerConfig",
    "InitResult",
    "TrainReport",
    "loss",
    "relative_error",
    "initial_params",
    "train",
]

OPTIMIZERS = ("adam", "gd", "lbfgs")


def loss(pred, real, kind: str = "MSE") -> float:
    """Mean squared or mean absolute deviation of two equal-length series."""
    return _loss(pred, real, kind)


def relative_error(theta_pred, theta_real, group: str = "alpha") -> float:
    """Root-mean-square deviation relative to the mean magnitude of the real values.

    ``group`` selects the scale: ``mean|alpha|`` or ``mean gamma``.
    """
    p = np.atleast_1d(np.asarray(theta_pred, dtype=float))
    r = np.atleast_1d(np.asarray(theta_real, dtype=float))
    if p.shape != r.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {r.shape}")
    if group not in ("alpha", "gamma"):
        raise ValueError("group must be 'alpha' or 'gamma'")
    scale = np.mean(np.abs(r)) if group == "alpha" else np.mean(r)
    if scale == 0:
        raise ValueError("reference scale is zero")
    return float(np.sqrt(np.mean((p - r) ** 2)) / scale)


@dataclass
class ThetaParams:
    """Trainable coordinates: Hamiltonian coefficients and ``u`` with ``gamma = u**2``."""

    alpha: np.ndarray
    gamma_sqrt: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).copy()
        self.gamma_sqrt = np.asarray(self.gamma_sqrt, dtype=float).copy()

    @property
    def gamma(self) -> np.ndarray:
        return self.gamma_sqrt ** 2

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.gamma])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.gamma_sqrt])

    @classmethod
    def from_vector(cls, v, n_alpha: int) -> "ThetaParams":
        v = np.asarray(v, dtype=float)
        return cls(v[:n_alpha], v[n_alpha:])

    @classmethod
    def from_model(cls, model: LindbladModel) -> "ThetaParams":
        return cls(model.alpha, np.sqrt(model.gamma))


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "adam"
    lr: float = 1e-2
    epochs: int = 5000
    loss_kind: str = "MSE"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-12
    lr_decay: float = 0.0  # lr_k = lr / (1 + lr_decay * k)
    lbfgs_memory: int = 30
    early_stop: bool = True
    patience: int = 200
    rel_tol: float = 1e-6
    loss_floor: float = 1e-28
    freeze_alpha: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.name not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.loss_kind.upper() not in LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {LOSS_KINDS}")
        if self.epochs < 0 or self.lr <= 0:
            raise ValueError("epochs must be >= 0 and lr > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerConfig":
        return cls(**data)


@dataclass
class InitResult:
    index: int
    seed: int
    initial: ThetaParams
    final: ThetaParams
    losses: np.ndarray
    e_alpha: np.ndarray
    e_gamma: np.ndarray
    status: str = "ok"
    message: str = ""
    wall_time: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.losses) - 1


@dataclass
class TrainReport:
    config: OptimizerConfig
    rng_seed: int
    family: str
    n_sites: int | None
    results: list
    truth: LindbladModel | None = None
    dataset_seed: int | None = None
    pred_mean: np.ndarray | None = None
    pred_std: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_ini(self) -> int:
        return len(self.results)

    def _ok(self):
        return [r for r in self.results if r.status == "ok"]

    @property
    def param_mean(self) -> np.ndarray:
        return np.mean([r.final.theta for r in self._ok()], axis=0)

    @property
    def param_std(self) -> np.ndarray:
        return np.std([r.final.theta for r in self._ok()], axis=0)

    def final_errors(self) -> tuple[float, float]:
        """Final ``(E_alpha, E_gamma)`` averaged over the successful initializations."""
        ok = self._ok()
        if not ok or self.truth is None:
            return float("nan"), float("nan")
        return float(np.mean([r.e_alpha[-1] for r in ok])), float(np.mean([r.e_gamma[-1] for r in ok]))

    def best_model(self) -> LindbladModel:
        best = min(self._ok(), key=lambda r: r.losses[-1])
        return ansatz_model(self.family, best.final.alpha, best.final.gamma, self.n_sites)

    def header(self) -> dict:
        return {
            "version": __version__,
            "rng_seed": int(self.rng_seed),
            "init_seeds": [int(r.seed) for r in self.results],
            "dataset_seed": self.dataset_seed,
            "family": self.family,
            "config": self.config.to_dict(),
            **self.metadata,
        }

    def log_rows(self):
        for r in self.results:
            for e, lv in enumerate(r.losses):
                ea = r.e_alpha[e] if len(r.e_alpha) else float("nan")
                eg = r.e_gamma[e] if len(r.e_gamma) else float("nan")
                yield r.index, e, lv, ea, eg

    def export_log(self, path) -> None:
        """CSV of ``(init, epoch, loss, E_alpha, E_gamma)`` preceded by a ``#`` header line."""
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["init", "epoch", "loss", "E_alpha", "E_gamma"])
            for row in self.log_rows():
                w.writerow([row[0], row[1]] + [repr(float(x)) for x in row[2:]])

    def to_dict(self) -> dict:
        ea, eg = self.final_errors()
        return {
            "header": self.header(),
            "final_E_alpha": ea,
            "final_E_gamma": eg,
            "inits": [
                {
                    "index": r.index,
                    "seed": int(r.seed),
                    "status": r.status,
                    "message": r.message,
                    "epochs": r.epochs_run,
                    "final_loss": float(r.losses[-1]) if len(r.losses) else None,
                    "final_E_alpha": float(r.e_alpha[-1]) if len(r.e_alpha) else None,
                    "final_E_gamma": float(r.e_gamma[-1]) if len(r.e_gamma) else None,
                    "wall_time": r.wall_time,
                    "model": model_to_dict(ansatz_model(self.family, r.final.alpha, r.final.gamma, self.n_sites)),
                }
                for r in self.results
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def _prior(family: str, preset=None):
    if preset is not None:
        return tuple(preset.alpha_range), tuple(preset.gamma_range)
    return ((-1.0, 1.0), (0.0, 0.04)) if family == "spin32" else ((0.0, 1.0), (0.0, 0.02))


def initial_params(family: str, n_alpha: int, n_gamma: int, rng_seed: int, index: int,
                   preset=None) -> ThetaParams:
    """``alpha`` uniform over the family's range, ``gamma`` uniform on ``[0, 2 mean_gamma]``."""
    (a_lo, a_hi), (g_lo, g_hi) = _prior(family, preset)
    rng = rng_for(rng_seed, _INIT, index)
    alpha = rng.uniform(a_lo, a_hi, n_alpha)
    gamma = rng.uniform(0.0, g_lo + g_hi, n_gamma)
    return ThetaParams(alpha, np.sqrt(gamma))


class _Objective:
    """Loss and gradient in optimizer coordinates, with caching of the last point."""

    def __init__(self, system, problems, n_alpha, kind, freeze_alpha, alpha_fixed, n_norm):
        self.system = system
        self.problems = problems
        self.n_alpha = n_alpha
        self.kind = kind
        self.freeze = freeze_alpha
        self.alpha_fixed = alpha_fixed
        self.n_norm = n_norm
        self._key = None
        self._val = None

    def params(self, v) -> ThetaParams:
        if self.freeze:
            return ThetaParams(self.alpha_fixed, v)
        return ThetaParams.from_vector(v, self.n_alpha)

    def __call__(self, v):
        key = np.asarray(v, dtype=float).tobytes()
        if key == self._key:
            return self._val
        p = self.params(v)
        val, g = value_and_grad(self.system, p.theta, self.problems, self.kind, n_norm=self.n_norm)
        g_alpha, g_gamma = g[: self.n_alpha], g[self.n_alpha:]
        g_u = 2.0 * p.gamma_sqrt * g_gamma
        gv = g_u if self.freeze else np.concatenate([g_alpha, g_u])
        if not (np.isfinite(val) and np.all(np.isfinite(gv))):
            raise FloatingPointError("non-finite loss or gradient")
        self._key, self._val = key, (val, gv)
        return val, gv


def _stalled(losses, cfg: OptimizerConfig) -> bool:
    if losses[-1] <= cfg.loss_floor:
        return True
    if not cfg.early_stop or len(losses) <= cfg.patience:
        return False
    old = losses[-1 - cfg.patience]
    return (old - losses[-1]) < cfg.rel_tol * abs(old)


def _run_one(obj: _Objective, start: ThetaParams, cfg: OptimizerConfig, truth, record):
    """Optimize from ``start``; ``record(v, loss)`` is called at epoch 0 and after every epoch."""
    v = start.gamma_sqrt.copy() if cfg.freeze_alpha else start.vector()
    losses = []
    val, g = obj(v)
    losses.append(val)
    record(v, val)
    if cfg.epochs == 0:
        return v, losses
    if cfg.name == "lbfgs":
        state = {"v": v}

        def cb(xk):
            lv, _ = obj(xk)
            losses.append(lv)
            record(xk, lv)
            state["v"] = np.array(xk)
            if _stalled(losses, cfg):
                raise StopIteration

        try:
            minimize(obj, v, jac=True, method="L-BFGS-B", callback=cb,
                     options={"maxiter": cfg.epochs, "maxcor": cfg.lbfgs_memory, "ftol": 0.0,
                              "gtol": 0.0, "maxfun": 4 * cfg.epochs + 20})
        except StopIteration:
            pass
        return state["v"], losses
    m = np.zeros_like(v)
    s = np.zeros_like(v)
    for k in range(1, cfg.epochs + 1):
        lr = cfg.lr / (1.0 + cfg.lr_decay * (k - 1))
        if cfg.name == "gd":
            v = v - lr * g
        else:
            m = cfg.beta1 * m + (1 - cfg.beta1) * g
            s = cfg.beta2 * s + (1 - cfg.beta2) * g * g
            mh = m / (1 - cfg.beta1 ** k)
            sh = s / (1 - cfg.beta2 ** k)
            v = v - lr * mh / (np.sqrt(sh) + cfg.eps)
        val, g = obj(v)
        losses.append(val)
        record(v, val)
        if _stalled(losses, cfg):
            break
    return v, losses


def train(ansatz_family, dataset: Dataset, config: OptimizerConfig | None = None, n_ini: int = 1,
          rng_seed: int = 0, truth: LindbladModel | None = None, inits=None, callback=None,
          problems=None, system=None) -> TrainReport:
    """Fit the coefficients of ``ansatz_family`` (``"spin32"`` / ``"chain5"``) to ``dataset``.

    ``truth`` (defaults to ``dataset.model``) enables the per-epoch relative
    errors and is required to freeze ``alpha``. ``inits`` overrides the random
    starting points with explicit :class:`ThetaParams`. ``callback(init, epoch,
    loss, params)`` observes progress.
    """
    cfg = config or OptimizerConfig()
    family = ansatz_family
    truth = dataset.model if truth is None else truth
    preset = dataset.preset
    n_sites = preset.sites if family == "chain5" else None
    if system is None:
        n_h = len(_hamiltonian_labels(family, n_sites))
        template = ansatz_model(family, np.zeros(n_h), np.zeros(n_h), n_sites)
        system = compile_model(template.with_probe(dataset.batches[0].probe))
    model = system.model
    n_alpha, n_gamma = model.n_alpha, model.n_gamma
    if problems is None:
        problems = prepare_batch(system, dataset.batches, preset.substeps, preset.method)
    if cfg.freeze_alpha and truth is None:
        raise ValueError("freezing alpha needs the true coefficients")
    alpha_fixed = None if truth is None else np.asarray(truth.alpha, dtype=float)
    kind = cfg.loss_kind.upper()
    if inits is None:
        inits = [initial_params(family, n_alpha, n_gamma, rng_seed, i, preset) for i in range(n_ini)]
    if cfg.freeze_alpha:
        inits = [ThetaParams(alpha_fixed, p.gamma_sqrt) for p in inits]

    def run(i: int) -> InitResult:
        obj = _Objective(system, problems, n_alpha, kind, cfg.freeze_alpha, alpha_fixed, None)
        ea, eg = [], []
        counter = [0]

        def record(v, lv):
            p = obj.params(v)
            if truth is not None:
                ea.append(relative_error(p.alpha, truth.alpha, "alpha"))
                eg.append(relative_error(p.gamma, truth.gamma, "gamma"))
            if callback is not None:
                callback(i, counter[0], lv, p)
            counter[0] += 1

        t0 = time.perf_counter()
        status, msg = "ok", ""
        try:
            v, losses = _run_one(obj, inits[i], cfg, truth, record)
            final = obj.params(v)
        except FloatingPointError as exc:
            status, msg = "diverged", str(exc)
            losses, final = [float("nan")], inits[i]
        n = len(losses)
        return InitResult(index=i, seed=int(rng_seed), initial=inits[i], final=final,
                          losses=np.asarray(losses, dtype=float),
                          e_alpha=np.asarray(ea[:n], dtype=float), e_gamma=np.asarray(eg[:n], dtype=float),
                          status=status, message=msg, wall_time=time.perf_counter() - t0)

    if cfg.workers > 1 and len(inits) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, range(len(inits))))
    else:
        results = [run(i) for i in range(len(inits))]

    report = TrainReport(config=cfg, rng_seed=int(rng_seed), family=family, n_sites=n_sites,
                         results=results, truth=truth, dataset_seed=dataset.seed)
    ok = [r for r in results if r.status == "ok"]
    if ok:
        preds = []
        for r in ok:
            th = r.final.theta
            preds.append(np.concatenate([predictions(forward_pass(system, th, p), p) for p in problems]))
        preds = np.array(preds)
        report.pred_mean = preds.mean(axis=0)
        report.pred_std = preds.std(axis=0)
    return report
