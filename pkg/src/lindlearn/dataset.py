"""Ground-truth sampling, probes, initial states and observation datasets."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources

import numpy as np

from .engine import LindbladModel, ProbeDrive, model_from_dict, model_to_dict, probe_from_dict, probe_to_dict, resolve_operator
from .integrate import IntegrationPlan, propagate, uniform_times
from .operators import chain_terms, spin_matrices, su4_generators
from .superop import compile_model

__all__ = [
    "ExperimentPreset",
    "Batch",
    "Dataset",
    "load_preset",
    "list_presets",
    "sample_ground_truth",
    "build_probe",
    "sample_initial_state",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "export_table",
]

DATASET_FORMAT = "lindlearn-dataset"
FAMILIES = ("spin32", "chain5")
STATE_KINDS = ("magnetized32", "all_up_chain", "haar_pure", "random_product")

# stream tags for seed derivation
_MODEL, _PROBE, _STATE, _NOISE, _INIT = 0, 1, 2, 3, 4


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for a (master seed, stream, index...) tuple."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    family: str
    probe: str
    initial_state: str
    observables: tuple
    t_final: float
    n_bs: int
    n_ts: int
    alpha_range: tuple = (-1.0, 1.0)
    gamma_range: tuple = (0.0, 0.04)
    freq_range: tuple = (-1.0, 1.0)
    n_freq: int = 10
    amplitude: float = 2.0
    controls: tuple = ("Sx", "Sy", "Sz")
    noise_std: float = 0.0
    substeps: int = 10
    method: str = "rk4"
    n_sites: int | None = None
    description: str = ""

    def __post_init__(self):
        for name in ("observables", "alpha_range", "gamma_range", "freq_range", "controls"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.probe not in ("tdep", "tindep"):
            raise ValueError("probe must be 'tdep' or 'tindep'")
        if self.initial_state not in STATE_KINDS:
            raise ValueError(f"unknown initial state kind {self.initial_state!r}")
        if self.n_bs < 1 or self.n_ts < 1:
            raise ValueError("n_bs and n_ts must be positive")

    @property
    def op_family(self) -> str:
        return "su4" if self.family == "spin32" else "pauli"

    @property
    def sites(self) -> int | None:
        return 5 if self.family == "chain5" and self.n_sites is None else self.n_sites

    @property
    def mean_gamma(self) -> float:
        return 0.5 * (self.gamma_range[0] + self.gamma_range[1])

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPreset":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown preset fields: {sorted(unknown)}")
        return cls(**data)

    def updated(self, **changes) -> "ExperimentPreset":
        return replace(self, **changes)


def list_presets() -> list[str]:
    files = resources.files("lindlearn.presets").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".json"))


def load_preset(name_or_path) -> ExperimentPreset:
    """Embedded preset by name, or a JSON file path."""
    name = str(name_or_path)
    if name in list_presets():
        text = resources.files("lindlearn.presets").joinpath(f"{name}.json").read_text()
    else:
        with open(name) as fh:
            text = fh.read()
    return ExperimentPreset.from_dict(json.loads(text))


def _hamiltonian_labels(family: str, n_sites: int | None = None) -> list[str]:
    if family == "spin32":
        return list(su4_generators().labels)
    return chain_terms(n_sites or 5)[0]


def _default_ranges(family: str):
    if family == "spin32":
        return (-1.0, 1.0), (0.0, 0.04)
    return (0.0, 1.0), (0.0, 0.02)


def ansatz_model(family: str, alpha, gamma, n_sites: int | None = None) -> LindbladModel:
    """Model of a family with given coefficients (same operators for H and channels)."""
    if family == "spin32":
        gens = su4_generators()
        labels, ops = list(gens.labels), [np.array(g) for g in gens.operators]
        fam, L = "su4", None
    elif family == "chain5":
        L = n_sites or 5
        labels, ops = chain_terms(L)
        fam = "pauli"
    else:
        raise ValueError(f"unknown family {family!r}")
    return LindbladModel(
        dim=ops[0].shape[0], h_labels=tuple(labels), h_ops=np.array(ops), alpha=alpha,
        c_labels=tuple(labels), c_ops=np.array(ops), gamma=gamma, family=fam, n_sites=L,
    )


def sample_ground_truth(family, rng_seed: int) -> LindbladModel:
    """Uniform draws of alpha and gamma within the family's ranges.

    ``family`` is ``"spin32"`` / ``"chain5"`` or an :class:`ExperimentPreset`.
    """
    if isinstance(family, ExperimentPreset):
        preset = family
        fam, ar, gr, L = preset.family, preset.alpha_range, preset.gamma_range, preset.sites
    else:
        fam = family
        (ar, gr), L = _default_ranges(fam), None
    n = len(_hamiltonian_labels(fam, L))
    rng = rng_for(rng_seed, _MODEL)
    alpha = rng.uniform(ar[0], ar[1], n)
    gamma = rng.uniform(gr[0], gr[1], n)
    return ansatz_model(fam, alpha, gamma, L)


def build_probe(preset: ExperimentPreset, rng_seed: int, batch: int = 0) -> ProbeDrive | None:
    """Sine-sum drive on the preset's control operators (``None`` for ``tindep``).

    Each control component draws its own ``n_freq`` frequencies.
    """
    if preset.probe == "tindep":
        return None
    rng = rng_for(rng_seed, _PROBE, batch)
    lo, hi = preset.freq_range
    freqs = rng.uniform(lo, hi, (len(preset.controls), preset.n_freq))
    ops = np.array([resolve_operator(preset.op_family, c, preset.sites) for c in preset.controls])
    return ProbeDrive(labels=preset.controls, operators=ops, frequencies=freqs, amplitude=preset.amplitude)


def _haar_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def _state_vector(kind: str, rng: np.random.Generator | None, n_sites: int = 5) -> np.ndarray:
    if kind == "magnetized32":
        psi = np.zeros(4, dtype=np.complex128)
        psi[0] = 1.0
    elif kind == "all_up_chain":
        psi = np.zeros(2 ** n_sites, dtype=np.complex128)
        psi[0] = 1.0
    elif kind == "haar_pure":
        psi = _haar_vector(4 if n_sites is None else 2 ** n_sites, rng)
    elif kind == "random_product":
        psi = np.ones(1, dtype=np.complex128)
        for _ in range(n_sites):
            psi = np.kron(psi, _haar_vector(2, rng))
    else:
        raise ValueError(f"unknown initial state kind {kind!r}")
    return psi


def sample_initial_state(kind: str, rng_seed: int | None = None, n_sites: int | None = None,
                         batch: int = 0) -> np.ndarray:
    """Pure initial density matrix of the requested kind.

    ``haar_pure`` is a 4-level state unless ``n_sites`` is given.
    """
    rng = None if rng_seed is None else rng_for(rng_seed, _STATE, batch)
    if kind in ("haar_pure", "random_product") and rng is None:
        raise ValueError(f"{kind} needs a seed")
    if kind in ("all_up_chain", "random_product") and n_sites is None:
        n_sites = 5
    psi = _state_vector(kind, rng, n_sites)
    return np.outer(psi, psi.conj())


@dataclass(eq=False)
class Batch:
    """One probe configuration with its observation series.

    ``values[n, k]`` is the measured ``<O_k>`` at ``times[n]``.
    """

    times: np.ndarray
    values: np.ndarray
    observables: tuple
    rho0: np.ndarray
    initial_state: dict
    probe: ProbeDrive | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.times), -1)
        self.observables = tuple(self.observables)
        if self.values.shape[1] != len(self.observables):
            raise ValueError("one value column per observable")


@dataclass(eq=False)
class Dataset:
    batches: list
    preset: ExperimentPreset
    seed: int | None = None
    model: LindbladModel | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_bs(self) -> int:
        return len(self.batches)

    @property
    def n_ts(self) -> int:
        return len(self.batches[0].times)

    @property
    def n_points(self) -> int:
        """``N = N_bs N_ts`` (per observable)."""
        return sum(len(b.times) for b in self.batches)

    def plan(self, batch: Batch) -> IntegrationPlan:
        return IntegrationPlan(tuple(batch.times), substeps_per_interval=self.preset.substeps, method=self.preset.method)


def simulate_batch(model: LindbladModel, rho0, probe, observables, times, substeps=10, method="rk4",
                   system=None) -> np.ndarray:
    """Noise-free ``<O_k>(t_n)`` for one batch, shape ``(len(times), len(observables))``."""
    if system is None:
        system = compile_model(model.with_probe(probe) if probe is not None else model.with_probe(None))
    frame = system.frame
    plan = IntegrationPlan(tuple(times), substeps_per_interval=substeps, method=method)
    X = propagate(system, model.theta, frame.to_real(rho0), plan, probe=probe)
    O = np.array([frame.observable(resolve_operator(model.family, lab, model.n_sites)) for lab in observables])
    return X @ O.T


def generate_dataset(model: LindbladModel, preset: ExperimentPreset, rng_seed: int) -> Dataset:
    """Forward-solve every batch of ``preset`` under ``model`` and record the observables."""
    times = uniform_times(preset.t_final, preset.n_ts)
    probes = [build_probe(preset, rng_seed, s) for s in range(preset.n_bs)]
    system = compile_model(model.with_probe(probes[0]))
    n_sites = preset.sites if preset.family == "chain5" else None
    batches = []
    for s in range(preset.n_bs):
        rho0 = sample_initial_state(preset.initial_state, rng_seed, n_sites=n_sites, batch=s)
        vals = simulate_batch(model, rho0, probes[s], preset.observables, times, preset.substeps,
                              preset.method, system=system)
        if preset.noise_std > 0:
            vals = vals + rng_for(rng_seed, _NOISE, s).normal(scale=preset.noise_std, size=vals.shape)
        batches.append(Batch(times=times, values=vals, observables=preset.observables, rho0=rho0,
                             initial_state={"kind": preset.initial_state, "seed": int(rng_seed), "batch": s},
                             probe=probes[s]))
    return Dataset(batches=batches, preset=preset, seed=int(rng_seed), model=model)


# -- files ----------------------------------------------------------------------

def dataset_to_dict(ds: Dataset, include_model: bool = True) -> dict:
    out = {
        "format": DATASET_FORMAT,
        "version": 1,
        "preset": ds.preset.to_dict(),
        "seed": ds.seed,
        "metadata": ds.metadata,
        "model": model_to_dict(ds.model) if (include_model and ds.model is not None) else None,
        "batches": [],
    }
    for b in ds.batches:
        out["batches"].append({
            "probe": None if b.probe is None else probe_to_dict(b.probe),
            "initial_state": dict(b.initial_state),
            "times": [float(t) for t in b.times],
            "observables": list(b.observables),
            "values": [[float(v) for v in row] for row in b.values.T],
        })
    return out


def dataset_from_dict(data: dict) -> Dataset:
    if data.get("format") != DATASET_FORMAT:
        raise ValueError("not a lindlearn dataset document")
    preset = ExperimentPreset.from_dict(data["preset"])
    model = None if data.get("model") is None else model_from_dict(data["model"])
    n_sites = preset.sites if preset.family == "chain5" else None
    batches = []
    for b in data["batches"]:
        spec = b["initial_state"]
        rho0 = sample_initial_state(spec["kind"], spec.get("seed"), n_sites=n_sites, batch=spec.get("batch", 0))
        probe = None if b["probe"] is None else probe_from_dict(b["probe"], preset.op_family, preset.sites)
        batches.append(Batch(times=b["times"], values=np.array(b["values"]).T, observables=b["observables"],
                             rho0=rho0, initial_state=spec, probe=probe))
    return Dataset(batches=batches, preset=preset, seed=data.get("seed"), model=model,
                   metadata=data.get("metadata", {}))


def save_dataset(ds: Dataset, path, include_model: bool = True) -> None:
    with open(path, "w") as fh:
        json.dump(dataset_to_dict(ds, include_model), fh, indent=1)
        fh.write("\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        return dataset_from_dict(json.load(fh))


def export_table(ds: Dataset, path) -> None:
    """Flat CSV: one row per (batch, time, observable)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["batch", "time", "observable", "value"])
        for s, b in enumerate(ds.batches):
            for n, t in enumerate(b.times):
                for k, lab in enumerate(b.observables):
                    w.writerow([s, repr(float(t)), lab, repr(float(b.values[n, k]))])
