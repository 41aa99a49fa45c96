"""Parameterized Lindblad models, the master-equation right-hand side, the
vectorized Liouvillian and its spectral analysis.

Conventions
-----------
* ``H0 = -sum_mu alpha_mu g_mu`` and jump operators ``J_k = sqrt(gamma_k) g_k``.
* Vectorization is column stacking: ``vec(A rho B) = (B^T kron A) vec(rho)``.
* Times are in units of ``1/alpha_unit`` and energies/rates in ``alpha_unit``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .linalg import DefectiveMatrixError, as_matrix, eig_general, is_hermitian
from .operators import pauli_from_label, spin_matrices, su4_generators, total_spin

__all__ = [
    "ProbeDrive",
    "LindbladModel",
    "Spectrum",
    "resolve_operator",
    "lindblad_rhs",
    "rhs",
    "vec",
    "unvec",
    "vectorize_liouvillian",
    "spectral_analysis",
    "evolve_spectral",
    "measure",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "lindlearn-model"
MODEL_VERSION = 1


def resolve_operator(family: str, label: str, n_sites: int | None = None) -> np.ndarray:
    """Look up an operator by its label within a model family.

    ``su4``: ``g1`` ... ``g15`` and the spin-3/2 matrices ``Sx``, ``Sy``, ``Sz``.
    ``pauli``: Pauli strings such as ``X0`` or ``X4Z0`` and total spins ``Sx``, ``Sy``, ``Sz``.
    """
    if family == "su4":
        gens = su4_generators()
        if label in gens.labels:
            return np.array(gens[gens.labels.index(label)])
        spins = dict(zip(("Sx", "Sy", "Sz"), spin_matrices(3)))
        if label in spins:
            return spins[label]
    elif family == "pauli":
        if n_sites is None:
            raise ValueError("pauli family needs n_sites")
        if label in ("Sx", "Sy", "Sz"):
            return total_spin(n_sites)["xyz".index(label[1])]
        return pauli_from_label(label, n_sites)
    raise KeyError(f"operator {label!r} unknown in family {family!r}")


@dataclass(frozen=True, eq=False)
class ProbeDrive:
    """Time-dependent control ``H_prob(t) = sum_mu p_mu(t) A_mu`` with
    ``p_mu(t) = amplitude * sum_m sin(2 pi omega_{mu m} t)``."""

    labels: tuple
    operators: np.ndarray
    frequencies: np.ndarray
    amplitude: float = 2.0

    def __post_init__(self):
        ops = np.asarray(self.operators, dtype=np.complex128)
        freqs = np.atleast_2d(np.asarray(self.frequencies, dtype=np.float64))
        if freqs.shape[0] != len(self.labels) or ops.shape[0] != len(self.labels):
            raise ValueError("one frequency row and one operator per control label")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_controls(self) -> int:
        return len(self.labels)

    def values(self, t) -> np.ndarray:
        """Control amplitudes; shape ``(n_controls,)`` for scalar ``t``, else ``(len(t), n_controls)``."""
        t = np.asarray(t, dtype=np.float64)
        phase = 2 * np.pi * t[..., None, None] * self.frequencies
        return self.amplitude * np.sin(phase).sum(axis=-1)

    def hamiltonian(self, t: float) -> np.ndarray:
        return np.tensordot(self.values(t), self.operators, axes=1)


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian terms ``(label, alpha, g)`` and jump channels ``(label, gamma, g)``.

    The operator arrays are shared between models created by
    :meth:`with_params`, so building many parameter variants is cheap.
    """

    dim: int
    h_labels: tuple
    h_ops: np.ndarray
    alpha: np.ndarray
    c_labels: tuple
    c_ops: np.ndarray
    gamma: np.ndarray
    probe: ProbeDrive | None = None
    family: str = "custom"
    n_sites: int | None = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        d = int(self.dim)
        h_ops = np.asarray(self.h_ops, dtype=np.complex128).reshape(-1, d, d)
        c_ops = np.asarray(self.c_ops, dtype=np.complex128).reshape(-1, d, d)
        alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        gamma = np.asarray(self.gamma, dtype=np.float64).reshape(-1)
        if len(alpha) != len(h_ops) or len(alpha) != len(self.h_labels):
            raise ValueError("alpha, h_ops and h_labels must have equal length")
        if len(gamma) != len(c_ops) or len(gamma) != len(self.c_labels):
            raise ValueError("gamma, c_ops and c_labels must have equal length")
        if np.any(gamma < 0):
            raise ValueError("dissipation strengths must be non-negative")
        if self.validate:
            for lab, g in zip(tuple(self.h_labels) + tuple(self.c_labels), np.concatenate([h_ops, c_ops])):
                if not is_hermitian(g):
                    raise ValueError(f"operator {lab} is not Hermitian")
                if abs(np.trace(g)) > 1e-12:
                    raise ValueError(f"operator {lab} is not traceless")
        if self.probe is not None and self.probe.operators.shape[1:] != (d, d):
            raise ValueError("probe operators do not match the model dimension")
        for name, value in (("h_ops", h_ops), ("c_ops", c_ops), ("alpha", alpha), ("gamma", gamma)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "h_labels", tuple(self.h_labels))
        object.__setattr__(self, "c_labels", tuple(self.c_labels))

    @classmethod
    def from_terms(cls, hamiltonian_terms: Iterable, jump_channels: Iterable, probe=None,
                   family: str = "custom", n_sites: int | None = None) -> "LindbladModel":
        """Build from ``(label, coefficient, operator)`` triples."""
        ht = list(hamiltonian_terms)
        jc = list(jump_channels)
        ops = [t[2] for t in ht + jc]
        if not ops:
            raise ValueError("at least one term or channel is required")
        d = as_matrix(ops[0]).shape[0]
        return cls(
            dim=d,
            h_labels=tuple(t[0] for t in ht),
            h_ops=np.array([as_matrix(t[2]) for t in ht]).reshape(-1, d, d),
            alpha=np.array([t[1] for t in ht], dtype=float),
            c_labels=tuple(t[0] for t in jc),
            c_ops=np.array([as_matrix(t[2]) for t in jc]).reshape(-1, d, d),
            gamma=np.array([t[1] for t in jc], dtype=float),
            probe=probe,
            family=family,
            n_sites=n_sites,
        )

    @property
    def n_alpha(self) -> int:
        return len(self.alpha)

    @property
    def n_gamma(self) -> int:
        return len(self.gamma)

    @property
    def n_params(self) -> int:
        return self.n_alpha + self.n_gamma

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.gamma])

    @property
    def hamiltonian_terms(self) -> list:
        return list(zip(self.h_labels, self.alpha, self.h_ops))

    @property
    def jump_channels(self) -> list:
        return list(zip(self.c_labels, self.gamma, self.c_ops))

    def with_params(self, alpha=None, gamma=None) -> "LindbladModel":
        return replace(
            self,
            alpha=self.alpha if alpha is None else np.asarray(alpha, dtype=float),
            gamma=self.gamma if gamma is None else np.asarray(gamma, dtype=float),
            validate=False,
        )

    def with_theta(self, theta) -> "LindbladModel":
        theta = np.asarray(theta, dtype=float)
        return self.with_params(theta[: self.n_alpha], theta[self.n_alpha:])

    def with_probe(self, probe: ProbeDrive | None) -> "LindbladModel":
        return replace(self, probe=probe, validate=False)

    def h0(self) -> np.ndarray:
        return -np.tensordot(self.alpha, self.h_ops, axes=1)

    def hamiltonian(self, t: float = 0.0) -> np.ndarray:
        h = self.h0()
        if self.probe is not None:
            h = h + self.probe.hamiltonian(t)
        return h

    def jump_operators(self) -> list[np.ndarray]:
        return [np.sqrt(g) * op for g, op in zip(self.gamma, self.c_ops)]


def lindblad_rhs(H, jumps: Sequence, rho) -> np.ndarray:
    """``-i[H, rho] + sum_k (J rho J^dag - {J^dag J, rho}/2)`` for explicit jump operators."""
    H, rho = as_matrix(H), as_matrix(rho)
    out = -1j * (H @ rho - rho @ H)
    for J in jumps:
        J = as_matrix(J)
        jd = J.conj().T
        jdj = jd @ J
        out += J @ rho @ jd - 0.5 * (jdj @ rho + rho @ jdj)
    return out


def rhs(model: LindbladModel, rho, t: float = 0.0) -> np.ndarray:
    """Lindblad right-hand side of ``model`` at time ``t``."""
    rho = as_matrix(rho)
    if rho.shape != (model.dim, model.dim):
        raise ValueError(f"rho has shape {rho.shape}, model dimension is {model.dim}")
    H = model.hamiltonian(t)
    out = -1j * (H @ rho - rho @ H)
    for g, op in zip(model.gamma, model.c_ops):
        if g == 0:
            continue
        od = op.conj().T
        odo = od @ op
        out += g * (op @ rho @ od - 0.5 * (odo @ rho + rho @ odo))
    return out


def vec(rho) -> np.ndarray:
    """Column-stacked vectorization."""
    return np.asarray(rho).reshape(-1, order="F").astype(np.complex128)


def unvec(v, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.shape[-1])))
    return v.reshape(d, d, order="F")


def commutator_superop(A) -> np.ndarray:
    A = as_matrix(A)
    eye = np.eye(A.shape[0])
    return np.kron(eye, A) - np.kron(A.T, eye)


def dissipator_superop(g) -> np.ndarray:
    g = as_matrix(g)
    eye = np.eye(g.shape[0])
    gdg = g.conj().T @ g
    return np.kron(g.conj(), g) - 0.5 * (np.kron(eye, gdg) + np.kron(gdg.T, eye))


def vectorize_liouvillian(model: LindbladModel, t: float = 0.0) -> np.ndarray:
    """Dense ``d^2 x d^2`` generator with ``vec(rhs(rho)) = L @ vec(rho)``."""
    out = -1j * commutator_superop(model.hamiltonian(t))
    for g, op in zip(model.gamma, model.c_ops):
        if g:
            out += g * dissipator_superop(op)
    return out


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Sorted Liouvillian spectrum (descending real part, ties by ascending |Im|)."""

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    steady_state: np.ndarray
    gap: complex
    t_dc: float
    gap_multiplicity: int
    zero_multiplicity: int
    gapless: bool
    condition: float

    @property
    def delta1(self) -> float:
        return float(self.gap.real)

    @property
    def delta2(self) -> float:
        return float(self.gap.imag)

    def coefficients(self, rho0) -> np.ndarray:
        """Projection coefficients ``lambda_m = v_m^dag vec(rho0)``."""
        return self.left.conj().T @ vec(rho0)


def _sort_order(w: np.ndarray, tol: float) -> np.ndarray:
    # ties in the real part (within tol) are broken by |Im|
    re = np.round(w.real / tol) * tol
    return np.lexsort((np.abs(w.imag), -re))


def spectral_analysis(L, gap_tol: float = 1e-9, max_condition: float = 1e12) -> Spectrum:
    """Eigen-analysis of a vectorized Liouvillian: steady state, gap and ``t_dc = 1/Delta1``."""
    L = as_matrix(L)
    dec = eig_general(L, max_condition=max_condition)
    scale = max(1.0, float(np.max(np.abs(L))))
    order = _sort_order(dec.eigenvalues, 1e-9 * scale)
    w = dec.eigenvalues[order]
    u = dec.right[:, order]
    v = dec.left[:, order]
    d = int(round(np.sqrt(L.shape[0])))
    ss = unvec(u[:, 0], d)
    tr = np.trace(ss)
    if abs(tr) < 1e-12:
        raise np.linalg.LinAlgError("zero mode has vanishing trace; no physical steady state")
    ss = ss / tr
    ss = 0.5 * (ss + ss.conj().T)
    # degenerate copies of the zero mode (several steady states) are skipped
    k = 1
    while k < len(w) and abs(w[k] - w[0]) <= 1e-8 * scale:
        k += 1
    gap = complex(w[0] - w[k]) if k < len(w) else 0j
    gapless = gap.real <= gap_tol * scale
    mult = int(np.sum(np.abs(w[k:] - w[k]) <= 1e-8 * scale)) if k < len(w) else 0
    t_dc = float("inf") if gapless else 1.0 / gap.real
    return Spectrum(
        eigenvalues=w,
        right=u,
        left=v,
        steady_state=ss,
        gap=gap,
        t_dc=t_dc,
        gap_multiplicity=mult,
        zero_multiplicity=k,
        gapless=bool(gapless),
        condition=dec.condition,
    )


def evolve_spectral(spectrum: Spectrum, rho0, times) -> list[np.ndarray]:
    """``rho(t) = sum_m lambda_m exp(eps_m t) u_m`` for a time-independent generator."""
    lam = spectrum.coefficients(rho0)
    d = int(round(np.sqrt(len(lam))))
    out = []
    for t in np.atleast_1d(times):
        out.append(unvec(spectrum.right @ (lam * np.exp(spectrum.eigenvalues * t)), d))
    return out


def measure(O, rho, tol: float = 1e-10) -> float:
    """``Re Tr[O rho]``; raises if the imaginary residue exceeds ``tol``."""
    O, rho = as_matrix(O), as_matrix(rho)
    if O.shape != rho.shape:
        raise ValueError(f"dimension mismatch: {O.shape} vs {rho.shape}")
    val = np.einsum("ij,ji->", O, rho)
    if abs(val.imag) > tol * max(1.0, float(np.abs(O).max())):
        raise ValueError(f"expectation value has imaginary part {val.imag:.3e}")
    return float(val.real)


# -- serialization -----------------------------------------------------------

def probe_to_dict(probe: ProbeDrive) -> dict:
    return {
        "amplitude": float(probe.amplitude),
        "controls": [
            {"label": lab, "frequencies": [float(f) for f in row]}
            for lab, row in zip(probe.labels, probe.frequencies)
        ],
    }


def probe_from_dict(data: dict, family: str, n_sites: int | None) -> ProbeDrive:
    labels = [c["label"] for c in data["controls"]]
    return ProbeDrive(
        labels=tuple(labels),
        operators=np.array([resolve_operator(family, lab, n_sites) for lab in labels]),
        frequencies=np.array([c["frequencies"] for c in data["controls"]], dtype=float),
        amplitude=float(data.get("amplitude", 2.0)),
    )


def model_to_dict(model: LindbladModel) -> dict:
    if model.family not in ("su4", "pauli"):
        raise ValueError("only models of the 'su4' and 'pauli' families can be serialized")
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "family": model.family,
        "n_sites": model.n_sites,
        "dim": model.dim,
        "hamiltonian_terms": [{"label": l, "alpha": float(a)} for l, a in zip(model.h_labels, model.alpha)],
        "channels": [{"label": l, "gamma": float(g)} for l, g in zip(model.c_labels, model.gamma)],
        "probe": None if model.probe is None else probe_to_dict(model.probe),
    }


def model_from_dict(data: dict) -> LindbladModel:
    if data.get("format") != MODEL_FORMAT:
        raise ValueError("not a lindlearn model document")
    family, n_sites = data["family"], data.get("n_sites")
    ht = [(t["label"], t["alpha"], resolve_operator(family, t["label"], n_sites)) for t in data["hamiltonian_terms"]]
    jc = [(c["label"], c["gamma"], resolve_operator(family, c["label"], n_sites)) for c in data["channels"]]
    probe = None if data.get("probe") is None else probe_from_dict(data["probe"], family, n_sites)
    model = LindbladModel.from_terms(ht, jc, probe=probe, family=family, n_sites=n_sites)
    if model.dim != data["dim"]:
        raise ValueError("dimension in document does not match the operators")
    return model


def save_model(model: LindbladModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> LindbladModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


__all__ += ["DefectiveMatrixError", "commutator_superop", "dissipator_superop", "probe_to_dict", "probe_from_dict"]
