"""Real coherence-vector representation of Lindblad dynamics.

A density matrix is expanded in an orthonormal Hermitian operator basis
``E_b`` (``Tr[E_a E_b] = delta_ab``), ``rho = sum_b x_b E_b`` with real
``x_b = Tr[E_b rho]``. Every Hermiticity-preserving superoperator then acts as
a real matrix ``R_ab = Tr[E_a S(E_b)]``. The Lindblad generator is linear in
the parameters, so it is stored as one sparse real generator per parameter
plus one per probe control::

    dx/dt = (sum_j theta_j B_j + sum_c p_c(t) C_c) x

Qubit models use normalized Pauli strings (the generators are then very
sparse); other dimensions use I/sqrt(d) plus normalized generalized Gell-Mann
matrices, or ``I/2`` plus ``g_mu/sqrt(2)`` for the SU(4) family.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .engine import LindbladModel, ProbeDrive, vec
from .operators import PAULI, su4_generators

__all__ = ["OperatorFrame", "RealSystem", "operator_frame", "compile_model"]


def _gell_mann(d: int) -> list[np.ndarray]:
    mats = []
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=np.complex128)
            s[j, k] = s[k, j] = 1
            a = np.zeros((d, d), dtype=np.complex128)
            a[j, k], a[k, j] = -1j, 1j
            mats.extend([s, a])
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1
        diag[l] = -l
        mats.append(np.diag(diag).astype(np.complex128) * np.sqrt(2 / (l * (l + 1))))
    return mats


@dataclass(frozen=True, eq=False)
class OperatorFrame:
    """Orthonormal Hermitian basis stored as a sparse ``d^2 x d^2`` matrix whose
    column ``b`` is ``vec(E_b)``; column 0 is always ``I/sqrt(d)``."""

    dim: int
    kind: str
    T: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.dim * self.dim

    def to_real(self, rho) -> np.ndarray:
        x = self.T.conj().T @ vec(rho)
        return np.ascontiguousarray(x.real)

    def from_real(self, x) -> np.ndarray:
        v = self.T @ np.asarray(x, dtype=np.complex128)
        return v.reshape(self.dim, self.dim, order="F")

    def observable(self, O) -> np.ndarray:
        """Real vector ``o`` with ``Tr[O rho] = o . x``."""
        o = self.T.conj().T @ vec(O)
        return np.ascontiguousarray(o.real)

    def project(self, S) -> sp.csr_matrix:
        """Real matrix of a vectorized superoperator ``S`` in this frame."""
        S = sp.csr_matrix(S)
        R = (self.T.conj().T @ S @ self.T).tocsr()
        if R.nnz and np.max(np.abs(R.data.imag)) > 1e-10:
            raise ValueError("superoperator does not preserve Hermiticity")
        R = sp.csr_matrix(R.real)
        R.data[np.abs(R.data) < 1e-13] = 0.0
        R.eliminate_zeros()
        R.sort_indices()
        return R


@lru_cache(maxsize=16)
def _frame(dim: int, kind: str) -> OperatorFrame:
    cols = []
    if kind == "pauli":
        L = int(round(np.log2(dim)))
        norm = 1 / np.sqrt(dim)
        for codes in itertools.product(range(4), repeat=L):
            m = sp.csr_matrix(np.ones((1, 1), dtype=np.complex128))
            for c in codes:
                m = sp.kron(m, sp.csr_matrix(PAULI[c]), format="csr")
            cols.append(sp.csr_matrix(m.T.reshape(1, -1)) * norm)
    else:
        mats = [np.eye(dim, dtype=np.complex128) / np.sqrt(dim)]
        if kind == "su4":
            mats += [np.array(g) / np.sqrt(2) for g in su4_generators().operators]
        else:
            mats += [g / np.sqrt(2) for g in _gell_mann(dim)]
        cols = [sp.csr_matrix(vec(m).reshape(1, -1)) for m in mats]
    T = sp.vstack(cols).T.tocsr()
    return OperatorFrame(dim=dim, kind=kind, T=T)


def operator_frame(model_or_dim, kind: str | None = None) -> OperatorFrame:
    if isinstance(model_or_dim, LindbladModel):
        dim = model_or_dim.dim
        if kind is None:
            kind = {"su4": "su4", "pauli": "pauli"}.get(model_or_dim.family)
    else:
        dim = int(model_or_dim)
    if kind is None:
        kind = "pauli" if dim & (dim - 1) == 0 and dim > 1 else "gellmann"
    if kind == "su4" and dim != 4:
        raise ValueError("su4 frame requires dim 4")
    return _frame(dim, kind)


def _sparse_commutator(A: np.ndarray) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    eye = sp.identity(A.shape[0], dtype=np.complex128, format="csr")
    return (sp.kron(eye, A) - sp.kron(A.T, eye)).tocsr()


def _sparse_dissipator(g: np.ndarray) -> sp.csr_matrix:
    g = sp.csr_matrix(g)
    eye = sp.identity(g.shape[0], dtype=np.complex128, format="csr")
    gdg = (g.conj().T @ g).tocsr()
    return (sp.kron(g.conj(), g) - 0.5 * (sp.kron(eye, gdg) + sp.kron(gdg.T, eye))).tocsr()


def _csr_arrays(m: sp.csr_matrix):
    return (
        np.ascontiguousarray(m.indptr, dtype=np.int32),
        np.ascontiguousarray(m.indices, dtype=np.int32),
        np.ascontiguousarray(m.data, dtype=np.float64),
    )


@dataclass(eq=False)
class RealSystem:
    """Linear, parameter-affine real system ``dx/dt = (sum theta_j B_j + sum p_c C_c) x``.

    This is the object the propagation kernels and the adjoint sweep work on.
    ``frame`` and ``model`` are ``None`` for systems built directly from
    matrices (e.g. scalar test problems).
    """

    generators: list
    controls: list
    frame: OperatorFrame | None = None
    model: LindbladModel | None = None

    def __post_init__(self):
        self.generators = [sp.csr_matrix(g, dtype=np.float64) for g in self.generators]
        self.controls = [sp.csr_matrix(c, dtype=np.float64) for c in self.controls]
        n = self.generators[0].shape[0]
        self.n = n
        coo = [g.tocoo() for g in self.generators]
        self._pid = np.concatenate([np.full(c.nnz, j, dtype=np.int32) for j, c in enumerate(coo)])
        self._row = np.concatenate([c.row for c in coo]).astype(np.int32)
        self._col = np.concatenate([c.col for c in coo]).astype(np.int32)
        self._val = np.concatenate([c.data for c in coo]).astype(np.float64)
        uniq, inv = np.unique(self._row.astype(np.int64) * n + self._col, return_inverse=True)
        self._pattern = ((uniq // n).astype(np.int32), (uniq % n).astype(np.int32),
                         inv.astype(np.int64).reshape(-1), self._pid, self._val)
        if self.controls:
            cs = sp.vstack(self.controls).tocsr()
            cts = sp.vstack([c.T for c in self.controls]).tocsr()
        else:
            cs = cts = sp.csr_matrix((0, n))
        cs.sort_indices()
        cts.sort_indices()
        self.ctrl = _csr_arrays(cs)
        self.ctrl_t = _csr_arrays(cts)

    @property
    def n_params(self) -> int:
        return len(self.generators)

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def coo(self):
        return (self._pid, self._row, self._col, self._val)

    @property
    def pattern(self):
        """``(prow, pcol, pmap, pid, val)``: union sparsity pattern of the generators
        and, per generator entry, its slot in that pattern."""
        return self._pattern

    def assemble(self, theta) -> sp.csr_matrix:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        A = sp.coo_matrix((self._val * theta[self._pid], (self._row, self._col)), shape=(self.n, self.n)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return A

    def drift_arrays(self, theta):
        A = self.assemble(theta)
        At = A.T.tocsr()
        At.sort_indices()
        return _csr_arrays(A), _csr_arrays(At)

    def dense_generator(self, theta, p=None) -> np.ndarray:
        A = self.assemble(theta).toarray()
        if p is not None:
            for pc, c in zip(p, self.controls):
                A += pc * c.toarray()
        return A


def compile_model(model: LindbladModel, frame: OperatorFrame | None = None) -> RealSystem:
    """Real generators for ``theta = (alpha, gamma)`` and the probe controls of ``model``.

    ``d rho/d alpha_mu = +i[g_mu, rho]`` (from ``H0 = -sum alpha g``) and
    ``d rho/d gamma_k = g rho g^dag - {g^dag g, rho}/2``; the controls are
    ``-i[A_c, rho]``.
    """
    if frame is None:
        frame = operator_frame(model)
    gens = [frame.project(1j * _sparse_commutator(g)) for g in model.h_ops]
    gens += [frame.project(_sparse_dissipator(g)) for g in model.c_ops]
    ctrls = []
    if model.probe is not None:
        ctrls = [frame.project(-1j * _sparse_commutator(a)) for a in model.probe.operators]
    return RealSystem(generators=gens, controls=ctrls, frame=frame, model=model)


def control_system(system: RealSystem, probe: ProbeDrive) -> RealSystem:
    """Same parameter generators with the controls of ``probe``."""
    frame = system.frame
    ctrls = [frame.project(-1j * _sparse_commutator(a)) for a in probe.operators]
    return RealSystem(generators=system.generators, controls=ctrls, frame=frame, model=system.model)
