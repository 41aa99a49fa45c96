"""Operator families: SU(4) generators, spin matrices and Pauli-string chains."""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .linalg import as_matrix, is_hermitian

__all__ = [
    "OperatorBasis",
    "PAULI",
    "su4_generators",
    "spin_matrices",
    "embed_chain_operator",
    "pauli_label",
    "parse_pauli_label",
    "pauli_from_label",
    "chain_terms",
    "total_spin",
    "gauge_fix",
]

_I2 = np.eye(2, dtype=np.complex128)
_SX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
_SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128)

#: single-site Pauli matrices indexed 0..3 = I, X, Y, Z
PAULI = (_I2, _SX, _SY, _SZ)
_PAULI_CODE = {"i": 0, "x": 1, "y": 2, "z": 3}
_PAULI_CHAR = "IXYZ"


@dataclass(frozen=True)
class OperatorBasis:
    """An ordered family of Hermitian, traceless, mutually orthogonal operators.

    ``norm`` is the constant ``c`` in ``Tr[g_mu g_nu] = c * delta_mu_nu``.
    """

    label: str
    dim: int
    operators: tuple
    labels: tuple
    norm: float

    def __len__(self) -> int:
        return len(self.operators)

    def __getitem__(self, i):
        return self.operators[i]

    def validate(self, tol: float = 1e-10) -> None:
        """Raise ``ValueError`` if any basis condition is violated."""
        ops = np.array([as_matrix(g) for g in self.operators])
        if ops.shape[1:] != (self.dim, self.dim):
            raise ValueError(f"operators must be {self.dim}x{self.dim}")
        for lab, g in zip(self.labels, ops):
            if not is_hermitian(g):
                raise ValueError(f"{lab} is not Hermitian")
            if abs(np.trace(g)) > 1e-12:
                raise ValueError(f"{lab} is not traceless")
        gram = np.einsum("aij,bji->ab", ops, ops)
        if np.max(np.abs(gram - self.norm * np.eye(len(ops)))) > tol:
            raise ValueError("operators are not orthogonal with the declared norm")


def _su4_matrices() -> list[np.ndarray]:
    gens = []
    # off-diagonal symmetric/antisymmetric pairs in the order (0,1),(0,2),(1,2),(0,3),(1,3),(2,3)
    # with the two diagonal generators inserted after (1,2) and after (2,3)
    pairs = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]
    diag = {
        (0, 1): np.diag([1, -1, 0, 0]).astype(np.complex128),
        (1, 2): np.diag([1, 1, -2, 0]).astype(np.complex128) / np.sqrt(3),
        (2, 3): np.diag([1, 1, 1, -3]).astype(np.complex128) / np.sqrt(6),
    }
    for j, k in pairs:
        s = np.zeros((4, 4), dtype=np.complex128)
        s[j, k] = s[k, j] = 1
        a = np.zeros((4, 4), dtype=np.complex128)
        a[j, k] = -1j
        a[k, j] = 1j
        gens.extend([s, a])
        if (j, k) in diag:
            gens.append(diag[(j, k)])
    return gens


@lru_cache(maxsize=None)
def su4_generators() -> OperatorBasis:
    """The 15 SU(4) generators g_1..g_15 in the fixed fundamental-representation order."""
    gens = _su4_matrices()
    for g in gens:
        g.setflags(write=False)
    return OperatorBasis(
        label="su4",
        dim=4,
        operators=tuple(gens),
        labels=tuple(f"g{k}" for k in range(1, 16)),
        norm=2.0,
    )


def spin_matrices(two_S: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Angular-momentum matrices (S_x, S_y, S_z) in the |S, m> basis, m = S ... -S."""
    if two_S < 1:
        raise ValueError("two_S must be >= 1")
    s = two_S / 2
    m = s - np.arange(two_S + 1)
    splus = np.zeros((two_S + 1, two_S + 1), dtype=np.complex128)
    for k in range(1, two_S + 1):
        splus[k - 1, k] = np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    sminus = splus.conj().T
    sx = (splus + sminus) / 2
    sy = (splus - sminus) / 2j
    sz = np.diag(m).astype(np.complex128)
    return sx, sy, sz


def _code(p) -> int:
    if isinstance(p, str):
        try:
            return _PAULI_CODE[p.lower()]
        except KeyError:
            raise ValueError(f"unknown Pauli label {p!r}") from None
    p = int(p)
    if not 0 <= p <= 3:
        raise ValueError(f"Pauli index must be in 0..3, got {p}")
    return p


def _codes_from_assignment(pauli_indices: Mapping[int, object] | Sequence, L: int) -> list[int]:
    if L < 1:
        raise ValueError("chain length must be >= 1")
    codes = [0] * L
    items = pauli_indices.items() if isinstance(pauli_indices, Mapping) else enumerate(pauli_indices)
    for site, p in items:
        site = int(site)
        if not 0 <= site < L:
            raise ValueError(f"site index {site} out of range for L={L}")
        codes[site] = _code(p)
    return codes


def pauli_string_sparse(codes: Sequence[int]) -> sp.csr_matrix:
    """Kronecker product of single-site Pauli matrices, site 0 leftmost, as CSR."""
    out = sp.csr_matrix(np.ones((1, 1), dtype=np.complex128))
    for c in codes:
        out = sp.kron(out, sp.csr_matrix(PAULI[c]), format="csr")
    return out


def embed_chain_operator(pauli_indices: Mapping[int, object] | Sequence, L: int) -> np.ndarray:
    """Dense 2^L x 2^L operator with the listed Pauli matrices and identity elsewhere.

    ``pauli_indices`` maps site -> Pauli (``'x'``, ``'y'``, ``'z'``, ``'i'`` or 0..3),
    or is a length-L sequence. Site 0 is the leftmost Kronecker factor.
    """
    codes = _codes_from_assignment(pauli_indices, L)
    out = np.ones((1, 1), dtype=np.complex128)
    for c in codes:
        out = np.kron(out, PAULI[c])
    return out


def total_spin(L: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Total-spin operators S_mu = sum_i sigma_mu^i for mu = x, y, z."""
    return tuple(
        sum(embed_chain_operator({i: mu}, L) for i in range(L)) for mu in "xyz"
    )


_LABEL_RE = re.compile(r"([IXYZ])(\d+)")


def pauli_label(assignment: Mapping[int, object]) -> str:
    """Canonical label such as ``"X0"`` or ``"X4Y0"`` (listing order preserved)."""
    return "".join(f"{_PAULI_CHAR[_code(p)]}{int(s)}" for s, p in assignment.items())


def parse_pauli_label(label: str) -> dict[int, int]:
    parts = _LABEL_RE.findall(label)
    if not parts or "".join(a + b for a, b in parts) != label:
        raise ValueError(f"malformed Pauli label {label!r}")
    out: dict[int, int] = {}
    for ch, site in parts:
        site = int(site)
        if site in out:
            raise ValueError(f"site {site} repeated in label {label!r}")
        out[site] = _PAULI_CHAR.index(ch)
    return out


def pauli_from_label(label: str, L: int) -> np.ndarray:
    return embed_chain_operator(parse_pauli_label(label), L)


def chain_terms(L: int) -> tuple[list[str], list[np.ndarray]]:
    """Labels and operators of the nearest-neighbour chain with periodic bonds.

    Ordering: one-body terms (site-major, then x, y, z), then two-body terms
    (bond-major with bond i joining sites i and i+1 mod L, then (mu, nu) in
    row-major 3x3 order). For L=5 this gives 15 + 45 = 60 operators.
    """
    if L < 2:
        raise ValueError("chain length must be >= 2")
    labels = []
    for i in range(L):
        for mu in "xyz":
            labels.append(pauli_label({i: mu}))
    for i in range(L):
        j = (i + 1) % L
        for mu, nu in itertools.product("xyz", repeat=2):
            labels.append(pauli_label({i: mu, j: nu}))
    return labels, [pauli_from_label(lab, L) for lab in labels]


def gauge_fix(J, H) -> tuple[np.ndarray, np.ndarray]:
    """Remove the trace of a jump operator and absorb it into the Hamiltonian.

    Returns ``(J - a I, H + (i/2) [a* J - (a* J)^dagger])`` with ``a = Tr[J]/d``;
    the Lindblad generator is unchanged.
    """
    J, H = as_matrix(J), as_matrix(H)
    if J.shape != H.shape or J.shape[0] != J.shape[1]:
        raise ValueError("J and H must be square with equal shape")
    d = J.shape[0]
    a = np.trace(J) / d
    if a == 0:
        return J.copy(), H.copy()
    aj = np.conj(a) * J
    return J - a * np.eye(d), H + 0.5j * (aj - aj.conj().T)
