import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lindlearn import operators as ops


def test_su4_basis_properties():
    basis = ops.su4_generators()
    assert len(basis) == 15
    basis.validate()
    gram = np.array([[np.trace(a @ b) for b in basis.operators] for a in basis.operators])
    np.testing.assert_allclose(gram, 2 * np.eye(15), atol=1e-12)


def test_su4_is_closed_under_commutation():
    basis = ops.su4_generators()
    G = np.array(basis.operators)
    for a, b in itertools.combinations(range(15), 2):
        c = G[a] @ G[b] - G[b] @ G[a]
        coeff = np.einsum("kij,ji->k", G, c) / 2
        np.testing.assert_allclose(np.tensordot(coeff, G, 1), c, atol=1e-12)


def test_basis_validate_rejects_bad_norm():
    basis = ops.su4_generators()
    bad = ops.OperatorBasis("x", 4, basis.operators, basis.labels, norm=1.0)
    with pytest.raises(ValueError):
        bad.validate()


@pytest.mark.parametrize("two_s", [1, 2, 3])
def test_spin_algebra(two_s):
    sx, sy, sz = ops.spin_matrices(two_s)
    s = two_s / 2
    np.testing.assert_allclose(sx @ sy - sy @ sx, 1j * sz, atol=1e-12)
    casimir = sx @ sx + sy @ sy + sz @ sz
    np.testing.assert_allclose(casimir, s * (s + 1) * np.eye(two_s + 1), atol=1e-12)


def test_spin_matrices_invalid():
    with pytest.raises(ValueError):
        ops.spin_matrices(0)


def test_embed_chain_operator_examples():
    L = 3
    np.testing.assert_array_equal(ops.embed_chain_operator({}, L), np.eye(8))
    x0 = ops.embed_chain_operator({0: "x"}, L)
    np.testing.assert_array_equal(x0, np.kron(ops.PAULI[1], np.eye(4)))
    zz = ops.embed_chain_operator({0: 3, 2: 3}, L)
    np.testing.assert_array_equal(zz, np.kron(np.kron(ops.PAULI[3], np.eye(2)), ops.PAULI[3]))


def test_embed_out_of_range_site():
    with pytest.raises((ValueError, IndexError)):
        ops.embed_chain_operator({5: "x"}, 3)


@given(st.dictionaries(st.integers(0, 3), st.sampled_from("XYZ"), min_size=1, max_size=4))
def test_label_round_trip(assignment):
    label = ops.pauli_label(assignment)
    parsed = ops.parse_pauli_label(label)
    assert parsed == {k: "IXYZ".index(v) for k, v in assignment.items()}


@pytest.mark.parametrize("label", ["", "X", "Q1", "X1X1", "x1"])
def test_parse_malformed(label):
    with pytest.raises(ValueError):
        ops.parse_pauli_label(label)


def test_chain_terms_count_and_order():
    labels, mats = ops.chain_terms(5)
    assert len(labels) == 60 and len(mats) == 60
    assert labels[:3] == ["X0", "Y0", "Z0"]
    assert labels[15] == "X0X1"
    assert labels[-1] == "Z4Z0"
    for m in mats[:5] + mats[-5:]:
        np.testing.assert_allclose(m, m.conj().T)
        assert abs(np.trace(m)) == 0


def test_chain_operators_orthogonal():
    _, mats = ops.chain_terms(3)
    G = np.array(mats)
    gram = np.einsum("aij,bji->ab", G, G)
    np.testing.assert_allclose(gram, 8 * np.eye(len(G)), atol=1e-10)


def test_total_spin_is_sum_of_sites():
    sx, sy, sz = ops.total_spin(3)
    ref = sum(ops.embed_chain_operator({i: "z"}, 3) for i in range(3))
    np.testing.assert_allclose(sz, ref)


def test_gauge_fix_examples(rng):
    sz = ops.PAULI[3]
    h = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    h = h + h.conj().T
    j2, h2 = ops.gauge_fix(sz, h)
    np.testing.assert_array_equal(j2, sz)
    np.testing.assert_array_equal(h2, h)
    j3, _ = ops.gauge_fix(sz + np.eye(2), h)
    np.testing.assert_allclose(j3, sz)


def test_gauge_fix_shape_check():
    with pytest.raises(ValueError):
        ops.gauge_fix(np.eye(2), np.eye(3))


def test_spin32_ladder_element():
    sx, _, _ = ops.spin_matrices(3)
    assert np.isclose(sx[0, 1], np.sqrt(3) / 2)
