"""Kronecker-sum operators against dense oracles."""

from __future__ import annotations

import numpy as np
import pytest

from helpers import kron_chain, random_tt
from ttmg.kron import (
    KronTerm,
    KroneckerSumOperator,
    assemble_dense,
    aux_local_matrix,
    complete_generator,
    export_triplets,
    kron_apply,
    operator_column_sums,
    petrov_galerkin,
    to_tt_matrix,
    triangular_split,
)
from ttmg.tt import EXACT, TruncationPolicy, tt_matvec, tt_to_full


def _random_op(row_dims, col_dims, nterms, rng, identity_prob=0.3):
    terms = []
    for _ in range(nterms):
        factors = []
        for m, n in zip(row_dims, col_dims):
            if m == n and rng.random() < identity_prob:
                factors.append(None)
            else:
                factors.append(rng.standard_normal((m, n)))
        terms.append(KronTerm(tuple(factors), float(rng.standard_normal())))
    return KroneckerSumOperator(row_dims, col_dims, terms)


def _dense(op):
    out = np.zeros(op.shape)
    for term in op.terms:
        out += term.coeff * kron_chain([op.factor(term, j) for j in range(op.nmodes)])
    return out


def test_identity_operator():
    op = KroneckerSumOperator.identity((2, 3, 2))
    np.testing.assert_array_equal(assemble_dense(op), np.eye(12))


def test_assemble_dense_hand_example():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    op = KroneckerSumOperator(
        (2, 2), (2, 2), [KronTerm((a, None)), KronTerm((None, b))]
    )
    expected = np.kron(a, np.eye(2)) + np.kron(np.eye(2), b)
    np.testing.assert_array_equal(assemble_dense(op), expected)


def test_assemble_dense_limit():
    op = KroneckerSumOperator.identity((300, 300))
    with pytest.raises(ValueError):
        assemble_dense(op, dense_limit=10**6)


def test_kron_apply_matches_dense():
    rng = np.random.default_rng(20)
    for _ in range(20):
        op = _random_op((3, 2, 3), (3, 2, 3), int(rng.integers(1, 7)), rng)
        x = random_tt((3, 2, 3), (2, 2), rng)
        y = kron_apply(op, x, EXACT, stride=int(rng.integers(1, 5)))
        np.testing.assert_allclose(
            tt_to_full(y).ravel(),
            _dense(op) @ tt_to_full(x).ravel(),
            atol=1e-10,
        )


def test_kron_apply_rectangular_and_empty():
    rng = np.random.default_rng(21)
    op = _random_op((2, 2), (4, 3), 3, rng, identity_prob=0.0)
    x = random_tt((4, 3), (2,), rng)
    y = kron_apply(op, x, EXACT)
    assert y.dims == (2, 2)
    np.testing.assert_allclose(
        tt_to_full(y).ravel(), _dense(op) @ tt_to_full(x).ravel(), atol=1e-12
    )
    empty = KroneckerSumOperator((2, 2), (2, 2), [])
    z = kron_apply(empty, random_tt((2, 2), (2,), rng), EXACT)
    assert tt_to_full(z).max() == 0.0


def test_kron_apply_equals_tt_matvec():
    rng = np.random.default_rng(22)
    for _ in range(10):
        op = _random_op((2, 3, 2), (2, 3, 2), 4, rng)
        x = random_tt((2, 3, 2), (3, 2), rng)
        via_terms = tt_to_full(kron_apply(op, x, EXACT))
        via_ttm = tt_to_full(tt_matvec(to_tt_matrix(op), x, EXACT))
        np.testing.assert_allclose(via_terms, via_ttm, atol=1e-10)


def test_to_tt_matrix_rank_bound_and_dedup():
    rng = np.random.default_rng(23)
    op = _random_op((3, 3, 3), (3, 3, 3), 5, rng)
    ttm = to_tt_matrix(op)
    assert max(ttm.ranks) <= op.nterms
    np.testing.assert_allclose(ttm.to_dense(), _dense(op), atol=1e-11)
    # T copies of the same term compress to rank 1 with coefficient T
    f = [rng.standard_normal((2, 2)) for _ in range(3)]
    rep = KroneckerSumOperator(
        (2, 2, 2), (2, 2, 2), [KronTerm(tuple(f), 1.0)] * 4
    )
    compressed = to_tt_matrix(rep)
    assert max(compressed.ranks) == 1
    np.testing.assert_allclose(compressed.to_dense(), 4 * kron_chain(f), atol=1e-12)


def test_complete_generator_birth_death():
    # single queue, capacity 2, rates 1: completed matrix is the usual chain
    e = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    op = KroneckerSumOperator((3,), (3,), [KronTerm((e,), 1.0)])
    comp = complete_generator(op)
    expected = np.array([[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]])
    np.testing.assert_array_equal(assemble_dense(comp), expected)


def test_complete_generator_zero_column_sums():
    rng = np.random.default_rng(24)
    op = _random_op((3, 2, 2), (3, 2, 2), 4, rng)
    comp = complete_generator(op)
    dense = assemble_dense(comp)
    np.testing.assert_allclose(dense.sum(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(operator_column_sums(comp), 0.0, atol=1e-12)


def test_complete_generator_drops_conservative_terms():
    # a factor whose columns already sum to zero yields no compensator
    conservative = np.array([[-1.0, 1.0], [1.0, -1.0]])
    op = KroneckerSumOperator((2, 2), (2, 2), [KronTerm((conservative, None), 2.0)])
    comp = complete_generator(op)
    assert comp.nterms == 1
    np.testing.assert_allclose(assemble_dense(comp).sum(axis=0), 0.0, atol=1e-14)


def test_complete_generator_merges_duplicates():
    e = np.array([[0.0, 0.0], [1.0, 0.0]])
    term = KronTerm((e, None), 1.0)
    op = KroneckerSumOperator((2, 2), (2, 2), [term, term])
    comp = complete_generator(op)
    # two identical transition terms merge, plus one merged compensator
    assert comp.nterms == 2
    np.testing.assert_allclose(assemble_dense(comp).sum(axis=0), 0.0, atol=1e-14)


def test_aux_local_matrix():
    rng = np.random.default_rng(25)
    op = _random_op((3, 4), (3, 4), 3, rng)
    for mode in range(2):
        expected = sum(
            t.coeff * op.factor(t, mode) for t in op.terms
        )
        np.testing.assert_allclose(aux_local_matrix(op, mode), expected, atol=1e-13)
    with pytest.raises(ValueError):
        aux_local_matrix(op, 2)
    # non-interacting pattern: identity couplings add (T-1) * I
    e = np.arange(4.0).reshape(2, 2)
    op2 = KroneckerSumOperator(
        (2, 2), (2, 2),
        [KronTerm((e, None), 1.0), KronTerm((None, e), 1.0)],
    )
    np.testing.assert_array_equal(aux_local_matrix(op2, 0), e + np.eye(2))


def test_triangular_split_single_mode():
    a = np.arange(9.0).reshape(3, 3)
    op = KroneckerSumOperator((3,), (3,), [KronTerm((a,), 1.0)])
    split = triangular_split(op)
    np.testing.assert_array_equal(assemble_dense(split.d), np.diag(np.diag(a)))
    np.testing.assert_array_equal(assemble_dense(split.l), -np.tril(a, -1))
    np.testing.assert_array_equal(assemble_dense(split.u), -np.triu(a, 1))


def test_triangular_split_exact_partition():
    rng = np.random.default_rng(26)
    for _ in range(10):
        op = _random_op((3, 2, 3), (3, 2, 3), 4, rng)
        split = triangular_split(op)
        a = assemble_dense(op)
        d = assemble_dense(split.d)
        l = assemble_dense(split.l)
        u = assemble_dense(split.u)
        assert np.max(np.abs(d - l - u - a)) == 0.0
        np.testing.assert_array_equal(d, np.diag(np.diag(a)))
        np.testing.assert_array_equal(-l, np.tril(a, -1))
        np.testing.assert_array_equal(-u, np.triu(a, 1))
        assert split.l.nterms <= op.nmodes * op.nterms
        np.testing.assert_array_equal(
            assemble_dense(split.forward_operator()), np.tril(a)
        )
        np.testing.assert_array_equal(
            assemble_dense(split.backward_operator()), np.triu(a)
        )


def test_triangular_split_trailing_order():
    # trailing-major split: the triangles live in the ordering where the
    # last mode varies slowest, i.e. tril/triu of the mode-reversed matrix
    rng = np.random.default_rng(61)
    for _ in range(10):
        dims = (3, 2, 3)
        op = _random_op(dims, dims, 4, rng)
        split = triangular_split(op, mode_major="trailing")
        a = assemble_dense(op)
        idx = np.arange(a.shape[0]).reshape(dims)
        perm = idx.transpose(2, 1, 0).ravel()
        ap = a[np.ix_(perm, perm)]
        d = assemble_dense(split.d)
        assert np.max(np.abs(d - assemble_dense(split.l)
                             - assemble_dense(split.u) - a)) == 0.0
        np.testing.assert_array_equal(d, np.diag(np.diag(a)))
        fwd = assemble_dense(split.forward_operator())[np.ix_(perm, perm)]
        bwd = assemble_dense(split.backward_operator())[np.ix_(perm, perm)]
        np.testing.assert_array_equal(fwd, np.tril(ap))
        np.testing.assert_array_equal(bwd, np.triu(ap))
    with pytest.raises(ValueError):
        triangular_split(op, mode_major="diagonal")


def test_triangular_split_prunes_structural_zeros():
    # I (x) B has no lower/upper contribution from the identity mode
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    op = KroneckerSumOperator((2, 2), (2, 2), [KronTerm((None, b), 1.0)])
    split = triangular_split(op)
    assert split.l.nterms == 1 and split.u.nterms == 1 and split.d.nterms == 1


def test_petrov_galerkin_identity_and_rank1():
    rng = np.random.default_rng(27)
    op = _random_op((3, 3), (3, 3), 3, rng)
    eyes = [np.eye(3), np.eye(3)]
    same = petrov_galerkin(op, eyes, eyes)
    np.testing.assert_allclose(assemble_dense(same), _dense(op), atol=1e-13)
    p = [rng.standard_normal((3, 2)) for _ in range(2)]
    q = [rng.standard_normal((2, 3)) for _ in range(2)]
    coarse = petrov_galerkin(op, p, q)
    assert coarse.shape == (4, 4)
    expected = kron_chain(q) @ _dense(op) @ kron_chain(p)
    np.testing.assert_allclose(assemble_dense(coarse), expected, atol=1e-12)


def test_operator_column_sums_matches_dense():
    rng = np.random.default_rng(28)
    op = _random_op((3, 2, 2), (3, 2, 2), 4, rng)
    np.testing.assert_allclose(
        operator_column_sums(op), _dense(op).sum(axis=0), atol=1e-12
    )


def test_norm_bound_dominates():
    rng = np.random.default_rng(29)
    for _ in range(10):
        op = _random_op((3, 3), (3, 3), 3, rng)
        assert op.norm_bound() >= np.linalg.norm(_dense(op), 2) - 1e-10


def test_export_triplets(tmp_path):
    a = np.array([[0.0, 2.0], [-1.0, 0.0]])
    op = KroneckerSumOperator((2,), (2,), [KronTerm((a,), 1.0)])
    path = tmp_path / "op.txt"
    count = export_triplets(op, path)
    lines = path.read_text().strip().splitlines()
    assert count == 2
    assert lines[0].startswith("#")
    parsed = [line.split() for line in lines[1:]]
    assert [int(p[0]) for p in parsed] == [0, 1]
    assert [float(p[2]) for p in parsed] == [2.0, -1.0]
