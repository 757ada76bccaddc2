"""TT algebra against dense oracles and frozen rank laws."""

from __future__ import annotations

import math

import numpy as np
import pytest

from helpers import best_rank1_error, kron_chain, random_tt, random_ttm
from ttmg.tt import (
    EXACT,
    TTMatrix,
    TTVector,
    TruncationPolicy,
    tt_add,
    tt_apply_modewise,
    tt_dot,
    tt_effective_rank,
    tt_from_elementary,
    tt_from_full,
    tt_matvec,
    tt_norm,
    tt_ones,
    tt_round,
    tt_scale,
    tt_to_full,
    tt_zero,
)

SHAPES = [(2,), (5,), (2, 2), (2, 3), (2, 2, 2), (3, 2, 4), (4, 4, 4), (2, 3, 2, 2)]


def _rand_pair(shape, rng):
    ranks_a = tuple(rng.integers(1, 4, size=len(shape) - 1)) if len(shape) > 1 else ()
    ranks_b = tuple(rng.integers(1, 4, size=len(shape) - 1)) if len(shape) > 1 else ()
    return random_tt(shape, ranks_a, rng), random_tt(shape, ranks_b, rng)


def test_elementary_matches_kron():
    rng = np.random.default_rng(0)
    factors = [rng.standard_normal(n) for n in (3, 2, 4)]
    x = tt_from_elementary(factors)
    assert x.ranks == (1, 1, 1, 1)
    dense = tt_to_full(x).ravel()
    expected = np.kron(np.kron(factors[0], factors[1]), factors[2])
    np.testing.assert_allclose(dense, expected, rtol=0, atol=1e-14)


def test_elementary_rejects_empty():
    with pytest.raises(ValueError):
        tt_from_elementary([])
    with pytest.raises(ValueError):
        tt_from_elementary([np.ones(2), np.ones(0)])


def test_mode_one_varies_slowest():
    # entry (i, j) of a (2, 3) tensor sits at flat position i*3 + j
    x = tt_from_full(np.arange(6.0).reshape(2, 3), EXACT)
    np.testing.assert_allclose(tt_to_full(x).ravel(), np.arange(6.0), atol=1e-13)


def test_to_full_respects_dense_limit():
    x = tt_ones((300, 300, 300))
    with pytest.raises(ValueError):
        tt_to_full(x, dense_limit=10**6)


def test_from_full_round_trip():
    rng = np.random.default_rng(1)
    for shape in SHAPES:
        arr = rng.standard_normal(shape)
        x = tt_from_full(arr, EXACT)
        np.testing.assert_allclose(tt_to_full(x), arr, atol=1e-12 * np.linalg.norm(arr) + 1e-14)


def test_from_full_rank1_of_elementary():
    rng = np.random.default_rng(2)
    factors = [rng.standard_normal(n) for n in (3, 4, 2)]
    dense = np.multiply.outer(np.multiply.outer(factors[0], factors[1]), factors[2])
    x = tt_from_full(dense, EXACT)
    assert x.ranks == (1, 1, 1, 1)


def test_from_full_max_rank_one_quasi_optimal():
    # best-effort rank-1: within sqrt(J-1) of the exhaustive minimizer
    rng = np.random.default_rng(3)
    for shape in [(2, 2, 2), (2, 2, 2, 2)]:
        arr = rng.standard_normal(shape)
        x = tt_from_full(arr, TruncationPolicy(0.0, 1))
        assert x.max_rank() == 1
        err = np.linalg.norm(tt_to_full(x) - arr)
        best = best_rank1_error(arr)
        assert err <= math.sqrt(len(shape) - 1) * best + 1e-10
        assert err >= best - 1e-10


def test_add_rank_law():
    rng = np.random.default_rng(4)
    x = random_tt((3, 3, 3), (2, 2), rng)
    y = random_tt((3, 3, 3), (3, 3), rng)
    z = tt_add(x, y)
    assert z.ranks == (1, 5, 5, 1)
    np.testing.assert_allclose(tt_to_full(z), tt_to_full(x) + tt_to_full(y), atol=1e-13)


def test_add_zero_still_grows_ranks():
    rng = np.random.default_rng(5)
    x = random_tt((2, 3, 2), (2, 2), rng)
    z = tt_add(x, tt_zero((2, 3, 2)))
    assert z.ranks == (1, 3, 3, 1)
    np.testing.assert_allclose(tt_to_full(z), tt_to_full(x), atol=1e-14)


def test_add_dimension_mismatch():
    with pytest.raises(ValueError):
        tt_add(tt_ones((2, 2)), tt_ones((2, 3)))


def test_scale_touches_one_core():
    rng = np.random.default_rng(6)
    x = random_tt((2, 2, 2), (2, 2), rng)
    y = tt_scale(x, -2.5)
    assert y.ranks == x.ranks
    np.testing.assert_allclose(tt_to_full(y), -2.5 * tt_to_full(x), atol=1e-13)
    for xc, yc in zip(x.cores[1:], y.cores[1:]):
        assert xc is yc or np.array_equal(xc, yc)
    z = tt_scale(x, 0.0)
    assert z.ranks == x.ranks
    assert tt_norm(z) == 0.0


def test_dot_and_norm_match_dense():
    rng = np.random.default_rng(7)
    for shape in SHAPES:
        x, y = _rand_pair(shape, rng)
        dx, dy = tt_to_full(x).ravel(), tt_to_full(y).ravel()
        assert tt_dot(x, y) == pytest.approx(float(dx @ dy), rel=1e-12, abs=1e-12)
        assert tt_norm(x) == pytest.approx(np.linalg.norm(dx), rel=1e-12)


def test_norm_of_near_cancellation():
    rng = np.random.default_rng(8)
    x = random_tt((3, 3, 3), (2, 2), rng)
    y = tt_add(x, tt_scale(x, -1.0))
    assert tt_norm(y) <= 1e-12 * tt_norm(x)


def test_round_contract_random_sweep():
    # rounding error stays below eps * ||x|| over 100 random tensors per shape
    rng = np.random.default_rng(9)
    for shape in [(2, 2, 2), (3, 2, 4), (4, 4, 4)]:
        for _ in range(100):
            ranks = tuple(rng.integers(1, 5, size=len(shape) - 1))
            x = random_tt(shape, ranks, rng)
            eps = 10.0 ** rng.uniform(-12, -1)
            y = tt_round(x, TruncationPolicy(eps, None))
            err = np.linalg.norm(tt_to_full(y) - tt_to_full(x))
            assert err <= eps * tt_norm(x) * (1 + 1e-12) + 1e-14


def test_round_removes_redundancy():
    rng = np.random.default_rng(10)
    x = random_tt((3, 3, 3), (2, 2), rng)
    doubled = tt_add(x, x)  # ranks (1,4,4,1) but content is rank (1,2,2,1)
    y = tt_round(doubled, EXACT)
    assert y.ranks == (1, 2, 2, 1)
    np.testing.assert_allclose(tt_to_full(y), 2 * tt_to_full(x), atol=1e-12)


def test_round_idempotent_and_rank1_stable():
    rng = np.random.default_rng(11)
    x = random_tt((2, 4, 3), (3, 2), rng)
    pol = TruncationPolicy(1e-3, None)
    once = tt_round(x, pol)
    twice = tt_round(once, pol)
    assert twice.ranks == once.ranks
    np.testing.assert_allclose(tt_to_full(twice), tt_to_full(once), atol=1e-12)
    r1 = tt_from_elementary([rng.standard_normal(3) for _ in range(3)])
    rounded = tt_round(r1, TruncationPolicy(0.5, None))
    assert rounded.ranks == (1, 1, 1, 1)
    np.testing.assert_allclose(tt_to_full(rounded), tt_to_full(r1), atol=1e-12)


def test_round_max_rank_cap():
    rng = np.random.default_rng(12)
    x = random_tt((4, 4, 4, 4), (6, 8, 6), rng)
    y = tt_round(x, TruncationPolicy(0.0, 3))
    assert y.max_rank() <= 3


def test_round_zero_tensor():
    z = tt_round(tt_add(tt_zero((2, 3, 2)), tt_zero((2, 3, 2))), EXACT)
    assert z.ranks == (1, 1, 1, 1)
    assert tt_norm(z) == 0.0


def test_round_single_mode_is_copy():
    x = TTVector([np.arange(4.0).reshape(1, 4, 1)])
    y = tt_round(x, TruncationPolicy(0.9, 1))
    np.testing.assert_array_equal(tt_to_full(y), tt_to_full(x))


def test_matvec_against_dense():
    rng = np.random.default_rng(13)
    a = random_ttm((3, 3, 3), (3, 3, 3), (2, 2), rng)
    x = random_tt((3, 3, 3), (3, 3), rng)
    raw = tt_matvec(a, x, EXACT, round_result=False)
    assert raw.ranks == (1, 6, 6, 1)  # ranks multiply before rounding
    y = tt_matvec(a, x, EXACT)
    dense = a.to_dense() @ tt_to_full(x).ravel()
    np.testing.assert_allclose(tt_to_full(y).ravel(), dense, atol=1e-11)


def test_matvec_identity_and_rank1():
    rng = np.random.default_rng(14)
    eye = TTMatrix.from_kron_factors([np.eye(2), np.eye(3), np.eye(2)])
    x = random_tt((2, 3, 2), (2, 2), rng)
    y = tt_matvec(eye, x, EXACT)
    np.testing.assert_allclose(tt_to_full(y), tt_to_full(x), atol=1e-12)
    mats = [rng.standard_normal((n, n)) for n in (2, 3, 2)]
    a = TTMatrix.from_kron_factors(mats)
    z = tt_matvec(a, x, EXACT)
    dense = kron_chain(mats) @ tt_to_full(x).ravel()
    np.testing.assert_allclose(tt_to_full(z).ravel(), dense, atol=1e-12)


def test_matvec_rectangular():
    rng = np.random.default_rng(15)
    a = random_ttm((2, 2), (4, 3), (2,), rng)
    x = random_tt((4, 3), (2,), rng)
    y = tt_matvec(a, x, EXACT)
    assert y.dims == (2, 2)
    np.testing.assert_allclose(
        tt_to_full(y).ravel(), a.to_dense() @ tt_to_full(x).ravel(), atol=1e-12
    )


def test_apply_modewise_matches_kron():
    rng = np.random.default_rng(16)
    x = random_tt((3, 4, 2), (2, 3), rng)
    mats = [rng.standard_normal((2, 3)), None, rng.standard_normal((5, 2))]
    y = tt_apply_modewise(mats, x)
    assert y.dims == (2, 4, 5)
    assert y.ranks == x.ranks
    dense = kron_chain([mats[0], np.eye(4), mats[2]]) @ tt_to_full(x).ravel()
    np.testing.assert_allclose(tt_to_full(y).ravel(), dense, atol=1e-12)


def test_effective_rank_frozen_quadratic():
    # J=3, dims (2,2,2), ranks (1,2,3,1): storage 22, solve 2 r^2 + 4 r = 22
    rng = np.random.default_rng(17)
    x = random_tt((2, 2, 2), (2, 3), rng)
    assert x.storage == 22
    expected = 2.0 * math.sqrt(3.0) - 1.0
    assert tt_effective_rank(x) == pytest.approx(expected, rel=1e-14)


def test_effective_rank_uniform_recovers_rank():
    rng = np.random.default_rng(18)
    for r in (1, 2, 5):
        x = random_tt((4, 4, 4, 4), (r, r, r), rng)
        assert tt_effective_rank(x) == pytest.approx(r, rel=1e-12)
    two = random_tt((3, 5), (4,), rng)
    assert tt_effective_rank(two) == pytest.approx(4.0, rel=1e-12)
    with pytest.raises(ValueError):
        tt_effective_rank(TTVector([np.ones((1, 3, 1))]))


def test_dense_equivalence_sweep_all_ops():
    # every op against its dense counterpart on shapes with <= 256 entries
    rng = np.random.default_rng(19)
    for shape in SHAPES:
        for _ in range(5):
            x, y = _rand_pair(shape, rng)
            dx, dy = tt_to_full(x), tt_to_full(y)
            np.testing.assert_allclose(tt_to_full(tt_add(x, y)), dx + dy, atol=1e-12)
            np.testing.assert_allclose(tt_to_full(tt_scale(x, 1.5)), 1.5 * dx, atol=1e-12)
            assert tt_dot(x, y) == pytest.approx(float(dx.ravel() @ dy.ravel()), abs=1e-10, rel=1e-10)
            z = tt_round(tt_add(x, y), TruncationPolicy(1e-10, None))
            np.testing.assert_allclose(tt_to_full(z), dx + dy, atol=1e-8)
            back = tt_from_full(dx, EXACT)
            np.testing.assert_allclose(tt_to_full(back), dx, atol=1e-12)
