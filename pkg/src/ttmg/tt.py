"""Tensor-train (TT) vectors and matrices with SVD-based rounding.

A TT vector stores a J-way tensor as a chain of 3-way cores
``G_k`` of shape ``(r_{k-1}, n_k, r_k)`` with ``r_0 = r_J = 1``;
the tensor entry at ``(i_1, ..., i_J)`` is the product
``G_1[:, i_1, :] @ ... @ G_J[:, i_J, :]``.  Vectorization follows the
Kronecker convention: mode 1 varies slowest, so ``tt_to_full(x).ravel()``
of an elementary tensor equals the Kronecker product of its factors.

A TT matrix uses 4-way cores ``(r_{k-1}, m_k, n_k, r_k)``; a rank-1 TT
matrix is exactly a Kronecker product of its factor matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

DENSE_LIMIT = 10**7

# Relative singular-value floor: trailing values below SV_FLOOR * sigma_max
# are discarded in every truncation sweep, regardless of the policy epsilon.
SV_FLOOR = 1e-14


@dataclass(frozen=True)
class TruncationPolicy:
    """Rounding control: relative 2-norm tolerance plus a hard rank cap.

    ``rel_tolerance`` is the allowed relative error of a full rounding pass,
    distributed over the J-1 truncation steps as eps*||x||/sqrt(J-1).
    ``max_rank=None`` means no cap.
    """

    rel_tolerance: float = 0.0
    max_rank: int | None = None

    def __post_init__(self):
        if self.rel_tolerance < 0:
            raise ValueError("rel_tolerance must be nonnegative")
        if self.max_rank is not None and self.max_rank < 1:
            raise ValueError("max_rank must be at least 1")


#: Policy performing no truncation beyond the floating-point floor.
EXACT = TruncationPolicy(0.0, None)


def _as_core(arr):
    core = np.ascontiguousarray(np.asarray(arr, dtype=float))
    if core.ndim != 3:
        raise ValueError(f"TT core must be 3-way, got shape {core.shape}")
    return core


class TTVector:
    """Immutable-by-convention chain of 3-way TT cores."""

    __slots__ = ("cores",)

    def __init__(self, cores):
        cores = [_as_core(c) for c in cores]
        if not cores:
            raise ValueError("a TT vector needs at least one core")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary TT ranks must be 1")
        for left, right in zip(cores, cores[1:]):
            if left.shape[2] != right.shape[0]:
                raise ValueError(
                    f"rank mismatch between cores: {left.shape} -> {right.shape}"
                )
        self.cores = cores

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def dims(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def storage(self) -> int:
        return sum(c.size for c in self.cores)

    def max_rank(self) -> int:
        return max(self.ranks)

    def copy(self) -> "TTVector":
        return TTVector([c.copy() for c in self.cores])

    def __repr__(self):
        return f"TTVector(dims={self.dims}, ranks={self.ranks})"


def tt_zero(dims) -> TTVector:
    """All-zero tensor at the minimal ranks (all 1)."""
    return TTVector([np.zeros((1, n, 1)) for n in dims])


def tt_ones(dims) -> TTVector:
    """All-ones tensor, rank 1 throughout."""
    return TTVector([np.ones((1, n, 1)) for n in dims])


def tt_from_elementary(factors) -> TTVector:
    """Rank-1 TT whose dense form is the Kronecker product of the factors."""
    factors = [np.asarray(f, dtype=float) for f in factors]
    if not factors:
        raise ValueError("need at least one factor")
    for f in factors:
        if f.ndim != 1 or f.size == 0:
            raise ValueError("factors must be nonempty 1-d arrays")
    return TTVector([f.reshape(1, -1, 1) for f in factors])


def tt_to_full(x: TTVector, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    """Contract to the dense tensor of shape ``x.dims``.

    Refuses tensors with more than ``dense_limit`` entries.
    """
    total = math.prod(x.dims)
    if total > dense_limit:
        raise ValueError(f"dense tensor would hold {total} > {dense_limit} entries")
    acc = x.cores[0][0]  # (n_1, r_1)
    for core in x.cores[1:]:
        acc = np.tensordot(acc, core, axes=(acc.ndim - 1, 0))
    return acc[..., 0]


def _svd(a):
    # gesdd occasionally fails to converge; fall back to the slower gesvd.
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")


def _select_rank(s: np.ndarray, delta: float, max_rank: int | None) -> int:
    """Smallest kept rank honoring the tail budget, the floor, and the cap."""
    if s[0] == 0.0:
        return 1
    floor_rank = int(np.count_nonzero(s > SV_FLOOR * s[0]))
    if delta > 0.0:
        tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]  # tail[i] = ||s[i:]||
        keep = int(np.searchsorted(-tail, -delta))  # first i with tail[i] <= delta
    else:
        keep = s.size
    rank = min(keep, floor_rank)
    if max_rank is not None:
        rank = min(rank, max_rank)
    return max(rank, 1)


def _right_orthogonalize(cores):
    """In-place sweep making cores[1:] right-orthogonal; returns the list."""
    for k in range(len(cores) - 1, 0, -1):
        r0, n, r1 = cores[k].shape
        q, rmat = np.linalg.qr(cores[k].reshape(r0, n * r1).T)
        cores[k] = q.T.reshape(-1, n, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], rmat, axes=(2, 1))
    return cores


def tt_round(x: TTVector, policy: TruncationPolicy) -> TTVector:
    """Truncate ranks so that ``||result - x|| <= rel_tolerance * ||x||``.

    Right-to-left orthogonalization followed by a left-to-right SVD sweep;
    each step gets the budget eps*||x||/sqrt(J-1), trailing singular values
    below 1e-14 * sigma_max are always dropped, and no internal rank exceeds
    ``policy.max_rank``.
    """
    if x.order == 1:
        return x.copy()
    cores = _right_orthogonalize([c.copy() for c in x.cores])
    xnorm = np.linalg.norm(cores[0])
    if xnorm == 0.0:
        return tt_zero(x.dims)
    delta = policy.rel_tolerance * xnorm / math.sqrt(x.order - 1)
    for k in range(len(cores) - 1):
        r0, n, r1 = cores[k].shape
        u, s, vt = _svd(cores[k].reshape(r0 * n, r1))
        rank = _select_rank(s, delta, policy.max_rank)
        cores[k] = u[:, :rank].reshape(r0, n, rank)
        carry = s[:rank, None] * vt[:rank]
        cores[k + 1] = np.tensordot(carry, cores[k + 1], axes=(1, 0))
    return TTVector(cores)


def tt_from_full(arr, policy: TruncationPolicy, dense_limit: int = DENSE_LIMIT) -> TTVector:
    """TT-SVD of a dense tensor; shape of ``arr`` fixes the mode sizes."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 0:
        raise ValueError("need a tensor with at least one mode")
    if arr.size > dense_limit:
        raise ValueError(f"dense tensor holds {arr.size} > {dense_limit} entries")
    dims = arr.shape
    if arr.ndim == 1:
        return TTVector([arr.reshape(1, -1, 1)])
    norm = np.linalg.norm(arr)
    if norm == 0.0:
        return tt_zero(dims)
    delta = policy.rel_tolerance * norm / math.sqrt(arr.ndim - 1)
    cores = []
    rest = arr.reshape(1, arr.size)
    r_prev = 1
    for k in range(arr.ndim - 1):
        u, s, vt = _svd(rest.reshape(r_prev * dims[k], -1))
        rank = _select_rank(s, delta, policy.max_rank)
        cores.append(u[:, :rank].reshape(r_prev, dims[k], rank))
        rest = s[:rank, None] * vt[:rank]
        r_prev = rank
    cores.append(rest.reshape(r_prev, dims[-1], 1))
    return TTVector(cores)


def tt_add(x: TTVector, y: TTVector) -> TTVector:
    """Exact sum; internal ranks add, boundary ranks stay 1."""
    if x.dims != y.dims:
        raise ValueError(f"dimension mismatch: {x.dims} vs {y.dims}")
    if x.order == 1:
        return TTVector([x.cores[0] + y.cores[0]])
    cores = []
    for k, (xc, yc) in enumerate(zip(x.cores, y.cores)):
        rx0, n, rx1 = xc.shape
        ry0, _, ry1 = yc.shape
        if k == 0:
            cores.append(np.concatenate([xc, yc], axis=2))
        elif k == x.order - 1:
            cores.append(np.concatenate([xc, yc], axis=0))
        else:
            block = np.zeros((rx0 + ry0, n, rx1 + ry1))
            block[:rx0, :, :rx1] = xc
            block[rx0:, :, rx1:] = yc
            cores.append(block)
    return TTVector(cores)


def tt_scale(x: TTVector, alpha: float) -> TTVector:
    """Scale by ``alpha``; exactly one core is multiplied, ranks unchanged."""
    cores = [x.cores[0] * float(alpha)] + [c for c in x.cores[1:]]
    return TTVector(cores)


def tt_dot(x: TTVector, y: TTVector) -> float:
    """Euclidean inner product via a single left-to-right sweep."""
    if x.dims != y.dims:
        raise ValueError(f"dimension mismatch: {x.dims} vs {y.dims}")
    m = np.ones((1, 1))
    for xc, yc in zip(x.cores, y.cores):
        t = np.tensordot(m, yc, axes=(1, 0))        # (rx, n, ry')
        m = np.tensordot(xc, t, axes=([0, 1], [0, 1]))  # (rx', ry')
    return float(m[0, 0])


def tt_norm(x: TTVector) -> float:
    """Euclidean norm, computed from an orthogonalized copy for stability."""
    if x.order == 1:
        return float(np.linalg.norm(x.cores[0]))
    cores = _right_orthogonalize([c.copy() for c in x.cores])
    return float(np.linalg.norm(cores[0]))


def tt_apply_modewise(mats, x: TTVector) -> TTVector:
    """Apply one small matrix per mode (``None`` = identity); ranks unchanged."""
    if len(mats) != x.order:
        raise ValueError("one matrix (or None) per mode required")
    cores = []
    for mat, core in zip(mats, x.cores):
        if mat is None:
            cores.append(core)
            continue
        mat = np.asarray(mat, dtype=float)
        if mat.shape[1] != core.shape[1]:
            raise ValueError(
                f"factor shape {mat.shape} does not match mode size {core.shape[1]}"
            )
        cores.append(np.tensordot(mat, core, axes=(1, 1)).transpose(1, 0, 2))
    return TTVector(cores)


def tt_effective_rank(x: TTVector) -> float:
    """Storage-equivalent uniform rank.

    Positive root of (sum of interior mode sizes) r^2 + (n_1 + n_J) r = S
    where S is the actual number of stored core entries.
    """
    if x.order < 2:
        raise ValueError("effective rank needs at least two modes")
    s = float(x.storage)
    a = float(sum(x.dims[1:-1]))
    b = float(x.dims[0] + x.dims[-1])
    if a == 0.0:
        return s / b
    return (-b + math.sqrt(b * b + 4.0 * a * s)) / (2.0 * a)


def _as_matrix_core(arr):
    core = np.ascontiguousarray(np.asarray(arr, dtype=float))
    if core.ndim != 4:
        raise ValueError(f"TT matrix core must be 4-way, got shape {core.shape}")
    return core


class TTMatrix:
    """TT representation of a linear operator between Kronecker-shaped spaces."""

    __slots__ = ("cores",)

    def __init__(self, cores):
        cores = [_as_matrix_core(c) for c in cores]
        if not cores:
            raise ValueError("a TT matrix needs at least one core")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise ValueError("boundary TT ranks must be 1")
        for left, right in zip(cores, cores[1:]):
            if left.shape[3] != right.shape[0]:
                raise ValueError(
                    f"rank mismatch between cores: {left.shape} -> {right.shape}"
                )
        self.cores = cores

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def row_dims(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_dims(self) -> tuple:
        return tuple(c.shape[2] for c in self.cores)

    @property
    def ranks(self) -> tuple:
        return (1,) + tuple(c.shape[3] for c in self.cores)

    @classmethod
    def from_kron_factors(cls, factors) -> "TTMatrix":
        """Rank-1 TT matrix equal to the Kronecker product of the factors."""
        cores = []
        for f in factors:
            f = np.asarray(f, dtype=float)
            if f.ndim != 2:
                raise ValueError("Kronecker factors must be matrices")
            cores.append(f.reshape(1, *f.shape, 1))
        return cls(cores)

    def to_dense(self, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
        total = math.prod(self.row_dims) * math.prod(self.col_dims)
        if total > dense_limit:
            raise ValueError(f"dense matrix would hold {total} > {dense_limit} entries")
        acc = self.cores[0][0]  # (m, n, r)
        for core in self.cores[1:]:
            r0, m, n, r1 = core.shape
            acc = np.einsum("MNr,rmns->MmNns", acc, core).reshape(
                acc.shape[0] * m, acc.shape[1] * n, r1
            )
        return acc[:, :, 0]

    def __repr__(self):
        return (
            f"TTMatrix(row_dims={self.row_dims}, col_dims={self.col_dims}, "
            f"ranks={self.ranks})"
        )


def ttm_compress_exact(a: TTMatrix) -> TTMatrix:
    """Remove linearly dependent rank directions without changing the operator.

    Runs the vector rounding sweep at eps=0 over the (m*n)-grouped cores, so
    only the floating-point floor applies.
    """
    grouped = TTVector([c.reshape(c.shape[0], -1, c.shape[3]) for c in a.cores])
    rounded = tt_round(grouped, EXACT)
    cores = []
    for core, (m, n) in zip(rounded.cores, zip(a.row_dims, a.col_dims)):
        cores.append(core.reshape(core.shape[0], m, n, core.shape[2]))
    return TTMatrix(cores)


def tt_matvec(a: TTMatrix, x: TTVector, policy: TruncationPolicy,
              round_result: bool = True) -> TTVector:
    """Matrix-vector product in TT form.

    Core-wise ranks multiply (``ranks(a) * ranks(x)`` elementwise); a single
    rounding pass with ``policy`` is applied before returning unless
    ``round_result`` is False.
    """
    if a.col_dims != x.dims:
        raise ValueError(f"dimension mismatch: {a.col_dims} vs {x.dims}")
    cores = []
    for mc, xc in zip(a.cores, x.cores):
        ra0, m, n, ra1 = mc.shape
        rx0, _, rx1 = xc.shape
        prod = np.einsum("amnb,cnd->acmbd", mc, xc)
        cores.append(prod.reshape(ra0 * rx0, m, ra1 * rx1))
    y = TTVector(cores)
    return tt_round(y, policy) if round_result else y
