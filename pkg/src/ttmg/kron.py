"""Operators kept as sums of Kronecker products of small factors.

An operator is ``A = sum_t coeff_t * E_1^t (x) ... (x) E_J^t`` where each
factor is a small dense matrix (``None`` stands for an identity).  All
multigrid levels, smoother splittings and coarse-grid projections stay in
this form, which is what keeps the method structure-preserving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tt import (
    TTMatrix,
    TruncationPolicy,
    TTVector,
    tt_add,
    tt_apply_modewise,
    tt_round,
    tt_zero,
    ttm_compress_exact,
)

DENSE_ASSEMBLY_LIMIT = 4 * 10**6


def _as_factor(f):
    if f is None:
        return None
    f = np.ascontiguousarray(np.asarray(f, dtype=float))
    if f.ndim != 2:
        raise ValueError(f"factor must be a matrix, got shape {f.shape}")
    return f


@dataclass(frozen=True)
class KronTerm:
    """One Kronecker product with a scalar coefficient."""

    factors: tuple
    coeff: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(_as_factor(f) for f in self.factors))
        object.__setattr__(self, "coeff", float(self.coeff))


class KroneckerSumOperator:
    """Sum of Kronecker products acting between mode-structured spaces."""

    __slots__ = ("row_dims", "col_dims", "terms", "_norm_bound")

    def __init__(self, row_dims, col_dims, terms):
        self.row_dims = tuple(int(n) for n in row_dims)
        self.col_dims = tuple(int(n) for n in col_dims)
        if len(self.row_dims) != len(self.col_dims) or not self.row_dims:
            raise ValueError("row and column dims must be equal-length, nonempty")
        if any(n < 1 for n in self.row_dims + self.col_dims):
            raise ValueError("mode sizes must be positive")
        terms = [t if isinstance(t, KronTerm) else KronTerm(*t) for t in terms]
        for term in terms:
            if len(term.factors) != len(self.row_dims):
                raise ValueError("each term needs one factor per mode")
            for j, f in enumerate(term.factors):
                if f is None:
                    if self.row_dims[j] != self.col_dims[j]:
                        raise ValueError(
                            f"identity factor needs square mode {j}: "
                            f"{self.row_dims[j]} x {self.col_dims[j]}"
                        )
                elif f.shape != (self.row_dims[j], self.col_dims[j]):
                    raise ValueError(
                        f"factor {j} has shape {f.shape}, expected "
                        f"({self.row_dims[j]}, {self.col_dims[j]})"
                    )
        self.terms = terms
        self._norm_bound = None

    @property
    def nmodes(self) -> int:
        return len(self.row_dims)

    @property
    def nterms(self) -> int:
        return len(self.terms)

    @property
    def shape(self) -> tuple:
        return (math.prod(self.row_dims), math.prod(self.col_dims))

    @property
    def is_square(self) -> bool:
        return self.row_dims == self.col_dims

    @classmethod
    def identity(cls, dims) -> "KroneckerSumOperator":
        return cls(dims, dims, [KronTerm((None,) * len(tuple(dims)), 1.0)])

    def factor(self, term: KronTerm, mode: int) -> np.ndarray:
        """Materialize one factor (identities become explicit)."""
        f = term.factors[mode]
        if f is None:
            return np.eye(self.row_dims[mode])
        return f

    def norm_bound(self) -> float:
        """Upper bound on the spectral norm: sum_t |c_t| prod_j ||E_j^t||_2."""
        if self._norm_bound is None:
            total = 0.0
            for term in self.terms:
                prod = abs(term.coeff)
                for f in term.factors:
                    if f is not None:
                        prod *= np.linalg.norm(f, 2)
                total += prod
            self._norm_bound = total if total > 0 else 1.0
        return self._norm_bound

    def __repr__(self):
        return (
            f"KroneckerSumOperator(shape={self.shape}, modes={self.col_dims}, "
            f"terms={self.nterms})"
        )


def _apply_term(op: KroneckerSumOperator, term: KronTerm, x: TTVector) -> TTVector:
    y = tt_apply_modewise(term.factors, x)
    if term.coeff != 1.0:
        cores = [y.cores[0] * term.coeff] + list(y.cores[1:])
        y = TTVector(cores)
    return y


def kron_apply(op: KroneckerSumOperator, x: TTVector, policy: TruncationPolicy,
               stride: int = 4) -> TTVector:
    """Apply the operator term by term, rounding every ``stride`` additions."""
    if op.col_dims != x.dims:
        raise ValueError(f"dimension mismatch: {op.col_dims} vs {x.dims}")
    if stride < 1:
        raise ValueError("stride must be positive")
    if not op.terms:
        return tt_zero(op.row_dims)
    acc = None
    fresh = False
    for count, term in enumerate(op.terms, start=1):
        y = _apply_term(op, term, x)
        acc = y if acc is None else tt_add(acc, y)
        fresh = False
        if count % stride == 0:
            acc = tt_round(acc, policy)
            fresh = True
    return acc if fresh else tt_round(acc, policy)


def to_tt_matrix(op: KroneckerSumOperator) -> TTMatrix:
    """Exact TT-matrix form; internal ranks at most the number of terms."""
    if not op.terms:
        dims = list(zip(op.row_dims, op.col_dims))
        return TTMatrix([np.zeros((1, m, n, 1)) for m, n in dims])
    t = op.nterms
    j = op.nmodes
    if j == 1:
        total = np.zeros((op.row_dims[0], op.col_dims[0]))
        for term in op.terms:
            total += term.coeff * op.factor(term, 0)
        return TTMatrix([total.reshape(1, *total.shape, 1)])
    cores = []
    for k in range(j):
        m, n = op.row_dims[k], op.col_dims[k]
        r0 = 1 if k == 0 else t
        r1 = 1 if k == j - 1 else t
        core = np.zeros((r0, m, n, r1))
        for idx, term in enumerate(op.terms):
            f = op.factor(term, k)
            if k == 0:
                core[0, :, :, idx] = term.coeff * f
            elif k == j - 1:
                core[idx, :, :, 0] = f
            else:
                core[idx, :, :, idx] = f
        cores.append(core)
    return ttm_compress_exact(TTMatrix(cores))


def _column_sums(op, term, mode) -> np.ndarray:
    f = term.factors[mode]
    if f is None:
        return np.ones(op.col_dims[mode])
    return f.sum(axis=0)


def complete_generator(op: KroneckerSumOperator) -> KroneckerSumOperator:
    """Append per-term diagonal compensators so every column sums to zero.

    Each term gets ``-coeff * (x)_j diag(colsums(E_j^t))``; compensators that
    vanish (some factor with all-zero column sums) are dropped, exact
    duplicate terms are merged, and zero terms pruned.
    """
    if not op.is_square:
        raise ValueError("generator completion needs a square operator")
    new_terms = list(op.terms)
    for term in op.terms:
        sums = [_column_sums(op, term, j) for j in range(op.nmodes)]
        if any(not s.any() for s in sums):
            continue
        comp = tuple(
            None if np.array_equal(s, np.ones_like(s)) else np.diag(s) for s in sums
        )
        new_terms.append(KronTerm(comp, -term.coeff))
    return KroneckerSumOperator(op.row_dims, op.col_dims, _merge_terms(new_terms))


def _term_key(term: KronTerm):
    return tuple(
        None if f is None else (f.shape, f.tobytes()) for f in term.factors
    )


def _merge_terms(terms):
    merged = {}
    order = []
    for term in terms:
        if any(f is not None and not f.any() for f in term.factors):
            continue
        key = _term_key(term)
        if key in merged:
            merged[key] = KronTerm(term.factors, merged[key].coeff + term.coeff)
        else:
            merged[key] = term
            order.append(key)
    return [merged[k] for k in order if merged[k].coeff != 0.0]


def aux_local_matrix(op: KroneckerSumOperator, mode: int) -> np.ndarray:
    """Coefficient-weighted sum of all factors at one mode (0-based).

    Collapses the operator onto a single mode; used for coarse-variable
    selection and coupling-based interpolation weights.
    """
    if not 0 <= mode < op.nmodes:
        raise ValueError(f"mode {mode} out of range for {op.nmodes} modes")
    out = np.zeros((op.row_dims[mode], op.col_dims[mode]))
    for term in op.terms:
        out += term.coeff * op.factor(term, mode)
    return out


@dataclass(frozen=True)
class TriangularSplit:
    """Splitting ``A = D - L - U`` with each part again a Kronecker sum."""

    d: KroneckerSumOperator
    l: KroneckerSumOperator
    u: KroneckerSumOperator

    def forward_operator(self) -> KroneckerSumOperator:
        """The lower-triangular part ``D - L`` used by Gauss-Seidel."""
        terms = list(self.d.terms) + [
            KronTerm(t.factors, -t.coeff) for t in self.l.terms
        ]
        return KroneckerSumOperator(self.d.row_dims, self.d.col_dims, terms)

    def backward_operator(self) -> KroneckerSumOperator:
        """The upper-triangular part ``D - U`` for the reverse sweep."""
        terms = list(self.d.terms) + [
            KronTerm(t.factors, -t.coeff) for t in self.u.terms
        ]
        return KroneckerSumOperator(self.d.row_dims, self.d.col_dims, terms)


def triangular_split(op: KroneckerSumOperator,
                     mode_major: str = "leading") -> TriangularSplit:
    """Split every term by the first mode in which row and column differ.

    With ``mode_major="leading"`` the global ordering is lexicographic with
    mode 1 slowest, so an entry is strictly lower iff the first differing
    mode index is; per term this gives one diagonal product plus at most one
    lower and one upper product per mode.  ``mode_major="trailing"`` uses the
    reversed lexicographic ordering (last mode slowest), which matters for
    Gauss-Seidel: on chain models whose transitions flow from the last mode
    toward the first, only the trailing-major lower part sweeps downstream.
    Structurally zero products are pruned.
    """
    if mode_major not in ("leading", "trailing"):
        raise ValueError(f"unknown mode_major {mode_major!r}")
    if not op.is_square:
        raise ValueError("triangular splitting needs a square operator")
    d_terms, l_terms, u_terms = [], [], []
    for term in op.terms:
        diags = []
        for f in term.factors:
            diags.append(None if f is None else np.diag(np.diag(f)))
        if all(d is None or d.any() for d in diags):
            d_terms.append(KronTerm(tuple(diags), term.coeff))
        for j, f in enumerate(term.factors):
            if f is None:
                continue  # identities have no strict triangle
            if mode_major == "leading":
                # modes before j pinned to their diagonals, tail left whole
                head = tuple(diags[:j])
                tail = term.factors[j + 1:]
                pinned = diags[:j]
            else:
                head = term.factors[:j]
                tail = tuple(diags[j + 1:])
                pinned = diags[j + 1:]
            if not all(d is None or d.any() for d in pinned):
                continue
            lower = np.tril(f, -1)
            upper = np.triu(f, 1)
            if lower.any():
                l_terms.append(KronTerm(head + (lower,) + tail, -term.coeff))
            if upper.any():
                u_terms.append(KronTerm(head + (upper,) + tail, -term.coeff))
    dims = (op.row_dims, op.col_dims)
    return TriangularSplit(
        KroneckerSumOperator(*dims, d_terms),
        KroneckerSumOperator(*dims, l_terms),
        KroneckerSumOperator(*dims, u_terms),
    )


def petrov_galerkin(op: KroneckerSumOperator, p_mats, q_mats) -> KroneckerSumOperator:
    """Coarse operator ``Q A P`` formed factor-wise: terms map to Q_j E_j P_j."""
    p_mats = [np.asarray(p, dtype=float) for p in p_mats]
    q_mats = [np.asarray(q, dtype=float) for q in q_mats]
    if len(p_mats) != op.nmodes or len(q_mats) != op.nmodes:
        raise ValueError("one interpolation and one restriction matrix per mode")
    for j, (p, q) in enumerate(zip(p_mats, q_mats)):
        if p.shape[0] != op.col_dims[j]:
            raise ValueError(f"interpolation {j} has {p.shape[0]} rows, "
                             f"expected {op.col_dims[j]}")
        if q.shape[1] != op.row_dims[j]:
            raise ValueError(f"restriction {j} has {q.shape[1]} columns, "
                             f"expected {op.row_dims[j]}")
    new_terms = []
    for term in op.terms:
        factors = []
        for j in range(op.nmodes):
            f = term.factors[j]
            if f is None:
                factors.append(q_mats[j] @ p_mats[j])
            else:
                factors.append(q_mats[j] @ f @ p_mats[j])
        new_terms.append(KronTerm(tuple(factors), term.coeff))
    row_dims = [q.shape[0] for q in q_mats]
    col_dims = [p.shape[1] for p in p_mats]
    return KroneckerSumOperator(row_dims, col_dims, new_terms)


def assemble_dense(op: KroneckerSumOperator,
                   dense_limit: int = DENSE_ASSEMBLY_LIMIT) -> np.ndarray:
    """Materialize the full matrix; refuses more than ``dense_limit`` entries."""
    rows, cols = op.shape
    if rows * cols > dense_limit:
        raise ValueError(
            f"dense assembly would hold {rows * cols} > {dense_limit} entries"
        )
    out = np.zeros((rows, cols))
    for term in op.terms:
        block = op.factor(term, 0)
        for j in range(1, op.nmodes):
            block = np.kron(block, op.factor(term, j))
        out += term.coeff * block
    return out


def assemble_sparse(op: KroneckerSumOperator, nnz_limit: int = 10**8):
    """Materialize the operator as a compressed sparse matrix.

    The factors are tiny, so the cost is driven by the nonzero count of
    the result; ``nnz_limit`` guards against accidental huge assemblies.
    Used for exact reference solves at sizes where a dense matrix would
    not fit but a sparse factorization still does.
    """
    from scipy import sparse

    rows, cols = op.shape
    nnz_bound = 0
    for term in op.terms:
        count = 1
        for j in range(op.nmodes):
            count *= np.count_nonzero(op.factor(term, j))
        nnz_bound += count
    if nnz_bound > nnz_limit:
        raise ValueError(f"sparse assembly bound {nnz_bound} exceeds {nnz_limit}")
    out = sparse.csr_matrix((rows, cols))
    for term in op.terms:
        block = sparse.csr_matrix(op.factor(term, 0))
        for j in range(1, op.nmodes):
            block = sparse.kron(block, sparse.csr_matrix(op.factor(term, j)),
                                format="csr")
        out = out + term.coeff * block
    return out


def operator_column_sums(op: KroneckerSumOperator) -> np.ndarray:
    """The row vector ``1^T A`` computed factor-wise, never densifying A."""
    cols = op.shape[1]
    if cols > 10**8:
        raise ValueError("column-sum vector too large")
    out = np.zeros(cols)
    for term in op.terms:
        vec = _column_sums(op, term, 0)
        for j in range(1, op.nmodes):
            vec = np.kron(vec, _column_sums(op, term, j))
        out += term.coeff * vec
    return out


def export_triplets(op: KroneckerSumOperator, path,
                    dense_limit: int = DENSE_ASSEMBLY_LIMIT) -> int:
    """Write nonzeros as ``row col value`` lines; returns the count written."""
    dense = assemble_dense(op, dense_limit)
    rows, cols = np.nonzero(dense)
    with open(path, "w") as fh:
        fh.write(f"# rows {dense.shape[0]} cols {dense.shape[1]} "
                 f"nnz {rows.size}\n")
        for i, j in zip(rows, cols):
            fh.write(f"{i} {j} {dense[i, j]:.17g}\n")
    return int(rows.size)
