"""Grid hierarchies built factor-wise, so coarse operators stay Kronecker sums.

Coarsening acts on one mode at a time.  Overflow chains use full
coarsening (every even index is a coarse point) with linear interpolation
and a restriction whose columns sum to one, which preserves zero column
sums of the generator across levels.  Kanban triangles use aggregation:
``(a, b, c) -> (k'-b'-c', b', c')`` with ``b' = ceil(b/2)``,
``c' = ceil(c/2)`` and ``k' = (k+1)/2``, followed by a final fixed
aggregation of the 6-state triangle onto 3 states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kron import KroneckerSumOperator, assemble_dense, aux_local_matrix, petrov_galerkin

COARSEST_DENSE_MAX = 5000


@dataclass(frozen=True)
class TransferPair:
    """Per-mode interpolation matrices P_j and restrictions Q_j."""

    p: tuple
    q: tuple

    def __post_init__(self):
        p = tuple(np.asarray(m, dtype=float) for m in self.p)
        q = tuple(np.asarray(m, dtype=float) for m in self.q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if len(p) != len(q) or not p:
            raise ValueError("need matching nonempty P and Q tuples")
        for j, (pj, qj) in enumerate(zip(p, q)):
            if pj.shape[0] != qj.shape[1] or pj.shape[1] != qj.shape[0]:
                raise ValueError(f"transfer {j}: P {pj.shape} and Q {qj.shape} clash")
            if pj.shape[0] < pj.shape[1]:
                raise ValueError(f"transfer {j}: coarse space larger than fine")
            colsums = qj.sum(axis=0)
            if np.max(np.abs(colsums - 1.0)) > 1e-12:
                raise ValueError(f"restriction {j} columns must sum to 1")
            if np.linalg.matrix_rank(pj) < pj.shape[1]:
                raise ValueError(f"interpolation {j} lacks full column rank")

    @property
    def fine_dims(self) -> tuple:
        return tuple(m.shape[0] for m in self.p)

    @property
    def coarse_dims(self) -> tuple:
        return tuple(m.shape[1] for m in self.p)


@dataclass(frozen=True)
class GridLevel:
    op: KroneckerSumOperator
    transfer: TransferPair | None  # None on the coarsest level
    kanban_k: int | None = None

    @property
    def dims(self) -> tuple:
        return self.op.col_dims

    @property
    def size(self) -> int:
        return math.prod(self.dims)


@dataclass(frozen=True)
class GridHierarchy:
    levels: list
    coarsest_dense: np.ndarray
    strategy: str

    @property
    def nlevels(self) -> int:
        return len(self.levels)

    @property
    def fine_size(self) -> int:
        return self.levels[0].size

    def summary(self) -> dict:
        return {
            "strategy": self.strategy,
            "levels": self.nlevels,
            "fine_size": self.fine_size,
            "level_sizes": [lvl.size for lvl in self.levels],
            "level_dims": [list(lvl.dims) for lvl in self.levels],
            "level_terms": [lvl.op.nterms for lvl in self.levels],
        }


def full_coarsen_chain(n: int):
    """Coarse points of an odd chain: the even indices.

    Returns ``(coarse_size, coarse_indices)``; rejects even or too-short
    chains rather than padding them.
    """
    if n < 3:
        raise ValueError(f"chain of size {n} cannot be coarsened")
    if n % 2 == 0:
        raise ValueError(f"chain size must be odd, got {n}")
    indices = tuple(range(0, n, 2))
    return (n + 1) // 2, indices


def linear_transfer(n: int):
    """Linear interpolation P and the matching restriction Q for an odd chain.

    P injects coarse points and averages the two neighbors at fine midpoints;
    Q applies the (1/2, 1, 1/2) stencil scaled so every column sums to 1,
    which keeps coarse generators conservative.
    """
    nc, coarse = full_coarsen_chain(n)
    p = np.zeros((n, nc))
    for ci, fi in enumerate(coarse):
        p[fi, ci] = 1.0
    for fi in range(1, n, 2):
        p[fi, (fi - 1) // 2] = 0.5
        p[fi, (fi + 1) // 2] = 0.5
    q = np.zeros((nc, n))
    for ci, fi in enumerate(coarse):
        q[ci, fi] = 1.0
        if fi - 1 >= 0:
            q[ci, fi - 1] = 0.5
        if fi + 1 < n:
            q[ci, fi + 1] = 0.5
    return p, q


def direct_interpolation(e_local: np.ndarray, n: int) -> np.ndarray:
    """Interpolation with weights from coupling magnitudes in ``e_local``.

    Coarse points inject; a fine midpoint splits its weight between the two
    coarse neighbors proportionally to ``|e_local[fine, neighbor]|``,
    falling back to equal halves when both couplings vanish.
    """
    e_local = np.asarray(e_local, dtype=float)
    if e_local.shape != (n, n):
        raise ValueError("local matrix shape must match the chain size")
    nc, coarse = full_coarsen_chain(n)
    p = np.zeros((n, nc))
    for ci, fi in enumerate(coarse):
        p[fi, ci] = 1.0
    for fi in range(1, n, 2):
        left, right = abs(e_local[fi, fi - 1]), abs(e_local[fi, fi + 1])
        total = left + right
        if total == 0.0:
            wl = wr = 0.5
        else:
            wl, wr = left / total, right / total
        p[fi, (fi - 1) // 2] = wl
        p[fi, (fi + 1) // 2] = wr
    return p


def triangle_aggregation(k: int) -> dict:
    """Aggregation map for the ticket triangle, halving the ticket count.

    Maps fine states (a, b, c) with a+b+c = k onto coarse states with
    k' = (k+1)/2 via b' = ceil(b/2), c' = ceil(c/2), a' = k'-b'-c'.
    Requires k = 2^m + 1 so the coarse triangle is again admissible
    (or the final 6-state triangle at k' = 2).
    """
    if k < 3 or (k - 1) & (k - 2) != 0:
        raise ValueError(f"ticket count {k} is not 2^m + 1 with m >= 1")
    kc = (k + 1) // 2
    from .models import enumerate_kanban_states

    mapping = {}
    for a, b, c in enumerate_kanban_states(k, "middle"):
        bc = -(-b // 2)  # ceil
        cc = -(-c // 2)
        mapping[(a, b, c)] = (kc - bc - cc, bc, cc)
    return mapping


def final_kanban_aggregation():
    """Fixed last aggregation: 6-state triangle -> 3, 3-state chains -> 2.

    Returned as assignment vectors (fine index -> coarse index) in the
    descending (a, b) state order.
    """
    middle = np.array([0, 0, 2, 1, 1, 2])
    ends = np.array([0, 0, 1])
    return middle, ends


def aggregation_operators(assignments):
    """Boolean membership interpolation P and its transpose restriction Q."""
    assignments = np.asarray(assignments, dtype=int)
    if assignments.size == 0:
        raise ValueError("empty aggregation")
    ncoarse = assignments.max() + 1
    if assignments.min() < 0:
        raise ValueError("negative aggregate index")
    counts = np.bincount(assignments, minlength=ncoarse)
    if (counts == 0).any():
        raise ValueError("aggregation must be a partition: empty aggregate found")
    p = np.zeros((assignments.size, ncoarse))
    p[np.arange(assignments.size), assignments] = 1.0
    return p, p.T.copy()


def _state_assignments(fine_states, coarse_states, mapping):
    index = {s: i for i, s in enumerate(coarse_states)}
    return np.array([index[mapping[s]] for s in fine_states], dtype=int)


def _overflow_transfer(op: KroneckerSumOperator, interpolation: str) -> TransferPair | None:
    p_mats, q_mats = [], []
    any_coarsened = False
    for j, n in enumerate(op.col_dims):
        if n < 3:
            p_mats.append(np.eye(n))
            q_mats.append(np.eye(n))
            continue
        if n % 2 == 0:
            raise ValueError(f"mode {j} has even size {n}; cannot coarsen")
        if interpolation == "direct":
            p = direct_interpolation(aux_local_matrix(op, j), n)
            _, q = linear_transfer(n)
        else:
            p, q = linear_transfer(n)
        p_mats.append(p)
        q_mats.append(q)
        any_coarsened = True
    if not any_coarsened:
        return None
    return TransferPair(tuple(p_mats), tuple(q_mats))


def _kanban_transfer(op: KroneckerSumOperator, k: int):
    """One Kanban coarsening step; returns (TransferPair, new k) or None."""
    from .models import enumerate_kanban_states

    j = op.nmodes
    positions = ["first"] + ["middle"] * (j - 2) + ["last"]
    if j == 2:
        positions = ["first", "last"]
    if k >= 3 and (k - 1) & (k - 2) == 0:
        kc = (k + 1) // 2
        mapping = triangle_aggregation(k)
        p_mats, q_mats = [], []
        for pos in positions:
            fine = enumerate_kanban_states(k, pos)
            coarse = enumerate_kanban_states(kc, pos)
            if pos == "middle":
                sub = {s: mapping[s] for s in fine}
            else:
                sub = {s: _end_image(s, kc, pos) for s in fine}
            assignments = _state_assignments(fine, coarse, sub)
            p, q = aggregation_operators(assignments)
            p_mats.append(p)
            q_mats.append(q)
        return TransferPair(tuple(p_mats), tuple(q_mats)), kc
    if k == 2:
        middle, ends = final_kanban_aggregation()
        p_mats, q_mats = [], []
        for pos in positions:
            assignments = middle if pos == "middle" else ends
            p, q = aggregation_operators(assignments)
            p_mats.append(p)
            q_mats.append(q)
        return TransferPair(tuple(p_mats), tuple(q_mats)), None
    return None


def _end_image(state, kc, pos):
    """Induced image of a boundary-cell state under the triangle aggregation."""
    _, b, c = state
    bc = -(-b // 2)
    cc = -(-c // 2)
    if pos == "first":
        return (0, bc, cc)
    return (kc - bc, bc, 0)


def build_hierarchy(op: KroneckerSumOperator, strategy: str, *,
                    coarsest_max: int = 1, interpolation: str = "linear",
                    max_coarsest_size: int = COARSEST_DENSE_MAX) -> GridHierarchy:
    """Coarsen factor-wise until the grid fits or coarsening is exhausted.

    Each level keeps the Petrov-Galerkin operator Q A P as a Kronecker sum;
    the coarsest operator is assembled densely and must stay at or below
    ``max_coarsest_size`` states.
    """
    if strategy not in ("overflow", "kanban"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if interpolation not in ("linear", "direct"):
        raise ValueError(f"unknown interpolation {interpolation!r}")
    if not op.is_square:
        raise ValueError("hierarchy needs a square operator")
    kanban_k = None
    if strategy == "kanban":
        kanban_k = op.col_dims[0] - 1
        _check_kanban_dims(op.col_dims, kanban_k)
    levels = []
    current = op
    while True:
        size = math.prod(current.col_dims)
        if size <= coarsest_max:
            break
        if strategy == "overflow":
            transfer = _overflow_transfer(current, interpolation)
            new_k = None
        else:
            step = _kanban_transfer(current, kanban_k) if kanban_k else None
            transfer, new_k = step if step else (None, None)
        if transfer is None:
            break
        levels.append(GridLevel(current, transfer, kanban_k))
        current = petrov_galerkin(current, transfer.p, transfer.q)
        kanban_k = new_k
    levels.append(GridLevel(current, None, kanban_k))
    coarsest_size = math.prod(current.col_dims)
    if coarsest_size > max_coarsest_size:
        raise ValueError(
            f"coarsest level has {coarsest_size} states, above the dense "
            f"limit {max_coarsest_size}; configuration not solvable"
        )
    dense = assemble_dense(current, dense_limit=max(coarsest_size ** 2, 1))
    return GridHierarchy(levels, dense, strategy)


def _check_kanban_dims(dims, k):
    middle = (k + 1) * (k + 2) // 2
    j = len(dims)
    expected = (k + 1,) + (middle,) * (j - 2) + (k + 1,)
    if tuple(dims) != expected:
        raise ValueError(
            f"dims {tuple(dims)} do not look like a Kanban line with k={k}"
        )
