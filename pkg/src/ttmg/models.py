"""Benchmark Markov chains with Kronecker structure, plus enumeration oracles.

Two families are provided.

Overflow queuing network: J finite queues in a row.  Queue i has capacity
``k_i``, Poisson arrivals at rate ``lambda_i`` and exponential service at
rate ``mu_i``.  A customer arriving at a full queue i overflows to queue
i+1 (adjacent only); if that queue is full too, or i is the last queue,
the customer is lost.

Kanban manufacturing line: J machine cells in a row, each holding ``k``
tickets.  A cell's state is a triple ``(a, b, c)`` with ``a+b+c = k``:
``a`` free tickets, ``b`` parts in the machine, ``c`` finished parts in
the output hopper.  Machine i processes at rate ``mu_i`` (b -> c) and a
finished part moves to cell i+1 at rate ``omega_i`` when that cell has a
free ticket (c_i - 1, then a_{i+1} - 1 and b_{i+1} + 1, freeing ticket
a_i + 1).  The first cell has no ticket board: a runs at 0 and a freed
ticket is immediately replaced by a new part (b + 1).  The last cell has
no output hopper: c runs at 0 and a finished part frees its ticket at
once (a + 1).

Triangle states are ordered descending in ``(a, b)``; global states follow
the Kronecker convention with machine/queue 1 varying slowest.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .kron import KronTerm, KroneckerSumOperator, complete_generator

ORACLE_STATE_LIMIT = 50_000


class OracleSizeError(ValueError):
    """State space too large for the brute-force reference path."""


@dataclass(frozen=True)
class OverflowParams:
    """Arrival/service rates and capacities for the overflow network."""

    arrival: tuple
    service: tuple
    capacities: tuple

    def __post_init__(self):
        object.__setattr__(self, "arrival", tuple(float(v) for v in self.arrival))
        object.__setattr__(self, "service", tuple(float(v) for v in self.service))
        object.__setattr__(self, "capacities", tuple(int(v) for v in self.capacities))
        if not (len(self.arrival) == len(self.service) == len(self.capacities)):
            raise ValueError("arrival, service and capacities need equal length")
        if len(self.arrival) < 1:
            raise ValueError("need at least one queue")
        if any(v <= 0 for v in self.arrival + self.service):
            raise ValueError("rates must be positive")
        if any(k < 1 for k in self.capacities):
            raise ValueError("capacities must be at least 1")

    @property
    def nqueues(self) -> int:
        return len(self.arrival)

    @property
    def dims(self) -> tuple:
        return tuple(k + 1 for k in self.capacities)


@dataclass(frozen=True)
class KanbanParams:
    """Processing/transfer rates and the per-cell ticket count."""

    processing: tuple
    transfer: tuple
    tickets: int

    def __post_init__(self):
        object.__setattr__(self, "processing", tuple(float(v) for v in self.processing))
        object.__setattr__(self, "transfer", tuple(float(v) for v in self.transfer))
        object.__setattr__(self, "tickets", int(self.tickets))
        if len(self.processing) < 2:
            raise ValueError("need at least two machines")
        if len(self.transfer) != len(self.processing) - 1:
            raise ValueError("need one transfer rate per adjacent pair")
        if any(v <= 0 for v in self.processing + self.transfer):
            raise ValueError("rates must be positive")
        if self.tickets < 1:
            raise ValueError("tickets must be at least 1")

    @property
    def nmachines(self) -> int:
        return len(self.processing)

    @property
    def aggregation_compatible(self) -> bool:
        """Whether the grid hierarchy can coarsen this ticket count."""
        k = self.tickets
        return k == 2 or (k >= 3 and (k - 1) & (k - 2) == 0)

    @property
    def dims(self) -> tuple:
        k = self.tickets
        middle = (k + 1) * (k + 2) // 2
        j = self.nmachines
        return (k + 1,) + (middle,) * (j - 2) + (k + 1,)


def build_overflow(params: OverflowParams, synchronized: bool = True) -> KroneckerSumOperator:
    """Generator of the overflow network as a completed Kronecker sum.

    One local birth-death term per queue, one synchronized term per adjacent
    pair (activated by the diagonal "queue i full" factor, moving a customer
    into queue i+1); ``synchronized=False`` builds the non-interacting
    variant with identity coupling factors only.
    """
    dims = params.dims
    j = params.nqueues
    terms = []
    for i in range(j):
        n = dims[i]
        local = np.zeros((n, n))
        local += np.diag(np.full(n - 1, params.arrival[i]), -1)
        local += np.diag(np.full(n - 1, params.service[i]), 1)
        factors = [None] * j
        factors[i] = local
        terms.append(KronTerm(tuple(factors), 1.0))
    if synchronized:
        for i in range(j - 1):
            n = dims[i]
            full_gate = np.zeros((n, n))
            full_gate[n - 1, n - 1] = params.arrival[i]
            push = np.diag(np.ones(dims[i + 1] - 1), -1)
            factors = [None] * j
            factors[i] = full_gate
            factors[i + 1] = push
            terms.append(KronTerm(tuple(factors), 1.0))
    op = KroneckerSumOperator(dims, dims, terms)
    return complete_generator(op)


def enumerate_kanban_states(k: int, position: str) -> list:
    """Cell states ``(a, b, c)`` with ``a+b+c = k`` in descending (a, b) order.

    ``position`` is one of ``"middle"`` (the full triangle), ``"first"``
    (the a = 0 edge) or ``"last"`` (the c = 0 row); boundary cells inherit
    the triangle's induced order.
    """
    if k < 1:
        raise ValueError("tickets must be at least 1")
    if position == "middle":
        return [
            (a, b, k - a - b)
            for a in range(k, -1, -1)
            for b in range(k - a, -1, -1)
        ]
    if position == "first":
        return [(0, b, k - b) for b in range(k, -1, -1)]
    if position == "last":
        return [(a, k - a, 0) for a in range(k, -1, -1)]
    raise ValueError(f"unknown position {position!r}")


def _kanban_position(i: int, j: int) -> str:
    if i == 0:
        return "first"
    if i == j - 1:
        return "last"
    return "middle"


def _kanban_local_move(state, position):
    """Processing step b -> b-1; destination depends on the cell position."""
    a, b, c = state
    if b == 0:
        return None
    if position == "last":
        return (a + 1, b - 1, 0)  # ticket freed immediately, no hopper
    return (a, b - 1, c + 1)


def _kanban_push_move(state, position):
    """Initiating side of a transfer: hopper part leaves, ticket freed."""
    a, b, c = state
    if c == 0:
        return None
    if position == "first":
        return (0, b + 1, c - 1)  # freed ticket is at once refilled
    return (a + 1, b, c - 1)


def _kanban_pull_move(state):
    """Affected side of a transfer: a ticket is consumed by a new part."""
    a, b, c = state
    if a == 0:
        return None
    return (a - 1, b + 1, c)


def _move_matrix(states, move, rate, with_diagonal):
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    out = np.zeros((n, n))
    for col, state in enumerate(states):
        dest = move(state)
        if dest is None:
            continue
        out[index[dest], col] += rate
        if with_diagonal:
            out[col, col] -= rate
    return out


def build_kanban(params: KanbanParams) -> KroneckerSumOperator:
    """Generator of the Kanban line as a completed Kronecker sum.

    Local processing factors carry ``mu_i`` and their own diagonal (they
    conserve column sums); the synchronized pair (i, i+1) puts ``omega_i``
    on the initiating factor and unit entries on the affected factor, with
    the compensator supplied by generator completion.
    """
    j = params.nmachines
    k = params.tickets
    state_sets = [enumerate_kanban_states(k, _kanban_position(i, j)) for i in range(j)]
    terms = []
    for i in range(j):
        pos = _kanban_position(i, j)
        local = _move_matrix(
            state_sets[i],
            lambda s: _kanban_local_move(s, pos),
            params.processing[i],
            with_diagonal=True,
        )
        factors = [None] * j
        factors[i] = local
        terms.append(KronTerm(tuple(factors), 1.0))
    for i in range(j - 1):
        pos = _kanban_position(i, j)
        push = _move_matrix(
            state_sets[i],
            lambda s: _kanban_push_move(s, pos),
            params.transfer[i],
            with_diagonal=False,
        )
        pull = _move_matrix(state_sets[i + 1], _kanban_pull_move, 1.0, with_diagonal=False)
        factors = [None] * j
        factors[i] = push
        factors[i + 1] = pull
        terms.append(KronTerm(tuple(factors), 1.0))
    op = KroneckerSumOperator(params.dims, params.dims, terms)
    return complete_generator(op)


def _overflow_oracle(params: OverflowParams, synchronized: bool) -> np.ndarray:
    dims = params.dims
    n = math.prod(dims)
    states = list(itertools.product(*[range(d) for d in dims]))
    index = {s: i for i, s in enumerate(states)}
    gen = np.zeros((n, n))

    def add(src, dst, rate):
        gen[index[dst], index[src]] += rate
        gen[index[src], index[src]] -= rate

    j = params.nqueues
    for state in states:
        for i in range(j):
            if state[i] > 0:
                dst = list(state)
                dst[i] -= 1
                add(state, tuple(dst), params.service[i])
            if state[i] < params.capacities[i]:
                dst = list(state)
                dst[i] += 1
                add(state, tuple(dst), params.arrival[i])
            elif synchronized and i + 1 < j and state[i + 1] < params.capacities[i + 1]:
                dst = list(state)
                dst[i + 1] += 1
                add(state, tuple(dst), params.arrival[i])
    return gen


def _kanban_oracle(params: KanbanParams) -> np.ndarray:
    j = params.nmachines
    state_sets = [
        enumerate_kanban_states(params.tickets, _kanban_position(i, j))
        for i in range(j)
    ]
    states = list(itertools.product(*state_sets))
    index = {s: i for i, s in enumerate(states)}
    gen = np.zeros((len(states), len(states)))

    def add(src, dst, rate):
        gen[index[dst], index[src]] += rate
        gen[index[src], index[src]] -= rate

    for state in states:
        for i in range(j):
            pos = _kanban_position(i, j)
            local = _kanban_local_move(state[i], pos)
            if local is not None:
                dst = list(state)
                dst[i] = local
                add(state, tuple(dst), params.processing[i])
        for i in range(j - 1):
            pushed = _kanban_push_move(state[i], _kanban_position(i, j))
            pulled = _kanban_pull_move(state[i + 1])
            if pushed is not None and pulled is not None:
                dst = list(state)
                dst[i] = pushed
                dst[i + 1] = pulled
                add(state, tuple(dst), params.transfer[i])
    return gen


def oracle_generator(params, synchronized: bool = True) -> np.ndarray:
    """Dense generator built by brute-force state enumeration.

    Independent of the Kronecker construction; refuses more than
    50,000 states.
    """
    n = math.prod(params.dims)
    if n > ORACLE_STATE_LIMIT:
        raise OracleSizeError(f"oracle limited to {ORACLE_STATE_LIMIT} states, got {n}")
    if isinstance(params, OverflowParams):
        return _overflow_oracle(params, synchronized)
    if isinstance(params, KanbanParams):
        return _kanban_oracle(params)
    raise TypeError(f"unsupported model parameters: {type(params)!r}")


def sparse_stationary(gen) -> np.ndarray:
    """Stationary distribution of a sparse generator via direct factorization.

    Pins one state's weight to one and solves the remaining
    (n-1) x (n-1) block, which is nonsingular for an irreducible chain;
    unlike appending a dense normalization row this keeps the
    factorization sparse.  When the distribution is concentrated far
    from the pinned state the first solve can lose accuracy to the huge
    dynamic range, so the solve is repeated once pinned at the state
    carrying the most mass.  Scales to state spaces far beyond the
    dense oracle (the cost follows the sparsity, not n^3).  The result
    is verified the same way as the dense path: nonnegative up to
    roundoff, unit mass, small residual.
    """
    from scipy import sparse

    gen = sparse.csc_matrix(gen)
    n = gen.shape[0]
    if gen.shape != (n, n):
        raise ValueError("generator must be square")
    if n == 1:
        return np.ones(1)
    scale = max(float(abs(gen).max()), 1.0)
    tol = 1e-10 * scale * max(1.0, math.sqrt(n))
    x = _pinned_stationary(gen, n - 1)
    residual = np.linalg.norm(gen @ x)
    if residual > tol or x.min() < -1e-10:
        x = _pinned_stationary(gen, int(np.argmax(np.abs(x))))
        residual = np.linalg.norm(gen @ x)
    if x.min() < -1e-10:
        raise ValueError(f"negative stationary mass {x.min():.3e}")
    x = np.maximum(x, 0.0)
    x /= x.sum()
    residual = np.linalg.norm(gen @ x)
    if residual > tol:
        raise ValueError(f"stationary residual too large: {residual:.3e}")
    return x


def _pinned_stationary(gen, pin: int) -> np.ndarray:
    """Solve ``gen @ x = 0`` with ``x[pin]`` fixed to 1, then normalize."""
    from scipy.sparse import linalg as spla

    n = gen.shape[0]
    keep = np.arange(n) != pin
    head = gen[keep][:, keep]
    rhs = -np.asarray(gen[keep, pin].todense()).ravel()
    y = spla.spsolve(head.tocsc(), rhs)
    x = np.empty(n)
    x[keep] = y
    x[pin] = 1.0
    return x / np.abs(x).sum()


def oracle_stationary(gen: np.ndarray) -> np.ndarray:
    """Stationary distribution via a rank-revealing dense factorization.

    Returns x with ``gen @ x = 0`` (residual below 1e-12 * ||gen||),
    ``x >= 0`` and ``sum(x) = 1``; raises if the null space is not
    one-dimensional.
    """
    gen = np.asarray(gen, dtype=float)
    n = gen.shape[0]
    if gen.shape != (n, n):
        raise ValueError("generator must be square")
    if n > ORACLE_STATE_LIMIT:
        raise OracleSizeError(f"oracle limited to {ORACLE_STATE_LIMIT} states, got {n}")
    u, s, vt = np.linalg.svd(gen)
    scale = s[0] if s[0] > 0 else 1.0
    tol = max(n, 10) * np.finfo(float).eps * scale
    if n > 1 and s[-2] <= tol:
        raise ValueError("null space is not one-dimensional; chain not irreducible?")
    x = vt[-1]
    total = x.sum()
    if abs(total) < 1e-8:
        raise ValueError("null vector has (near) zero sum; chain not irreducible?")
    x = x / total
    if x.min() < -1e-10:
        raise ValueError(f"negative stationary mass {x.min():.3e}")
    x = np.maximum(x, 0.0)
    x /= x.sum()
    residual = np.linalg.norm(gen @ x)
    if residual > 1e-12 * scale * max(1.0, math.sqrt(n)):
        raise ValueError(f"stationary residual too large: {residual:.3e}")
    return x
