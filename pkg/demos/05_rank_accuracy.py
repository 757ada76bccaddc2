"""How much TT rank does a stationary distribution actually need?

Solves a 3-queue overflow network with 32-slot queues (35937 states)
exactly by a sparse direct factorization, then truncates the solution
to ranks 1..12 and reports the relative error thrown away.  Light,
uniform load leaves the queues nearly independent, so the distribution
is essentially a product and rank 1 already captures it; heavy load
with unequal service rates couples the queues and holds on to rank.
The same study is available from the command line as
``ttmg rank-study --config <file>``.
"""

import numpy as np

from ttmg import (
    OverflowParams,
    TruncationPolicy,
    assemble_sparse,
    build_overflow,
    sparse_stationary,
    tt_add,
    tt_from_full,
    tt_norm,
    tt_round,
    tt_scale,
)

CASES = {
    "light uniform load": OverflowParams((0.1,) * 3, (1.0,) * 3, (32,) * 3),
    "heavy mixed load": OverflowParams((0.5,) * 3, (0.25, 0.5, 1.0), (32,) * 3),
}


def main():
    curves = {}
    for label, params in CASES.items():
        op = build_overflow(params)
        pi = sparse_stationary(assemble_sparse(op))
        x = tt_from_full(pi.reshape(op.col_dims), TruncationPolicy(1e-14, None))
        print(f"{label}: exact solution compresses to ranks {x.ranks}")
        ref = tt_norm(x)
        errs = []
        for r in range(1, 13):
            xr = tt_round(x, TruncationPolicy(0.0, r))
            errs.append(tt_norm(tt_add(x, tt_scale(xr, -1.0))) / ref)
        curves[label] = errs

    print(f"\n{'rank':>4}  " + "  ".join(f"{label:>20}" for label in curves))
    for i in range(12):
        row = "  ".join(f"{curves[label][i]:>20.3e}" for label in curves)
        print(f"{i + 1:>4}  {row}")
    print("\nunder light load no queue ever fills up, overflows never happen "
          "and the\ndistribution factorizes: rank 1 is exact to machine "
          "precision; the mixed\ncase genuinely couples the queues and needs "
          "rank ~7 for solver accuracy")


if __name__ == "__main__":
    main()
