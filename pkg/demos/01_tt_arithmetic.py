"""Tensor-train basics: compression, rounding, and the rank arithmetic.

Builds a 6-dimensional array with known low-rank structure, compresses it,
then walks through the operations the solver leans on (add, scale, matvec,
inner product) and shows how ranks move under each one.
"""

import numpy as np

from ttmg import (
    TruncationPolicy,
    tt_add,
    tt_dot,
    tt_from_full,
    tt_norm,
    tt_round,
    tt_scale,
    tt_to_full,
)


def main():
    rng = np.random.default_rng(7)
    dims = (4, 3, 5, 3, 4, 2)

    # a sum of three separable terms has TT rank at most 3 on every bond
    full = np.zeros(dims)
    for _ in range(3):
        vecs = [rng.standard_normal(d) for d in dims]
        term = vecs[0]
        for v in vecs[1:]:
            term = np.multiply.outer(term, v)
        full += term

    x = tt_from_full(full, TruncationPolicy(1e-12, None))
    print(f"dims {dims}, {full.size} entries")
    print(f"TT ranks after compression: {x.ranks}")
    print(f"storage: {x.storage} floats vs {full.size} dense")
    print(f"reconstruction error: {np.abs(tt_to_full(x) - full).max():.2e}")

    # addition adds ranks, rounding brings them back down
    y = tt_scale(x, -0.5)
    z = tt_add(x, y)
    print(f"\nranks of x + (-0.5 x) before rounding: {z.ranks}")
    z = tt_round(z, TruncationPolicy(1e-12, None))
    print(f"after rounding:                        {z.ranks}")
    print(f"norm check: |z| = {tt_norm(z):.6f}, 0.5 |x| = {0.5 * tt_norm(x):.6f}")

    # lossy rounding trades accuracy for rank
    noisy = tt_from_full(full + 1e-6 * rng.standard_normal(dims),
                         TruncationPolicy(0.0, None))
    print(f"\nnoisy copy ranks: {noisy.ranks}")
    for eps in (1e-9, 1e-5, 1e-2):
        rounded = tt_round(noisy, TruncationPolicy(eps, None))
        err = tt_norm(tt_add(rounded, tt_scale(noisy, -1.0))) / tt_norm(noisy)
        print(f"  round eps={eps:.0e}: ranks {rounded.ranks}, rel error {err:.2e}")

    # inner products never need the dense array
    print(f"\n<x, x> = {tt_dot(x, x):.6f}  (dense: {float(full.ravel() @ full.ravel()):.6f})")


if __name__ == "__main__":
    main()
