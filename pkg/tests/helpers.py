"""Shared test utilities: random TT objects and independent dense oracles."""

from __future__ import annotations

import numpy as np

from ttmg.tt import TTMatrix, TTVector


def random_tt(dims, ranks, rng):
    """Random TT vector with the given internal ranks (len(dims)-1 values)."""
    full = (1,) + tuple(ranks) + (1,)
    cores = [rng.standard_normal((full[k], n, full[k + 1])) for k, n in enumerate(dims)]
    return TTVector(cores)


def random_ttm(row_dims, col_dims, ranks, rng):
    full = (1,) + tuple(ranks) + (1,)
    cores = [
        rng.standard_normal((full[k], m, n, full[k + 1]))
        for k, (m, n) in enumerate(zip(row_dims, col_dims))
    ]
    return TTMatrix(cores)


def kron_chain(mats):
    out = np.asarray(mats[0], dtype=float)
    for m in mats[1:]:
        out = np.kron(out, np.asarray(m, dtype=float))
    return out


def best_rank1_error(tensor, iters=400):
    """Brute-force best rank-1 fit error via ALS from an HOSVD start.

    Only meant for tiny tensors; returns ||tensor - best rank-1||_F.
    """
    t = np.asarray(tensor, dtype=float)
    dims = t.shape
    vecs = []
    for k in range(t.ndim):
        unf = np.moveaxis(t, k, 0).reshape(dims[k], -1)
        u, _, _ = np.linalg.svd(unf, full_matrices=False)
        vecs.append(u[:, 0])
    for _ in range(iters):
        for k in range(t.ndim):
            acc = t
            for j in range(t.ndim - 1, -1, -1):
                if j == k:
                    continue
                acc = np.tensordot(acc, vecs[j], axes=(j, 0))
            norm = np.linalg.norm(acc)
            if norm == 0:
                return float(np.linalg.norm(t))
            vecs[k] = acc / norm
    coeff = t
    for v in reversed(vecs):
        coeff = np.tensordot(coeff, v, axes=(coeff.ndim - 1, 0))
    approx = coeff
    for v in vecs:
        approx = np.multiply.outer(approx, v)
    return float(np.linalg.norm(t - approx))


def dense_gmres(a, b, x0, steps, rtol=None):
    """Plain full GMRES with modified Gram-Schmidt, mirroring the TT smoother."""
    r0 = b - a @ x0
    beta = np.linalg.norm(r0)
    if beta == 0.0:
        return x0.copy()
    v = [r0 / beta]
    h = np.zeros((steps + 1, steps))
    used = 0
    for j in range(steps):
        w = a @ v[j]
        for i in range(j + 1):
            h[i, j] = np.dot(w, v[i])
            w = w - h[i, j] * v[i]
        h[j + 1, j] = np.linalg.norm(w)
        used = j + 1
        if h[j + 1, j] <= 1e-14 * beta:
            break
        v.append(w / h[j + 1, j])
        if rtol is not None:
            e1 = np.zeros(used + 1)
            e1[0] = beta
            y, *_ = np.linalg.lstsq(h[: used + 1, :used], e1, rcond=None)
            if np.linalg.norm(e1 - h[: used + 1, :used] @ y) <= rtol * beta:
                break
    e1 = np.zeros(used + 1)
    e1[0] = beta
    y, *_ = np.linalg.lstsq(h[: used + 1, :used], e1, rcond=None)
    x = x0.copy()
    for i in range(used):
        x = x + y[i] * v[i]
    return x
