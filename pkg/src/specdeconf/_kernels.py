"""Hot loops of the group-lasso solver.

Both implementations share one contract and must agree to rounding:

``cd_sweep(Zt, rt, beta, L, lam, order, n)``
    One cyclic pass of majorized block updates over the groups listed in
    ``order``. ``Zt`` has shape (p, K, m) (group j's transformed design,
    transposed and contiguous), ``rt`` is the current residual (updated in
    place), ``beta`` has shape (p, K) (updated in place), ``L`` holds each
    block's curvature bound ``lambda_max(Z_j^T Z_j / n)``. Returns the
    largest absolute coefficient change.
"""

import numpy as np

from specdeconf._backend import HAVE_NUMBA


def cd_sweep_numpy(Zt, rt, beta, L, lam, order, n):
    max_change = 0.0
    for j in order:
        Lj = L[j]
        if Lj <= 0.0:
            continue
        Zj = Zt[j]
        old = beta[j]
        u = old + (Zj @ rt) / (n * Lj)
        thr = lam / (2.0 * Lj)
        nu = np.sqrt(u @ u)
        if nu <= thr:
            new = np.zeros_like(u)
        else:
            new = (1.0 - thr / nu) * u
        delta = new - old
        change = np.max(np.abs(delta))
        if change > 0.0:
            rt -= Zj.T @ delta
            beta[j] = new
            if change > max_change:
                max_change = change
    return max_change


if HAVE_NUMBA:
    from numba import njit

    @njit(cache=True, nogil=True)
    def cd_sweep_numba(Zt, rt, beta, L, lam, order, n):
        K = Zt.shape[1]
        m = Zt.shape[2]
        u = np.empty(K)
        max_change = 0.0
        for jj in range(order.shape[0]):
            j = order[jj]
            Lj = L[j]
            if Lj <= 0.0:
                continue
            nu2 = 0.0
            for k in range(K):
                g = 0.0
                for i in range(m):
                    g += Zt[j, k, i] * rt[i]
                u[k] = beta[j, k] + g / (n * Lj)
                nu2 += u[k] * u[k]
            thr = lam / (2.0 * Lj)
            nu = np.sqrt(nu2)
            factor = 0.0 if nu <= thr else 1.0 - thr / nu
            for k in range(K):
                new = factor * u[k]
                d = new - beta[j, k]
                if d != 0.0:
                    ad = abs(d)
                    if ad > max_change:
                        max_change = ad
                    for i in range(m):
                        rt[i] -= Zt[j, k, i] * d
                    beta[j, k] = new
        return max_change

    cd_sweep = cd_sweep_numba
else:  # pragma: no cover
    cd_sweep_numba = None
    cd_sweep = cd_sweep_numpy


def group_gradients(Zt, rt, n):
    """``(1/n) Z_j^T rt`` for every group, shape (p, K)."""
    p, K, m = Zt.shape
    return (Zt.reshape(p * K, m) @ rt).reshape(p, K) / n


def block_curvatures(Zt, n):
    """Largest eigenvalue of ``Z_j^T Z_j / n`` per group."""
    gram = np.einsum("jkm,jlm->jkl", Zt, Zt) / n
    return np.linalg.eigvalsh(gram)[:, -1].clip(min=0.0)
