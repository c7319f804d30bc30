"""Compiled basis-exchange loop behind the Carathéodory reduction.

Points are consumed one at a time.  Each query keeps a basis of ``D = d+1``
lifted points ``(v, 1)`` with nonnegative weights and the inverse of the
basis matrix.  A new point together with the basis gives ``D + 1`` points in
``R^D``, which always have an affine dependence; moving along it until a
basis weight hits zero drops that point.  The basis starts out as the
identity ("artificial" columns with weight 0) which are swapped out at zero
step length as soon as a real point has a component along them.
"""
import numpy as np
from numba import njit

REFACTOR_EVERY = 96


@njit(cache=True)
def _rebuild_inverse(A, basis):
    D = basis.shape[0]
    B = np.zeros((D, D))
    for p in range(D):
        if basis[p] >= 0:
            B[:, p] = A[basis[p]]
        else:
            B[-basis[p] - 1, p] = 1.0
    return np.linalg.inv(B)


@njit(cache=True, fastmath=True)
def _reduce_one(w_all, A, art_tol, ratio_tol, basis, wb):
    L, D = A.shape
    for p in range(D):
        basis[p] = -(p + 1)
        wb[p] = 0.0
    MT = np.eye(D)
    x = np.empty(D)
    steps = 0
    for j in range(L):
        wj = w_all[j]
        if wj <= 0.0:
            continue
        a = A[j]
        # x = M @ a, with MT holding M transposed
        x[:] = 0.0
        for k in range(D):
            ak = a[k]
            for i in range(D):
                x[i] += MT[k, i] * ak
        p = -1
        best = art_tol
        for s in range(D):
            if basis[s] < 0 and abs(x[s]) > best:
                best = abs(x[s])
                p = s
        if p >= 0:
            wb[p] = wj
        else:
            tmin = np.inf
            for s in range(D):
                if basis[s] >= 0 and x[s] > ratio_tol:
                    ratio = wb[s] / x[s]
                    if ratio < tmin or (ratio == tmin and basis[s] < basis[p]):
                        tmin = ratio
                        p = s
            if p < 0:
                return False
            for s in range(D):
                if basis[s] >= 0:
                    wb[s] -= tmin * x[s]
                    if wb[s] < 0.0:
                        wb[s] = 0.0
            wb[p] = wj + tmin
        basis[p] = j
        piv = x[p]
        xp = x[p]
        x[p] = 0.0
        for k in range(D):
            c = MT[k, p] / piv
            for i in range(D):
                MT[k, i] -= c * x[i]
            MT[k, p] = c
        x[p] = xp
        steps += 1
        if steps % REFACTOR_EVERY == 0:
            MT[:, :] = _rebuild_inverse(A, basis).T
    return True


@njit(cache=True)
def reduce_batch(W, A, art_tol, ratio_tol):
    """Reduce every row of ``W`` (weights over the rows of ``A``).

    Returns ``(basis, weights, ok)``; ``basis`` entries < 0 are artificial
    slots and carry weight 0.
    """
    nq = W.shape[0]
    D = A.shape[1]
    basis = np.empty((nq, D), dtype=np.int64)
    wb = np.empty((nq, D))
    ok = np.empty(nq, dtype=np.bool_)
    for q in range(nq):
        ok[q] = _reduce_one(W[q], A, art_tol, ratio_tol, basis[q], wb[q])
    return basis, wb, ok
