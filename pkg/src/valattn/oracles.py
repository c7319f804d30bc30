"""Value-oblivious and value-aware optimal sparse approximations.

``optimal_v_oblivious`` keeps the ``r`` keys with the largest attention
weights.  ``optimal_v_aware`` instead looks for the point closest to the true
output ``o`` among convex combinations of at most ``r`` value vectors:

* ``r == 1``: the nearest value vector to ``o``;
* ``r >= d + 1``: ``o`` itself, rewritten on at most ``d + 1`` values by a
  Carathéodory reduction;
* otherwise: exhaustive search over supports, each solved by a
  simplex-constrained least squares.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    AttentionInstance,
    Distribution,
    KernelSpec,
    SimplexCombination,
    SolverError,
    ValidationError,
    make_plan,
)
from .engine import exact_attention, sparse_attention
from .kernels import attention_matrix

BRUTE_FORCE_LIMIT = 10**6
PIVOT_TOL = 1e-10


def _weights(alpha) -> np.ndarray:
    if isinstance(alpha, Distribution):
        return alpha.weights
    return np.asarray(alpha, dtype=np.float64)


def top_r_selection(alpha, r: int) -> np.ndarray:
    """The ``r`` largest-weight indices (ties to the lower index), sorted.

    Zero-weight indices are never selected.
    """
    if r < 1:
        raise ValidationError("r must be >= 1")
    w = _weights(alpha)
    pos = np.flatnonzero(w > 0)
    order = pos[np.argsort(-w[pos], kind="stable")]
    return np.sort(order[:r])


def top_r_plan(alpha_matrix: np.ndarray, r: int, causal: bool = False):
    """Row-wise :func:`top_r_selection` packed into a selection plan."""
    order = np.argsort(-alpha_matrix, axis=1, kind="stable")[:, :r]
    sets = []
    for t, row in enumerate(order):
        sets.append(row[alpha_matrix[t, row] > 0])
    return make_plan(sets, alpha_matrix.shape[1], causal=causal)


def optimal_v_oblivious(spec: KernelSpec, inst: AttentionInstance, r: int, *, return_flags=False):
    """Sparse attention over each query's top-``r`` keys."""
    if r < 1:
        raise ValidationError("r must be >= 1")
    mask = inst.allowed_mask() if inst.causal else None
    alpha, flags = attention_matrix(spec, inst.Q, inst.K, mask)
    plan = top_r_plan(alpha, r, causal=inst.causal)
    out, sflags = sparse_attention(spec, inst, plan, return_flags=True)
    flags = np.union1d(flags, sflags)
    return (out, flags) if return_flags else out


def single_value_objective(i: int, alpha, V) -> float:
    """``|v_i|^2 (0.5 - a_i) - sum_{j != i} a_j <v_i, v_j>``.

    Equals ``(|o - v_i|^2 - |o|^2) / 2`` with ``o = sum_j a_j v_j``, so its
    argmin is the value vector nearest to ``o``.
    """
    w = _weights(alpha)
    V = np.asarray(V, dtype=np.float64)
    vi = V[i]
    dots = V @ vi
    cross = w @ dots - w[i] * dots[i]
    return float(dots[i] * (0.5 - w[i]) - cross)


def single_value_objectives(alpha, V) -> np.ndarray:
    """:func:`single_value_objective` for every index at once."""
    w = _weights(alpha)
    V = np.asarray(V, dtype=np.float64)
    G = V @ V.T
    norms = np.diag(G)
    return norms * (0.5 - w) - (G @ w - w * norms)


def optimal_v_aware_1(o, V, allowed=None):
    """Index and row of the allowed value vector nearest to ``o``."""
    o = np.asarray(o, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    idx = np.arange(len(V)) if allowed is None else np.asarray(allowed, dtype=np.intp)
    if idx.size == 0:
        raise ValidationError("allowed index set is empty")
    dist = ((V[idx] - o) ** 2).sum(axis=1)
    i = int(idx[np.argmin(dist)])
    return i, V[i].copy()


# -- simplex-constrained least squares ---------------------------------------


def _affine_lsq(o, Vs, passive):
    """Minimize ``|o - sum z_i v_i|`` over the passive set with ``sum z = 1``."""
    idx = np.flatnonzero(passive)
    z = np.zeros(len(Vs))
    base = Vs[idx[0]]
    if idx.size == 1:
        z[idx[0]] = 1.0
        return z
    D = (Vs[idx[1:]] - base).T
    sol = np.linalg.lstsq(D, o - base, rcond=None)[0]
    z[idx[1:]] = sol
    z[idx[0]] = 1.0 - sol.sum()
    return z


def simplex_lsq(o, V_S, support=None, tol: float = 1e-10) -> SimplexCombination:
    """Closest point to ``o`` in the convex hull of the rows of ``V_S``.

    Primal active-set method: grow a passive set one index at a time (most
    negative reduced gradient, ties to the lower index), solve the
    equality-constrained subproblem on it, and step back to feasibility when
    a coefficient goes nonpositive.  ``support`` labels the rows (defaults to
    ``0..m-1``); the returned ``beta`` has one entry per row.
    """
    o = np.asarray(o, dtype=np.float64)
    Vs = np.atleast_2d(np.asarray(V_S, dtype=np.float64))
    m = Vs.shape[0]
    labels = np.arange(m) if support is None else np.asarray(support, dtype=np.intp)
    if m == 0:
        raise ValidationError("V_S must have at least one row")
    if m == 1:
        return SimplexCombination(labels, np.ones(1))
    G = Vs @ Vs.T
    c = Vs @ o
    kkt_tol = tol * (1.0 + np.max(np.diag(G)) + float(o @ o))
    beta = np.zeros(m)
    start = int(np.argmin(((Vs - o) ** 2).sum(axis=1)))
    beta[start] = 1.0
    passive = np.zeros(m, dtype=bool)
    passive[start] = True
    cap = 10 * m * m
    steps = 0
    while True:
        grad = G @ beta - c
        mu = grad[passive].mean()
        slack = np.where(passive, np.inf, grad - mu)
        j = int(np.argmin(slack))
        if not slack[j] < -kkt_tol:
            break
        passive[j] = True
        while True:
            steps += 1
            if steps > cap:
                raise SolverError(f"simplex_lsq exceeded {cap} steps (m={m})")
            z = _affine_lsq(o, Vs, passive)
            if np.all(z[passive] > 0):
                beta = z
                break
            neg = passive & (z <= 0)
            ratios = np.full(m, np.inf)
            ratios[neg] = beta[neg] / (beta[neg] - z[neg])
            k = int(np.argmin(ratios))
            t = ratios[k]
            if t <= 0 and k == j:
                # entering index cannot move; treat as converged
                passive[j] = False
                beta = np.where(passive, beta, 0.0)
                return _finish(labels, beta)
            beta = beta + t * (z - beta)
            beta[k] = 0.0
            passive &= beta > 0
            beta[~passive] = 0.0
    return _finish(labels, beta)


def _finish(labels, beta):
    beta = np.clip(beta, 0.0, None)
    return SimplexCombination(labels, beta / beta.sum())


# -- Carathéodory reduction ---------------------------------------------------


def _null_vector(A, tol=PIVOT_TOL):
    """A nonzero null vector of a wide matrix via column-pivoted elimination."""
    R = np.array(A, dtype=np.float64)
    rows, cols = R.shape
    scale = max(1.0, np.abs(R).max())
    pivots = []
    r = 0
    for col in range(cols):
        if r == rows:
            break
        piv = r + int(np.argmax(np.abs(R[r:, col])))
        if abs(R[piv, col]) <= tol * scale:
            continue
        R[[r, piv]] = R[[piv, r]]
        R[r] /= R[r, col]
        others = np.arange(rows) != r
        R[others] -= np.outer(R[others, col], R[r])
        pivots.append(col)
        r += 1
    free = [c for c in range(cols) if c not in pivots]
    if not free:
        return None
    f = free[0]
    x = np.zeros(cols)
    x[f] = 1.0
    for i, pc in enumerate(pivots):
        x[pc] = -R[i, f]
    return x


def caratheodory_by_elimination(alpha, V) -> SimplexCombination:
    """Reference reduction: repeatedly eliminate a point via an affine dependence.

    Works on ``d + 2`` support points at a time.  Slow (one elimination per
    dropped point) but has no incremental state; used as a fallback.
    """
    w = _weights(alpha).copy()
    V = np.asarray(V, dtype=np.float64)
    D = V.shape[1] + 1
    support = list(np.flatnonzero(w > 0))
    while len(support) > D:
        pts = support[: D + 1]
        lifted = np.vstack([V[pts].T, np.ones(len(pts))])
        lam = _null_vector(lifted)
        if lam is None:
            raise SolverError(f"no affine dependence found among support {pts}")
        if not np.any(lam > PIVOT_TOL):
            lam = -lam
        cand = lam > PIVOT_TOL
        ratios = np.where(cand, w[pts] / np.where(cand, lam, 1.0), np.inf)
        k = int(np.argmin(ratios))
        t = ratios[k]
        w[pts] = np.clip(w[pts] - t * lam, 0.0, None)
        w[pts[k]] = 0.0
        support = [i for i in support if w[i] > 0]
    beta = w[support]
    return SimplexCombination(np.asarray(support, dtype=np.intp), beta / beta.sum())


def _lifted(V):
    return np.ascontiguousarray(np.hstack([V, np.ones((len(V), 1))]))


def _polish(V, o, support, beta):
    """Re-solve the weights on a fixed support; keep them if still nonnegative."""
    A = _lifted(V[support]).T
    b = np.append(o, 1.0)
    sol = np.linalg.lstsq(A, b, rcond=None)[0]
    if np.all(sol >= -1e-12):
        sol = np.clip(sol, 0.0, None)
        if np.linalg.norm(A @ sol - b) <= np.linalg.norm(A @ beta - b):
            return sol
    return beta


def caratheodory_batch(W, V):
    """Reduce each row of the weight matrix ``W`` to at most ``d + 1`` values.

    Returns a list of :class:`SimplexCombination`.
    """
    from ._carath import reduce_batch

    W = np.ascontiguousarray(np.asarray(W, dtype=np.float64))
    V = np.asarray(V, dtype=np.float64)
    D = V.shape[1] + 1
    A = _lifted(V)
    scale = 1.0 + np.abs(A).max()
    basis, wb, ok = reduce_batch(W, A, 1e-9 * scale, 1e-13)
    O = W @ V
    results = []
    for q in range(len(W)):
        nnz = np.count_nonzero(W[q] > 0)
        if nnz <= D:
            support = np.flatnonzero(W[q] > 0)
            beta = W[q, support]
            results.append(SimplexCombination(support, beta / beta.sum()))
            continue
        comb = None
        if ok[q]:
            keep = (basis[q] >= 0) & (wb[q] > 0)
            order = np.argsort(basis[q][keep])
            support = basis[q][keep][order]
            beta = wb[q][keep][order]
            if support.size:
                tol = 1e-9 * (1.0 + np.linalg.norm(O[q]))
                beta = beta / beta.sum()
                err = np.linalg.norm(beta @ V[support] - O[q])
                if err > 1e-3 * tol:
                    beta = _polish(V, O[q], support, beta)
                    beta = beta / beta.sum()
                    err = np.linalg.norm(beta @ V[support] - O[q])
                if err <= tol:
                    m = beta > 0
                    comb = SimplexCombination(support[m], beta[m])
        if comb is None:
            comb = caratheodory_by_elimination(W[q], V)
        results.append(comb)
    return results


def caratheodory_reduce(alpha, V) -> SimplexCombination:
    """Rewrite ``sum(alpha_i v_i)`` as a convex combination of at most ``d + 1`` values."""
    w = _weights(alpha)
    return caratheodory_batch(w[None, :], V)[0]


# -- value-aware oracle -------------------------------------------------------


def brute_force_by_support(o, V, allowed, r):
    """Best point over every support of size ``min(r, |allowed|)``, one
    :func:`simplex_lsq` per support.  Reference path for small cases."""
    k = min(r, len(allowed))
    best_err = np.inf
    best = None
    for combo in itertools.combinations(allowed, k):
        sub = np.asarray(combo)
        comb = simplex_lsq(o, V[sub], support=sub)
        p = comb.beta @ V[sub]
        err = float(((o - p) ** 2).sum())
        if best is None or err < best_err - 1e-12 * (1.0 + best_err):
            best_err, best = err, p
    return best


_FACE_BLOCK = 4096


def _face_projections(V, subsets):
    """Affine-hull projectors for a block of index subsets of equal size."""
    base = V[subsets[:, 0]]
    if subsets.shape[1] == 1:
        return base, None, None
    D = V[subsets[:, 1:]] - base[:, None, :]
    return base, D, np.linalg.pinv(np.transpose(D, (0, 2, 1)))


def brute_force_v_aware(O, V, r, causal=False):
    """Closest point in ``C_r`` for every row of ``O`` by face enumeration.

    The projection of ``o`` onto ``conv(S)`` lies in the relative interior of
    some face ``S'`` of ``S`` and there coincides with the projection onto the
    affine hull of ``S'``.  So the optimum over all supports of size ``r`` is
    the smallest error among affine projections (over every subset of size
    ``<= r``) whose barycentric coordinates are nonnegative.  Ties go to the
    smaller, then lexicographically first, subset.
    """
    O = np.asarray(O, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    L = len(V)
    nq = len(O)
    best_err = np.full(nq, np.inf)
    best = np.zeros_like(O)
    tol = 1e-12 * (1.0 + np.abs(V).max() ** 2)
    for size in range(1, min(r, L) + 1):
        combos = itertools.combinations(range(L), size)
        while True:
            block = list(itertools.islice(combos, _FACE_BLOCK))
            if not block:
                break
            subsets = np.asarray(block, dtype=np.intp)
            base, D, P = _face_projections(V, subsets)
            X = O[:, None, :] - base[None, :, :]
            if D is None:
                pts = np.broadcast_to(base, X.shape)
                feasible = np.ones(X.shape[:2], dtype=bool)
            else:
                c = np.einsum("nkd,qnd->qnk", P, X)
                feasible = (c >= -1e-12).all(axis=2) & (c.sum(axis=2) <= 1.0 + 1e-12)
                pts = base[None] + np.einsum("qnk,nkd->qnd", c, D)
            if causal:
                feasible &= subsets[:, -1][None, :] <= np.arange(nq)[:, None]
            err = ((O[:, None, :] - pts) ** 2).sum(axis=2)
            err = np.where(feasible, err, np.inf)
            j = np.argmin(err, axis=1)
            e = err[np.arange(nq), j]
            better = e < best_err - tol
            best_err = np.where(better, e, best_err)
            best[better] = pts[np.flatnonzero(better), j[better]]
    return best, best_err


def optimal_v_aware(spec: KernelSpec, inst: AttentionInstance, r: int, *, return_flags=False):
    """Closest point to exact attention among combinations of at most ``r`` values.

    Supported regimes: ``r == 1``, ``r >= d + 1``, or any ``r`` with
    ``binomial(L, r) <= 10**6`` (exhaustive search).
    """
    if r < 1:
        raise ValidationError("r must be >= 1")
    L, d = inst.L, inst.d
    if 1 < r < d + 1 and r < L and math.comb(L, r) > BRUTE_FORCE_LIMIT:
        raise ValidationError(
            f"optimal_v_aware with 1 < r={r} < d+1={d + 1} needs exhaustive search over "
            f"binomial({L}, {r}) supports; use r=1, r>={d + 1}, or a smaller instance"
        )
    O, flags = exact_attention(spec, inst, return_flags=True)
    V = inst.V
    out = np.empty_like(O)
    if r == 1:
        for t in range(L):
            out[t] = optimal_v_aware_1(O[t], V, inst.allowed(t))[1]
    elif r >= d + 1:
        mask = inst.allowed_mask() if inst.causal else None
        alpha, _ = attention_matrix(spec, inst.Q, inst.K, mask)
        for t, comb in enumerate(caratheodory_batch(alpha, V)):
            out[t] = comb.point(V)
    else:
        out, _ = brute_force_v_aware(O, V, r, causal=inst.causal)
    return (out, flags) if return_flags else out


# -- rankings -----------------------------------------------------------------


@dataclass(frozen=True)
class Rankings:
    by_alpha: tuple
    by_alpha_norm: tuple
    by_objective: tuple
    by_distance: tuple


def _order(keys, descending=False):
    keys = np.asarray(keys, dtype=np.float64)
    if descending:
        keys = -keys
    tol = 1e-12 * (1.0 + np.abs(keys).max())

    def cmp(a, b):
        if abs(keys[a] - keys[b]) <= tol:
            return a - b
        return -1 if keys[a] < keys[b] else 1

    return tuple(sorted(range(len(keys)), key=functools.cmp_to_key(cmp)))


def ranking_compare(o, alpha, V) -> Rankings:
    """Four index orders: by weight, by weight times value norm, by the
    single-value objective and by distance to ``o`` (the last two agree)."""
    w = _weights(alpha)
    V = np.asarray(V, dtype=np.float64)
    o = np.asarray(o, dtype=np.float64)
    return Rankings(
        by_alpha=_order(w, descending=True),
        by_alpha_norm=_order(w * np.linalg.norm(V, axis=1), descending=True),
        by_objective=_order(single_value_objectives(w, V)),
        by_distance=_order(((V - o) ** 2).sum(axis=1)),
    )
