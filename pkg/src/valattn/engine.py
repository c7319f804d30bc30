"""Exact generalized attention and sparse attention over an explicit plan."""
from __future__ import annotations

import numpy as np

from .core import AttentionInstance, KernelSpec, SelectionPlan, ValidationError
from .kernels import attention_matrix, embed, log_from_inner, normalize_log_scores

# Upper bound on gathered key elements materialized per block of queries.
_GATHER_BUDGET = 1 << 22


def exact_attention(spec: KernelSpec, inst: AttentionInstance, *, return_flags=False):
    """Full attention output, one row per query.

    With ``return_flags`` also returns the indices of queries whose scores
    all vanished and fell back to uniform weights.
    """
    mask = inst.allowed_mask() if inst.causal else None
    alpha, flags = attention_matrix(spec, inst.Q, inst.K, mask)
    out = alpha @ inst.V
    return (out, flags) if return_flags else out


def gathered_attention(spec: KernelSpec, Q, K, V, idx, weight):
    """Attention where query ``t`` sees keys ``idx[t]`` with multiplicities ``weight[t]``.

    ``idx`` and ``weight`` are ``n x w`` (pad with weight 0).  Only the
    gathered pairs are scored.  Returns ``(out, degenerate_mask)``.
    """
    Qe = embed(spec, Q)
    Ke = embed(spec, K)
    V = np.asarray(V, dtype=np.float64)
    idx = np.asarray(idx, dtype=np.intp)
    weight = np.asarray(weight, dtype=np.float64)
    n, w = idx.shape
    out = np.empty((n, V.shape[1]))
    degenerate = np.zeros(n, dtype=bool)
    block = max(1, _GATHER_BUDGET // max(1, w * Ke.shape[1]))
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        ii = idx[lo:hi]
        ip = np.einsum("td,twd->tw", Qe[lo:hi], Ke[ii])
        alpha, deg = normalize_log_scores(spec, log_from_inner(spec, ip), weight[lo:hi])
        out[lo:hi] = np.einsum("tw,twd->td", alpha, V[ii])
        degenerate[lo:hi] = deg
    return out, degenerate


def plan_to_padded(plan: SelectionPlan):
    """Pack a plan into ``(idx, weight)`` arrays padded to the widest set."""
    width = max(len(s) for s in plan.sets)
    idx = np.zeros((len(plan), width), dtype=np.intp)
    weight = np.zeros((len(plan), width))
    for t, s in enumerate(plan.sets):
        idx[t, : len(s)] = s
        weight[t, : len(s)] = 1.0
    return idx, weight


def sparse_attention(spec: KernelSpec, inst: AttentionInstance, plan: SelectionPlan, *, return_flags=False):
    """Attention of each query restricted to its planned key set."""
    if len(plan) != inst.L:
        raise ValidationError(f"plan covers {len(plan)} queries, instance has {inst.L}")
    for t, s in enumerate(plan.sets):
        if len(s) == 0:
            raise ValidationError(f"selection for query {t} is empty")
        if s[-1] >= inst.L or s[0] < 0:
            raise ValidationError(f"selection for query {t} is out of range")
        if inst.causal and s[-1] > t:
            raise ValidationError(f"selection for query {t} violates the causal mask")
    idx, weight = plan_to_padded(plan)
    out, deg = gathered_attention(spec, inst.Q, inst.K, inst.V, idx, weight)
    return (out, np.flatnonzero(deg)) if return_flags else out
