"""Error measurements of approximate attention against exact attention."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approximators import run_approximator
from .core import AttentionInstance, KernelSpec, ShapeError
from .engine import exact_attention
from .kernels import attention_matrix, row_skew

REL_EPS = 1e-12


@dataclass(frozen=True)
class Comparison:
    per_query_sq_error: np.ndarray
    mean_sq_error: float
    per_query_relative_error: np.ndarray
    mean_relative_error: float


def compare(exact, approx) -> Comparison:
    """Per-query squared (and relative) distance between two output matrices."""
    exact = np.asarray(exact, dtype=np.float64)
    approx = np.asarray(approx, dtype=np.float64)
    if exact.shape != approx.shape:
        raise ShapeError(f"shape mismatch: exact {exact.shape} vs approx {approx.shape}")
    diff = exact - approx
    sq = (diff * diff).sum(axis=1)
    rel = np.sqrt(sq) / (np.linalg.norm(exact, axis=1) + REL_EPS)
    return Comparison(sq, float(sq.mean()), rel, float(rel.mean()))


@dataclass
class ApproximationReport:
    per_query_sq_error: np.ndarray
    mean_sq_error: float
    mean_relative_error: float
    skew_entropy_mean: float
    skew_max_mean: float
    flags: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "mean_sq_error": self.mean_sq_error,
            "mean_relative_error": self.mean_relative_error,
            "skew_entropy_mean": self.skew_entropy_mean,
            "skew_max_mean": self.skew_max_mean,
            "n_flags": len(self.flags),
            "flags": [[int(t), ev] for t, ev in self.flags],
            "per_query_sq_error": [float(x) for x in self.per_query_sq_error],
        }


def build_report(spec: KernelSpec, inst: AttentionInstance, approx, flags=(), config=None, *, exact=None, alpha=None):
    """Assemble an :class:`ApproximationReport` for one approximate output.

    ``exact`` and ``alpha`` may be passed in to avoid recomputing them.
    """
    if alpha is None:
        mask = inst.allowed_mask() if inst.causal else None
        alpha, _ = attention_matrix(spec, inst.Q, inst.K, mask)
    if exact is None:
        exact = alpha @ inst.V
    cmp = compare(exact, approx)
    entropy, max_w = row_skew(alpha)
    return ApproximationReport(
        per_query_sq_error=cmp.per_query_sq_error,
        mean_sq_error=cmp.mean_sq_error,
        mean_relative_error=cmp.mean_relative_error,
        skew_entropy_mean=float(entropy.mean()),
        skew_max_mean=float(max_w.mean()),
        flags=[(int(t), "degenerate_denominator") for t in flags],
        config=dict(config or {}),
    )


def error_curve(spec: KernelSpec, inst: AttentionInstance, family: str, r_values, params=None):
    """``[(r, mean_sq_error), ...]`` for one approximator family over a budget sweep."""
    exact = exact_attention(spec, inst)
    curve = []
    for r in r_values:
        out, _ = run_approximator(family, spec, inst, int(r), params)
        curve.append((int(r), compare(exact, out).mean_sq_error))
    return curve


def oblivious_error_profile(spec: KernelSpec, inst: AttentionInstance):
    """Mean squared and mean relative error of the top-``r`` oracle for every ``r = 1..L``.

    Uses prefix sums over keys sorted by weight, so the whole profile costs
    one pass instead of ``L`` oracle runs.  Returns ``(sq, rel)`` arrays where
    index ``r - 1`` holds budget ``r``.
    """
    mask = inst.allowed_mask() if inst.causal else None
    alpha, _ = attention_matrix(spec, inst.Q, inst.K, mask)
    exact = alpha @ inst.V
    order = np.argsort(-alpha, axis=1, kind="stable")
    a = np.take_along_axis(alpha, order, axis=1)
    num = np.cumsum(a[:, :, None] * inst.V[order], axis=1)
    den = np.cumsum(a, axis=1)
    # rows past the positive support repeat the last nonzero prefix
    den_safe = np.where(den > 0, den, 1.0)
    approx = num / den_safe[:, :, None]
    diff = approx - exact[:, None, :]
    sq = (diff * diff).sum(axis=2)
    rel = np.sqrt(sq) / (np.linalg.norm(exact, axis=1)[:, None] + REL_EPS)
    return sq.mean(axis=0), rel.mean(axis=0)


def smallest_budget(profile, threshold: float):
    """Smallest ``r`` (1-based) with ``profile[r-1] <= threshold``, or None."""
    hits = np.flatnonzero(np.asarray(profile) <= threshold)
    return int(hits[0]) + 1 if hits.size else None
