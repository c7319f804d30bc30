"""Kernel scores, attention normalization, feature maps and skewness stats.

Normalization works on log-scores for every family: the row maximum over
the allowed keys is subtracted before exponentiating, which leaves the
normalized weights unchanged and keeps large logits (or high polynomial
degrees) from overflowing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Distribution, KernelSpec, ValidationError

# Scores at or below this are treated as zero.
SCORE_EPS = 1e-300
LOG_SCORE_EPS = math.log(SCORE_EPS)


def elu_plus_one(x):
    """``x + 1`` for positive entries, ``exp(x)`` otherwise."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x + 1.0, np.exp(np.minimum(x, 0.0)))


def embed(spec: KernelSpec, X) -> np.ndarray:
    """Map rows of ``X`` into the space where the kernel takes an inner product.

    Exponential: optional ``d ** -0.25`` scaling.  Polynomial: identity.
    Elu: the ``1 + ELU`` feature map.
    """
    X = np.asarray(X, dtype=np.float64)
    if spec.family == "exponential":
        if spec.temperature_scaling:
            return X / X.shape[-1] ** 0.25
        return X
    if spec.family == "elu":
        return elu_plus_one(X)
    return X


def log_from_inner(spec: KernelSpec, ip) -> np.ndarray:
    """Turn inner products of embedded vectors into log kernel scores."""
    ip = np.asarray(ip, dtype=np.float64)
    if spec.family == "exponential":
        return ip
    if spec.family == "elu":
        with np.errstate(divide="ignore"):
            return np.log(ip)
    if spec.degree == 0:
        return np.zeros_like(ip)
    with np.errstate(divide="ignore"):
        return spec.degree * np.log(np.abs(ip))


def kernel_score(spec: KernelSpec, q, k) -> float:
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != k.shape or q.ndim != 1:
        raise ValidationError(f"q and k must be vectors of equal length, got {q.shape} and {k.shape}")
    ip = float(embed(spec, q) @ embed(spec, k))
    if spec.family == "exponential":
        return math.exp(ip) if ip < 709.0 else math.inf
    if spec.family == "elu":
        return ip
    return ip ** spec.degree


def log_score_matrix(spec: KernelSpec, Q, K) -> np.ndarray:
    """Dense ``len(Q) x len(K)`` matrix of log kernel scores."""
    return log_from_inner(spec, embed(spec, Q) @ embed(spec, K).T)


def normalize_log_scores(spec: KernelSpec, log_s, weight):
    """Row-normalize ``weight * exp(log_s)``.

    ``weight`` is a nonnegative multiplicity per entry (0 excludes the entry,
    2 counts it twice).  Returns ``(alpha, degenerate)`` where ``degenerate``
    flags rows whose scores were all at or below ``SCORE_EPS``; those rows
    fall back to ``weight`` normalized (uniform over the allowed entries).
    Every row must have at least one positive weight.
    """
    log_s = np.asarray(log_s, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    active = weight > 0
    if not np.all(active.any(axis=-1)):
        raise ValidationError("every row needs at least one allowed entry")
    masked = np.where(active, log_s, -np.inf)
    m = masked.max(axis=-1, keepdims=True)
    if spec.family == "exponential":
        degenerate = ~np.isfinite(m[..., 0])
    else:
        degenerate = m[..., 0] <= LOG_SCORE_EPS
    safe_m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(invalid="ignore", over="ignore"):
        s = np.where(active, weight * np.exp(masked - safe_m), 0.0)
    if np.any(degenerate):
        s[degenerate] = weight[degenerate]
    alpha = s / s.sum(axis=-1, keepdims=True)
    return alpha, degenerate


def attention_weights(spec: KernelSpec, q, K, allowed=None) -> Distribution:
    """Normalized kernel scores of ``q`` against the rows of ``K``.

    Keys outside ``allowed`` (default: all) get weight 0.
    """
    q = np.asarray(q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    mask = np.zeros(K.shape[0])
    if allowed is None:
        mask[:] = 1.0
    else:
        idx = np.asarray(allowed, dtype=np.intp)
        if idx.size == 0:
            raise ValidationError("allowed index set is empty")
        mask[idx] = 1.0
    log_s = log_from_inner(spec, embed(spec, K) @ embed(spec, q))
    alpha, degenerate = normalize_log_scores(spec, log_s, mask)
    return Distribution(alpha, degenerate=bool(degenerate))


def attention_matrix(spec: KernelSpec, Q, K, mask=None):
    """Row-stochastic attention matrix and the indices of degenerate rows."""
    log_s = log_score_matrix(spec, Q, K)
    if mask is None:
        mask = np.ones(log_s.shape)
    alpha, degenerate = normalize_log_scores(spec, log_s, mask)
    return alpha, np.flatnonzero(degenerate)


def feature_map(spec: KernelSpec, x) -> np.ndarray:
    """Explicit feature vector with ``<phi(x), phi(y)> == kernel_score(x, y)``.

    Only the elu kernel and the degree-2 polynomial have a finite exact map.
    """
    x = np.asarray(x, dtype=np.float64)
    if spec.family == "elu":
        return elu_plus_one(x)
    if spec.family == "polynomial" and spec.degree == 2:
        return np.outer(x, x).ravel()
    raise ValidationError(
        f"no finite feature map for {spec.family} kernel"
        + (f" of degree {spec.degree}" if spec.degree is not None else "")
        + "; use ORF random features for the exponential kernel"
    )


@dataclass(frozen=True)
class SkewStats:
    entropy: float
    max_weight: float


def skew_stats(alpha) -> SkewStats:
    w = alpha.weights if isinstance(alpha, Distribution) else np.asarray(alpha, dtype=np.float64)
    pos = w[w > 0]
    return SkewStats(entropy=float(-(pos * np.log(pos)).sum()), max_weight=float(w.max()))


def row_skew(alpha: np.ndarray):
    """Per-row entropy and max weight of a row-stochastic matrix."""
    alpha = np.asarray(alpha, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(alpha > 0, alpha * np.log(alpha), 0.0)
    return -plogp.sum(axis=1), alpha.max(axis=1)
