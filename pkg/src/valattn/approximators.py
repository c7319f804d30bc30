"""Practical attention approximations: sliding window, multi-round LSH, ORF."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AttentionInstance, KernelSpec, RngStream, ValidationError, gaussian_matrix, make_plan
from .engine import gathered_attention, sparse_attention
from .oracles import BRUTE_FORCE_LIMIT, optimal_v_aware, optimal_v_oblivious

ORF_MODES = ("iid_gaussian", "orthogonal_chi", "orthonormal")


def sliding_window_plan(L: int, r: int, causal: bool = False):
    if r < 2 or r % 2:
        raise ValidationError(f"sliding window needs an even r >= 2, got {r}")
    h = r // 2
    sets = []
    for t in range(L):
        hi = t if causal else min(L - 1, t + h)
        sets.append(range(max(0, t - h), hi + 1))
    return make_plan(sets, L, causal=causal)


def sliding_window_attention(spec: KernelSpec, inst: AttentionInstance, r: int, *, return_flags=False):
    """Each query attends to ``r/2`` positions on each side plus itself."""
    plan = sliding_window_plan(inst.L, r, inst.causal)
    return sparse_attention(spec, inst, plan, return_flags=return_flags)


# -- LSH ---------------------------------------------------------------------


@dataclass(frozen=True)
class LshConfig:
    """Multi-round LSH attention settings.

    ``r`` keys are scored per query per round (two chunks of ``r/2``).
    ``buckets`` defaults to ``4L/r``.  ``dedupe`` counts a key met in several
    rounds once instead of once per round.
    """

    r: int
    rounds: int = 1
    buckets: int | None = None
    seed: int = 0
    dedupe: bool = False
    temperature_scaling: bool = False

    @property
    def chunk(self) -> int:
        return self.r // 2

    def n_buckets(self, L: int) -> int:
        return self.buckets if self.buckets is not None else 4 * L // self.r

    def validate(self, L: int) -> None:
        if self.r < 2 or self.r % 2:
            raise ValidationError(f"LSH r must be even and >= 2, got {self.r}")
        if self.rounds < 1:
            raise ValidationError("LSH needs at least one round")
        if L % self.chunk:
            raise ValidationError(f"chunk size r/2={self.chunk} does not divide L={L}")
        C = self.n_buckets(L)
        if C < 2 or C % 2:
            raise ValidationError(f"bucket count must be even and >= 2, got {C}")
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")


def lsh_hash(R, x) -> int:
    """Bucket of ``x``: argmax of ``[-Rx; Rx]`` (0-based, ties to the lower index)."""
    return int(lsh_hash_many(R, np.asarray(x, dtype=np.float64)[None, :])[0])


def lsh_hash_many(R, X) -> np.ndarray:
    P = np.asarray(X, dtype=np.float64) @ np.asarray(R, dtype=np.float64).T
    return np.argmax(np.concatenate([-P, P], axis=1), axis=1)


def lsh_round_candidates(R, Q, K, chunk: int):
    """Keys each query scores in one round.

    Returns ``(idx, weight)`` of shape ``L x 2*chunk``; queries in the first
    sorted chunk have only ``chunk`` real candidates (weight 0 padding).
    """
    L = len(Q)
    n_chunks = L // chunk
    q_order = np.argsort(lsh_hash_many(R, Q), kind="stable")
    k_order = np.argsort(lsh_hash_many(R, K), kind="stable")
    kc = k_order.reshape(n_chunks, chunk)
    cand = np.empty((n_chunks, 2 * chunk), dtype=np.intp)
    cand[:, chunk:] = kc
    cand[1:, :chunk] = kc[:-1]
    cand[0, :chunk] = kc[0]
    wt = np.ones((n_chunks, 2 * chunk))
    wt[0, :chunk] = 0.0
    which = np.arange(L) // chunk
    idx = np.empty((L, 2 * chunk), dtype=np.intp)
    weight = np.empty((L, 2 * chunk))
    idx[q_order] = cand[which]
    weight[q_order] = wt[which]
    return idx, weight


def _dedupe(idx, weight):
    keyed = np.where(weight > 0, idx, -1)
    order = np.argsort(keyed, axis=1, kind="stable")
    srt = np.take_along_axis(keyed, order, axis=1)
    dup = np.zeros_like(srt, dtype=bool)
    dup[:, 1:] = (srt[:, 1:] == srt[:, :-1]) & (srt[:, 1:] >= 0)
    out = weight.copy()
    rows = np.arange(len(idx))[:, None]
    out[rows, order] = np.where(dup, 0.0, np.take_along_axis(weight, order, axis=1))
    return out


def lsh_attention(inst: AttentionInstance, cfg: LshConfig, *, instance_id: int = 0, return_flags=False):
    """Multi-round LSH attention with the exponential kernel.

    Each round draws a fresh projection from stream ``(instance_id, round)``
    of ``cfg.seed``, sorts queries and keys by bucket (ties by position),
    chunks them, and lets each query score the keys of its own and the
    preceding chunk.  Scores accumulate over rounds with multiplicity unless
    ``cfg.dedupe``.
    """
    L, d = inst.L, inst.d
    cfg.validate(L)
    C = cfg.n_buckets(L)
    idxs, weights = [], []
    for rnd in range(cfg.rounds):
        R = gaussian_matrix(RngStream(cfg.seed, (instance_id, rnd)), C // 2, d)
        idx, weight = lsh_round_candidates(R, inst.Q, inst.K, cfg.chunk)
        idxs.append(idx)
        weights.append(weight)
    idx = np.concatenate(idxs, axis=1)
    weight = np.concatenate(weights, axis=1)
    first = weights[0] > 0
    if inst.causal:
        weight[idx > np.arange(L)[:, None]] = 0.0
    if cfg.dedupe:
        weight = _dedupe(idx, weight)
    empty = ~(weight > 0).any(axis=1)
    weight[empty] = 1.0
    spec = KernelSpec("exponential", temperature_scaling=cfg.temperature_scaling)
    out, _ = gathered_attention(spec, inst.Q, inst.K, inst.V, idx, weight)
    flags = np.flatnonzero(empty)
    for t in flags:
        keys = np.unique(idxs[0][t][first[t]])
        out[t] = inst.V[keys].mean(axis=0)
    return (out, flags) if return_flags else out


# -- ORF ---------------------------------------------------------------------


@dataclass(frozen=True)
class OrfConfig:
    """Random-feature estimate of the exponential kernel with ``F`` features.

    With ``temperature_scaling`` (the default) inputs are divided by
    ``d ** 0.25``, so the estimate targets ``exp(<q, k> / sqrt(d))``.
    """

    F: int
    mode: str = "orthogonal_chi"
    seed: int = 0
    temperature_scaling: bool = True

    def validate(self) -> None:
        if self.F < 1:
            raise ValidationError("ORF needs F >= 1")
        if self.mode not in ORF_MODES:
            raise ValidationError(f"unknown ORF mode {self.mode!r}; expected one of {ORF_MODES}")
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")


def _orthonormal_rows(rng: RngStream, F: int, d: int) -> np.ndarray:
    blocks = []
    for _ in range(math.ceil(F / d)):
        q, r = np.linalg.qr(gaussian_matrix(rng, d, d))
        q = q * np.sign(np.diag(r))
        blocks.append(q.T)
    return np.vstack(blocks)[:F]


def orf_matrix(cfg: OrfConfig, d: int, rng: RngStream) -> np.ndarray:
    """``F x d`` projection for the chosen mode.

    ``orthogonal_chi`` rescales each orthonormal row by an independent
    chi(d) norm so rows are marginally standard gaussian.
    """
    if cfg.mode == "iid_gaussian":
        return gaussian_matrix(rng, cfg.F, d)
    R = _orthonormal_rows(rng, cfg.F, d)
    if cfg.mode == "orthogonal_chi":
        R = R * np.linalg.norm(gaussian_matrix(rng, cfg.F, d), axis=1)[:, None]
    return R


def orf_features(R, x, stabilizer=0.0) -> np.ndarray:
    """``exp(Rx - |x|^2/2 - stabilizer) / sqrt(F)`` for a vector or rows of a matrix."""
    R = np.asarray(R, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    proj = x @ R.T
    sq = 0.5 * (x * x).sum(axis=-1)
    stab = np.asarray(stabilizer, dtype=np.float64)
    if x.ndim == 2:
        sq = sq[:, None]
        if stab.ndim == 1:
            stab = stab[:, None]
    return np.exp(proj - sq - stab) / math.sqrt(R.shape[0])


def orf_attention(
    inst: AttentionInstance,
    cfg: OrfConfig,
    *,
    instance_id: int = 0,
    stabilizer_offset: float = 0.0,
    return_flags=False,
):
    """Dense attention with ORF-estimated exponential-kernel scores (non-causal only).

    ``stabilizer_offset`` is added to both stabilizers; it cancels in the
    normalization and exists so that cancellation can be checked.
    """
    if inst.causal:
        raise ValidationError("ORF attention supports non-causal instances only")
    cfg.validate()
    d = inst.d
    R = orf_matrix(cfg, d, RngStream(cfg.seed, (instance_id, 0)))
    scale = d**0.25 if cfg.temperature_scaling else 1.0
    Q = inst.Q / scale
    K = inst.K / scale
    q_stab = (Q @ R.T).max(axis=1) + stabilizer_offset
    k_stab = (K @ R.T).max() + stabilizer_offset
    phi_q = orf_features(R, Q, q_stab)
    phi_k = orf_features(R, K, k_stab)
    scores = phi_q @ phi_k.T
    denom = scores.sum(axis=1)
    degenerate = ~(denom > 0)
    scores[degenerate] = 1.0
    denom[degenerate] = inst.L
    out = (scores / denom[:, None]) @ inst.V
    flags = np.flatnonzero(degenerate)
    return (out, flags) if return_flags else out


# -- dispatch ----------------------------------------------------------------

FAMILIES = ("optimal_v_oblivious", "optimal_v_aware", "sliding_window", "lsh", "orf")


def validate_approximator(name: str, params: dict, spec: KernelSpec, L: int, d: int, causal: bool, r: int) -> None:
    """Check preconditions without computing anything."""
    if name not in FAMILIES:
        raise ValidationError(f"unknown approximator {name!r}; expected one of {FAMILIES}")
    if r < 1:
        raise ValidationError("r must be >= 1")
    if name == "optimal_v_aware":
        if 1 < r < d + 1 and r < L and math.comb(L, r) > BRUTE_FORCE_LIMIT:
            raise ValidationError(
                f"optimal_v_aware r={r} needs binomial({L}, {r}) > {BRUTE_FORCE_LIMIT} supports"
            )
    elif name == "sliding_window":
        if r < 2 or r % 2:
            raise ValidationError(f"sliding_window needs an even r >= 2, got {r}")
    elif name in ("lsh", "orf"):
        if spec.family != "exponential":
            raise ValidationError(f"{name} approximates the exponential kernel only")
        if name == "lsh":
            _lsh_config(spec, r, params).validate(L)
        else:
            if causal:
                raise ValidationError("orf supports non-causal instances only")
            _orf_config(spec, r, params).validate()
    unknown = set(params) - _ALLOWED_PARAMS[name]
    if unknown:
        raise ValidationError(f"unknown parameters for {name}: {sorted(unknown)}")


_ALLOWED_PARAMS = {
    "optimal_v_oblivious": set(),
    "optimal_v_aware": set(),
    "sliding_window": set(),
    "lsh": {"rounds", "buckets", "seed", "dedupe"},
    "orf": {"mode", "seed"},
}


def _lsh_config(spec, r, params):
    return LshConfig(
        r=r,
        rounds=int(params.get("rounds", 1)),
        buckets=params.get("buckets"),
        seed=int(params.get("seed", 0)),
        dedupe=bool(params.get("dedupe", False)),
        temperature_scaling=spec.temperature_scaling,
    )


def _orf_config(spec, r, params):
    return OrfConfig(
        F=r,
        mode=params.get("mode", "orthogonal_chi"),
        seed=int(params.get("seed", 0)),
        temperature_scaling=spec.temperature_scaling,
    )


def run_approximator(name: str, spec: KernelSpec, inst: AttentionInstance, r: int, params=None, *, instance_id: int = 0):
    """Run one approximator family at budget ``r``; returns ``(output, flags)``.

    For ``orf`` the budget is the feature count.
    """
    params = dict(params or {})
    validate_approximator(name, params, spec, inst.L, inst.d, inst.causal, r)
    if name == "optimal_v_oblivious":
        return optimal_v_oblivious(spec, inst, r, return_flags=True)
    if name == "optimal_v_aware":
        return optimal_v_aware(spec, inst, r, return_flags=True)
    if name == "sliding_window":
        return sliding_window_attention(spec, inst, r, return_flags=True)
    if name == "lsh":
        return lsh_attention(inst, _lsh_config(spec, r, params), instance_id=instance_id, return_flags=True)
    return orf_attention(inst, _orf_config(spec, r, params), instance_id=instance_id, return_flags=True)
