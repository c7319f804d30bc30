"""scikit-learn compatible wrappers around the attention routines.

An estimator is fitted on keys ``X`` and values ``y`` (both ``L x d``);
``transform(Q)`` then returns the approximate attention output for the
``L`` queries in ``Q`` (query ``t`` sits at position ``t``, which matters
for causal masking and the sliding window).  ``score(Q)`` is the negative
mean squared error against exact attention, so estimators plug into
``GridSearchCV``-style tooling over ``r`` and friends.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .approximators import LshConfig, OrfConfig, lsh_attention, orf_attention, sliding_window_attention
from .core import KernelSpec, make_instance
from .engine import exact_attention
from .metrics import compare
from .oracles import optimal_v_aware, optimal_v_oblivious


class _AttentionBase(TransformerMixin, BaseEstimator):
    def _kernel(self) -> KernelSpec:
        return KernelSpec(self.kernel, self.degree, self.temperature_scaling)

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = check_array(y, dtype=np.float64)
        if X.shape != y.shape:
            raise ValueError(f"keys {X.shape} and values {y.shape} must have the same shape")
        self._kernel()
        self.keys_ = X
        self.values_ = y
        self.n_features_in_ = X.shape[1]
        return self

    def _instance(self, Q):
        check_is_fitted(self, "keys_")
        Q = check_array(Q, dtype=np.float64)
        if Q.shape != self.keys_.shape:
            raise ValueError(f"expected {self.keys_.shape[0]} queries of dimension {self.keys_.shape[1]}, got {Q.shape}")
        return make_instance(Q, self.keys_, self.values_, self.causal)

    def _approximate(self, inst):
        raise NotImplementedError

    def transform(self, X):
        inst = self._instance(X)
        out, flags = self._approximate(inst)
        self.flags_ = np.asarray(flags, dtype=np.intp)
        return out

    def score(self, X, y=None):
        inst = self._instance(X)
        exact = exact_attention(self._kernel(), inst)
        return -compare(exact, self._approximate(inst)[0]).mean_sq_error


class ExactAttention(_AttentionBase):
    def __init__(self, kernel="exponential", degree=None, temperature_scaling=False, causal=False):
        self.kernel = kernel
        self.degree = degree
        self.temperature_scaling = temperature_scaling
        self.causal = causal

    def _approximate(self, inst):
        return exact_attention(self._kernel(), inst, return_flags=True)


class TopRAttention(_AttentionBase):
    """Value-oblivious oracle: attend to each query's ``r`` heaviest keys."""

    def __init__(self, r=1, kernel="exponential", degree=None, temperature_scaling=False, causal=False):
        self.r = r
        self.kernel = kernel
        self.degree = degree
        self.temperature_scaling = temperature_scaling
        self.causal = causal

    def _approximate(self, inst):
        return optimal_v_oblivious(self._kernel(), inst, self.r, return_flags=True)


class ValueAwareAttention(_AttentionBase):
    """Value-aware oracle: best combination of at most ``r`` value vectors."""

    def __init__(self, r=1, kernel="exponential", degree=None, temperature_scaling=False, causal=False):
        self.r = r
        self.kernel = kernel
        self.degree = degree
        self.temperature_scaling = temperature_scaling
        self.causal = causal

    def _approximate(self, inst):
        return optimal_v_aware(self._kernel(), inst, self.r, return_flags=True)


class SlidingWindowAttention(_AttentionBase):
    def __init__(self, r=2, kernel="exponential", degree=None, temperature_scaling=False, causal=False):
        self.r = r
        self.kernel = kernel
        self.degree = degree
        self.temperature_scaling = temperature_scaling
        self.causal = causal

    def _approximate(self, inst):
        return sliding_window_attention(self._kernel(), inst, self.r, return_flags=True)


class LSHAttention(_AttentionBase):
    def __init__(self, r=2, rounds=1, buckets=None, seed=0, dedupe=False, temperature_scaling=False, causal=False):
        self.r = r
        self.rounds = rounds
        self.buckets = buckets
        self.seed = seed
        self.dedupe = dedupe
        self.temperature_scaling = temperature_scaling
        self.causal = causal

    def _kernel(self):
        return KernelSpec("exponential", temperature_scaling=self.temperature_scaling)

    def _approximate(self, inst):
        cfg = LshConfig(self.r, self.rounds, self.buckets, self.seed, self.dedupe, self.temperature_scaling)
        return lsh_attention(inst, cfg, return_flags=True)


class ORFAttention(_AttentionBase):
    """Random-feature attention (non-causal)."""

    def __init__(self, n_features=64, mode="orthogonal_chi", seed=0, temperature_scaling=True):
        self.n_features = n_features
        self.mode = mode
        self.seed = seed
        self.temperature_scaling = temperature_scaling

    causal = False

    def _kernel(self):
        return KernelSpec("exponential", temperature_scaling=self.temperature_scaling)

    def _approximate(self, inst):
        cfg = OrfConfig(self.n_features, self.mode, self.seed, self.temperature_scaling)
        return orf_attention(inst, cfg, return_flags=True)
