"""Domain types shared by every other module.

Everything is float64 internally.  Indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FAMILIES = ("exponential", "polynomial", "elu")


class ValidationError(ValueError):
    """Raised when an input violates a type invariant."""


class ShapeError(ValidationError):
    pass


class NonFiniteError(ValidationError):
    pass


class SolverError(RuntimeError):
    """A numerical routine failed to converge or lost precision."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AttentionInstance:
    """One sequence worth of queries, keys and values (each ``L x d``)."""

    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    causal: bool = False

    @property
    def L(self) -> int:
        return self.Q.shape[0]

    @property
    def d(self) -> int:
        return self.Q.shape[1]

    def allowed(self, t: int) -> np.ndarray:
        """Key indices query ``t`` may attend to."""
        return np.arange(t + 1 if self.causal else self.L)

    def allowed_mask(self) -> np.ndarray:
        if self.causal:
            return np.tri(self.L, dtype=bool)
        return np.ones((self.L, self.L), dtype=bool)


def make_instance(Q, K, V, causal: bool = False) -> AttentionInstance:
    """Validate and freeze ``Q, K, V`` into an :class:`AttentionInstance`."""
    arrays = {}
    for name, x in (("Q", Q), ("K", K), ("V", V)):
        a = np.asarray(x, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeError(f"{name} must be a 2-d matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"{name} contains non-finite entries")
        arrays[name] = a
    shape = arrays["Q"].shape
    if shape[0] < 1 or shape[1] < 1:
        raise ShapeError(f"Q must have L >= 1 and d >= 1, got shape {shape}")
    for name in ("K", "V"):
        if arrays[name].shape != shape:
            raise ShapeError(
                f"{name} has shape {arrays[name].shape}, expected {shape} to match Q"
            )
    return AttentionInstance(
        _frozen(arrays["Q"]), _frozen(arrays["K"]), _frozen(arrays["V"]), bool(causal)
    )


@dataclass(frozen=True)
class KernelSpec:
    """Similarity kernel choice.

    ``degree`` is required for (and only for) the polynomial family and must
    be even so that scores stay nonnegative.  ``temperature_scaling`` divides
    queries and keys by ``d ** 0.25`` and is only meaningful for the
    exponential family.
    """

    family: str = "exponential"
    degree: int | None = None
    temperature_scaling: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "polynomial":
            if self.degree is None or isinstance(self.degree, bool) or int(self.degree) != self.degree:
                raise ValidationError("polynomial kernel requires an integer degree")
            if self.degree < 0:
                raise ValidationError("polynomial degree must be >= 0")
            if self.degree % 2:
                raise ValidationError(
                    f"odd polynomial degree {self.degree} can yield negative scores"
                )
            object.__setattr__(self, "degree", int(self.degree))
        elif self.degree is not None:
            raise ValidationError(f"degree is only valid for the polynomial family, not {self.family}")
        if self.temperature_scaling and self.family != "exponential":
            raise ValidationError("temperature_scaling applies to the exponential family only")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "degree": self.degree,
            "temperature_scaling": self.temperature_scaling,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(
            family=d.get("family", "exponential"),
            degree=d.get("degree"),
            temperature_scaling=bool(d.get("temperature_scaling", False)),
        )


@dataclass(frozen=True, eq=False)
class Distribution:
    """Attention weights over ``L`` keys.

    ``degenerate`` marks a uniform fallback taken because every kernel score
    was numerically zero.
    """

    weights: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size == 0:
            raise ValidationError("weights must be a nonempty vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValidationError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-6:
            raise ValidationError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size


@dataclass(frozen=True, eq=False)
class SelectionPlan:
    """Per-query sorted index sets of attended keys."""

    sets: tuple

    def __len__(self):
        return len(self.sets)

    def __getitem__(self, t) -> np.ndarray:
        return self.sets[t]

    def to_mask(self, L: int) -> np.ndarray:
        mask = np.zeros((len(self.sets), L), dtype=bool)
        for t, s in enumerate(self.sets):
            mask[t, s] = True
        return mask


def make_plan(sets: Iterable[Iterable[int]], L: int, causal: bool = False) -> SelectionPlan:
    """Build a :class:`SelectionPlan`, sorting each set and checking invariants."""
    out = []
    for t, s in enumerate(sets):
        a = np.asarray(sorted(int(i) for i in s), dtype=np.intp)
        if a.size == 0:
            raise ValidationError(f"selection for query {t} is empty")
        if np.any(np.diff(a) == 0):
            raise ValidationError(f"selection for query {t} has duplicate indices")
        if a[0] < 0 or a[-1] >= L:
            raise ValidationError(f"selection for query {t} has indices outside [0, {L})")
        if causal and a[-1] > t:
            raise ValidationError(f"selection for query {t} attends to future key {a[-1]}")
        a.setflags(write=False)
        out.append(a)
    if len(out) != L:
        raise ValidationError(f"plan has {len(out)} query sets, expected {L}")
    return SelectionPlan(tuple(out))


@dataclass(frozen=True, eq=False)
class SimplexCombination:
    """Convex combination ``sum(beta[i] * V[support[i]])``."""

    support: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=np.intp).copy()
        b = _frozen(self.beta)
        if s.ndim != 1 or b.ndim != 1 or s.size != b.size:
            raise ValidationError("support and beta must be vectors of equal length")
        if s.size == 0:
            raise ValidationError("empty combination")
        if np.any(b < 0):
            raise ValidationError("beta must be nonnegative")
        if abs(b.sum() - 1.0) > 1e-8:
            raise ValidationError(f"beta sums to {b.sum()!r}, not 1")
        s.setflags(write=False)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "beta", b)

    def point(self, V) -> np.ndarray:
        V = np.asarray(V, dtype=np.float64)
        return self.beta @ V[self.support]


@dataclass
class RngStream:
    """Reproducible gaussian source keyed by ``(seed, stream)``.

    Streams with different ids are independent, and the draws of one stream
    do not depend on how calls to other streams are interleaved.
    ``stream`` may be an int or a tuple of ints for hierarchical keys such as
    ``(instance_id, round)``.
    """

    seed: int
    stream: int | Sequence[int] = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        key = (self.stream,) if np.isscalar(self.stream) else tuple(self.stream)
        if self.seed < 0 or any(k < 0 for k in key):
            raise ValidationError("seed and stream ids must be nonnegative")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=tuple(int(k) for k in key))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


def gaussian_matrix(rng: RngStream, rows: int, cols: int) -> np.ndarray:
    """Draw a ``rows x cols`` matrix of i.i.d. standard normals from ``rng``."""
    if rows < 1 or cols < 1:
        raise ValidationError("rows and cols must be >= 1")
    return rng.generator.standard_normal((rows, cols))
