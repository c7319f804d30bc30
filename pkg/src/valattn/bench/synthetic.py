"""Seeded synthetic attention instances and their on-disk form."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..core import AttentionInstance, RngStream, ValidationError, gaussian_matrix, make_instance
from .tensorio import read_tensors, write_tensors

QK_MODES = ("gaussian", "clustered")
V_MODES = ("gaussian", "heavy_tailed")


@dataclass(frozen=True)
class SyntheticSpec:
    """Distribution of a synthetic instance.

    ``qk_mode="clustered"`` draws ``n_clusters`` standard-gaussian centers and
    places every query and key within ``intra_scale`` of a random one, which
    concentrates attention.  ``v_mode="heavy_tailed"`` gives value vectors
    random directions and Pareto(``pareto_shape``) norms.
    """

    L: int
    d: int
    qk_mode: str = "gaussian"
    qk_scale: float = 1.0
    n_clusters: int = 4
    intra_scale: float = 0.1
    v_mode: str = "gaussian"
    v_scale: float = 1.0
    pareto_shape: float = 1.5
    causal: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.L < 1 or self.d < 1:
            raise ValidationError("L and d must be >= 1")
        if self.qk_mode not in QK_MODES:
            raise ValidationError(f"qk_mode must be one of {QK_MODES}")
        if self.v_mode not in V_MODES:
            raise ValidationError(f"v_mode must be one of {V_MODES}")
        for name in ("qk_scale", "intra_scale", "v_scale", "pareto_shape"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        if self.n_clusters < 1:
            raise ValidationError("n_clusters must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)


def _qk(spec: SyntheticSpec, centers, stream: int) -> np.ndarray:
    rng = RngStream(spec.seed, stream)
    if spec.qk_mode == "gaussian":
        return spec.qk_scale * gaussian_matrix(rng, spec.L, spec.d)
    assign = rng.generator.integers(0, spec.n_clusters, size=spec.L)
    return centers[assign] + spec.intra_scale * gaussian_matrix(rng, spec.L, spec.d)


def _values(spec: SyntheticSpec) -> np.ndarray:
    rng = RngStream(spec.seed, 3)
    g = gaussian_matrix(rng, spec.L, spec.d)
    if spec.v_mode == "gaussian":
        return spec.v_scale * g
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    mags = 1.0 + rng.generator.pareto(spec.pareto_shape, size=(spec.L, 1))
    return spec.v_scale * mags * g / norms


def generate_synthetic(spec: SyntheticSpec, path=None) -> AttentionInstance:
    """Draw an instance; identical specs give identical instances."""
    centers = gaussian_matrix(RngStream(spec.seed, 0), spec.n_clusters, spec.d)
    inst = make_instance(_qk(spec, centers, 1), _qk(spec, centers, 2), _values(spec), spec.causal)
    if path is not None:
        save_instance(path, inst)
    return inst


def save_instance(path, inst: AttentionInstance) -> None:
    tensors = {"Q": inst.Q, "K": inst.K, "V": inst.V}
    if inst.causal:
        tensors["causal"] = np.ones(())
    write_tensors(path, tensors)


def load_instance(path) -> AttentionInstance:
    t = read_tensors(path)
    missing = {"Q", "K", "V"} - set(t)
    if missing:
        raise ValidationError(f"{path}: missing tensors {sorted(missing)}")
    causal = bool(t["causal"].item()) if "causal" in t else False
    return make_instance(t["Q"], t["K"], t["V"], causal)
