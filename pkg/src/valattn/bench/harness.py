"""Run configurations and report emission.

A run config is a JSON object::

    {
      "instance": {"path": "inst.vat"} | {"synthetic": {<SyntheticSpec fields>}},
      "kernel": {"family": "exponential", "degree": null, "temperature_scaling": false},
      "approximators": [{"name": "optimal_v_oblivious"}, {"name": "lsh", "rounds": 4}],
      "r": [1, 2, 4, 8],
      "seed": 0,
      "out_dir": "out"
    }

``seed`` feeds the randomized approximators (lsh, orf) unless they carry
their own ``seed`` parameter.  Each run writes ``results.csv`` and
``results.json`` into ``out_dir``.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from ..approximators import run_approximator, validate_approximator
from ..core import AttentionInstance, KernelSpec, ValidationError
from ..kernels import attention_matrix
from ..metrics import build_report
from .synthetic import SyntheticSpec, generate_synthetic, load_instance

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "approximator",
    "kernel",
    "r",
    "mean_sq_error",
    "mean_relative_error",
    "skew_entropy_mean",
    "skew_max_mean",
    "n_flags",
)


class ConfigError(ValueError):
    """The run configuration is malformed or fails validation."""


class RunError(RuntimeError):
    """An approximator failed while computing."""


@dataclass
class RunConfig:
    instance: dict
    kernel: KernelSpec
    approximators: list
    r: list
    seed: int = 0
    out_dir: str = "out"

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - {"instance", "kernel", "approximators", "r", "seed", "out_dir"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        inst = raw.get("instance")
        if not isinstance(inst, dict) or len(inst) != 1 or not ({"path", "synthetic"} & set(inst)):
            raise ConfigError('instance must be {"path": ...} or {"synthetic": {...}}')
        inst = copy.deepcopy(inst)
        try:
            if "path" in inst:
                p = Path(inst["path"])
                if not p.is_absolute() and base_dir is not None:
                    p = Path(base_dir) / p
                inst["path"] = str(p.resolve())
            else:
                inst["synthetic"] = SyntheticSpec.from_dict(inst["synthetic"]).to_dict()
            kernel = KernelSpec.from_dict(raw.get("kernel", {}))
        except (TypeError, ValidationError) as exc:
            raise ConfigError(str(exc)) from exc
        approximators = raw.get("approximators")
        if not isinstance(approximators, list) or not approximators:
            raise ConfigError("approximators must be a nonempty list")
        for a in approximators:
            if not isinstance(a, dict) or "name" not in a:
                raise ConfigError(f"approximator entry {a!r} needs a name")
        r = raw.get("r")
        if not isinstance(r, list) or not r or not all(isinstance(x, int) and not isinstance(x, bool) for x in r):
            raise ConfigError("r must be a nonempty list of integers")
        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        return cls(inst, kernel, copy.deepcopy(approximators), list(r), seed, str(raw.get("out_dir", "out")))

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw, base_dir=path.parent)

    def to_dict(self) -> dict:
        return {
            "instance": copy.deepcopy(self.instance),
            "kernel": self.kernel.to_dict(),
            "approximators": copy.deepcopy(self.approximators),
            "r": list(self.r),
            "seed": self.seed,
            "out_dir": self.out_dir,
        }


def load_config_instance(cfg: RunConfig) -> AttentionInstance:
    if "path" in cfg.instance:
        return load_instance(cfg.instance["path"])
    return generate_synthetic(SyntheticSpec.from_dict(cfg.instance["synthetic"]))


def kernel_label(spec: KernelSpec) -> str:
    label = spec.family
    if spec.family == "polynomial":
        label += f"-{spec.degree}"
    if spec.temperature_scaling:
        label += "-scaled"
    return label


def _cells(cfg: RunConfig):
    for a in cfg.approximators:
        params = {k: v for k, v in a.items() if k != "name"}
        if a["name"] in ("lsh", "orf"):
            params.setdefault("seed", cfg.seed)
        for r in cfg.r:
            yield a["name"], params, r


def validate(cfg: RunConfig, inst: AttentionInstance) -> None:
    for name, params, r in _cells(cfg):
        try:
            validate_approximator(name, params, cfg.kernel, inst.L, inst.d, inst.causal, r)
        except ValidationError as exc:
            raise ConfigError(f"({name}, r={r}): {exc}") from exc


def run(cfg: RunConfig, out_dir=None, threads: int = 1):
    """Execute every (approximator, r) cell and write the CSV and JSON reports.

    Returns the paths written.  Output is independent of ``threads``.
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    inst = load_config_instance(cfg)
    validate(cfg, inst)
    spec = cfg.kernel
    mask = inst.allowed_mask() if inst.causal else None
    alpha, _ = attention_matrix(spec, inst.Q, inst.K, mask)
    exact = alpha @ inst.V
    cells = list(_cells(cfg))

    def work(cell):
        name, params, r = cell
        log.info("running %s r=%d", name, r)
        try:
            out, flags = run_approximator(name, spec, inst, r, params)
        except Exception as exc:
            raise RunError(f"({name}, r={r}) failed: {exc}") from exc
        echo = {"kernel": spec.to_dict(), "approximator": name, "params": params, "r": r}
        return build_report(spec, inst, out, flags, echo, exact=exact, alpha=alpha)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(work, cells))
    else:
        reports = [work(c) for c in cells]

    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"
    json_path = out_dir / "results.json"
    csv_path.write_text(render_csv(cells, reports, spec))
    payload = {
        "config": cfg.to_dict(),
        "instance": {"L": inst.L, "d": inst.d, "causal": inst.causal},
        "results": [rep.to_dict() for rep in reports],
    }
    json_path.write_text(json.dumps(payload, indent=2) + "\n")
    return csv_path, json_path


def render_csv(cells, reports, spec: KernelSpec) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for (name, _, r), rep in zip(cells, reports):
        w.writerow(
            [
                name,
                kernel_label(spec),
                r,
                repr(rep.mean_sq_error),
                repr(rep.mean_relative_error),
                repr(rep.skew_entropy_mean),
                repr(rep.skew_max_mean),
                len(rep.flags),
            ]
        )
    return buf.getvalue()
