"""Command line entry point: ``valattn {gen,run,sweep,inspect}``."""
from __future__ import annotations

import argparse
import logging
import sys

from ..core import ValidationError
from .harness import ConfigError, RunConfig, RunError, run
from .synthetic import QK_MODES, V_MODES, SyntheticSpec, generate_synthetic
from .tensorio import FormatError, read_tensors


def _r_list(text: str):
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty r list")
    return values


def _positive_int(text: str):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="valattn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic instance file")
    gen.add_argument("--L", type=int, required=True)
    gen.add_argument("--d", type=int, required=True)
    gen.add_argument("--mode", choices=QK_MODES, default="gaussian")
    gen.add_argument("--scale", type=float, default=1.0)
    gen.add_argument("--n-clusters", type=int, default=4)
    gen.add_argument("--intra-scale", type=float, default=0.1)
    gen.add_argument("--v-mode", choices=V_MODES, default="gaussian")
    gen.add_argument("--v-scale", type=float, default=1.0)
    gen.add_argument("--pareto-shape", type=float, default=1.5)
    gen.add_argument("--causal", action="store_true")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    for name, helptext in (("run", "run a config"), ("sweep", "run a config over an r list")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        if name == "sweep":
            p.add_argument("--r-list", type=_r_list, required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--threads", type=_positive_int, default=1)

    ins = sub.add_parser("inspect", help="summarize a tensor file")
    ins.add_argument("path")
    return parser


def _inspect(path) -> None:
    for name, t in read_tensors(path).items():
        shape = "x".join(str(s) for s in t.shape) or "scalar"
        if t.size:
            stats = f"mean={t.mean():.6g} std={t.std():.6g} min={t.min():.6g} max={t.max():.6g}"
        else:
            stats = "empty"
        print(f"{name}: {shape} float32 {stats}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    try:
        if args.command == "gen":
            spec = SyntheticSpec(
                L=args.L,
                d=args.d,
                qk_mode=args.mode,
                qk_scale=args.scale,
                n_clusters=args.n_clusters,
                intra_scale=args.intra_scale,
                v_mode=args.v_mode,
                v_scale=args.v_scale,
                pareto_shape=args.pareto_shape,
                causal=args.causal,
                seed=args.seed,
            )
            generate_synthetic(spec, path=args.out)
            return 0
        if args.command == "inspect":
            _inspect(args.path)
            return 0

        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "sweep":
            cfg.r = list(args.r_list)
        csv_path, json_path = run(cfg, out_dir=args.out_dir, threads=args.threads)
        print(csv_path)
        print(json_path)
        return 0
    except FileNotFoundError as exc:
        print(f"valattn: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (ConfigError, ValidationError, FormatError) as exc:
        print(f"valattn: {exc}", file=sys.stderr)
        return 2
    except RunError as exc:
        print(f"valattn: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
