"""Command-line interface: ``embalance <verb> [options]``."""

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .bench import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    ExperimentConfig,
    _Workspace,
    _write_gramian,
    compare_all,
    pipeline_gramians,
    run_pipeline,
)
from .exceptions import ConfigError, EmbalanceError
from .io import parse_toml

__all__ = ["main", "build_parser"]

logger = logging.getLogger("embalance")


def _common(p):
    p.add_argument("--config", type=Path, help="TOML experiment file (default: shipped rc-ladder benchmark)")
    p.add_argument("--order", type=int, help="reduced order k")
    p.add_argument("--horizon", type=float, help="simulation horizon for the output comparison")
    p.add_argument("--nodes", type=int, help="forward quadrature node count")
    p.add_argument("--method", help="pipeline name, e.g. nonlinear-gramians or linear-part")
    p.add_argument("--out", help="output directory")
    p.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key (TOML value syntax)"
    )
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="embalance", description="Balanced truncation with empirical gramians.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, text in [
        ("simulate", "simulate the full model (method full-nonlinear or bilinear-full)"),
        ("gramian", "compute and write the gramian pair of a pipeline"),
        ("reduce", "run one reduction pipeline end to end"),
        ("compare", "run every compared pipeline and write the comparison table"),
    ]:
        _common(sub.add_parser(verb, help=text))
    bench = sub.add_parser("bench", help="run a shipped benchmark")
    bench.add_argument("benchmark", choices=["rc-ladder"])
    _common(bench)
    return parser


def _parse_value(text):
    try:
        return parse_toml(f"v = {text}")["v"]
    except ConfigError:
        # bare words are strings
        return text


def load_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.default()
    flat = cfg.to_flat()
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        flat[key.strip()] = _parse_value(value.strip())
    for key, value in [
        ("order", args.order),
        ("horizon", args.horizon),
        ("quadrature.nodes", args.nodes),
        ("pipeline", args.method),
        ("out", args.out),
    ]:
        if value is not None:
            flat[key] = value
    return ExperimentConfig.from_flat(flat)


def _print_result(r):
    for key, rep in r.reports.items():
        print(f"{r.pipeline}: rms vs {rep.reference} = {rep.rms:.6e} ({key})")
    if r.hankel is not None:
        print(f"{r.pipeline}: hankel = " + " ".join(f"{v:.6e}" for v in r.hankel))
    if r.stability is not None:
        print(f"{r.pipeline}: {r.stability}")
    if not r.ok:
        print(f"{r.pipeline}: FAILED at {r.stage}: {r.error}", file=sys.stderr)


def _gramian(cfg):
    ws = _Workspace(cfg)
    est, model, (P, Q) = pipeline_gramians(ws, cfg.pipeline)
    out = Path(cfg.out) / cfg.pipeline
    out.mkdir(parents=True, exist_ok=True)
    _write_gramian(P, out / "P")
    _write_gramian(Q, out / "Q")
    print(f"{cfg.pipeline}: wrote {out / 'P.csv'} and {out / 'Q.csv'}")
    return EXIT_OK


def run(args):
    cfg = load_config(args)
    if args.verb == "simulate":
        if cfg.pipeline not in ("full-nonlinear", "bilinear-full"):
            cfg = cfg.replace(pipeline="full-nonlinear")
        result = run_pipeline(cfg)
        _print_result(result)
        return result.exit_code
    if args.verb == "gramian":
        return _gramian(cfg)
    if args.verb == "reduce":
        result = run_pipeline(cfg)
        _print_result(result)
        return result.exit_code
    results, code = compare_all(cfg)
    for r in results.values():
        _print_result(r)
    print(f"wrote {Path(cfg.out) / 'comparison.csv'} and {Path(cfg.out) / 'rms.csv'}")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmbalanceError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
