"""Command-line front end.

Exit codes: 0 success, 1 validation or infeasibility, 2 usage error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

from . import __version__

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _common(sp):
    sp.add_argument("--out", default=".", help="output directory (default: current directory)")
    sp.add_argument("--seed", type=int, default=None, help="base seed (overrides SGDGENLAB_SEED and the config)")
    sp.add_argument("--threads", type=int, default=None, help="worker processes (overrides SGDGENLAB_THREADS)")
    sp.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sgdgenlab", description="Constant-stepsize ridge SGD/ASGD laboratory.")
    parser.add_argument("--version", action="version", version=f"sgdgenlab {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser(
        "run",
        help="run an experiment config",
        description="Run a JSON experiment config. Any config key can be set with a dotted flag, "
        "e.g. --sgd.eta 0.02 --model.sigma_sq 0.5 --p_grid '[10,20]'. Values are parsed as JSON "
        "when possible, otherwise taken as strings.",
    )
    run.add_argument("--config", help="JSON experiment config (defaults are used for missing keys)")
    _common(run)

    for name, helptext in (("figure1", "dimension sweep over four (w*, spectrum) panels"), ("figure2", "redundant-feature sweep")):
        fp = sub.add_parser(name, help=helptext)
        _common(fp)
        fp.add_argument("--replications", type=int, default=1000)
        fp.add_argument("--eta", type=float, default=0.01, help="stepsize (default 0.01)")
        fp.add_argument("--lam", type=float, default=0.01, help="ridge weight (default 0.01)")
        fp.add_argument("--sigma-sq", type=float, default=1.0, help="noise variance (default 1)")
        fp.add_argument("--n-steps", type=int, default=500)
        fp.add_argument("--p-grid", type=_int_list, default=list(range(100, 1001, 100)))
        if name == "figure1":
            fp.add_argument("--inflate-noise", action="store_true", help="add the omitted signal beyond p to the noise")
        else:
            fp.add_argument("--d", type=int, default=5, help="signal dimension (default 5)")

    sc = sub.add_parser("schedule", help="hyperparameters for a target accuracy")
    sc.add_argument("--family", choices=("ridgeless", "ridge", "spectrum"), required=True)
    sc.add_argument("--epsilon", type=float, required=True)
    sc.add_argument("--slack", type=float, default=0.99)
    sc.add_argument("--c0", type=float, help="ridgeless: bound on ||w*||^2 and ||w0 - w*||^2")
    sc.add_argument("--a-norm", type=float, help="ridgeless: ||A||")
    sc.add_argument("--r-sq", type=float, help="ridgeless: r^2")
    sc.add_argument("--c-r", type=float, help="ridgeless: c_r")
    sc.add_argument("--convex", action="store_true", help="ridgeless: unregularized branch for problems convex on D (delta = 0)")
    sc.add_argument("--alpha", type=float, default=0.5, help="ridgeless --convex: eta = O(eps^(1+alpha)) (default 0.5)")
    sc.add_argument("--p", type=int, default=20, help="ridge/spectrum: dimension")
    sc.add_argument("--spectrum", choices=("polynomial", "exponential", "constant"), default="polynomial")
    sc.add_argument("--decay", type=float, default=2.0, help="decay constant c of the spectrum")
    sc.add_argument("--w-star", choices=("uniform", "power", "constant"), default="uniform",
                    help="ridge: w* profile (uniform = unit-norm constant vector)")
    sc.add_argument("--sigma-sq", type=float, default=1.0, help="ridge: noise variance of the linear model")
    sc.add_argument("--w-as", type=float, default=1.0, help="spectrum: bound on ||w*||_{A,S}")
    sc.add_argument("--json", action="store_true", help="print the ledger as JSON only")

    sub.add_parser("check", help="run the oracle self-check suite")

    gc = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    gc.add_argument("--model", choices=("linear", "logistic", "tukey", "nn"), required=True)
    gc.add_argument("--p", type=int, default=5)
    gc.add_argument("--points", type=int, default=100)
    gc.add_argument("--seed", type=int, default=0)
    return parser


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _dotted_overrides(extra: list[str]) -> list[tuple[str, object]]:
    out = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"flag {tok} needs a value")
            val = extra[i + 1]
            i += 2
        out.append((key, _parse_value(val)))
    return out


def _progress(quiet: bool):
    if quiet:
        return None

    def report(panel, p, n):
        print(f"  {panel} p={p}: +{n} replications", file=sys.stderr)

    return report


def _cmd_run(args, extra) -> int:
    from .harness import ExperimentConfig, apply_override, emit_outputs, resolve_seed, resolve_workers, run_experiment
    from .harness.config import load_config

    doc = load_config(args.config).to_dict() if args.config else ExperimentConfig().to_dict()
    for key, val in _dotted_overrides(extra):
        apply_override(doc, key, val)
    doc["base_seed"] = resolve_seed(args.seed, doc.get("base_seed", 0))
    cfg = ExperimentConfig.from_dict(doc)
    workers = resolve_workers(args.threads)
    rows = run_experiment(cfg, workers, _progress(args.quiet))
    stem = os.path.splitext(os.path.basename(cfg.outputs.get("csv", "results.csv")))[0]
    paths = emit_outputs(
        {cfg.name: rows},
        args.out,
        stem,
        cfg.base_seed,
        {"config": cfg.to_dict(), "seed": cfg.base_seed},
        {cfg.name: cfg.title or cfg.name},
        bool(cfg.outputs.get("svg", True)),
    )
    for p in paths:
        print(p)
    return EXIT_OK


def _cmd_figure(args, which: str) -> int:
    from .harness import emit_outputs, figure1_configs, figure2_configs, resolve_seed, resolve_workers, run_panels

    seed = resolve_seed(args.seed, 0)
    kwargs = dict(
        eta=args.eta,
        sigma_sq=args.sigma_sq,
        lam=args.lam,
        n_steps=args.n_steps,
        p_grid=tuple(args.p_grid),
        replications=args.replications,
        base_seed=seed,
    )
    if which == "figure1":
        configs = figure1_configs(inflate_noise=args.inflate_noise, **kwargs)
    else:
        configs = figure2_configs(d=args.d, **kwargs)
    results = run_panels(configs, resolve_workers(args.threads), _progress(args.quiet))
    provenance = {"config": {k: c.to_dict() for k, c in configs.items()}, "seed": seed}
    paths = emit_outputs(results, args.out, which, seed, provenance, {k: c.title for k, c in configs.items()})
    for p in paths:
        print(p)
    return EXIT_OK


def _format_ledger(out, report) -> str:
    lines = [f"schedule ({out.rationale}, slack {out.slack:g})"]
    for k, v in out.ledger.items():
        lines.append(f"  {k:<22} {v:.6g}" if isinstance(v, float) else f"  {k:<22} {v}")
    lines.append("result")
    lines.append(f"  lambda = {out.lam:.6g}")
    lines.append(f"  eta    = {out.eta:.6g}")
    lines.append(f"  N      = {out.n_steps}")
    lines.append(f"  delta  = {out.delta_max:.6g}")
    lines.append(report.format())
    lines.append("key-value")
    for k, v in out.to_dict().items():
        lines.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
    for c in report.checks:
        lines.append(f"constraint[{c.name}]={'pass' if c.passed else 'fail'} margin={c.margin!r}")
    return "\n".join(lines)


def _cmd_schedule(args) -> int:
    import numpy as np

    from .models import LinearModel, VarianceCertificate
    from .schedules import (
        check_constraints,
        model_stats,
        ridge_schedule,
        ridgeless_convex_schedule,
        ridgeless_schedule,
        spectrum_schedule,
    )
    from .spectra import make_spectrum

    if args.family == "ridgeless":
        missing = [f for f in ("c0", "a_norm", "r_sq", "c_r") if getattr(args, f) is None]
        if missing:
            raise UsageError("ridgeless schedule needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
        if args.convex:
            out = ridgeless_convex_schedule(args.epsilon, args.c0, args.a_norm, args.r_sq, args.c_r, args.alpha, args.slack)
        else:
            out = ridgeless_schedule(args.epsilon, args.c0, args.a_norm, args.r_sq, args.c_r, args.slack)
        cert = VarianceCertificate(args.r_sq, args.c_r)
        a_norm = args.a_norm
    else:
        kw = {"c": args.decay} if args.spectrum != "constant" else {"v": 1.0}
        spec = make_spectrum(args.spectrum, args.p, **kw)
        if args.family == "ridge":
            j = np.arange(1, args.p + 1, dtype=float)
            w = {"uniform": np.ones(args.p) / math.sqrt(args.p), "power": 1.0 / j, "constant": np.ones(args.p)}[args.w_star]
            model = LinearModel(spec.covariance(), w, args.sigma_sq)
            cert = model.variance_certificate()
            stats = model_stats(model.covariance, w, cert.r_sq, cert.c_r)
            out = ridge_schedule(args.epsilon, stats, args.slack)
        else:
            if args.spectrum == "constant":
                raise UsageError("spectrum schedule needs --spectrum polynomial or exponential")
            out = spectrum_schedule(args.epsilon, args.spectrum, args.decay, args.w_as, p=args.p, slack=args.slack)
            cert = VarianceCertificate(spec.trace(), 0.0)
        a_norm = float(spec.values[0])
    report = check_constraints(out, cert, a_norm, out.delta_max, out.theorem)
    if args.json:
        doc = out.to_dict()
        doc["constraints"] = {c.name: {"passed": c.passed, "margin": c.margin} for c in report.checks}
        print(json.dumps(doc, indent=2, sort_keys=True, default=str))
    else:
        print(_format_ledger(out, report))
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _cmd_check() -> int:
    from .checks import run_checks

    results = run_checks()
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_VALIDATION


def _cmd_gradcheck(args) -> int:
    from .checks import gradient_check

    res = gradient_check(args.model, p=args.p, n_points=args.points, seed=args.seed)
    print(f"{'PASS' if res.passed else 'FAIL'}  {res.name}: {res.detail}")
    return EXIT_OK if res.passed else EXIT_VALIDATION


def main(argv: list[str] | None = None) -> int:
    from .harness.config import ConfigError
    from .harness.output import OutputError

    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        args, extra = parser.parse_known_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        if extra and args.command != "run":
            raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
        if args.command == "run":
            return _cmd_run(args, extra)
        if args.command in ("figure1", "figure2"):
            return _cmd_figure(args, args.command)
        if args.command == "schedule":
            return _cmd_schedule(args)
        if args.command == "check":
            return _cmd_check()
        return _cmd_gradcheck(args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except (OutputError, FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
