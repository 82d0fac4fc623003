"""Command line: ``lexbandit run|bounds|verify --config PATH [...]``.

Exit status is 0 on success, 1 when ``verify`` finds a violation and 2 for
configuration or I/O errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import harness
from .core import DimensionError
from .environment import ConfigError

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lexbandit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="YAML experiment file")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="master seed, unsigned 64-bit")
    common.add_argument("--trials", type=int, help="trials per policy and instance")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub.add_parser("run", parents=[common], help="simulate and write traces, summary and CSV")
    b = sub.add_parser("bounds", parents=[common], help="evaluate the theoretical bounds")
    b.add_argument("--traces", type=Path, help="run directory to compare against (default: --out)")
    v = sub.add_parser("verify", parents=[common], help="run the invariant battery")
    v.add_argument("--traces", type=Path, help="audit an existing run directory instead of simulating")
    return p


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.out is not None:
        changes["output"] = str(args.out)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


def cmd_run(args, cfg, base) -> int:
    result = harness.run_experiment(cfg, base=base, progress=lambda m: _say(args, m))
    summary = harness.write_outputs(result, Path(cfg.output))
    for label, inst in summary["instances"].items():
        for key, ps in inst["policies"].items():
            st = ps["meanStoppingTime"]
            _say(args, f"{label} {key}: successes {ps['successes']}/{ps['trials']}"
                       f", mean stop {'-' if st is None else f'{st:.0f}'}"
                       f", final mean regret {[round(x, 2) for x in ps['meanRegret'][-1]]}")
    _say(args, f"wrote {cfg.output}")
    return EXIT_OK


def cmd_bounds(args, cfg, base) -> int:
    root = args.traces or Path(cfg.output)
    report = harness.bounds_report(cfg, root if root.exists() else None, base)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bounds.json").write_text(json.dumps(report, indent=2) + "\n")
    for label, entry in report["instances"].items():
        b = entry["bounds"]
        _say(args, f"{label}: lambda={b['lambda']:g}")
        for i in range(b["m"]):
            _say(args, f"  objective {i}: Out regret {b['regretBoundOut'][i]:.4g} samples "
                       f"{b['sampleBoundOut'][i]:.4g} | In regret {b['regretBoundIn'][i]:.4g} "
                       f"samples {b['sampleBoundIn'][i]:.4g}")
        if "comparison" not in entry:
            _say(args, "  no traces found; bounds only")
    _say(args, f"wrote {out / 'bounds.json'}")
    return EXIT_OK


def cmd_verify(args, cfg, base) -> int:
    if args.traces is not None:
        result = harness.load_result(cfg, args.traces, base)
        if result is None:
            print(f"no traces found under {args.traces}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        result = harness.run_experiment(cfg, base=base, progress=lambda m: _say(args, m))
    report = harness.verify_result(result)
    for c in report["checks"]:
        if not c["passed"] or not args.quiet:
            print(f"{'PASS' if c['passed'] else 'FAIL'} {c['check']}: {json.dumps(c['detail'])}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "verify.json").write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK if report["passed"] else EXIT_VIOLATION


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
        base = args.config.resolve().parent
        cmd = {"run": cmd_run, "bounds": cmd_bounds, "verify": cmd_verify}[args.command]
        return cmd(args, cfg, base)
    except (ConfigError, DimensionError, ValueError) as exc:
        print(f"lexbandit: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"lexbandit: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
