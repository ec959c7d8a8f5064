"""Command-line front end.

Subcommands::

    stochtopo run      --config run.toml [--output-dir DIR]
    stochtopo profile  --config run.toml --N 10 100 ... [--kinds hadamard rademacher]
    stochtopo ratios   --config run.toml [--means 0.1 0.3 ...] [--n-designs 100]
    stochtopo scenarios export --config run.toml --file loads.csv
    stochtopo scenarios import --file loads.csv

``STOCHTOPO_OUTPUT_DIR`` overrides the configured output directory; an
explicit ``--output-dir`` overrides both. On failure a JSON object with
``error`` and ``message`` keys is printed to stderr and the exit code is
nonzero (2 for configuration errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .config import PROBE_KINDS, ConfigError, RunConfig, load_config
from .continuation import ContinuationError
from .runner import DEFAULT_MEANS, accuracy_profile, ratio_histograms, run, setup
from .scenarios import export_scenarios, import_scenarios

__all__ = ["main", "build_parser"]

OUTPUT_ENV = "STOCHTOPO_OUTPUT_DIR"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochtopo",
                                 description="Stochastic-compliance topology optimization.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log optimizer progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, help="TOML run configuration (defaults if omitted)")
        p.add_argument("--output-dir", type=Path, help="override the output directory")

    p = sub.add_parser("run", help="optimize a design and write report and density field")
    with_config(p)

    p = sub.add_parser("profile", help="estimator accuracy against N at the full ground mesh")
    with_config(p)
    p.add_argument("--N", type=int, nargs="+", required=True, dest="N_list")
    p.add_argument("--kinds", nargs="+", choices=PROBE_KINDS, default=list(PROBE_KINDS))

    p = sub.add_parser("ratios", help="correcting-ratio samples at random designs")
    with_config(p)
    p.add_argument("--means", type=float, nargs="+", default=list(DEFAULT_MEANS))
    p.add_argument("--n-designs", type=int, default=100)
    p.add_argument("--sd", type=float, default=0.2)

    p = sub.add_parser("scenarios", help="export or inspect load scenario files")
    ss = p.add_subparsers(dest="action", required=True)
    e = ss.add_parser("export", help="sample scenarios from a config and write them to CSV")
    e.add_argument("--config", type=Path)
    e.add_argument("--file", type=Path, required=True)
    i = ss.add_parser("import", help="read a scenario CSV and print a summary")
    i.add_argument("--file", type=Path, required=True)
    return ap


def _config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    out = getattr(args, "output_dir", None) or os.environ.get(OUTPUT_ENV)
    if out:
        cfg = cfg.replace(output_dir=str(out))
    return cfg


def _dispatch(args: argparse.Namespace) -> dict:
    if args.command == "run":
        cfg = _config(args)
        report = run(cfg, cfg.output_dir)
        return {"output_dir": cfg.output_dir, "mu": report.exact["mu"],
                "sigma": report.exact["sigma"], "volume": report.volume,
                "solves": report.solves["total"], "converged": report.converged}
    if args.command == "profile":
        cfg = _config(args)
        path = Path(cfg.output_dir) / "profile.csv"
        rows = accuracy_profile(cfg, args.N_list, args.kinds, output=path)
        return {"output": str(path), "rows": len(rows)}
    if args.command == "ratios":
        cfg = _config(args)
        res = ratio_histograms(cfg, args.means, args.n_designs, sd=args.sd,
                               output_dir=cfg.output_dir)
        return {"output_dir": cfg.output_dir, "means": list(res)}
    if args.action == "export":
        cfg = load_config(args.config) if args.config else RunConfig()
        scen = setup(cfg).scenarios
        export_scenarios(scen, args.file)
        return {"file": str(args.file), "n_dofs": scen.n_dofs, "L": scen.L, "R": scen.R}
    scen = import_scenarios(args.file)
    return {"file": str(args.file), "n_dofs": scen.n_dofs, "L": scen.L, "R": scen.R,
            "seed": scen.seed, "n_loaded": scen.n_loaded}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = _dispatch(args)
    except ConfigError as exc:
        _fail(exc, 2)
        return 2
    except ContinuationError as exc:
        _fail(exc, 1, stage=exc.stage, p=exc.p, beta=exc.beta)
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        _fail(exc, 1)
        return 1
    print(json.dumps(result))
    return 0


def _fail(exc: Exception, code: int, **context) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, **context}
    print(json.dumps(payload), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
