"""Command line entry point ``homogen``.

Exit codes: 0 on success, 1 on a configuration or solver error, 2 when
``verify`` finds a violated invariant.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .coefficients import CoefficientError
from .fields import GridError
from .harness import StudyConfig, order_summary, run_cell, run_study
from .krylov import ConvergenceError
from .report import ConfigError

log = logging.getLogger("homogen")

STUDY_COMMANDS = {"torus-study": "torus", "domain-study": "domain", "maxwell-study": "maxwell"}
# the cube ladder must stay below eps1 of the default boundary strip
DEFAULT_LADDERS = {"domain": (1 / 8, 1 / 12, 1 / 16)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homogen", description="Periodic homogenization studies.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, plot=True):
        p.add_argument("--config", metavar="PATH", help="YAML study configuration")
        p.add_argument("--out", metavar="DIR", help="directory for the written artifacts")
        p.add_argument("--seed", type=int, metavar="N", help="override the source seed")
        if plot:
            p.add_argument("--plot", action="store_true", help="also write a log-log SVG plot")

    common(sub.add_parser("cell", help="solve the cell problems and print the effective tensors"), plot=False)
    for name, study in STUDY_COMMANDS.items():
        common(sub.add_parser(name, help=f"run the {study} convergence study"))
    v = sub.add_parser("verify", help="run the fast invariant suite")
    v.add_argument("--out", metavar="DIR", help="write verify.json into DIR")
    return parser


def _load_config(args, study: str) -> StudyConfig:
    if args.config:
        config = StudyConfig.from_yaml(args.config)
        if config.study != study and study != "cell":
            config = replace(config, study=study)
    else:
        study = "torus" if study == "cell" else study
        config = StudyConfig(study=study, eps_ladder=DEFAULT_LADDERS.get(study, StudyConfig.eps_ladder))
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _verify(args) -> int:
    from .checks import run_checks

    results = run_checks()
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        doc = [{"name": r.name, "passed": r.passed, "value": r.value, "bound": r.bound} for r in results]
        (out / "verify.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 2 if failed else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "verify":
            return _verify(args)
        if args.command == "cell":
            config = _load_config(args, "cell")
            cell = run_cell(config, args.out)
            print(json.dumps({"config_hash": config.config_hash, **cell.summary(), "g0": cell.g0.tolist()},
                             indent=2))
            return 0
        config = _load_config(args, STUDY_COMMANDS[args.command])
        log.info("running %s study %s", config.name, config.config_hash)
        report = run_study(config, args.out, plot=args.plot)
        print(json.dumps({"study": config.name, "config_hash": config.config_hash,
                          "eps": report.eps, "orders": order_summary(report),
                          "degenerate": report.degenerate}, indent=2))
        return 0
    except (ConfigError, CoefficientError, GridError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
