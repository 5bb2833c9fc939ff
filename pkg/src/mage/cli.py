"""Command line entry point ``mage``.

    mage solve|envelope|stability|cf-stability|hoelder|envelope-hoelder|audit
         --config FILE --out DIR [--deterministic] [--threads N]

The exit code is 0 iff every verdict of the run passes; configuration and
output-directory errors exit with 2.
"""
import argparse
import json
import logging
import os
import sys

from . import _fourier
from .config import load_config
from .errors import ConfigInvalid, MageError, OutputDirUnwritable, SweepFailed
from .harness import emit_report, envelope_run, run_experiment, solve_run
from .spectral import save_field

COMMANDS = {
    "solve": "solve",
    "envelope": "envelope",
    "stability": "stability",
    "cf-stability": "cf_stability",
    "hoelder": "hoelder",
    "envelope-hoelder": "envelope_hoelder",
    "audit": "audit_suite",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mage", description="Complex Monge-Ampere solvers and stability experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment TOML file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--deterministic", action="store_true",
                       help="single-threaded FFTs (byte-identical rows.csv)")
        p.add_argument("--threads", type=int, default=None, help="FFT worker threads")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _single(command, cfg, args):
    """``solve`` / ``envelope``: field file plus JSON sidecar plus report files."""
    runner = solve_run if command == "solve" else envelope_run
    report, field, side = runner(cfg)
    paths = emit_report(report, args.out)
    stem = "solution" if command == "solve" else "envelope"
    save_field(os.path.join(args.out, stem + ".mage"), field)
    with open(os.path.join(args.out, stem + ".json"), "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return report, paths


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    experiment = COMMANDS[args.command]
    try:
        cfg = load_config(args.config, experiment=experiment)
        if args.deterministic:
            _fourier.set_workers(1)
        elif args.threads:
            _fourier.set_workers(args.threads)
        if args.command in ("solve", "envelope"):
            report, _ = _single(args.command, cfg, args)
        else:
            report = run_experiment(cfg, args.out, args.deterministic, args.threads)
    except ConfigInvalid as exc:
        print(f"config_invalid: {exc.field}: {exc}", file=sys.stderr)
        return 2
    except OutputDirUnwritable as exc:
        print(f"output_dir_unwritable: {exc}", file=sys.stderr)
        return 2
    except SweepFailed as exc:
        print(f"sweep_failed: {exc}", file=sys.stderr)
        return 1
    except (MageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for v in report.verdicts:
        mark = "PASS" if v["passed"] else "FAIL"
        print(f"{mark}  {v['name']}: {v['value']} {v['relation']} {v['threshold']}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
