"""Command line entry point.

    ldaho run CONFIG [--seeds 0-4] [--out-dir DIR] [--format csv|json]
    ldaho sweep CONFIG --gamma 5,20
    ldaho oracle CONFIG
    ldaho validate SINR_CSV BS_CSV [UE_CSV]

Exit codes: 0 ok, 1 configuration or input error, 2 oracle refused
(the other algorithms still ran), 3 file-system error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from ldaho import harness
from ldaho.config import OUT_DIR_ENV, ConfigError, load_config, parse_algorithms, parse_seeds, validate
from ldaho.scenarios import ingest_trace

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_IO = 0, 1, 2, 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ldaho", description="Handover-aware association experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config")
        sp.add_argument("--seeds", help="e.g. 0-19 or 1,3,5")
        sp.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or the config's out_dir)")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--algorithms", help="comma list of lda,lda2,maxsinr,random,oracle")
        sp.add_argument("--forecaster", help="none, oracle or file:<path>")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for (algorithm, seed) runs")

    common(sub.add_parser("run", help="run every algorithm and seed of a config"))
    sw = sub.add_parser("sweep", help="repeat a config for several gamma values")
    common(sw)
    sw.add_argument("--gamma", required=True, help="comma list, e.g. 5,20")
    common(sub.add_parser("oracle", help="solve the exact oracle only"))
    va = sub.add_parser("validate", help="check trace files and report imputation")
    va.add_argument("sinr")
    va.add_argument("bs")
    va.add_argument("ue", nargs="?")
    return p


def _load(args):
    exp = load_config(args.config)
    try:
        if args.seeds:
            exp.seeds = parse_seeds(args.seeds)
        if args.algorithms:
            exp.algorithms = parse_algorithms(args.algorithms)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.command == "oracle":
        exp.algorithms = ["oracle"]
        exp.seeds = exp.seeds[:1]
    if args.format:
        exp.format = args.format
    if args.forecaster:
        exp.forecaster = args.forecaster
    if args.out_dir:
        exp.out_dir = args.out_dir
    validate(exp)
    return exp


def _validate_files(args) -> int:
    trace, report = ingest_trace(args.sinr, args.bs, args.ue)
    print(json.dumps({"T": trace.T, "I": trace.I, "J": trace.J, **dataclasses.asdict(report)}, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            return _validate_files(args)
        exp = _load(args)
        if args.command == "sweep":
            gammas = [float(g) for g in args.gamma.split(",") if g.strip()]
            if not gammas or min(gammas) < 0:
                raise ConfigError("--gamma needs one or more nonnegative values")
            results = harness.gamma_sweep(exp, gammas, exp.out_dir, jobs=args.jobs)
            refused = [r.refusal for r in results.values() if r.refusal]
        else:
            res = harness.run_experiment(exp, exp.out_dir, jobs=args.jobs)
            refused = [res.refusal] if res.refusal else []
    except ValueError as exc:  # ConfigError and the trace parse errors included
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for msg in refused:
        print(f"error: {msg}", file=sys.stderr)
    return EXIT_BUDGET if refused else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
