"""Command-line entry point: ``novipeak <kind> --config PATH [--out PREFIX] [--seed N] [--quiet]``."""

import argparse
import json
import sys

from .errors import ParseError, ValidationError
from .harness import EXIT_USAGE, KINDS, parse_config, run


_HELP = {
    "ode-sim": "integrate the multipeakon particle system",
    "pde-sim": "advance a mollified profile with the grid solver",
    "spectrum": "compute the limiting amplitudes from the spectral matrix",
    "asymptotics": "compare long-time amplitudes with the spectrum",
    "stability-report": "track a perturbed peakon or train and audit its stability",
    "lemma-audit": "run the randomized identity and inequality audits",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="novipeak",
                                     description="Run a peakon scenario and write CSV/JSON outputs.")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind in KINDS:
        p = sub.add_parser(kind, help=_HELP[kind])
        p.add_argument("--config", required=True, metavar="PATH", help="scenario file")
        p.add_argument("--out", metavar="PREFIX", help="output path prefix (overrides 'out')")
        p.add_argument("--seed", type=int, metavar="N", help="random seed (overrides 'seed')")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        scenario = parse_config(text, kind=args.kind).with_overrides(seed=args.seed, out=args.out)
        if not 0 <= scenario.seed < 2 ** 64:
            raise ValidationError("seed", "seed must be a 64-bit unsigned integer")
    except (OSError, UnicodeDecodeError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}), file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError) as exc:
        record = {"type": type(exc).__name__, "message": str(exc)}
        record.update({k: getattr(exc, k) for k in ("line", "field") if hasattr(exc, k)})
        print(json.dumps({"error": record}), file=sys.stderr)
        return EXIT_USAGE
    result = run(scenario)
    if not args.quiet or result.exit_code:
        for a in result.audits:
            mark = "PASS" if a["passed"] else "FAIL"
            print(f"{mark} {a['name']}: measured {a['measured']:.6g} {a['direction']} {a['threshold']:.6g}")
        if "error" in result.report:
            print(json.dumps({"error": result.report["error"]}), file=sys.stderr)
        for kind, path in result.paths.items():
            print(f"wrote {kind}: {path}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
