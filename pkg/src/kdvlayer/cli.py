"""Command line entry point: ``kdvlayer {run,sweep,report,validate}``."""
import argparse
import logging
import sys

from . import harness


def build_parser():
    p = argparse.ArgumentParser(prog="kdvlayer",
                                description="Boundary-layer remainder experiments.")
    sub = p.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run a single eps (the first of eps_list)")
    run.add_argument("--config", required=True, help="JSON config file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--force", action="store_true",
                     help="run even if the corner compatibility conditions fail")

    sweep = sub.add_parser("sweep", help="eps-sweep with self-convergence and scaling fit")
    sweep.add_argument("--config", required=True, help="JSON config file")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.add_argument("--threads", type=int, default=1, help="worker processes for members")
    sweep.add_argument("--force", action="store_true",
                       help="run even if the corner compatibility conditions fail")

    rep = sub.add_parser("report", help="summarize artifacts in a directory")
    rep.add_argument("--out", required=True, help="directory written by run or sweep")
    rep.add_argument("--json", action="store_true", help="print the summary as JSON")

    val = sub.add_parser("validate", help="schema and compatibility check only")
    val.add_argument("--config", required=True, help="JSON config file")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    if args.verb == "run":
        return harness.run_single(args.config, args.out, force=args.force)
    if args.verb == "sweep":
        return harness.run_sweep(args.config, args.out, threads=args.threads, force=args.force)
    if args.verb == "report":
        return harness.emit_report(args.out, as_json=args.json)
    return harness.validate(args.config)


if __name__ == "__main__":
    sys.exit(main())
