"""Command-line campaign runner.

    redthreads --kernel spmv --strength detect --rate 1 --runs 100 --seed 7 --out r.json

Several ``--rate`` values make a rate sweep; the report then carries the
robustness rating computed over the sweep.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from typing import List, Optional

from redthreads.harness import (DEFAULT_THRESHOLD, InjectionKind, InjectionPlan, PolicyFlags,
                                aggregates_csv, robustness_rating, run_campaign)
from redthreads.kernels import KERNELS
from redthreads.kernels.driver import RECOVERY_POLICIES

log = logging.getLogger("redthreads.cli")

MATRIX_KERNELS = ("spmv", "cg", "sscg")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _rate(text):
    v = float(text)
    if not v >= 0.0 or math.isinf(v):
        raise argparse.ArgumentTypeError(f"rate must be a finite number >= 0, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="redthreads",
                                description="Run fault-injection campaigns on a benchmark kernel.")
    p.add_argument("--kernel", required=True, choices=sorted(KERNELS))
    p.add_argument("--size", type=_positive_int, help="problem size (kernel default if omitted)")
    p.add_argument("--strength", default="detect", choices=("off", "detect", "correct"),
                   help="maximum redundancy level (default: detect)")
    p.add_argument("--dynamic", action="store_true",
                   help="let the adaptive monitor pick the level per sphere")
    p.add_argument("--lazy", action="store_true", help="defer Detect comparisons to a detector thread")
    p.add_argument("--cluster", action="store_true", help="pin duplicates onto island cores")
    p.add_argument("--islands", type=_positive_int, metavar="N", help="cores per island")
    p.add_argument("--recovery", default="ignore", choices=RECOVERY_POLICIES,
                   help="what to do after a detected error (default: ignore)")
    p.add_argument("--rate", type=_rate, nargs="+", default=[0.0], metavar="R",
                   help="fault events per run; several values make a sweep")
    p.add_argument("--kind", default="corrupt", choices=("notify", "corrupt"))
    p.add_argument("--runs", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help="failure rate that defines the robustness rating")
    p.add_argument("--matrix", metavar="PATH", help="Matrix Market file (spmv, cg, sscg)")
    p.add_argument("--out", metavar="PATH", help="report file (stdout if omitted)")
    p.add_argument("--format", default="json", choices=("json", "csv"))
    p.add_argument("--quiet", action="store_true")
    return p


def run(args) -> dict:
    flags = PolicyFlags(dynamic=args.dynamic, lazy=args.lazy, recovery=args.recovery,
                        cluster=args.cluster, island_size=args.islands)
    kind = InjectionKind.parse(args.kind)
    reports = []
    for rate in args.rate:
        rep = run_campaign(args.kernel, args.strength, flags, InjectionPlan(args.seed, rate, kind),
                           args.runs, size=args.size, matrix=args.matrix,
                           threshold=args.threshold)
        reports.append(rep)
        log.info("%s rate=%g failure_rate=%.3f", args.kernel, rate, rep.failure_rate)
    if args.cluster and any(r.cluster_status == "unsupported_platform"
                            for rep in reports for r in rep.runs):
        log.warning("thread clustering is unsupported on this host; runs were not pinned")
    return {"reports": reports,
            "sweep": [(rate, rep.failure_rate) for rate, rep in zip(args.rate, reports)]}


def render(result: dict, fmt: str, threshold: float) -> str:
    reports = result["reports"]
    if fmt == "csv":
        return aggregates_csv([r.aggregates() for r in reports])
    if len(reports) == 1:
        doc = reports[0].to_json()
    else:
        rating = robustness_rating(sorted(result["sweep"]), threshold)
        doc = {"campaigns": [r.to_json() for r in reports],
               "sweep": [{"rate": r, "failure_rate": f} for r, f in result["sweep"]],
               "robustness_rating": "Unbounded" if math.isinf(rating) else rating}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.matrix is not None and args.kernel not in MATRIX_KERNELS:
        parser.error(f"--matrix applies to {', '.join(MATRIX_KERNELS)} only")
    if args.islands is not None and not args.cluster:
        parser.error("--islands needs --cluster")
    if not 0.0 < args.threshold < 1.0:
        parser.error("--threshold must lie in (0, 1)")
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        result = run(args)
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    text = render(result, args.format, args.threshold)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
