"""``bench`` command line: sweep, summarize, gen."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from ..mpk_channel import RightsPolicy
from ..transports import Transport
from ..wordcount import generate_corpus
from .summary import export_csv, import_csv, render, render_plot_data, summarize
from .sweep import DESK_LIMIT, TABLE_COUNTS, SweepPlan, run_sweep


def _csv_list(kind):
    def parse(s: str):
        try:
            return [kind(x) for x in s.split(",") if x.strip()]
        except (ValueError, KeyError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _count(s: str) -> int:
    return int(s.replace("_", ""))


def _onoff(s: str) -> bool:
    if s not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on|off, got {s!r}")
    return s == "on"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="IPC word-count latency harness")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    sw = sub.add_parser("sweep", help="time count requests across transports and sizes")
    sw.add_argument("--transports", type=_csv_list(lambda s: Transport.parse(s.strip()).value),
                    default=["fifo", "uds", "shm", "mpk"])
    sw.add_argument("--counts", type=_csv_list(_count), default=list(TABLE_COUNTS),
                    help="word counts (default: 100 .. 10^8; above 10^6 only with --full)")
    sw.add_argument("--trials", type=int, default=5)
    sw.add_argument("--warmup", type=int, default=1, help="unrecorded leading repetitions")
    sw.add_argument("--seed", type=int, default=42)
    sw.add_argument("--signed", type=_csv_list(_onoff), default=[False], help="on|off or on,off")
    sw.add_argument("--policy", type=_csv_list(lambda s: RightsPolicy.parse(s.strip()).value),
                    default=["strict"], help="strict|relaxed or strict,relaxed (mpk only)")
    sw.add_argument("--backend", choices=("auto", "hardware", "emulated"), default="auto")
    sw.add_argument("--deadline", type=float, default=120.0, help="seconds per trial")
    sw.add_argument("--shm-capacity", type=int, default=None, help="shm slot size in bytes")
    sw.add_argument("--corpus-dir", default=None, help="keep generated corpora here")
    sw.add_argument("--out", default="results.csv")
    sw.add_argument("--plot", default=None, help="also write per-series medians here")
    sw.add_argument("--full", action="store_true", help=f"include counts above {DESK_LIMIT:,}")

    sm = sub.add_parser("summarize", help="render a results CSV as a table")
    sm.add_argument("csv")
    sm.add_argument("--plot", default=None)

    g = sub.add_parser("gen", help="write a random corpus")
    g.add_argument("--words", type=_count, required=True)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--out", required=True)
    return p


def _sweep(args) -> int:
    extra = {}
    if args.shm_capacity is not None:
        extra["shm_capacity"] = args.shm_capacity
    try:
        plan = SweepPlan(counts=args.counts, transports=args.transports, trials=args.trials,
                         seed=args.seed, deadline_s=args.deadline, signed=args.signed,
                         policies=args.policy, backend=args.backend, warmup=args.warmup,
                         full=args.full, corpus_dir=args.corpus_dir, **extra)
    except ValueError as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return 2
    skipped = [n for n in plan.counts if n not in plan.effective_counts()]
    if skipped:
        print(f"skipping {', '.join(f'{n:,}' for n in skipped)} words (use --full)", file=sys.stderr)

    def progress(r):
        print(f"{r.transport:4} {r.policy:7} {'signed' if r.signed else '':6} n={r.n_words:<11,} "
              f"trial={r.trial} {r.outcome} {r.elapsed_s:.6f}s", file=sys.stderr)

    records = run_sweep(plan, progress)
    export_csv(records, args.out)
    if args.plot:
        render_plot_data(records, args.plot)
    sys.stdout.write(render(summarize(records)))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.cmd == "sweep":
        return _sweep(args)
    if args.cmd == "summarize":
        try:
            records = import_csv(args.csv)
        except (OSError, ValueError) as exc:
            print(f"bench: {exc}", file=sys.stderr)
            return 1
        sys.stdout.write(render(summarize(records)))
        if args.plot:
            render_plot_data(records, args.plot)
        return 0
    if args.words < 0:
        print("bench: --words must be non-negative", file=sys.stderr)
        return 2
    generate_corpus(args.words, args.seed, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
