"""Medians per cell, a comparison table with a reference column, and CSV persistence."""

from __future__ import annotations

import csv
import os
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .sweep import BenchRecord

CSV_HEADER = ("transport", "n_words", "trial", "signed", "policy", "elapsed_s", "outcome")

TRANSPORT_NAMES = {"fifo": "OS Pipe", "uds": "Unix Sockets", "shm": "Shared Memory", "mpk": "MPKLink"}

# Published timings on reference hardware, seconds, kept as text so they print
# exactly as published: n_words -> (MPKLink, best other, best other's transport).
REFERENCE = {
    100: ("0.00203", "0.00166", "Shared Memory"),
    1_000: ("0.00269", "0.00168", "Unix Sockets"),
    10_000: ("0.00364", "0.00154", "Shared Memory"),
    100_000: ("0.01536", "0.00660", "OS Pipe"),
    1_000_000: ("0.18374", "0.04571", "Unix Sockets"),
    10_000_000: ("1.40530", "0.48885", "Unix Sockets"),
    100_000_000: ("14.42533", "5.10027", "Unix Sockets"),
}


def median(values: Sequence[float]) -> float:
    if not values:
        raise ValueError("median of no values")
    return statistics.median(values)


def label(r: BenchRecord) -> str:
    s = r.transport
    if r.policy:
        s += f"/{r.policy}"
    if r.signed:
        s += "+signed"
    return s


@dataclass
class Summary:
    labels: list[str] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    medians: dict[tuple[str, int], float] = field(default_factory=dict)
    trials: dict[tuple[str, int], int] = field(default_factory=dict)
    errors: dict[tuple[str, int], str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def median(self, lbl: str, n: int) -> Optional[float]:
        return self.medians.get((lbl, n))

    def best_other(self, n: int) -> Optional[tuple[str, float]]:
        found = [(m, lbl) for (lbl, k), m in self.medians.items()
                 if k == n and not lbl.startswith("mpk")]
        if not found:
            return None
        m, lbl = min(found)
        return lbl, m

    def mpk(self, n: int) -> Optional[tuple[str, float]]:
        for lbl in self.labels:
            if lbl.startswith("mpk") and (lbl, n) in self.medians:
                return lbl, self.medians[(lbl, n)]
        return None


def summarize(records: Iterable[BenchRecord]) -> Summary:
    """Median elapsed time of the Ok trials in each (transport variant, n_words) cell."""
    ok: dict[tuple[str, int], list[float]] = {}
    failed: dict[tuple[str, int], list[str]] = {}
    s = Summary()
    for r in records:
        lbl = label(r)
        if lbl not in s.labels:
            s.labels.append(lbl)
        if r.n_words not in s.counts:
            s.counts.append(r.n_words)
        (ok if r.ok else failed).setdefault((lbl, r.n_words), []).append(
            r.elapsed_s if r.ok else r.outcome)
    s.counts.sort()
    for cell, values in ok.items():
        s.medians[cell] = median(values)
        s.trials[cell] = len(values)
    for cell, outcomes in failed.items():
        if cell not in ok:
            s.errors[cell] = outcomes[0]
            s.notes.append(f"EmptyCell {cell[0]} n={cell[1]}: {len(outcomes)} trial(s), {outcomes[0]}")
    return s


def _display(lbl: str) -> str:
    base = lbl.split("+")[0].split("/")[0]
    name = TRANSPORT_NAMES.get(base, base)
    return name + lbl[len(base):]


def _fmt(x: Optional[float]) -> str:
    return "-" if x is None else f"{x:.5f}"


def render(s: Summary) -> str:
    """Table of local medians beside the published reference column."""
    lines = []
    header = ["n_words"] + s.labels
    rows = []
    for n in s.counts:
        row = [f"{n:,}"]
        for lbl in s.labels:
            if (lbl, n) in s.medians:
                row.append(_fmt(s.medians[(lbl, n)]))
            elif (lbl, n) in s.errors:
                row.append(s.errors[(lbl, n)])
            else:
                row.append("-")
        rows.append(row)
    lines.append("Median seconds per request (this machine)")
    lines.extend(_table(header, rows))

    lines.append("")
    lines.append("MPKLink vs best other: this machine | reference (published hardware)")
    header = ["n_words", "MPKLink", "best other", "ratio", "ref MPKLink", "ref best other"]
    rows = []
    for n in sorted(set(s.counts) | set(REFERENCE)):
        mpk, other = s.mpk(n), s.best_other(n)
        ratio = f"{mpk[1] / other[1]:.2f}x" if mpk and other and other[1] > 0 else "-"
        ref = REFERENCE.get(n)
        rows.append([
            f"{n:,}",
            _fmt(mpk[1]) if mpk else "-",
            f"{_fmt(other[1])} ({_display(other[0])})" if other else "-",
            ratio,
            ref[0] if ref else "-",
            f"{ref[1]} ({ref[2]})" if ref else "-",
        ])
    lines.extend(_table(header, rows))
    lines.append("Reference values are shown for comparison only; absolute timings are hardware-specific.")
    for note in s.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    fmt = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))  # noqa: E731
    return [fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows]


# persistence -------------------------------------------------------------------

def export_csv(records: Iterable[BenchRecord], path: "str | os.PathLike") -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.transport, r.n_words, r.trial, "on" if r.signed else "off",
                        r.policy, repr(float(r.elapsed_s)), r.outcome])


def import_csv(path: "str | os.PathLike") -> list[BenchRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = csv.reader(f)
        header = next(rows, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        out = []
        for lineno, row in enumerate(rows, 2):
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields")
            t, n, trial, signed, policy, elapsed, outcome = row
            if signed not in ("on", "off"):
                raise ValueError(f"{path}:{lineno}: signed must be on|off")
            out.append(BenchRecord(t, int(n), int(trial), signed == "on", policy,
                                   float(elapsed), outcome))
        return out


def render_plot_data(records: Iterable[BenchRecord], path: "str | os.PathLike") -> None:
    """Write ``series,n_words,median_s`` rows: one series per transport variant."""
    s = summarize(records)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("series", "n_words", "median_s"))
        for lbl in s.labels:
            for n in s.counts:
                m = s.median(lbl, n)
                if m is not None:
                    w.writerow((lbl, n, repr(m)))
