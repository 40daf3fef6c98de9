"""Latency sweep harness for the word-count request."""

from .summary import (
    CSV_HEADER,
    REFERENCE,
    Summary,
    export_csv,
    import_csv,
    median,
    render,
    render_plot_data,
    summarize,
)
from .sweep import TABLE_COUNTS, BenchRecord, SweepPlan, run_sweep

__all__ = [
    "CSV_HEADER", "REFERENCE", "TABLE_COUNTS", "BenchRecord", "Summary", "SweepPlan",
    "export_csv", "import_csv", "median", "render", "render_plot_data", "run_sweep", "summarize",
]
