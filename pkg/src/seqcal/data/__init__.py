"""CSV traces and run manifests."""

from seqcal.data.manifest import finish_manifest, load_manifest, start_manifest
from seqcal.data.traces import (
    read_design_trace,
    read_perf_traces,
    read_series,
    read_summary,
    write_design_trace,
    write_perf_traces,
    write_series,
    write_summary,
)

__all__ = [
    "finish_manifest",
    "load_manifest",
    "read_design_trace",
    "read_perf_traces",
    "read_series",
    "read_summary",
    "start_manifest",
    "write_design_trace",
    "write_perf_traces",
    "write_series",
    "write_summary",
]
