"""Benchmark orchestration: cases, metrics, persistence, reports, CLI."""

from .benchmarks import (BenchmarkCase, get_benchmark, iaea_2d_pwr,
                         twigl2d_a, twigl2d_b, resolve_noise, resolve_scales)
from .metrics import (Band, GeimEstimator, GlobalOutputs, PbdwEstimator,
                      UqBands, band_percentiles, compute_errors, draw_seed,
                      global_outputs, uq_bands)
from .persistence import (read_snapshots, write_snapshots, write_csv,
                          save_geim_model, load_geim_model,
                          save_pbdw_model, load_pbdw_model)
from .pipeline import (PipelineConfig, ReconstructionReport, load_config,
                       run_pipeline, worker_count)

__all__ = [
    "BenchmarkCase", "get_benchmark", "iaea_2d_pwr", "twigl2d_a", "twigl2d_b",
    "resolve_noise", "resolve_scales", "Band", "GeimEstimator", "GlobalOutputs",
    "PbdwEstimator", "UqBands", "band_percentiles", "compute_errors",
    "draw_seed", "global_outputs", "uq_bands", "read_snapshots",
    "write_snapshots", "write_csv", "save_geim_model", "load_geim_model",
    "save_pbdw_model", "load_pbdw_model", "PipelineConfig",
    "ReconstructionReport", "load_config", "run_pipeline", "worker_count",
]
