"""Command-line front end.

Subcommands map onto the pipeline stages:

  solve    run one transient (fom/afom/lcfom) and write a snapshot container
  offline  train GEIM or PBDW models from a snapshot container
  online   reconstruct a truth container from noisy readings of its fields
  report   run the full pipeline for a config file and emit the report
  validate run the built-in check suites
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..geim import geim_greedy
from ..multiphysics import run_transient
from ..pbdw import default_xi_grid, sgreedy, tune_xi
from ..reduction import compute_pod
from ..sensing import build_sensor_library, measure_matrix
from .benchmarks import get_benchmark, resolve_noise, resolve_scales
from .metrics import GeimEstimator, PbdwEstimator, compute_errors, draw_seed
from .persistence import (load_geim_model, load_pbdw_model, read_manifest,
                          read_snapshots, save_geim_model, save_pbdw_model,
                          write_csv, write_snapshots)
from .pipeline import (PipelineConfig, load_config, run_pipeline,
                       NOISE_CURVES)
from . import validate as validate_mod


def _case_from_args(args):
    overrides = {}
    if args.cells:
        overrides["cells_per_side"] = args.cells
    return get_benchmark(args.benchmark, **overrides)


def _cmd_solve(args) -> int:
    case = _case_from_args(args)
    mu = args.mu if case.mu_box is not None else None
    snaps = run_transient(case, args.mode, mu)
    write_snapshots(args.out, snaps)
    print(f"wrote {snaps.n_snapshots} snapshots to {args.out}")
    return 0


def _cmd_offline(args) -> int:
    snaps = read_snapshots(args.snapshots)
    man = read_manifest(Path(args.snapshots) / "manifest.txt")
    case = get_benchmark(man["meta_benchmark"],
                         cells_per_side=snaps.mesh.nx)
    # train in the working units of the assimilation stack; the online
    # stage re-derives the same scales from its truth container
    initial = {n: snaps.matrix(n)[0] for n in snaps.field_names()}
    snaps = scale_set(snaps, resolve_scales(case, initial))
    library = build_sensor_library(snaps.mesh, case.sensor_stride,
                                   case.sensor_spread)
    out = Path(args.out)
    for name in snaps.field_names():
        if args.method == "geim":
            model = geim_greedy(snaps, name, library, args.m_max or case.m_max)
            save_geim_model(out / f"geim_{name}", model)
        else:
            pod = compute_pod(snaps, name, args.n_background
                              or case.n_background)
            model = sgreedy(pod, library, args.m_max or case.m_max)
            save_pbdw_model(out / f"pbdw_{name}", model)
        print(f"trained {args.method} model for {name}")
    return 0


def _cmd_online(args) -> int:
    truth = read_snapshots(args.truth)
    man = read_manifest(Path(args.truth) / "manifest.txt")
    case = get_benchmark(man["meta_benchmark"], cells_per_side=truth.mesh.nx)
    initial = {n: truth.matrix(n)[0] for n in truth.field_names()}
    scales = resolve_scales(case, initial)
    sigma = {k: float(v) * args.sigma_scale for k, v in case.noise.items()}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    model_dir = Path(args.model)
    for f_id, name in enumerate(sorted(truth.field_names())):
        gdir = model_dir / f"geim_{name}"
        pdir = model_dir / f"pbdw_{name}"
        if gdir.exists():
            model = load_geim_model(gdir)
            est = GeimEstimator(model, model.n_sensors, lam=sigma[name])
        elif pdir.exists():
            model = load_pbdw_model(pdir)
            xi = model.xi if model.xi is not None else 1e-3
            est = PbdwEstimator(model, model.n_sensors, xi)
        else:
            print(f"no model for field {name} under {model_dir}",
                  file=sys.stderr)
            return 2
        truth_mat = truth.matrix(name) / scales[name]
        clean = measure_matrix(est.sensors, truth_mat)
        seq = draw_seed(args.seed, NOISE_CURVES, f_id, 0)
        y = clean if sigma[name] == 0 else clean + sigma[name] * \
            np.random.Generator(np.random.Philox(seq)) \
            .standard_normal(clean.shape)
        estimate = est.estimate_batch(y)
        e_abs, e_rel = compute_errors(truth.mesh, truth_mat, estimate)
        rows.append([name, sigma[name] * scales[name],
                     e_abs * scales[name], e_rel])
        np.asarray(estimate * scales[name], dtype="<f8") \
            .tofile(out / f"estimate_{name}.f64")
    write_csv(out / "online_errors.csv",
              ["field", "sigma", "E", "eps"], rows)
    print(f"wrote estimates and errors to {out}")
    return 0


def _cmd_report(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = PipelineConfig(benchmark=args.benchmark)
    if args.out:
        cfg.out_dir = args.out
    rep = run_pipeline(cfg)
    print(f"report written under {rep.out_dir}/report")
    for name in rep.case.field_names:
        eps = rep.curves[name]["trgeim"].e_rel[-1]
        print(f"  {name}: trgeim eps at M={rep.case.m_max}: {eps:.3e} "
              f"(biased model {rep.baseline[name][1]:.3e})")
    return 0


def _cmd_validate(args) -> int:
    return validate_mod.run_suite(args.suite)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="romassim",
        description="reduced-order data assimilation for coupled reactor "
                    "transients")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one coupled transient")
    p.add_argument("--config", help="pipeline config file (optional)")
    p.add_argument("--benchmark", default="IAEA2DPWR")
    p.add_argument("--mode", choices=("fom", "afom", "lcfom"), default="fom")
    p.add_argument("--mu", type=float, default=None,
                   help="secondary parameter value, where the benchmark has one")
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("offline", help="train models from snapshots")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--method", choices=("geim", "pbdw"), required=True)
    p.add_argument("--m-max", type=int, default=None)
    p.add_argument("--n-background", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_offline)

    p = sub.add_parser("online", help="reconstruct from noisy readings")
    p.add_argument("--model", required=True, help="offline output directory")
    p.add_argument("--truth", required=True, help="truth snapshot container")
    p.add_argument("--sigma-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_online)

    p = sub.add_parser("report", help="run the full pipeline")
    p.add_argument("--config", default=None)
    p.add_argument("--benchmark", default="IAEA2DPWR")
    p.add_argument("--runs", nargs="*", default=None,
                   help="existing run directories to reuse as cache")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("validate", help="run the built-in checks")
    p.add_argument("--suite", choices=("fast", "full"), default="fast")
    p.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
