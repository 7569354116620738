"""End-to-end benchmark orchestration: snapshot generation, offline
training, noisy online reconstruction and report emission.

Stages write their artifacts under the output directory and are skipped on
rerun when a matching artifact already exists (``reuse_cache``).  All
randomness derives from the config seed through per-purpose Philox streams,
so repeated runs produce bitwise-identical CSV reports.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..errors import StageError
from ..fields import l2_norms
from ..geim import geim_greedy
from ..multiphysics import run_transient
from ..neutronics import expand_materials
from ..pbdw import default_xi_grid, sgreedy, tune_xi
from ..reduction import SnapshotSet, compute_pod, correlation_matrix
from ..sensing import build_sensor_library, measure_matrix
from . import report as charts
from .benchmarks import (BenchmarkCase, get_benchmark, resolve_noise,
                         resolve_scales)
from .metrics import (GeimEstimator, PbdwEstimator, compute_errors, draw_seed,
                      dtemp_series, global_outputs, power_series, uq_bands)
from .persistence import (read_manifest, read_snapshots, save_geim_model,
                          save_pbdw_model, load_geim_model, load_pbdw_model,
                          write_csv, write_snapshots)

# noise-stream purposes
NOISE_CURVES = 1
NOISE_VALIDATION = 2
NOISE_UQ = 3
NOISE_ROBUSTNESS = 4

METHODS = ("geim", "trgeim", "pbdw")


def worker_count() -> int:
    """Parallelism cap from ROMASSIM_THREADS (default: sequential)."""
    try:
        return max(1, int(os.environ.get("ROMASSIM_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class PipelineConfig:
    benchmark: str = "IAEA2DPWR"
    out_dir: str = "runs/latest"
    seed: int = 2024
    overrides: dict = field(default_factory=dict)
    n_uq_draws: int = 100
    uq_level: float = 95.0
    n_validation: int = 10
    xi_grid: tuple = tuple(default_xi_grid())
    sigma_scale: float = 1.0
    heatmaps: bool = False
    reuse_cache: bool = True


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    known = {f for f in PipelineConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "xi_grid" in raw:
        raw["xi_grid"] = tuple(float(v) for v in raw["xi_grid"])
    return PipelineConfig(**raw)


@dataclass
class MethodCurve:
    e_abs: np.ndarray
    e_rel: np.ndarray


@dataclass
class ReconstructionReport:
    """Everything the report stage writes, kept accessible in memory."""

    benchmark: str
    m_values: np.ndarray
    curves: dict                  # field -> method -> MethodCurve
    baseline: dict                # field -> (E, eps) of the biased model
    sigma: dict                   # field -> absolute noise level
    xi: dict                      # field -> tuned xi
    outputs: dict                 # global-output series for the line plots
    uq: dict                      # method -> UqBands
    scales: dict                  # field -> working-unit scale
    out_dir: str
    # in-memory handles for downstream analysis (not persisted here)
    case: BenchmarkCase = None
    geim_models: dict = None
    pbdw_models: dict = None
    truth_test: SnapshotSet = None
    biased_test: SnapshotSet = None


def _mu_key(mu) -> str:
    return "none" if mu is None else f"{float(mu):.12g}"


def _run_or_load(case, mode, mu, directory, reuse):
    directory = Path(directory)
    if reuse and (directory / "manifest.txt").exists():
        man = read_manifest(directory / "manifest.txt")
        if (man.get("meta_benchmark") == case.name
                and man.get("meta_mode") == mode
                and int(man["nx"]) == case.mesh.nx):
            return read_snapshots(directory)
    snaps = run_transient(case, mode, mu)
    write_snapshots(directory, snaps)
    return snaps


def _stage_snapshots(case: BenchmarkCase, cfg: PipelineConfig, out: Path):
    """All transient runs the benchmark needs: truth at the test parameters
    and the biased model at both training and test parameters."""
    has_mu = case.mu_box is not None
    test_mus = list(case.mu_test) if has_mu else [None]
    train_mus = list(case.mu_train) if has_mu else [None]
    wanted = [("fom", mu) for mu in test_mus]
    for mu in train_mus + test_mus:
        key = (case.biased_mode, mu)
        if key not in wanted:
            wanted.append(key)
    # dedupe (IAEA reuses the single biased run for train and test windows)
    seen, jobs = set(), []
    for mode, mu in wanted:
        key = (mode, _mu_key(mu))
        if key not in seen:
            seen.add(key)
            jobs.append((mode, mu))
    runs = {}

    def _one(job):
        mode, mu = job
        d = out / "snapshots" / f"{mode}_{_mu_key(mu)}"
        return (mode, _mu_key(mu)), _run_or_load(case, mode, mu, d,
                                                 cfg.reuse_cache)

    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for key, snaps in pool.map(_one, jobs):
                runs[key] = snaps
    else:
        for job in jobs:
            key, snaps = _one(job)
            runs[key] = snaps
    return runs


def _slice_times(snaps: SnapshotSet, times: np.ndarray) -> SnapshotSet:
    have = np.round(snaps.params[:, 0], 9)
    idx = []
    for t in np.round(times, 9):
        hit = np.flatnonzero(np.abs(have - t) < 1e-9)
        if hit.size != 1:
            raise StageError("online", f"time {t} not sampled by the run")
        idx.append(hit[0])
    return snaps.subset(idx)


def _concat_over_mu(case, runs, mode, mus, times) -> SnapshotSet:
    """Stack per-parameter time slices into one set with params (mu, t) or
    (t,) when the benchmark has no secondary parameter."""
    parts = [_slice_times(runs[(mode, _mu_key(mu))], times) for mu in mus]
    fields = {name: np.vstack([p.matrix(name) for p in parts])
              for name in parts[0].field_names()}
    if case.mu_box is None:
        params = times[:, None]
        names = ("t",)
    else:
        params = np.array([[mu, t] for mu in mus for t in times])
        names = (case.mu_name, "t")
    return SnapshotSet(mesh=case.mesh, params=params, fields=fields,
                       param_names=names,
                       meta={"benchmark": case.name, "mode": mode})


def _stage_offline(case, cfg, out, train_set):
    library = build_sensor_library(case.mesh, case.sensor_stride,
                                   case.sensor_spread)
    geim_models, pbdw_models = {}, {}
    for name in case.field_names:
        gdir = out / "offline" / f"geim_{name}"
        pdir = out / "offline" / f"pbdw_{name}"
        if cfg.reuse_cache and (gdir / "manifest.txt").exists() \
                and (pdir / "manifest.txt").exists():
            geim_models[name] = load_geim_model(gdir)
            pbdw_models[name] = load_pbdw_model(pdir)
            continue
        geim_models[name] = geim_greedy(train_set, name, library, case.m_max)
        # background dimension cannot exceed the training set's numerical
        # rank; coarse grids may not support the configured default
        corr = correlation_matrix(case.mesh, train_set.matrix(name))
        lam = np.linalg.eigvalsh(corr)
        rank = int(np.sum(lam > 1e-12 * lam[-1]))
        pod = compute_pod(train_set, name, min(case.n_background, rank))
        pbdw_models[name] = sgreedy(pod, library, case.m_max)
        save_geim_model(gdir, geim_models[name])
        save_pbdw_model(pdir, pbdw_models[name])
    return geim_models, pbdw_models


def _noisy(clean: np.ndarray, sigma: float, seed_seq) -> np.ndarray:
    if sigma == 0:
        return clean.copy()
    rng = np.random.Generator(np.random.Philox(seed_seq))
    return clean + sigma * rng.standard_normal(clean.shape)


def scale_set(snaps: SnapshotSet, scales: dict) -> SnapshotSet:
    """Copy of a snapshot set with each field divided by its unit scale."""
    return SnapshotSet(
        mesh=snaps.mesh, params=snaps.params.copy(),
        fields={k: v / scales.get(k, 1.0) for k, v in snaps.fields.items()},
        grid_axes=snaps.grid_axes, param_names=snaps.param_names,
        meta=dict(snaps.meta))


def _stage_online(case, cfg, out, geim_models, pbdw_models,
                  truth_test, biased_test, truth_star, scales):
    """Noisy reconstruction in the scaled working units; absolute errors are
    converted back to raw field units for reporting."""
    mesh = case.mesh
    cm_ref = expand_materials(mesh, case.materials)
    sigma = {k: float(v) * cfg.sigma_scale for k, v in case.noise.items()}

    truth_s = scale_set(truth_test, scales)
    star_s = scale_set(truth_star, scales)

    m_values = np.arange(1, case.m_max + 1)
    curves, baseline, xi_star = {}, {}, {}
    residual_rows = {}
    field_ids = {n: i for i, n in enumerate(sorted(case.field_names))}
    for name in case.field_names:
        gm, pm = geim_models[name], pbdw_models[name]
        baseline[name] = compute_errors(mesh, truth_test.matrix(name),
                                        biased_test.matrix(name))
        truth_mat = truth_s.matrix(name)
        norms = l2_norms(mesh, truth_mat)
        f_id = field_ids[name]
        y_geim = _noisy(measure_matrix(gm.magic_sensors, truth_mat),
                        sigma[name], draw_seed(cfg.seed, NOISE_CURVES, f_id, 0))
        y_pbdw = _noisy(measure_matrix(pm.sensors, truth_mat),
                        sigma[name], draw_seed(cfg.seed, NOISE_CURVES, f_id, 1))

        # hyper-parameter tuning on a small validation subset with its own
        # noise stream
        k = truth_mat.shape[0]
        val_idx = np.unique(np.linspace(0, k - 1,
                                        min(cfg.n_validation, k)).astype(int))
        y_val = _noisy(measure_matrix(pm.sensors, truth_mat[val_idx]),
                       sigma[name],
                       draw_seed(cfg.seed, NOISE_VALIDATION, f_id))
        xi_star[name] = tune_xi(pm, truth_mat[val_idx], y_val,
                                np.asarray(cfg.xi_grid), m=case.m_max)

        per_method = {}
        for method in METHODS:
            e_abs = np.empty(case.m_max)
            e_rel = np.empty(case.m_max)
            final_resid = None
            for m in m_values:
                if method == "geim":
                    est = GeimEstimator(gm, m).estimate_batch(y_geim[:, :m])
                elif method == "trgeim":
                    est = GeimEstimator(gm, m, lam=sigma[name]) \
                        .estimate_batch(y_geim[:, :m])
                else:
                    est = PbdwEstimator(pm, m, xi_star[name]) \
                        .estimate_batch(y_pbdw[:, :m])
                e_abs[m - 1], e_rel[m - 1] = compute_errors(mesh, truth_mat, est)
                if m == case.m_max:
                    final_resid = l2_norms(mesh, truth_mat - est)
            per_method[method] = MethodCurve(
                e_abs=e_abs * scales[name], e_rel=e_rel)
            residual_rows[(name, method)] = (final_resid * scales[name],
                                             norms * scales[name])
        curves[name] = per_method

    # global outputs along the first test trajectory, full transient window
    p0 = case.p0
    truth_out = global_outputs(truth_star, cm_ref, p0)
    p_ref = float(truth_out.power[0])
    t0_l1 = float(np.sum(np.abs(truth_star.matrix("T")[0])) * mesh.cell_area)
    estimators = {n: GeimEstimator(geim_models[n], case.m_max, lam=sigma[n])
                  for n in case.field_names}
    pb_estimators = {n: PbdwEstimator(pbdw_models[n], case.m_max, xi_star[n])
                     for n in case.field_names}

    def _series(ests, purpose):
        recon = {}
        for f_id, n in enumerate(sorted(ests)):
            y = _noisy(measure_matrix(ests[n].sensors, star_s.matrix(n)),
                       sigma[n], draw_seed(cfg.seed, purpose, f_id, 99))
            recon[n] = ests[n].estimate_batch(y) * scales[n]
        return (power_series(mesh, recon["phi1"], recon["phi2"], cm_ref, p0)
                / p_ref,
                dtemp_series(mesh, recon["T"], t0_l1))

    tr_power, tr_dtemp = _series(estimators, NOISE_CURVES)
    pb_power, pb_dtemp = _series(pb_estimators, NOISE_CURVES)
    bands = {
        "trgeim": uq_bands(estimators, star_s, sigma, cfg.n_uq_draws, cm_ref,
                           p0, p_ref, t0_l1, level=cfg.uq_level,
                           seed=cfg.seed, purpose=NOISE_UQ, scales=scales),
        "pbdw": uq_bands(pb_estimators, star_s, sigma, cfg.n_uq_draws,
                         cm_ref, p0, p_ref, t0_l1, level=cfg.uq_level,
                         seed=cfg.seed, purpose=NOISE_UQ, scales=scales),
    }
    outputs = {
        "times": truth_out.times, "power_fom": truth_out.power_rel,
        "dtemp_fom": truth_out.dtemp,
        "power_trgeim": tr_power, "dtemp_trgeim": tr_dtemp,
        "power_pbdw": pb_power, "dtemp_pbdw": pb_dtemp,
    }
    return (m_values, curves, baseline, sigma, xi_star, outputs, bands,
            residual_rows)


def _stage_report(case, cfg, out, rep, residual_rows, biased_star_outputs):
    rdir = out / "report"
    rdir.mkdir(parents=True, exist_ok=True)
    # error tables: one CSV per field
    for name in case.field_names:
        header = ["M"]
        cols = [rep.m_values]
        for method in METHODS:
            header += [f"E_{method}", f"eps_{method}"]
            cols += [rep.curves[name][method].e_abs,
                     rep.curves[name][method].e_rel]
        header += ["E_baseline", "eps_baseline"]
        e0, eps0 = rep.baseline[name]
        cols += [np.full(rep.m_values.size, e0),
                 np.full(rep.m_values.size, eps0)]
        write_csv(rdir / f"errors_{name}.csv", header,
                  zip(*[np.asarray(c) for c in cols]))
        charts.line_chart(
            rdir / f"errors_{name}.svg", rep.m_values,
            {m: rep.curves[name][m].e_rel for m in METHODS}
            | {"biased model": np.full(rep.m_values.size, eps0)},
            title=f"relative reconstruction error: {name}",
            xlabel="number of sensors M", ylabel="eps_M", log_y=True)
        resid, norms = residual_rows[(name, "trgeim")]
        write_csv(rdir / f"residual_norms_{name}_trgeim.csv",
                  ["index", "residual_l2", "truth_l2"],
                  [(i, r, n) for i, (r, n) in enumerate(zip(resid, norms))])

    # grouped bars at M_max
    groups = list(case.field_names)
    series = {"biased model": [rep.baseline[n][1] for n in groups]}
    for method in ("trgeim", "pbdw"):
        series[method] = [rep.curves[n][method].e_rel[-1] for n in groups]
    charts.bar_chart(rdir / "errors_bar.svg", groups, series,
                     title=f"relative error at M = {case.m_max}",
                     ylabel="eps_M", log_y=True)

    # global outputs with the Monte-Carlo band
    o = rep.outputs
    write_csv(rdir / "global_outputs.csv",
              ["t", "power_fom", "power_biased", "power_trgeim", "power_pbdw",
               "power_band_trgeim_lo", "power_band_trgeim_hi",
               "power_band_pbdw_lo", "power_band_pbdw_hi",
               "dtemp_fom", "dtemp_biased", "dtemp_trgeim", "dtemp_pbdw"],
              zip(o["times"], o["power_fom"], biased_star_outputs.power_rel,
                  o["power_trgeim"], o["power_pbdw"],
                  rep.uq["trgeim"].power.lo, rep.uq["trgeim"].power.hi,
                  rep.uq["pbdw"].power.lo, rep.uq["pbdw"].power.hi,
                  o["dtemp_fom"], biased_star_outputs.dtemp,
                  o["dtemp_trgeim"], o["dtemp_pbdw"]))
    charts.line_chart(
        rdir / "power.svg", o["times"],
        {"truth": o["power_fom"], "biased model": biased_star_outputs.power_rel,
         "trgeim": o["power_trgeim"], "pbdw": o["power_pbdw"]},
        title="normalised power", xlabel="t (s)", ylabel="P/P0",
        band=(rep.uq["trgeim"].power.lo, rep.uq["trgeim"].power.hi))
    charts.line_chart(
        rdir / "dtemp.svg", o["times"],
        {"truth": o["dtemp_fom"], "biased model": biased_star_outputs.dtemp,
         "trgeim": o["dtemp_trgeim"], "pbdw": o["dtemp_pbdw"]},
        title="average temperature shift", xlabel="t (s)", ylabel="<dT> (K)")

    # summary table
    rows = []
    for name in case.field_names:
        rows.append([name, rep.sigma[name], rep.xi[name],
                     rep.baseline[name][0], rep.baseline[name][1]]
                    + [rep.curves[name][m].e_rel[-1] for m in METHODS])
    write_csv(rdir / "summary.csv",
              ["field", "sigma", "xi", "E_baseline", "eps_baseline",
               "eps_geim", "eps_trgeim", "eps_pbdw"], rows)

    if cfg.heatmaps:
        for name in case.field_names:
            charts.heatmap(rdir / f"field_{name}_final.svg", case.mesh,
                           rep.truth_test.matrix(name)[-1],
                           title=f"{name} at final test time")


def run_pipeline(config) -> ReconstructionReport:
    """Run all four stages for one benchmark configuration."""
    cfg = config if isinstance(config, PipelineConfig) \
        else load_config(config)
    case = get_benchmark(cfg.benchmark, **cfg.overrides)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    try:
        runs = _stage_snapshots(case, cfg, out)
    except Exception as exc:
        raise StageError("snapshots", str(exc)) from exc

    has_mu = case.mu_box is not None
    train_mus = list(case.mu_train) if has_mu else [None]
    test_mus = list(case.mu_test) if has_mu else [None]
    truth_star = runs[("fom", _mu_key(test_mus[0]))]
    biased_star = runs[(case.biased_mode, _mu_key(test_mus[0]))]
    initial = {n: truth_star.matrix(n)[0] for n in case.field_names}
    scales = resolve_scales(case, initial)
    try:
        train_set = scale_set(
            _concat_over_mu(case, runs, case.biased_mode, train_mus,
                            case.t_train), scales)
        truth_test = _concat_over_mu(case, runs, "fom", test_mus, case.t_test)
        biased_test = _concat_over_mu(case, runs, case.biased_mode, test_mus,
                                      case.t_test)
        geim_models, pbdw_models = _stage_offline(case, cfg, out, train_set)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("offline", str(exc)) from exc

    try:
        (m_values, curves, baseline, sigma, xi_star, outputs, bands,
         residual_rows) = _stage_online(case, cfg, out, geim_models,
                                        pbdw_models, truth_test, biased_test,
                                        truth_star, scales)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("online", str(exc)) from exc

    rep = ReconstructionReport(
        benchmark=case.name, m_values=m_values, curves=curves,
        baseline=baseline, sigma=sigma, xi=xi_star, outputs=outputs,
        uq=bands, scales=scales, out_dir=str(out), case=case,
        geim_models=geim_models, pbdw_models=pbdw_models,
        truth_test=truth_test, biased_test=biased_test)

    try:
        cm_ref = expand_materials(case.mesh, case.materials)
        biased_out = global_outputs(biased_star, cm_ref, case.p0)
        _stage_report(case, cfg, out, rep, residual_rows, biased_out)
    except Exception as exc:
        raise StageError("report", str(exc)) from exc
    return rep
