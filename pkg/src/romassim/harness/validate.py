"""Built-in validation suites for the CLI.

``fast`` exercises closed-form physics and structural checks in seconds;
``full`` adds a reduced end-to-end bias-correction run.  Each check prints
one PASS/FAIL line; the exit code is the number of failures.
"""

from __future__ import annotations

import tempfile

import numpy as np

from ..fields import StructuredMesh, constant_field
from ..geim import geim_greedy
from ..multiphysics import transient_factor
from ..neutronics import MaterialTable, RegionNuclear, expand_materials, \
    solve_keff
from ..reduction import SnapshotSet, compute_pod, pod_project
from ..sensing import build_sensor_library
from .benchmarks import iaea_materials, twigl_schedule


def _check(name, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] {name}" + (f": {detail}" if detail else ""))
    return ok


def _infinite_medium_k() -> bool:
    mesh = StructuredMesh(nx=1, ny=1, dx=1.0, dy=1.0, origin=(0, 0),
                          region_id=[1],
                          boundary={s: "symmetry" for s in
                                    ("west", "east", "south", "north")})
    reg = iaea_materials().regions[1]
    table = MaterialTable(
        regions={1: RegionNuclear(d=reg.d, sigma_a=reg.sigma_a,
                                  sigma_s12=reg.sigma_s12,
                                  nu_sigma_f=reg.nu_sigma_f, chi=reg.chi,
                                  buckling=(0.0, 0.0), velocity=reg.velocity)},
        betas=[0.0065], lambdas=[0.08])
    state = solve_keff(mesh, table, tol=1e-10)
    expected = 0.135 * 0.02 / 0.085 / (0.01 + 0.02)
    return _check("infinite-medium k", abs(state.k_eff - expected) < 1e-5,
                  f"k = {state.k_eff:.6f}, expected {expected:.6f}")


def _schedule_continuity() -> bool:
    sched = twigl_schedule()
    ramp_end = transient_factor(sched, 1, 2, 0.2)
    held = transient_factor(sched, 1, 2, 0.2 + 1e-12)
    ok = abs(ramp_end - 0.97666) < 1e-4 and abs(held - 0.97666) < 1e-9
    return _check("transient-schedule continuity", ok,
                  f"ramp end {ramp_end:.6f}, held {held:.6f}")


def _geim_structure() -> bool:
    rng = np.random.Generator(np.random.Philox(7))
    mesh = StructuredMesh(nx=20, ny=20, dx=1.0, dy=1.0, origin=(0, 0),
                          region_id=np.zeros(400))
    x, y = mesh.cell_centers()
    snaps = np.vstack([np.sin(0.1 * (k + 1) * x) * np.cos(0.07 * (k + 2) * y)
                       + rng.normal(0, 0.01, x.size) for k in range(12)])
    train = SnapshotSet(mesh, np.arange(12.0), {"u": snaps})
    library = build_sensor_library(mesh, stride=3, spread=1.0)
    model = geim_greedy(train, "u", library, m_max=8)
    b = model.B
    upper_ok = np.max(np.abs(np.triu(b, k=1))) <= 1e-10
    diag_ok = np.max(np.abs(np.diag(b) - 1)) <= 1e-10
    sub_ok = np.max(np.abs(np.tril(b, k=-1)), initial=0.0) <= 1 + 1e-10
    return _check("interpolation-matrix structure",
                  upper_ok and diag_ok and sub_ok,
                  f"max |upper| = {np.max(np.abs(np.triu(b, 1))):.2e}")


def _pod_energy() -> bool:
    rng = np.random.Generator(np.random.Philox(11))
    mesh = StructuredMesh(nx=15, ny=15, dx=0.5, dy=0.5, origin=(0, 0),
                          region_id=np.zeros(225))
    snaps = rng.normal(size=(20, 225))
    train = SnapshotSet(mesh, np.arange(20.0), {"u": snaps})
    basis = compute_pod(train, "u", 6)
    recon_err = 0.0
    for i in range(20):
        alpha = pod_project(basis, train.snapshot("u", i))
        resid = snaps[i] - alpha @ basis.mode_matrix
        recon_err += float(np.dot(resid, resid) * mesh.cell_area)
    tail = float(np.sum(basis.eigenvalues[6:]))
    ok = abs(recon_err - tail) <= 1e-8 * max(tail, 1e-300)
    return _check("pod energy identity", ok,
                  f"sum residual^2 = {recon_err:.6e}, tail = {tail:.6e}")


def _reduced_bias_correction() -> bool:
    from .pipeline import PipelineConfig, run_pipeline
    with tempfile.TemporaryDirectory() as tmp:
        cfg = PipelineConfig(
            benchmark="IAEA2DPWR", out_dir=tmp, seed=17,
            overrides={"cells_per_side": 34, "m_max": 8}, n_uq_draws=20,
            n_validation=6)
        rep = run_pipeline(cfg)
    ok = all(rep.curves[n]["trgeim"].e_rel[-1] < rep.baseline[n][1]
             for n in rep.case.field_names)
    worst = max(rep.curves[n]["trgeim"].e_rel[-1]
                for n in rep.case.field_names)
    return _check("reduced bias-correction run", ok,
                  f"worst trgeim eps = {worst:.3e}")


def run_suite(suite: str = "fast") -> int:
    checks = [_infinite_medium_k, _schedule_continuity, _geim_structure,
              _pod_energy]
    if suite == "full":
        checks.append(_reduced_bias_correction)
    failures = sum(0 if fn() else 1 for fn in checks)
    print(f"{len(checks) - failures}/{len(checks)} checks passed")
    return failures
