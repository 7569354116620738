"""Error metrics, global outputs and Monte-Carlo uncertainty bands."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import EmptySet, MissingField
from ..fields import ScalarField, StructuredMesh, l2_norms
from ..geim import GeimModel, geim_online_batch
from ..neutronics import CellMaterials
from ..pbdw import PbdwModel, pbdw_online_batch
from ..reduction import SnapshotSet
from ..sensing import measure_matrix


def _rows(mesh, fields) -> np.ndarray:
    if isinstance(fields, np.ndarray):
        return np.atleast_2d(fields)
    return np.vstack([f.values for f in fields])


def compute_errors(mesh: StructuredMesh, truths, estimates):
    """Average absolute and relative L^2 errors over a prediction set.

    E = mean over the set of ||truth - estimate||_{L^2};
    eps = mean of ||truth - estimate|| / ||truth||.
    """
    t = _rows(mesh, truths)
    e = _rows(mesh, estimates)
    if t.shape[0] == 0:
        raise EmptySet("no snapshots to compare")
    if t.shape != e.shape:
        raise ValueError(f"truth {t.shape} vs estimates {e.shape}")
    resid = l2_norms(mesh, t - e)
    norms = l2_norms(mesh, t)
    return float(resid.mean()), float(np.mean(resid / norms))


# -- online estimator adapters -------------------------------------------------

class GeimEstimator:
    """Uniform online interface over (TR-)GEIM; ``lam`` None means the plain
    interpolation solve."""

    def __init__(self, model: GeimModel, m: int, lam: float = None):
        self.model = model
        self.m = int(m)
        self.lam = lam

    @property
    def sensors(self):
        return self.model.magic_sensors[: self.m]

    def estimate_batch(self, ys: np.ndarray) -> np.ndarray:
        return geim_online_batch(self.model, ys, self.m, lam=self.lam)[1]


class PbdwEstimator:
    """PBDW online adapter.

    The background dimension defaults to the largest n <= min(N, m) whose
    recorded inf-sup constant beta_{n,m} is positive, so the saddle system
    stays unisolvent even when symmetry ties hand the greedy redundant
    sensors at small m.
    """

    def __init__(self, model: PbdwModel, m: int, xi: float, n: int = None):
        self.model = model
        self.m = int(m)
        self.xi = float(xi)
        if n is None:
            n = 1
            for k in range(1, min(model.n_background, self.m) + 1):
                if model.beta_table[k - 1, self.m - 1] > 1e-8:
                    n = k
        self.n = int(n)

    @property
    def sensors(self):
        return self.model.sensors[: self.m]

    def estimate_batch(self, ys: np.ndarray) -> np.ndarray:
        return pbdw_online_batch(self.model, ys, self.xi,
                                 m=self.m, n=self.n)[2]


# -- global outputs -------------------------------------------------------------

@dataclass
class GlobalOutputs:
    """Reactor power (raw and normalised to its reference) and the
    area-averaged temperature shift."""

    times: np.ndarray
    power: np.ndarray
    power_rel: np.ndarray
    dtemp: np.ndarray


def power_series(mesh: StructuredMesh, phi1: np.ndarray, phi2: np.ndarray,
                 cm: CellMaterials, p0: float) -> np.ndarray:
    """P(t) = P0 sum_g integral Sigma_f,g phi_g."""
    w = cm.sigma_f * mesh.cell_area
    return p0 * (np.atleast_2d(phi1) @ w[0] + np.atleast_2d(phi2) @ w[1])


def dtemp_series(mesh: StructuredMesh, temps: np.ndarray,
                 t0_l1: float) -> np.ndarray:
    """Average temperature shift (||T(t)||_L1 - ||T(0)||_L1) / |Omega|."""
    l1 = np.sum(np.abs(np.atleast_2d(temps)), axis=1) * mesh.cell_area
    return (l1 - t0_l1) / mesh.domain_area


def global_outputs(snapshots: SnapshotSet, cm: CellMaterials, p0: float,
                   p_ref: float = None, t0_l1: float = None) -> GlobalOutputs:
    """Global output series of a snapshot set holding T, phi1, phi2.

    ``p_ref`` and ``t0_l1`` default to the set's own first sample, which is
    the initial steady state for a full transient run; pass them explicitly
    for sets that start mid-transient.
    """
    for name in ("T", "phi1", "phi2"):
        if name not in snapshots.fields:
            raise MissingField(f"snapshot set lacks {name!r}")
    mesh = snapshots.mesh
    power = power_series(mesh, snapshots.matrix("phi1"),
                         snapshots.matrix("phi2"), cm, p0)
    if t0_l1 is None:
        t0_l1 = float(np.sum(np.abs(snapshots.matrix("T")[0])) * mesh.cell_area)
    dtemp = dtemp_series(mesh, snapshots.matrix("T"), t0_l1)
    p_ref = float(power[0]) if p_ref is None else float(p_ref)
    return GlobalOutputs(times=snapshots.params[:, 0].copy(), power=power,
                         power_rel=power / p_ref, dtemp=dtemp)


# -- Monte-Carlo bands -----------------------------------------------------------

@dataclass
class Band:
    lo: np.ndarray
    hi: np.ndarray

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def coverage(self, series: np.ndarray) -> float:
        s = np.asarray(series)
        inside = (s >= self.lo - 1e-300) & (s <= self.hi + 1e-300)
        return float(np.mean(inside))


def band_percentiles(samples: np.ndarray, level: float = 95.0) -> Band:
    """Empirical band over axis 0; the tails use the lower/higher order
    statistics so that two draws give exactly their min/max."""
    tail = (100.0 - level) / 2.0
    lo = np.percentile(samples, tail, axis=0, method="lower")
    hi = np.percentile(samples, 100.0 - tail, axis=0, method="higher")
    return Band(lo=lo, hi=hi)


def draw_seed(root: int, purpose: int, *indices) -> np.random.SeedSequence:
    """Deterministic seed derivation: every (purpose, index...) tuple gets
    its own independent stream regardless of evaluation order."""
    return np.random.SeedSequence([root, purpose] + [int(i) for i in indices])


@dataclass
class UqBands:
    times: np.ndarray
    power: Band
    dtemp: Band
    n_draws: int


def uq_bands(estimators: dict, truth: SnapshotSet, sigma: dict,
             n_draws: int, cm: CellMaterials, p0: float,
             p_ref: float, t0_l1: float, level: float = 95.0,
             seed: int = 0, purpose: int = 3,
             scales: dict = None) -> UqBands:
    """Percentile bands of the reconstructed global outputs.

    ``estimators`` maps field name -> online estimator; each draw perturbs
    the clean sensor readings of the truth trajectory with iid Gaussian
    noise of the field's sigma, reconstructs every field, and evaluates the
    power and average-temperature-shift series.  When the estimators work
    in scaled field units, ``truth``/``sigma`` must be scaled consistently
    and ``scales`` converts the reconstructions back to raw units.
    """
    if n_draws < 2:
        raise ValueError("need at least two draws")
    mesh = truth.mesh
    names = sorted(estimators)
    clean = {}
    for name in names:
        est = estimators[name]
        clean[name] = measure_matrix(est.sensors, truth.matrix(name))
    n_times = truth.n_snapshots
    powers = np.empty((n_draws, n_times))
    dtemps = np.empty((n_draws, n_times))
    for d in range(n_draws):
        recon = {}
        for f_id, name in enumerate(names):
            est = estimators[name]
            y = clean[name]
            s = sigma[name]
            if s > 0:
                rng = np.random.Generator(np.random.Philox(
                    draw_seed(seed, purpose, f_id, d)))
                y = y + s * rng.standard_normal(y.shape)
            recon[name] = est.estimate_batch(y)
            if scales is not None:
                recon[name] = recon[name] * scales[name]
        powers[d] = power_series(mesh, recon["phi1"], recon["phi2"], cm, p0) \
            / p_ref
        dtemps[d] = dtemp_series(mesh, recon["T"], t0_l1)
    return UqBands(times=truth.params[:, 0].copy(),
                   power=band_percentiles(powers, level),
                   dtemp=band_percentiles(dtemps, level),
                   n_draws=n_draws)
