"""Generalised empirical interpolation: greedy offline stage, plain online
interpolation and the Tikhonov-regularised online solve.

The greedy co-selects basis fields ("magic functions") and library sensors
("magic sensors") so that the interpolation matrix B_{m'm} = v_{m'}(q_m) is
lower triangular with unit diagonal; the online stage is then a forward
substitution.  The regularised variant replaces the interpolation condition
by the penalised least-squares system

    (B^T B + lam * T^T T) beta = B^T y + lam * T^T T beta_mean

with T the diagonal matrix of inverse training-coefficient standard
deviations, which pulls noisy solutions toward the training statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import (DegenerateSnapshot, LibraryExhausted, SizeMismatch,
                     SingularSystem, ZeroVariance)
from .fields import ScalarField, StructuredMesh, l2_norms
from .reduction import SnapshotSet
from .sensing import SensorFunctional, functional_matrix, measure_matrix


@dataclass(frozen=True)
class GeimModel:
    """GEIM offline product for one field.

    Attributes
    ----------
    magic_matrix : np.ndarray
        Magic functions stacked as rows, shape (M, n_cells).
    magic_sensors : tuple of SensorFunctional
        Selected sensors, in selection order.
    sensor_indices : tuple of int
        Positions of the magic sensors in the original library.
    B : np.ndarray
        Interpolation matrix B_{m'm} = v_{m'}(q_m); lower triangular with
        unit diagonal up to round-off.
    training_errors : np.ndarray
        E_m, the maximum training L^2 interpolation error after m terms.
    beta_mean, beta_std : np.ndarray or None
        Per-index sample statistics of the clean training coefficients
        (None when the training set cannot support them, e.g. one snapshot).
    tikhonov_diag : np.ndarray or None
        Diagonal of the regularisation matrix, 1/|sigma_beta|.
    """

    mesh: StructuredMesh
    field_name: str
    magic_matrix: np.ndarray
    magic_sensors: tuple
    sensor_indices: tuple
    B: np.ndarray
    training_errors: np.ndarray
    beta_mean: np.ndarray = None
    beta_std: np.ndarray = None
    tikhonov_diag: np.ndarray = None

    @property
    def n_sensors(self) -> int:
        return len(self.magic_sensors)

    def magic_function(self, m: int) -> ScalarField:
        return ScalarField(self.mesh, self.magic_matrix[m])


def geim_greedy(train: SnapshotSet, field_name: str,
                library: Sequence[SensorFunctional],
                m_max: int, delta: float = 0.0) -> GeimModel:
    """Greedy co-selection of magic functions and magic sensors.

    The first basis element is the largest-norm snapshot, paired with the
    sensor reading it strongest; each later step interpolates every
    snapshot with the current model, takes the worst-approximated one,
    pairs its residual with the sensor seeing that residual strongest and
    normalises the residual into the next magic function.  Stops after
    ``m_max`` terms or once the maximum training error E_m drops below
    ``delta``.  Argmax ties break toward the lowest index; sensors are
    never reused.
    """
    if not library:
        raise LibraryExhausted("empty sensor library")
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    mesh = train.mesh
    snaps = train.matrix(field_name)

    # Clean readings of every snapshot under every library sensor, once.
    meas_all = measure_matrix(library, snaps)          # (N_s, n_lib)

    remaining = list(range(len(library)))
    selected: list[int] = []
    magic_rows: list[np.ndarray] = []
    magic_meas: list[np.ndarray] = []                  # library readings of q_m
    errors: list[float] = []
    B = np.zeros((m_max, m_max))

    # first iteration: largest snapshot, strongest sensor
    pick = int(np.argmax(l2_norms(mesh, snaps)))
    _select(meas_all[pick], snaps[pick], remaining, selected,
            magic_rows, magic_meas)
    B[0, 0] = magic_meas[0][selected[0]]

    while True:
        m = len(magic_rows)
        Q = np.vstack(magic_rows)
        beta = solve_triangular(B[:m, :m], meas_all[:, selected].T,
                                lower=True).T          # (N_s, m)
        resid = snaps - beta @ Q
        errs = l2_norms(mesh, resid)
        errors.append(float(errs.max()))
        if errors[-1] < delta or m == m_max:
            break
        if not remaining:
            raise LibraryExhausted(
                f"all {len(library)} sensors used at m = {m}, E_m = {errors[-1]:.3e}")
        pick = int(np.argmax(errs))
        resid_meas = meas_all[pick] - beta[pick] @ np.vstack(magic_meas)
        _select(resid_meas, resid[pick], remaining, selected,
                magic_rows, magic_meas,
                scale=np.max(np.abs(meas_all[pick])))
        # new row and column of B; the upper entries are interpolation
        # residual readings and vanish up to round-off
        for j in range(m + 1):
            B[m, j] = magic_meas[j][selected[m]]
            B[j, m] = magic_meas[m][selected[j]]

    model = GeimModel(
        mesh=mesh, field_name=field_name,
        magic_matrix=np.vstack(magic_rows),
        magic_sensors=tuple(library[k] for k in selected),
        sensor_indices=tuple(selected),
        B=B[: len(selected), : len(selected)].copy(),
        training_errors=np.array(errors),
    )
    try:
        mean, std, tdiag = coefficient_stats(model, train)
    except ZeroVariance:
        return model
    return replace(model, beta_mean=mean, beta_std=std, tikhonov_diag=tdiag)


def _select(readings, field_row, remaining, selected, magic_rows, magic_meas,
            scale=None):
    """Pick the remaining sensor with the strongest |reading| and append the
    normalised field as the next magic function."""
    scores = np.abs(readings[remaining])
    best = int(np.argmax(scores))
    floor = 1e-13 * (scale if scale else np.max(np.abs(readings), initial=0.0))
    if scores[best] <= max(floor, 0.0):
        raise DegenerateSnapshot(
            "residual reads (numerically) zero under every remaining sensor")
    k = remaining.pop(best)
    value = readings[k]
    selected.append(k)
    magic_rows.append(field_row / value)
    magic_meas.append(readings / value)


def geim_online(model: GeimModel, y: np.ndarray, m: int = None):
    """Interpolation coefficients and field estimate from M readings.

    Solves the leading M x M lower-triangular block of B by forward
    substitution and assembles the interpolant.  Returns (beta, estimate).
    """
    m = model.n_sensors if m is None else int(m)
    y = np.asarray(y, dtype=np.float64)
    if m < 1 or m > model.n_sensors:
        raise SizeMismatch(f"m = {m} outside 1..{model.n_sensors}")
    if y.shape[0] != m:
        raise SizeMismatch(f"y has {y.shape[0]} entries, expected {m}")
    beta = solve_triangular(np.tril(model.B[:m, :m]), y, lower=True)
    estimate = ScalarField(model.mesh, beta @ model.magic_matrix[:m])
    return beta, estimate


def trgeim_online(model: GeimModel, y: np.ndarray, m: int = None,
                  lam: float = 0.0):
    """Tikhonov-regularised online solve; lam = noise standard deviation is
    the optimal choice for uncorrelated Gaussian noise.  Returns
    (beta, estimate)."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if model.beta_mean is None:
        raise ZeroVariance("model carries no training statistics")
    m = model.n_sensors if m is None else int(m)
    y = np.asarray(y, dtype=np.float64)
    if m < 1 or m > model.n_sensors:
        raise SizeMismatch(f"m = {m} outside 1..{model.n_sensors}")
    if y.shape[0] != m:
        raise SizeMismatch(f"y has {y.shape[0]} entries, expected {m}")
    B = np.tril(model.B[:m, :m])
    t2 = model.tikhonov_diag[:m] ** 2
    lhs = B.T @ B + lam * np.diag(t2)
    rhs = B.T @ y + lam * t2 * model.beta_mean[:m]
    try:
        beta = cho_solve(cho_factor(lhs), rhs)
    except np.linalg.LinAlgError as exc:   # pragma: no cover - lam>0 is SPD
        raise SingularSystem(f"regularised system failed: {exc}") from exc
    estimate = ScalarField(model.mesh, beta @ model.magic_matrix[:m])
    return beta, estimate


def geim_online_batch(model: GeimModel, ys: np.ndarray, m: int,
                      lam: float = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised online solve for a stack of measurement vectors.

    ``ys`` has shape (K, m).  With ``lam`` None the plain interpolation is
    used, otherwise the regularised system.  Returns (betas (K, m),
    estimates (K, n_cells)).
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    if ys.shape[1] != m:
        raise SizeMismatch(f"measurements have {ys.shape[1]} columns, expected {m}")
    B = np.tril(model.B[:m, :m])
    if lam is None:
        betas = solve_triangular(B, ys.T, lower=True).T
    else:
        if model.beta_mean is None:
            raise ZeroVariance("model carries no training statistics")
        t2 = model.tikhonov_diag[:m] ** 2
        lhs = B.T @ B + lam * np.diag(t2)
        rhs = B.T @ ys.T + lam * (t2 * model.beta_mean[:m])[:, None]
        betas = cho_solve(cho_factor(lhs), rhs).T
    return betas, betas @ model.magic_matrix[:m]


def coefficient_stats(model: GeimModel, train: SnapshotSet):
    """Sample mean/std of the clean training coefficients and the diagonal
    of the regularisation matrix.

    Raises ZeroVariance when any index has zero sample spread (fewer than
    two snapshots, or coefficients exactly constant).
    """
    snaps = train.matrix(model.field_name)
    if snaps.shape[0] < 2:
        raise ZeroVariance("need at least two training snapshots")
    ys = measure_matrix(model.magic_sensors, snaps)        # (N_s, M)
    betas = solve_triangular(np.tril(model.B), ys.T, lower=True).T
    mean = betas.mean(axis=0)
    std = betas.std(axis=0, ddof=1)
    if np.any(~np.isfinite(std)) or np.any(std == 0.0):
        bad = int(np.flatnonzero((~np.isfinite(std)) | (std == 0.0))[0])
        raise ZeroVariance(f"training coefficient {bad} has zero variance")
    return mean, std, 1.0 / np.abs(std)
