"""Parameterised-background data-weak state estimation.

Offline: a POD background space Z_N, a sensor-based update space U_M built
by the stability-driven SGreedy selection, and the Gram matrices

    A_{mm'} = (g_m, g_{m'})      K_{mn} = (g_m, zeta_n)

with g_m the Riesz representations of the selected sensors.  Online: solve
the (M+N) saddle system

    [[A + xi*M*I, K], [K^T, 0]] [theta; alpha] = [y; 0]

and assemble u* = sum alpha_n zeta_n + sum theta_m g_m.  The inf-sup
constant beta_{n,m} is the cosine of the largest principal angle between
Z_n and U_m, computed from the singular values of the cross-Gram of the
orthonormalised bases.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgWarning, cho_factor, cho_solve, lu_factor, \
    lu_solve

from .errors import EmptyValidation, LibraryExhausted, RankDeficient, \
    SingularSaddle, StalledSelection
from .fields import ScalarField, StructuredMesh, l2_norms
from .reduction import PodBasis
from .sensing import SensorFunctional, measure_matrix, riesz_representation

_STALL_TOL = 1e-14


def _as_rows(fields) -> np.ndarray:
    if isinstance(fields, np.ndarray):
        return np.atleast_2d(fields)
    return np.vstack([f.values for f in fields])


def _orthonormal_rows(mesh: StructuredMesh, rows: np.ndarray) -> np.ndarray:
    """L^2-orthonormal basis of the row span (symmetric orthogonalisation).

    Raises RankDeficient when the Gram matrix is numerically singular.
    """
    gram = rows @ rows.T * mesh.cell_area
    eigval, eigvec = np.linalg.eigh(gram)
    if eigval[-1] <= 0 or eigval[0] <= 1e-12 * eigval[-1]:
        raise RankDeficient("span is numerically rank deficient")
    return (eigvec / np.sqrt(eigval)).T @ rows


def _infsup_direction(mesh, z_rows, u_rows):
    """Inf-sup constant of (Z, U) plus the least-stable unit element of Z."""
    zon = _orthonormal_rows(mesh, _as_rows(z_rows))
    uon = _orthonormal_rows(mesh, _as_rows(u_rows))
    cross = zon @ uon.T * mesh.cell_area
    left, sing, _ = np.linalg.svd(cross, full_matrices=True)
    w_inf = left[:, -1] @ zon
    beta = float(sing[-1]) if zon.shape[0] <= uon.shape[0] else 0.0
    return beta, w_inf


def inf_sup(mesh: StructuredMesh, z_rows, u_rows) -> float:
    """Stability constant between the spans of two row stacks of fields:
    the smallest cosine of the principal angles, in [0, 1]."""
    return _infsup_direction(mesh, z_rows, u_rows)[0]


@dataclass(frozen=True)
class PbdwModel:
    """PBDW offline product for one field.

    Attributes
    ----------
    background : np.ndarray
        Background modes zeta_n as rows, shape (N, n_cells).
    update : np.ndarray
        Riesz representations g_m as rows, shape (M, n_cells).
    sensors : tuple of SensorFunctional
        Selected sensors, in selection order.
    A, K : np.ndarray
        Update Gram matrix (M, M) and cross matrix (M, N).
    beta_path : np.ndarray
        beta_{min(N,m), m} recorded while the selection ran, m = 1..M.
    beta_table : np.ndarray
        Full (N, M) table of beta_{n,m} (zero where m < n).
    xi : float or None
        Tuned regularisation weight, if any.
    """

    mesh: StructuredMesh
    field_name: str
    background: np.ndarray
    update: np.ndarray
    sensors: tuple
    sensor_indices: tuple
    A: np.ndarray
    K: np.ndarray
    beta_path: np.ndarray
    beta_table: np.ndarray
    xi: float = None

    @property
    def n_background(self) -> int:
        return self.background.shape[0]

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)


def sgreedy(pod_basis: PodBasis, library: Sequence[SensorFunctional],
            m_sensors: int) -> PbdwModel:
    """Stability-driven greedy sensor selection for the update space.

    The first sensor maximises |v(zeta_1)|; each later step finds the
    least-stable background direction w_inf of the current (Z_n, U_m) pair
    (n = min(N, m)), its projection onto the update span, and picks the
    sensor reading the gap w_inf - w_sup strongest.  Sensors never repeat.
    """
    if m_sensors < 1:
        raise ValueError("m_sensors must be >= 1")
    if len(library) < m_sensors:
        raise LibraryExhausted(
            f"library has {len(library)} sensors, {m_sensors} requested")
    mesh = pod_basis.mesh
    z_rows = pod_basis.mode_matrix
    n_bg = z_rows.shape[0]

    remaining = list(range(len(library)))
    selected: list[int] = []
    g_rows: list[np.ndarray] = []
    beta_path: list[float] = []

    def _grab(scores):
        best = int(np.argmax(scores))
        if scores[best] < _STALL_TOL:
            raise StalledSelection(
                f"best remaining sensor scores {scores[best]:.3e}")
        k = remaining.pop(best)
        selected.append(k)
        g_rows.append(riesz_representation(library[k]).values)

    mode1 = measure_matrix(library, z_rows[0])[0]
    _grab(np.abs(mode1[remaining]))

    for m in range(1, m_sensors):
        n = min(n_bg, m)
        g_mat = np.vstack(g_rows)
        beta, w_inf = _infsup_direction(mesh, z_rows[:n], g_mat)
        beta_path.append(beta)
        # supremizer: L^2 projection of w_inf onto the update span
        gram = g_mat @ g_mat.T * mesh.cell_area
        theta = cho_solve(cho_factor(gram), g_mat @ w_inf * mesh.cell_area)
        gap = w_inf - theta @ g_mat
        gap_meas = measure_matrix(library, gap)[0]
        _grab(np.abs(gap_meas[remaining]))

    g_mat = np.vstack(g_rows)
    beta_path.append(_infsup_direction(
        mesh, z_rows[: min(n_bg, m_sensors)], g_mat)[0])

    table = np.zeros((n_bg, m_sensors))
    for n in range(1, n_bg + 1):
        for m in range(n, m_sensors + 1):
            table[n - 1, m - 1] = inf_sup(mesh, z_rows[:n], g_mat[:m])

    return PbdwModel(
        mesh=mesh, field_name=pod_basis.field_name,
        background=z_rows.copy(), update=g_mat,
        sensors=tuple(library[k] for k in selected),
        sensor_indices=tuple(selected),
        A=g_mat @ g_mat.T * mesh.cell_area,
        K=g_mat @ z_rows.T * mesh.cell_area,
        beta_path=np.array(beta_path),
        beta_table=table,
    )


def background_update_model(mesh: StructuredMesh, field_name: str,
                            background_rows: np.ndarray,
                            sensors: Sequence[SensorFunctional]) -> PbdwModel:
    """Assemble a PbdwModel from externally chosen modes and sensors (no
    greedy); used e.g. to compare against GEIM with shared spaces."""
    z = np.atleast_2d(np.asarray(background_rows, dtype=np.float64))
    g = np.vstack([riesz_representation(s).values for s in sensors])
    n, m = z.shape[0], g.shape[0]
    table = np.zeros((n, m))
    for nn in range(1, n + 1):
        for mm in range(nn, m + 1):
            table[nn - 1, mm - 1] = inf_sup(mesh, z[:nn], g[:mm])
    return PbdwModel(
        mesh=mesh, field_name=field_name, background=z, update=g,
        sensors=tuple(sensors), sensor_indices=tuple(range(m)),
        A=g @ g.T * mesh.cell_area, K=g @ z.T * mesh.cell_area,
        beta_path=np.diag(table[: min(n, m), : min(n, m)]),
        beta_table=table,
    )


def _saddle(model: PbdwModel, xi: float, m: int, n: int) -> np.ndarray:
    a = model.A[:m, :m] + xi * m * np.eye(m)
    k = model.K[:m, :n]
    top = np.hstack([a, k])
    bottom = np.hstack([k.T, np.zeros((n, n))])
    return np.vstack([top, bottom])


def _check_saddle(model: PbdwModel, m: int, n: int):
    """Structural solvability: the background coefficients are determined
    only when the cross matrix has full column rank (which also implies
    m >= n).  The blocks are tiny, so an explicit SVD check is cheap and
    catches the rank collapse a pivoted LU would silently absorb."""
    k = model.K[:m, :n]
    sing = np.linalg.svd(k, compute_uv=False)
    smin = float(sing[-1]) if m >= n else 0.0
    if m < n or smin <= 1e-12 * float(sing[0]):
        raise SingularSaddle(
            f"background unidentifiable from {m} sensors "
            f"(cross-matrix s_min = {smin:.3e})", smin)


def _solve_saddle(p: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LinAlgWarning)
            sol = np.linalg.solve(p, rhs)
    except np.linalg.LinAlgError as exc:
        smin = float(np.linalg.svd(p, compute_uv=False)[-1])
        raise SingularSaddle(
            f"saddle system singular (s_min = {smin:.3e})", smin) from exc
    if not np.all(np.isfinite(sol)):
        smin = float(np.linalg.svd(p, compute_uv=False)[-1])
        raise SingularSaddle(
            f"saddle solve returned non-finite values (s_min = {smin:.3e})",
            smin)
    return sol


def pbdw_online(model: PbdwModel, y: np.ndarray, xi: float,
                m: int = None, n: int = None):
    """Saddle-point state estimate from M readings.

    Returns (alpha, theta, estimate): background coefficients, update
    coefficients and the assembled field.
    """
    if xi < 0:
        raise ValueError("xi must be >= 0")
    m = model.n_sensors if m is None else int(m)
    n = model.n_background if n is None else int(n)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != m:
        raise SingularSaddle(f"y has {y.shape[0]} entries, expected {m}")
    _check_saddle(model, m, n)
    p = _saddle(model, xi, m, n)
    sol = _solve_saddle(p, np.concatenate([y, np.zeros(n)]))
    theta, alpha = sol[:m], sol[m:]
    est = ScalarField(model.mesh,
                      alpha @ model.background[:n] + theta @ model.update[:m])
    return alpha, theta, est


def pbdw_online_batch(model: PbdwModel, ys: np.ndarray, xi: float,
                      m: int = None, n: int = None):
    """Vectorised online solve: ys (K, m) -> (alphas (K, n), thetas (K, m),
    estimates (K, n_cells)).  One factorisation serves all draws."""
    m = model.n_sensors if m is None else int(m)
    n = model.n_background if n is None else int(n)
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    _check_saddle(model, m, n)
    p = _saddle(model, xi, m, n)
    rhs = np.vstack([ys.T, np.zeros((n, ys.shape[0]))])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        sol = lu_solve(lu_factor(p), rhs)
    thetas, alphas = sol[:m].T, sol[m:].T
    estimates = alphas @ model.background[:n] + thetas @ model.update[:m]
    return alphas, thetas, estimates


def xi_error_curve(model: PbdwModel, truths, measurements,
                   xi_grid, m: int = None, n: int = None) -> np.ndarray:
    """Mean relative L^2 reconstruction error over the validation pairs for
    every candidate xi."""
    truth_rows = _as_rows(truths)
    ys = np.atleast_2d(np.asarray(measurements, dtype=np.float64))
    if truth_rows.shape[0] == 0:
        raise EmptyValidation("no validation snapshots")
    if ys.shape[0] != truth_rows.shape[0]:
        raise ValueError("validation snapshots and measurements differ in count")
    norms = l2_norms(model.mesh, truth_rows)
    errs = np.empty(len(xi_grid))
    for i, xi in enumerate(xi_grid):
        _, _, est = pbdw_online_batch(model, ys, float(xi), m=m, n=n)
        errs[i] = float(np.mean(
            l2_norms(model.mesh, truth_rows - est) / norms))
    return errs


def tune_xi(model: PbdwModel, truths, measurements, xi_grid,
            m: int = None, n: int = None) -> float:
    """Grid search for the regularisation weight: the xi minimising the mean
    relative reconstruction error on the validation set (ties break toward
    the smaller value)."""
    xi_grid = np.asarray(xi_grid, dtype=np.float64)
    if xi_grid.size == 0:
        raise EmptyValidation("empty xi grid")
    if np.any(xi_grid <= 0) or np.any(np.diff(xi_grid) < 0):
        raise ValueError("xi grid must be positive and sorted")
    errs = xi_error_curve(model, truths, measurements, xi_grid, m=m, n=n)
    return float(xi_grid[int(np.argmin(errs))])


def default_xi_grid() -> np.ndarray:
    return np.logspace(-6, 2, 13)


# -- a priori diagnostics -----------------------------------------------------

def noise_trace_term(model: PbdwModel, xi: float,
                     m: int = None, n: int = None) -> float:
    """Trace term of the imperfect-measurement error bound,
    Tr(P^-1 Itilde P^-T): the coefficient multiplying the noise variance."""
    m = model.n_sensors if m is None else int(m)
    n = model.n_background if n is None else int(n)
    p = _saddle(model, xi, m, n)
    x = np.linalg.solve(p, np.eye(m + n)[:, :m])
    return float(np.sum(x * x))


def best_fit_gap(model: PbdwModel, u: ScalarField,
                 m: int = None, n: int = None) -> float:
    """Distance from u to Z_n + (U_m orthogonalised against Z_n), the
    best-fit error appearing in the clean-data a priori bound."""
    m = model.n_sensors if m is None else int(m)
    n = model.n_background if n is None else int(n)
    mesh = model.mesh
    z = model.background[:n]
    g = model.update[:m]
    zon = _orthonormal_rows(mesh, z)
    g_perp = g - (g @ zon.T * mesh.cell_area) @ zon
    # SVD-based span of the update leftovers; tolerant to rank collapse
    _, sing, vt = np.linalg.svd(g_perp * np.sqrt(mesh.cell_area),
                                full_matrices=False)
    keep = sing > 1e-10 * max(sing[0], 1e-300)
    basis = zon
    if np.any(keep):
        basis = np.vstack([zon, vt[keep] / np.sqrt(mesh.cell_area)])
    resid = u.values - (basis @ u.values * mesh.cell_area) @ basis
    return float(np.sqrt(np.dot(resid, resid) * mesh.cell_area))
