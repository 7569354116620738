"""Unsteady heat conduction with the fission power density as source.

Implicit Euler on a five-point stencil with harmonic-mean face
conductivity.  SYMMETRY sides are adiabatic; every other side clamps the
face temperature to the fixed boundary value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import SingularSystem
from .fields import BoundaryTag, ScalarField, StructuredMesh
from .neutronics import CellMaterials, NU_PER_FISSION
from .stencil import diffusion_operator


@dataclass(frozen=True)
class RegionThermal:
    """Thermal constants of one region."""

    conductivity: float   # W/(cm K)
    density: float        # g/cm^3
    heat_capacity: float  # J/(g K)

    def __post_init__(self):
        if min(self.conductivity, self.density, self.heat_capacity) <= 0:
            raise ValueError("thermal constants must be > 0")


@dataclass(frozen=True)
class ThermalProperties:
    """Per-region thermal constants plus the fixed boundary temperature."""

    regions: dict          # region id -> RegionThermal
    t_boundary: float      # K, applied on non-symmetry edges


@dataclass
class CellThermal:
    mesh: StructuredMesh
    conductivity: np.ndarray   # (n,)
    rho_cp: np.ndarray         # (n,)
    t_boundary: float


def expand_thermal(mesh: StructuredMesh, props: ThermalProperties) -> CellThermal:
    k = np.zeros(mesh.n_cells)
    rho_cp = np.zeros(mesh.n_cells)
    seen = np.zeros(mesh.n_cells, dtype=bool)
    for rid, reg in props.regions.items():
        mask = mesh.region_mask(rid)
        seen |= mask
        k[mask] = reg.conductivity
        rho_cp[mask] = reg.density * reg.heat_capacity
    if not seen.all():
        missing = np.unique(mesh.region_id[~seen])
        raise KeyError(f"mesh regions {missing.tolist()} absent from the table")
    return CellThermal(mesh, k, rho_cp, float(props.t_boundary))


def power_density(phi: Sequence[ScalarField], cm: CellMaterials,
                  p0: float) -> ScalarField:
    """q''' = P0 * sum_g Sigma_f_g * phi_g, Sigma_f = nu*Sigma_f / 2.43."""
    if p0 <= 0:
        raise ValueError("P0 must be > 0")
    vals = np.zeros(cm.mesh.n_cells)
    for g, f in enumerate(phi):
        vals += cm.sigma_f[g] * f.values
    return ScalarField(cm.mesh, p0 * vals)


def advance_heat(temperature: ScalarField, source: ScalarField,
                 cth: CellThermal, dt: float,
                 workspace: dict = None) -> ScalarField:
    """One implicit-Euler conduction step with source evaluated at the new
    time level.  The conduction operator is time-independent, so passing a
    ``workspace`` dict reuses its LU factorisation across steps."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    mesh = temperature.mesh
    reuse = (workspace is not None and workspace.get("dt") == dt
             and workspace.get("cth") is cth)
    if reuse:
        lu, bc_diag = workspace["lu"], workspace["bc_diag"]
    else:
        op, bc_diag = diffusion_operator(mesh, cth.conductivity,
                                         removal=cth.rho_cp / dt)
        try:
            lu = splu(op.tocsc())
        except RuntimeError as exc:
            raise SingularSystem(f"heat factorisation: {exc}") from exc
        if workspace is not None:
            workspace.update(dt=dt, cth=cth, lu=lu, bc_diag=bc_diag)
    rhs = cth.rho_cp / dt * temperature.values + source.values \
        + bc_diag * cth.t_boundary
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("heat solve returned non-finite values")
    return ScalarField(mesh, sol)


def boundary_heat_flux(temperature: ScalarField, cth: CellThermal) -> float:
    """Total conductive flux out of the domain through clamped edges (W per
    unit height); equals the integrated source at steady state."""
    mesh = temperature.mesh
    t = mesh.as_grid(temperature.values)
    k = mesh.as_grid(cth.conductivity)
    total = 0.0
    edges = {
        "west": (t[:, 0], k[:, 0], mesh.dx, mesh.dy),
        "east": (t[:, -1], k[:, -1], mesh.dx, mesh.dy),
        "south": (t[0, :], k[0, :], mesh.dy, mesh.dx),
        "north": (t[-1, :], k[-1, :], mesh.dy, mesh.dx),
    }
    for side, (tc, kc, h, w) in edges.items():
        if mesh.boundary[side] is BoundaryTag.SYMMETRY:
            continue
        total += float(np.sum(kc * (tc - cth.t_boundary) / (h / 2.0) * w))
    return total
