"""Two-group neutron diffusion with delayed precursors: steady k-eigenvalue
initialisation and implicit-Euler transient stepping.

Group 1 is fast, group 2 thermal; the only scattering path is 1 -> 2.  The
transient step treats fluxes and precursors as one implicit block: the
precursor update is eliminated algebraically into the flux system, which is
then solved exactly (sparse LU), so the coupled residual is at round-off.
Material coefficients are frozen at the previous-step temperature by the
caller (semi-implicit contract); k_eff is the criticality eigenvalue of the
initial state and stays frozen during transients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import NoConvergence, NoFission, SingularSystem
from .fields import ScalarField, StructuredMesh, l2_norms
from .stencil import diffusion_operator

NU_PER_FISSION = 2.43   # fixed nu used to recover Sigma_f from nu*Sigma_f


@dataclass(frozen=True)
class RegionNuclear:
    """Group constants of one material region (index 0 = fast group)."""

    d: tuple            # diffusion coefficients (cm)
    sigma_a: tuple      # absorption (1/cm)
    sigma_s12: float    # group 1 -> 2 scattering (1/cm)
    nu_sigma_f: tuple   # nu * fission (1/cm)
    chi: tuple          # fission spectrum
    buckling: tuple     # axial buckling B_z^2 (1/cm^2)
    velocity: tuple     # group speeds (cm/s)

    def __post_init__(self):
        for name in ("d", "sigma_a", "nu_sigma_f", "buckling"):
            if any(v < 0 for v in getattr(self, name)):
                raise ValueError(f"{name} must be >= 0")
        if self.sigma_s12 < 0:
            raise ValueError("sigma_s12 must be >= 0")
        if any(v <= 0 for v in self.velocity):
            raise ValueError("velocities must be > 0")
        chi_sum = sum(self.chi)
        if any(not 0 <= c <= 1 for c in self.chi) or \
                not (abs(chi_sum) < 1e-12 or abs(chi_sum - 1) < 1e-12):
            raise ValueError("chi entries in [0,1] with sum 0 or 1")


@dataclass(frozen=True)
class MaterialTable:
    """Region constants plus the delayed-precursor kinetics."""

    regions: dict               # region id -> RegionNuclear
    betas: np.ndarray           # delayed fractions per precursor group
    lambdas: np.ndarray         # decay constants (1/s)

    def __post_init__(self):
        object.__setattr__(self, "betas",
                           np.asarray(self.betas, dtype=np.float64))
        object.__setattr__(self, "lambdas",
                           np.asarray(self.lambdas, dtype=np.float64))
        if self.betas.shape != self.lambdas.shape:
            raise ValueError("betas and lambdas differ in length")
        if np.any(self.betas < 0) or np.any(self.lambdas <= 0):
            raise ValueError("betas >= 0 and lambdas > 0 required")

    @property
    def beta_total(self) -> float:
        return float(self.betas.sum())

    @property
    def n_precursors(self) -> int:
        return self.betas.size


@dataclass
class CellMaterials:
    """Group constants expanded (and possibly temperature-updated) per cell."""

    mesh: StructuredMesh
    d: np.ndarray            # (2, n)
    sigma_a: np.ndarray      # (2, n)
    sigma_s12: np.ndarray    # (n,)
    nu_sigma_f: np.ndarray   # (2, n)
    chi: np.ndarray          # (2, n)
    buckling: np.ndarray     # (2, n)
    velocity: np.ndarray     # (2, n)
    betas: np.ndarray
    lambdas: np.ndarray

    @property
    def beta_total(self) -> float:
        return float(self.betas.sum())

    @property
    def sigma_f(self) -> np.ndarray:
        return self.nu_sigma_f / NU_PER_FISSION

    def fission_source(self, phi: np.ndarray) -> np.ndarray:
        """sum_g nu*Sigma_f_g * phi_g, per cell; phi has shape (2, n)."""
        return np.einsum("gn,gn->n", self.nu_sigma_f, phi)

    def fingerprint_equal(self, other: "CellMaterials") -> bool:
        return (other is not None
                and np.array_equal(self.d, other.d)
                and np.array_equal(self.sigma_a, other.sigma_a)
                and np.array_equal(self.sigma_s12, other.sigma_s12)
                and np.array_equal(self.nu_sigma_f, other.nu_sigma_f)
                and np.array_equal(self.chi, other.chi)
                and np.array_equal(self.buckling, other.buckling))


def expand_materials(mesh: StructuredMesh, table: MaterialTable) -> CellMaterials:
    """Spread region constants onto the cells of a mesh."""
    n = mesh.n_cells
    arrays = {k: np.zeros((2, n)) for k in
              ("d", "sigma_a", "nu_sigma_f", "chi", "buckling", "velocity")}
    s12 = np.zeros(n)
    seen = np.zeros(n, dtype=bool)
    for rid, reg in table.regions.items():
        mask = mesh.region_mask(rid)
        seen |= mask
        for g in (0, 1):
            arrays["d"][g, mask] = reg.d[g]
            arrays["sigma_a"][g, mask] = reg.sigma_a[g]
            arrays["nu_sigma_f"][g, mask] = reg.nu_sigma_f[g]
            arrays["chi"][g, mask] = reg.chi[g]
            arrays["buckling"][g, mask] = reg.buckling[g]
            arrays["velocity"][g, mask] = reg.velocity[g]
        s12[mask] = reg.sigma_s12
    if not seen.all():
        missing = np.unique(mesh.region_id[~seen])
        raise KeyError(f"mesh regions {missing.tolist()} absent from the table")
    return CellMaterials(mesh=mesh, sigma_s12=s12, betas=table.betas.copy(),
                         lambdas=table.lambdas.copy(), **arrays)


@dataclass(frozen=True)
class NeutronicState:
    """Fluxes, precursors, criticality eigenvalue and time."""

    phi: tuple                # two ScalarFields
    precursors: tuple         # J ScalarFields
    k_eff: float
    time: float = 0.0

    @property
    def mesh(self) -> StructuredMesh:
        return self.phi[0].mesh

    def phi_matrix(self) -> np.ndarray:
        return np.vstack([f.values for f in self.phi])

    def precursor_matrix(self) -> np.ndarray:
        if not self.precursors:
            return np.zeros((0, self.mesh.n_cells))
        return np.vstack([c.values for c in self.precursors])


def assemble_group_operator(mesh: StructuredMesh, cm: CellMaterials,
                            group: int) -> sparse.csr_matrix:
    """Within-group leakage + removal operator (per-volume five-point).

    Removal = absorption + out-scatter + axial-buckling leakage; VACUUM
    sides impose a zero flux at the boundary face, SYMMETRY sides zero
    normal current.
    """
    g = int(group)
    out_scatter = cm.sigma_s12 if g == 0 else 0.0
    removal = cm.sigma_a[g] + out_scatter + cm.d[g] * cm.buckling[g]
    op, _ = diffusion_operator(mesh, cm.d[g], removal)
    return op


def solve_keff(mesh: StructuredMesh, materials, tol: float = 1e-8,
               max_iter: int = 5000) -> NeutronicState:
    """Inverse power iteration on the two-group system.

    Converges the eigenvalue to successive-iterate changes below ``tol``
    (the fission source to the same relative tolerance), normalises the
    flux so the total fission power with P0 = 1 is one, and sets the
    precursors to their steady values.
    """
    cm = materials if isinstance(materials, CellMaterials) \
        else expand_materials(mesh, materials)
    if not np.any(cm.nu_sigma_f > 0):
        raise NoFission("nu*Sigma_f vanishes everywhere")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    area = mesh.cell_area
    lu = [splu(assemble_group_operator(mesh, cm, g).tocsc()) for g in (0, 1)]

    phi = np.ones((2, mesh.n_cells))
    fsrc = cm.fission_source(phi)
    k = 1.0
    for _ in range(max_iter):
        q = fsrc / k
        phi[0] = lu[0].solve(cm.chi[0] * q)
        phi[1] = lu[1].solve(cm.sigma_s12 * phi[0] + cm.chi[1] * q)
        fsrc_new = cm.fission_source(phi)
        k_new = k * (fsrc_new.sum() / fsrc.sum())
        dk = abs(k_new - k)
        dsrc = np.linalg.norm(fsrc_new / k_new - fsrc / k) \
            / max(np.linalg.norm(fsrc_new / k_new), 1e-300)
        k, fsrc = k_new, fsrc_new
        if dk < tol and dsrc < tol:
            break
    else:
        raise NoConvergence(f"power iteration: no convergence in {max_iter} its")

    power = float(np.sum(cm.sigma_f * phi) * area)
    phi /= power
    fsrc = cm.fission_source(phi)
    prec = tuple(
        ScalarField(mesh, cm.betas[j] / (cm.lambdas[j] * k) * fsrc)
        for j in range(cm.betas.size))
    return NeutronicState(
        phi=tuple(ScalarField(mesh, phi[g]) for g in (0, 1)),
        precursors=prec, k_eff=float(k), time=0.0)


def advance_neutronics(state: NeutronicState, dt: float, cm: CellMaterials,
                       k_eff: float = None, workspace: dict = None
                       ) -> NeutronicState:
    """One implicit-Euler step of the coupled flux/precursor system.

    Coefficients in ``cm`` are the caller's business (frozen at the old
    temperature).  The precursor equations are solved implicitly and
    substituted into the flux block, which is then solved exactly; passing
    a ``workspace`` dict lets consecutive calls reuse the LU factors when
    neither dt nor the coefficients changed.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    k = state.k_eff if k_eff is None else float(k_eff)
    mesh = state.mesh
    n = mesh.n_cells
    phi_old = state.phi_matrix()
    c_old = state.precursor_matrix()
    betas, lambdas = cm.betas, cm.lambdas

    reuse = (workspace is not None
             and workspace.get("dt") == dt
             and workspace.get("k") == k
             and cm.fingerprint_equal(workspace.get("cm")))
    if reuse:
        lu = workspace["lu"]
    else:
        # delayed production folded into an effective prompt yield
        c_hat = (1.0 - cm.beta_total) / k
        if betas.size:
            c_hat += np.sum(betas * lambdas * dt / (1.0 + lambdas * dt)) / k
        inv_vdt = 1.0 / (cm.velocity * dt)
        l1 = assemble_group_operator(mesh, cm, 0)
        l2 = assemble_group_operator(mesh, cm, 1)
        a11 = l1 + sparse.diags(inv_vdt[0] - cm.chi[0] * c_hat * cm.nu_sigma_f[0])
        a12 = sparse.diags(-cm.chi[0] * c_hat * cm.nu_sigma_f[1])
        a21 = sparse.diags(-cm.sigma_s12 - cm.chi[1] * c_hat * cm.nu_sigma_f[0])
        a22 = l2 + sparse.diags(inv_vdt[1] - cm.chi[1] * c_hat * cm.nu_sigma_f[1])
        block = sparse.bmat([[a11, a12], [a21, a22]], format="csc")
        try:
            lu = splu(block)
        except RuntimeError as exc:
            raise SingularSystem(f"transient block factorisation: {exc}") from exc
        if workspace is not None:
            workspace.update(dt=dt, k=k, cm=cm, lu=lu)

    delayed = np.zeros(n)
    for j in range(betas.size):
        delayed += lambdas[j] * c_old[j] / (1.0 + lambdas[j] * dt)
    inv_vdt = 1.0 / (cm.velocity * dt)
    rhs = np.concatenate([phi_old[0] * inv_vdt[0] + cm.chi[0] * delayed,
                          phi_old[1] * inv_vdt[1] + cm.chi[1] * delayed])
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("transient solve returned non-finite values")
    phi_new = sol.reshape(2, n)
    fsrc = cm.fission_source(phi_new)
    c_new = tuple(
        ScalarField(mesh, (c_old[j] + dt * betas[j] / k * fsrc)
                    / (1.0 + lambdas[j] * dt))
        for j in range(betas.size))
    return NeutronicState(
        phi=tuple(ScalarField(mesh, phi_new[g]) for g in (0, 1)),
        precursors=c_new, k_eff=k, time=state.time + dt)


def steady_residual_norm(state: NeutronicState, cm: CellMaterials) -> float:
    """Relative L^2 residual of the static balance at the state's k_eff;
    near zero for a converged eigen-solve."""
    mesh = state.mesh
    phi = state.phi_matrix()
    fsrc = cm.fission_source(phi) / state.k_eff
    resid = np.empty_like(phi)
    src = np.empty_like(phi)
    for g in (0, 1):
        op = assemble_group_operator(mesh, cm, g)
        inscatter = cm.sigma_s12 * phi[0] if g == 1 else 0.0
        src[g] = cm.chi[g] * fsrc + inscatter
        resid[g] = op @ phi[g] - src[g]
    return float(np.linalg.norm(l2_norms(mesh, resid))
                 / np.linalg.norm(l2_norms(mesh, src)))
