"""Five-point finite-volume diffusion stencil shared by the neutron and heat
solvers.

The operator acts on per-cell values in per-volume form:
(A u)_c = -div(diff grad u)_c + removal_c * u_c.  Face diffusivities are
harmonic means of the adjacent cells; SYMMETRY sides carry no face term
(zero normal current), every other side clamps the face value (ghost value
mirrored through the face), contributing 2*diff/h^2 to the diagonal and the
same coefficient times the boundary value to the right-hand side.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .errors import NegativeCoefficient
from .fields import BoundaryTag, StructuredMesh


def diffusion_operator(mesh: StructuredMesh, diff: np.ndarray,
                       removal: np.ndarray):
    """Assemble the per-volume operator.

    Returns (A, bc_diag): A is CSR (n, n); bc_diag holds the Dirichlet face
    coefficients so that the discrete source gains bc_diag * boundary_value.
    """
    nx, ny = mesh.nx, mesh.ny
    n = mesh.n_cells
    d = mesh.as_grid(np.asarray(diff, dtype=np.float64))
    diag = np.asarray(removal, dtype=np.float64).astype(np.float64).copy()
    bc_diag = np.zeros(n)
    idx = np.arange(n).reshape(ny, nx)

    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [diag]

    inv_dx2 = 1.0 / mesh.dx ** 2
    inv_dy2 = 1.0 / mesh.dy ** 2

    def _faces(d_lo, d_hi, i_lo, i_hi, inv_h2):
        face = 2.0 * d_lo * d_hi / np.where(d_lo + d_hi > 0, d_lo + d_hi, 1.0)
        face = np.where(d_lo + d_hi > 0, face, 0.0) * inv_h2
        lo, hi, f = i_lo.ravel(), i_hi.ravel(), face.ravel()
        rows.extend([lo, hi, lo, hi])
        cols.extend([hi, lo, lo, hi])
        vals.extend([-f, -f, f, f])

    if nx > 1:
        _faces(d[:, :-1], d[:, 1:], idx[:, :-1], idx[:, 1:], inv_dx2)
    if ny > 1:
        _faces(d[:-1, :], d[1:, :], idx[:-1, :], idx[1:, :], inv_dy2)

    def _dirichlet(side, cells, d_edge, inv_h2):
        if mesh.boundary[side] is BoundaryTag.SYMMETRY:
            return
        coeff = 2.0 * d_edge.ravel() * inv_h2
        rows.append(cells.ravel())
        cols.append(cells.ravel())
        vals.append(coeff)
        bc_diag[cells.ravel()] += coeff

    _dirichlet("west", idx[:, 0], d[:, 0], inv_dx2)
    _dirichlet("east", idx[:, -1], d[:, -1], inv_dx2)
    _dirichlet("south", idx[0, :], d[0, :], inv_dy2)
    _dirichlet("north", idx[-1, :], d[-1, :], inv_dy2)

    a = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    a.sum_duplicates()
    if np.any(a.diagonal() <= 0):
        raise NegativeCoefficient("stencil diagonal <= 0")
    return a, bc_diag
