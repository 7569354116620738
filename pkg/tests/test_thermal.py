import numpy as np
import pytest

from romassim.fields import ScalarField, StructuredMesh, constant_field
from romassim.neutronics import CellMaterials, MaterialTable, RegionNuclear, \
    expand_materials, NU_PER_FISSION
from romassim.thermal import (CellThermal, RegionThermal, ThermalProperties,
                              advance_heat, boundary_heat_flux,
                              expand_thermal, power_density)

SYM = {s: "symmetry" for s in ("west", "east", "south", "north")}


def _cell_materials(mesh, nu_sigma_f2=0.135):
    table = MaterialTable(
        regions={0: RegionNuclear(
            d=(1.5, 0.4), sigma_a=(0.01, 0.085), sigma_s12=0.02,
            nu_sigma_f=(0.0, nu_sigma_f2), chi=(1.0, 0.0),
            buckling=(0.0, 0.0), velocity=(1e7, 1e5))},
        betas=[0.0065], lambdas=[0.08])
    return expand_materials(mesh, table)


def _thermal(mesh, k=2.0, rho=1.0, cp=1.0, t_bc=600.0):
    props = ThermalProperties(regions={0: RegionThermal(k, rho, cp)},
                              t_boundary=t_bc)
    return expand_thermal(mesh, props)


class TestPowerDensity:
    def test_zero_flux(self, coarse_mesh):
        cm = _cell_materials(coarse_mesh)
        q = power_density([constant_field(coarse_mesh, 0.0),
                           constant_field(coarse_mesh, 0.0)], cm, p0=1.0)
        assert np.all(q.values == 0.0)

    def test_uniform_thermal_flux_total_power(self, coarse_mesh):
        cm = _cell_materials(coarse_mesh)
        q = power_density([constant_field(coarse_mesh, 0.0),
                           constant_field(coarse_mesh, 1.0)], cm, p0=2.0)
        total = float(np.sum(q.values) * coarse_mesh.cell_area)
        area = coarse_mesh.domain_area
        assert total == pytest.approx(2.0 * 0.135 / NU_PER_FISSION * area,
                                      rel=1e-12)

    def test_linear_in_p0(self, coarse_mesh, rng):
        cm = _cell_materials(coarse_mesh)
        phi = [ScalarField(coarse_mesh,
                           np.abs(rng.standard_normal(coarse_mesh.n_cells)))
               for _ in range(2)]
        q1 = power_density(phi, cm, p0=1.0)
        q2 = power_density(phi, cm, p0=2.0)
        assert np.allclose(q2.values, 2.0 * q1.values, rtol=1e-14)


class TestAdvanceHeat:
    def test_uniform_equilibrium(self, coarse_mesh):
        cth = _thermal(coarse_mesh)
        t0 = constant_field(coarse_mesh, 700.0)
        q = constant_field(coarse_mesh, 0.0)
        t1 = advance_heat(t0, q, cth, dt=0.5)
        assert np.allclose(t1.values, 700.0, rtol=1e-13)

    def test_steady_slab_parabola(self):
        # uniform source, clamped ends: peak rise q L^2 / (8 k)
        nx, length, k, q0, t_bc = 80, 8.0, 2.0, 50.0, 600.0
        mesh = StructuredMesh(
            nx=nx, ny=1, dx=length / nx, dy=1.0, origin=(0, 0),
            region_id=np.zeros(nx, dtype=int),
            boundary={"west": "fixed_temperature", "east": "fixed_temperature",
                      "south": "symmetry", "north": "symmetry"})
        cth = _thermal(mesh, k=k, t_bc=t_bc)
        temp = constant_field(mesh, t_bc)
        q = constant_field(mesh, q0)
        ws = {}
        # a huge implicit step lands on the steady solution directly
        temp = advance_heat(temp, q, cth, dt=1e12, workspace=ws)
        peak = q0 * length ** 2 / (8.0 * k)
        assert np.max(temp.values) - t_bc == pytest.approx(peak, rel=2e-3)
        x, _ = mesh.cell_centers()
        exact = t_bc + q0 / (2 * k) * x * (length - x)
        assert np.max(np.abs(temp.values - exact)) < 2e-3 * peak

    def test_first_order_in_time(self):
        # dt-halving error ratio against a fine reference in [1.7, 2.3]
        nx = 16
        mesh = StructuredMesh(
            nx=nx, ny=1, dx=0.5, dy=1.0, origin=(0, 0),
            region_id=np.zeros(nx, dtype=int),
            boundary={"west": "fixed_temperature", "east": "fixed_temperature",
                      "south": "symmetry", "north": "symmetry"})
        cth = _thermal(mesh, k=1.0, rho=2.0, cp=1.5)
        x, _ = mesh.cell_centers()
        t0 = ScalarField(mesh, 600.0 + 40.0 * np.sin(np.pi * x / 8.0))
        q = constant_field(mesh, 3.0)

        def run(dt, t_end=1.6):
            temp = t0
            ws = {}
            for _ in range(int(round(t_end / dt))):
                temp = advance_heat(temp, q, cth, dt, workspace=ws)
            return temp.values

        ref = run(0.1 / 64)
        e1 = np.linalg.norm(run(0.1) - ref)
        e2 = np.linalg.norm(run(0.05) - ref)
        assert 1.7 <= e1 / e2 <= 2.3

    def test_discrete_maximum_principle(self, coarse_mesh, rng):
        mesh = StructuredMesh(
            nx=10, ny=10, dx=1.0, dy=1.0, origin=(0, 0),
            region_id=np.zeros(100, dtype=int),
            boundary={"west": "symmetry", "south": "symmetry",
                      "east": "vacuum", "north": "vacuum"})
        t_bc = 600.0
        cth = _thermal(mesh, t_bc=t_bc)
        temp = ScalarField(mesh, t_bc + 50.0 * rng.random(mesh.n_cells))
        q = ScalarField(mesh, 10.0 * rng.random(mesh.n_cells))
        floor = min(t_bc, float(temp.values.min()))
        ws = {}
        for _ in range(30):
            temp = advance_heat(temp, q, cth, dt=0.05, workspace=ws)
            assert temp.values.min() >= floor - 1e-10

    def test_steady_energy_balance(self, rng):
        # at steady state the boundary heat flux equals the total source
        mesh = StructuredMesh(
            nx=24, ny=24, dx=0.5, dy=0.5, origin=(0, 0),
            region_id=np.zeros(576, dtype=int),
            boundary={"west": "symmetry", "south": "symmetry",
                      "east": "fixed_temperature",
                      "north": "fixed_temperature"})
        cth = _thermal(mesh, k=3.0)
        q = ScalarField(mesh, 1.0 + rng.random(mesh.n_cells))
        temp = constant_field(mesh, 600.0)
        temp = advance_heat(temp, q, cth, dt=1e12)
        total_source = float(np.sum(q.values) * mesh.cell_area)
        flux_out = boundary_heat_flux(temp, cth)
        assert flux_out == pytest.approx(total_source, rel=1e-6)
