"""Benchmark definitions: geometry, material tables, schedules, parameter
grids and noise levels for the two desk-scale cores.

Both cores are quarter geometries with symmetry on the west/south sides and
vacuum (thermally clamped) east/north sides.  Region masks ship as plain
text files in ``romassim/data`` and are regenerated here from the same
rectangle description, so any resolution whose cells align with the
10 cm (PWR) / 8 cm-free (seed-blanket) region boundaries works.

The power-density scale ``p0`` is a model choice: it sets how strongly the
transient heats the core and therefore how much the feedback laws bite.
The shipped values drive temperature excursions of a few hundred kelvin,
inside the [600, 1200] K window the linear coupling fits use.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from ..errors import ParameterOutOfRange
from ..fields import StructuredMesh
from ..multiphysics import (CoupledProblem, CouplingLaw, ScheduleEntry,
                            TransientSchedule, LOG_GAMMA_ABSORPTION,
                            LOG_GAMMA_DIFFUSION)
from ..neutronics import MaterialTable, RegionNuclear
from ..thermal import RegionThermal, ThermalProperties

# -- geometry -----------------------------------------------------------------

# Quarter-core assembly map of the PWR problem; row 0 is the south band.
# 1 = inner fuel, 2 = outer fuel, 3 = rodded fuel, 4 = reflector.
_PWR_EDGES = np.array([0., 10., 30., 50., 70., 90., 110., 130., 150., 170.])
_PWR_MAP = np.array([
    [3, 1, 1, 1, 3, 1, 1, 2, 4],
    [1, 1, 1, 1, 1, 1, 1, 2, 4],
    [1, 1, 3, 1, 1, 1, 2, 2, 4],
    [1, 1, 1, 1, 1, 1, 2, 4, 4],
    [3, 1, 1, 1, 3, 2, 2, 4, 4],
    [1, 1, 1, 1, 2, 2, 4, 4, 4],
    [1, 1, 2, 2, 2, 4, 4, 4, 4],
    [2, 2, 2, 4, 4, 4, 4, 4, 4],
    [4, 4, 4, 4, 4, 4, 4, 4, 4],
])

PWR_SIDE = 170.0     # cm
TWIGL_SIDE = 80.0    # cm


def iaea_region_grid(nx: int, ny: int) -> np.ndarray:
    """Region ids of the PWR quarter core on an nx x ny grid (flat)."""
    dx, dy = PWR_SIDE / nx, PWR_SIDE / ny
    xc = (np.arange(nx) + 0.5) * dx
    yc = (np.arange(ny) + 0.5) * dy
    col = np.searchsorted(_PWR_EDGES, xc, side="right") - 1
    row = np.searchsorted(_PWR_EDGES, yc, side="right") - 1
    return _PWR_MAP[np.ix_(row, col)].ravel().astype(np.int64)


def twigl_region_grid(nx: int, ny: int) -> np.ndarray:
    """Region ids of the seed-blanket quarter core: perturbed seed 1 on
    [24, 56]^2, unperturbed seed 2 on the rest of [0, 56]^2, blanket 3
    outside."""
    dx, dy = TWIGL_SIDE / nx, TWIGL_SIDE / ny
    xc = (np.arange(nx) + 0.5) * dx
    yc = (np.arange(ny) + 0.5) * dy
    gx, gy = np.meshgrid(xc, yc)
    rid = np.full(gx.shape, 3, dtype=np.int64)
    seed = (gx < 56.0) & (gy < 56.0)
    rid[seed] = 2
    rid[seed & (gx > 24.0) & (gy > 24.0)] = 1
    return rid.ravel()


def shipped_mask_path(name: str):
    """Path of a region mask shipped with the package."""
    return resources.files("romassim").joinpath("data", name)


_QUARTER_BOUNDARY = {"west": "symmetry", "south": "symmetry",
                     "east": "vacuum", "north": "vacuum"}


def iaea_mesh(cells_per_side: int = 85) -> StructuredMesh:
    n = int(cells_per_side)
    h = PWR_SIDE / n
    return StructuredMesh(nx=n, ny=n, dx=h, dy=h, origin=(0.0, 0.0),
                          region_id=iaea_region_grid(n, n),
                          boundary=dict(_QUARTER_BOUNDARY))


def twigl_mesh(cells_per_side: int = 40) -> StructuredMesh:
    n = int(cells_per_side)
    h = TWIGL_SIDE / n
    return StructuredMesh(nx=n, ny=n, dx=h, dy=h, origin=(0.0, 0.0),
                          region_id=twigl_region_grid(n, n),
                          boundary=dict(_QUARTER_BOUNDARY))


# -- material tables ----------------------------------------------------------

def iaea_materials() -> MaterialTable:
    fuel = dict(sigma_s12=0.02, nu_sigma_f=(0.0, 0.135), chi=(1.0, 0.0),
                buckling=(8e-5, 8e-5), velocity=(1e7, 1e5))
    return MaterialTable(
        regions={
            1: RegionNuclear(d=(1.5, 0.4), sigma_a=(0.01, 0.085), **fuel),
            2: RegionNuclear(d=(1.5, 0.4), sigma_a=(0.01, 0.08), **fuel),
            3: RegionNuclear(d=(1.5, 0.4), sigma_a=(0.01, 0.13), **fuel),
            4: RegionNuclear(d=(2.0, 0.3), sigma_a=(0.0, 0.01),
                             sigma_s12=0.04, nu_sigma_f=(0.0, 0.0),
                             chi=(0.0, 0.0), buckling=(8e-5, 8e-5),
                             velocity=(1e7, 1e5)),
        },
        betas=[0.000247, 0.0013845, 0.001222, 0.0026455, 0.000832, 0.000169],
        lambdas=[0.0127, 0.0317, 0.115, 0.311, 1.4, 3.87],
    )


def iaea_thermal() -> ThermalProperties:
    return ThermalProperties(
        regions={
            1: RegionThermal(10.2, 10.45, 235e-6),
            2: RegionThermal(9.0, 10.45, 235e-6),
            3: RegionThermal(0.5, 5.0, 100e-6),
            4: RegionThermal(1.4, 2.265, 1.4e-6),
        },
        t_boundary=600.0,
    )


def twigl_materials(d1_region1: float = None) -> MaterialTable:
    seed = dict(d=(1.4, 0.4), sigma_a=(0.01, 0.15), sigma_s12=0.01,
                nu_sigma_f=(0.007, 0.2), chi=(1.0, 0.0),
                buckling=(0.0, 0.0), velocity=(1e7, 1e5))
    seed1 = dict(seed)
    if d1_region1 is not None:
        seed1["d"] = (float(d1_region1), 0.4)
    return MaterialTable(
        regions={
            1: RegionNuclear(**seed1),
            2: RegionNuclear(**seed),
            3: RegionNuclear(d=(1.3, 0.5), sigma_a=(0.008, 0.05),
                             sigma_s12=0.01, nu_sigma_f=(0.003, 0.06),
                             chi=(1.0, 0.0), buckling=(0.0, 0.0),
                             velocity=(1e7, 1e5)),
        },
        betas=[0.0075], lambdas=[0.08],
    )


def twigl_thermal() -> ThermalProperties:
    return ThermalProperties(
        regions={
            1: RegionThermal(8.0, 10.45, 235e-6),
            2: RegionThermal(1.0, 10.45, 235e-6),
            3: RegionThermal(5.0, 10.45, 235e-6),
        },
        t_boundary=600.0,
    )


# -- schedules ----------------------------------------------------------------

def iaea_schedule() -> TransientSchedule:
    """Step insertion: reference absorption of both groups in the rodded
    region drops to 0.9 of its initial value for t > 0."""
    return TransientSchedule(entries=(
        ScheduleEntry(region=3, group=1, kind="step", factor=0.9),
        ScheduleEntry(region=3, group=2, kind="step", factor=0.9),
    ))


def twigl_schedule() -> TransientSchedule:
    """Ramp to 0.2 s then hold: thermal-group reference absorption in the
    perturbed seed follows 1 - 0.11667 t, settling at 0.97666."""
    return TransientSchedule(entries=(
        ScheduleEntry(region=1, group=2, kind="ramp_hold",
                      rate=0.11667, t_ramp=0.2, hold=0.97666),
    ))


# -- benchmark cases ----------------------------------------------------------

# Power-density scales; see the module docstring.
P0_IAEA = 6.0e3
P0_TWIGL = 4.0e3


@dataclass
class BenchmarkCase:
    """One benchmark: geometry + physics + parameter grids + noise model."""

    name: str
    mesh: StructuredMesh
    materials: MaterialTable
    thermal: ThermalProperties
    schedule: TransientSchedule
    p0: float
    dt: float
    sample_every: float
    t_end: float
    t_train: np.ndarray
    t_test: np.ndarray
    mu_train: np.ndarray          # secondary-parameter grid; empty if none
    mu_test: np.ndarray
    mu_box: tuple = None          # (lo, hi) of the secondary parameter
    mu_name: str = None
    n_background: int = 5
    m_max: int = 15
    sensor_stride: int = 5
    sensor_spread: float = 1.0
    noise: dict = field(default_factory=dict)
    field_scale: dict = field(default_factory=lambda: dict(_DEFAULT_SCALE))
    biased_mode: str = "afom"
    keff_tol: float = 1e-8
    t_ref: float = 600.0
    _law_builder: callable = None

    def problem(self, mu=None) -> CoupledProblem:
        if self.mu_box is not None:
            if mu is None:
                raise ParameterOutOfRange(f"{self.name} needs a parameter "
                                          f"{self.mu_name} in {self.mu_box}")
            mu = float(np.atleast_1d(mu)[0])
            lo, hi = self.mu_box
            if not lo <= mu <= hi:
                raise ParameterOutOfRange(
                    f"{self.mu_name} = {mu} outside [{lo}, {hi}]")
        laws, materials = self._law_builder(mu)
        return CoupledProblem(
            mesh=self.mesh, materials=materials, thermal=self.thermal,
            schedule=self.schedule, laws=laws, t_ref=self.t_ref, p0=self.p0,
            dt=self.dt, t_end=self.t_end, sample_every=self.sample_every,
            keff_tol=self.keff_tol)

    @property
    def field_names(self):
        return ("T", "phi1", "phi2")

    def sample_times(self) -> np.ndarray:
        n = round(self.t_end / self.sample_every)
        return np.round(np.arange(n + 1) * self.sample_every, 9)


# Working units of the assimilation stack: temperature stays in kelvin,
# fluxes are measured in units of their initial domain-average value, which
# puts them at O(1) where the absolute noise levels (and the lam = sigma
# rule) live.
_DEFAULT_SCALE = {"T": "unit", "phi1": "mean0", "phi2": "mean0"}
_DEFAULT_NOISE = {"T": 0.5, "phi1": 0.01, "phi2": 0.01}


def resolve_scales(case: "BenchmarkCase", initial: dict) -> dict:
    """Concrete per-field unit scales: 'unit' -> 1, 'max0'/'mean0' -> peak
    or average of the field's initial steady state (``initial`` maps field
    name -> values)."""
    out = {}
    for name, mode in case.field_scale.items():
        if mode == "unit":
            out[name] = 1.0
        elif mode == "max0":
            out[name] = float(np.max(np.abs(initial[name])))
        elif mode == "mean0":
            out[name] = float(np.mean(np.abs(initial[name])))
        else:
            raise ValueError(f"unknown scale mode {mode!r}")
    return out


def _times(start, stop, step):
    n = round((stop - start) / step)
    return np.round(start + np.arange(n + 1) * step, 9)


def iaea_2d_pwr(cells_per_side: int = 85, dt: float = 0.01,
                m_max: int = 15, n_background: int = 5,
                p0: float = P0_IAEA) -> BenchmarkCase:
    """PWR quarter core: time is the only parameter; training on [0, 1],
    prediction on (1, 2], both sampled every 0.01 s."""

    def build(_mu):
        laws = {
            ("d", 0): CouplingLaw("log", gamma=LOG_GAMMA_DIFFUSION),
            ("d", 1): CouplingLaw("log", gamma=LOG_GAMMA_DIFFUSION),
            ("sigma_a", 0): CouplingLaw("log", gamma=LOG_GAMMA_ABSORPTION),
            ("sigma_a", 1): CouplingLaw("log", gamma=LOG_GAMMA_ABSORPTION),
        }
        return laws, iaea_materials()

    return BenchmarkCase(
        name="IAEA2DPWR", mesh=iaea_mesh(cells_per_side),
        materials=iaea_materials(), thermal=iaea_thermal(),
        schedule=iaea_schedule(), p0=p0,
        dt=dt, sample_every=0.01, t_end=2.0,
        t_train=_times(0.0, 1.0, 0.01), t_test=_times(1.01, 2.0, 0.01),
        mu_train=np.array([]), mu_test=np.array([]),
        n_background=n_background, m_max=m_max,
        noise=dict(_DEFAULT_NOISE), biased_mode="afom",
        _law_builder=build)


def twigl2d_a(cells_per_side: int = 40, dt: float = 0.02,
              n_gamma_train: int = 20, gamma_test=None,
              m_max: int = 25, n_background: int = 10,
              p0: float = P0_TWIGL) -> BenchmarkCase:
    """Seed-blanket core, feedback only on the fast absorption through the
    square-root law; the feedback coefficient is the second parameter."""
    gamma_lo, gamma_hi = 1e-3, 1e-2
    if gamma_test is None:
        gamma_test = [2.5e-3, 5.5e-3, 8.5e-3]

    def build(gamma):
        laws = {("sigma_a", 0): CouplingLaw("sqrt", gamma=float(gamma))}
        return laws, twigl_materials()

    return BenchmarkCase(
        name="TWIGL2D_A", mesh=twigl_mesh(cells_per_side),
        materials=twigl_materials(), thermal=twigl_thermal(),
        schedule=twigl_schedule(), p0=p0,
        dt=dt, sample_every=0.02, t_end=2.0,
        t_train=_times(0.02, 1.0, 0.02), t_test=_times(1.02, 2.0, 0.02),
        mu_train=np.linspace(gamma_lo, gamma_hi, n_gamma_train),
        mu_test=np.asarray(gamma_test, dtype=np.float64),
        mu_box=(gamma_lo, gamma_hi), mu_name="gamma_a1",
        n_background=n_background, m_max=m_max,
        noise=dict(_DEFAULT_NOISE), biased_mode="afom",
        _law_builder=build)


def twigl2d_b(cells_per_side: int = 40, dt: float = 0.02,
              n_d1_train: int = 10, d1_test=None,
              m_max: int = 25, n_background: int = 10,
              p0: float = P0_TWIGL) -> BenchmarkCase:
    """Seed-blanket core with sine/tanh feedback on every diffusion and
    absorption constant; the fast diffusion coefficient of the perturbed
    seed is the second parameter, and the biased model linearises the
    coupling laws."""
    d1_lo, d1_hi = 0.5, 2.0
    if d1_test is None:
        d1_test = [0.6, 0.925, 1.25, 1.575, 1.9]

    def build(d1):
        laws = {
            ("d", 0): CouplingLaw("sin", gamma=2e-2),
            ("d", 1): CouplingLaw("sin", gamma=2e-2),
            ("sigma_a", 0): CouplingLaw("tanh", gamma=4e-2),
            ("sigma_a", 1): CouplingLaw("tanh", gamma=4e-2),
        }
        return laws, twigl_materials(d1_region1=float(d1))

    return BenchmarkCase(
        name="TWIGL2D_B", mesh=twigl_mesh(cells_per_side),
        materials=twigl_materials(), thermal=twigl_thermal(),
        schedule=twigl_schedule(), p0=p0,
        dt=dt, sample_every=0.02, t_end=2.0,
        t_train=_times(0.0, 1.0, 0.02), t_test=_times(1.02, 2.0, 0.02),
        mu_train=np.linspace(d1_lo, d1_hi, n_d1_train),
        mu_test=np.asarray(d1_test, dtype=np.float64),
        mu_box=(d1_lo, d1_hi), mu_name="d1_region1",
        n_background=n_background, m_max=m_max,
        noise=dict(_DEFAULT_NOISE), biased_mode="lcfom",
        _law_builder=build)


_FACTORIES = {"IAEA2DPWR": iaea_2d_pwr,
              "TWIGL2D_A": twigl2d_a,
              "TWIGL2D_B": twigl2d_b}


def get_benchmark(name: str, **overrides) -> BenchmarkCase:
    try:
        factory = _FACTORIES[name.upper()]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; "
                       f"choose from {sorted(_FACTORIES)}") from None
    return factory(**overrides)


def resolve_noise(case: BenchmarkCase, initial: dict) -> dict:
    """Absolute noise levels per field in the raw (unscaled) units: the
    configured sigmas live in the working units of ``resolve_scales``, so
    each is multiplied by its field's unit scale."""
    scales = resolve_scales(case, initial)
    return {name: float(value) * scales[name]
            for name, value in case.noise.items()}
