"""Temperature-feedback coupling laws, transient cross-section schedules and
the three coupled drivers.

Modes
-----
fom    : per step, evaluate the feedback laws at the previous temperature,
         apply the schedule, advance neutronics then heat (semi-implicit
         Picard-free ground truth).
afom   : the two solvers never talk directly; an initial neutronics sweep at
         uniform reference temperature seeds a loop in which each solver
         consumes a time-parametrised POD surrogate of the other's output.
         Exactly two loop iterations are run, plus a final heat sweep, so
         the result is a deliberately under-converged weak coupling.
lcfom  : as fom, but every feedback law is replaced by its least-squares
         linear fit over a fixed temperature window.

All modes share the same initial condition: the critical state of the
reference materials at the reference temperature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateRange, NonPositiveTemperature
from .fields import ScalarField, StructuredMesh, constant_field
from .neutronics import (CellMaterials, MaterialTable, NeutronicState,
                         expand_materials, solve_keff, advance_neutronics)
from .reduction import SnapshotSet, TimeSeriesSurrogate
from .thermal import (CellThermal, ThermalProperties, advance_heat,
                      expand_thermal, power_density)

# default feedback strengths of the logarithmic law
LOG_GAMMA_DIFFUSION = 3.0e-3      # cm
LOG_GAMMA_ABSORPTION = 2.034e-3   # 1/cm

LINEAR_FIT_RANGE = (600.0, 1200.0)
LINEAR_FIT_SAMPLES = 601


@dataclass(frozen=True)
class CouplingLaw:
    """Temperature dependence of a group constant.

    ``kind`` selects the shape s(T); ``mode`` how it combines with the
    reference value:  additive -> ref + s(T), multiplicative ->
    ref * (1 + s(T)), absolute -> s(T).

    kinds: 'log'   s = gamma * ln(T / T_ref)            (additive)
           'sqrt'  s = gamma * (sqrt(T) - sqrt(T_ref))  (multiplicative)
           'sin'   s = gamma * sin(2.75 (T-T_ref)/T_ref)  (multiplicative)
           'tanh'  s = gamma * tanh(2 (T-T_ref)/T_ref)    (multiplicative)
           'linear' s = slope * T + intercept           (mode preserved)
    """

    kind: str
    t_ref: float = 600.0
    ref_value: float = 0.0
    gamma: float = 0.0
    slope: float = 0.0
    intercept: float = 0.0
    mode: str = None

    def __post_init__(self):
        modes = {"log": "additive", "sqrt": "multiplicative",
                 "sin": "multiplicative", "tanh": "multiplicative",
                 "linear": "absolute"}
        if self.kind not in modes:
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        if self.mode is None:
            object.__setattr__(self, "mode", modes[self.kind])

    def shape(self, temperature):
        t = np.asarray(temperature, dtype=np.float64)
        if np.any(t <= 0):
            raise NonPositiveTemperature("coupling law needs T > 0")
        if self.kind == "log":
            return self.gamma * np.log(t / self.t_ref)
        if self.kind == "sqrt":
            return self.gamma * (np.sqrt(t) - math.sqrt(self.t_ref))
        if self.kind == "sin":
            return self.gamma * np.sin(2.75 * (t - self.t_ref) / self.t_ref)
        if self.kind == "tanh":
            return self.gamma * np.tanh(2.0 * (t - self.t_ref) / self.t_ref)
        return self.slope * t + self.intercept

    def evaluate(self, temperature, ref=None):
        """Value of the law at ``temperature`` (scalar or per-cell array),
        combined with ``ref`` (defaults to the stored reference value)."""
        ref = self.ref_value if ref is None else ref
        s = self.shape(temperature)
        if self.mode == "additive":
            return ref + s
        if self.mode == "multiplicative":
            return ref * (1.0 + s)
        return s


def coupling_eval(law: CouplingLaw, temperature) -> float:
    """Evaluate the law at a temperature with its stored reference value."""
    out = law.evaluate(temperature)
    return float(out) if np.isscalar(temperature) else out


def linearize_shape(law: CouplingLaw, t_lo: float, t_hi: float,
                    n_samples: int = LINEAR_FIT_SAMPLES) -> CouplingLaw:
    """Least-squares line through the law's shape on a uniform temperature
    sample; combine mode and reference are preserved, so scheduled
    reference changes still flow through the linearised law."""
    if t_hi <= t_lo:
        raise DegenerateRange(f"[{t_lo}, {t_hi}] is not a range")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    t = np.linspace(t_lo, t_hi, n_samples)
    a, b = np.polyfit(t, law.shape(t), 1)
    return CouplingLaw(kind="linear", t_ref=law.t_ref, ref_value=law.ref_value,
                       slope=float(a), intercept=float(b), mode=law.mode)


def fit_linear_coupling(law: CouplingLaw, t_lo: float, t_hi: float,
                        n_samples: int = LINEAR_FIT_SAMPLES) -> CouplingLaw:
    """Absolute best-fit line f(T) ~= m*T + q of the full law value over
    [t_lo, t_hi]; returns a 'linear' law with that slope and intercept."""
    if t_hi <= t_lo:
        raise DegenerateRange(f"[{t_lo}, {t_hi}] is not a range")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    t = np.linspace(t_lo, t_hi, n_samples)
    m, q = np.polyfit(t, np.asarray(law.evaluate(t), dtype=np.float64), 1)
    return CouplingLaw(kind="linear", t_ref=law.t_ref, ref_value=law.ref_value,
                       slope=float(m), intercept=float(q), mode="absolute")


# -- transient schedules ------------------------------------------------------

@dataclass(frozen=True)
class ScheduleEntry:
    """Multiplicative factor on the reference absorption of one (region,
    group) pair; ``group`` is the energy-group number (1 = fast,
    2 = thermal)."""

    region: int
    group: int
    kind: str                  # 'step' or 'ramp_hold'
    factor: float = 1.0        # step value (t > 0)
    rate: float = 0.0          # ramp slope: 1 - rate*t
    t_ramp: float = 0.0        # ramp end; held value afterwards
    hold: float = 1.0

    def value(self, t: float) -> float:
        if t < 0:
            return 1.0
        if self.kind == "step":
            return self.factor if t > 0 else 1.0
        if self.kind == "ramp_hold":
            return 1.0 - self.rate * t if t <= self.t_ramp else self.hold
        raise ValueError(f"unknown schedule kind {self.kind!r}")


@dataclass(frozen=True)
class TransientSchedule:
    entries: tuple = ()

    def factor(self, region: int, group: int, t: float) -> float:
        out = 1.0
        for e in self.entries:
            if e.region == region and e.group == group:
                out *= e.value(t)
        return out


def transient_factor(schedule: TransientSchedule, region: int, group: int,
                     t: float) -> float:
    return schedule.factor(region, group, t)


# -- coupled problem description ----------------------------------------------

@dataclass
class CoupledProblem:
    """Everything one transient run needs, with the parameter vector already
    folded into the material table and law coefficients.

    ``laws`` maps ('d'|'sigma_a', group_index_0based) to a CouplingLaw whose
    reference is supplied per cell at evaluation time, or to None for no
    feedback on that constant.
    """

    mesh: StructuredMesh
    materials: MaterialTable
    thermal: ThermalProperties
    schedule: TransientSchedule
    laws: dict
    t_ref: float = 600.0
    p0: float = 1.0
    dt: float = 0.01
    t_end: float = 2.0
    sample_every: float = 0.01
    keff_tol: float = 1e-8

    def linearized(self, t_lo: float = LINEAR_FIT_RANGE[0],
                   t_hi: float = LINEAR_FIT_RANGE[1],
                   n_samples: int = LINEAR_FIT_SAMPLES) -> "CoupledProblem":
        laws = {key: None if law is None
                else linearize_shape(law, t_lo, t_hi, n_samples)
                for key, law in self.laws.items()}
        out = replace(self)
        out.laws = laws
        return out


class _Coefficients:
    """Schedule- and temperature-resolved cell materials for one problem."""

    def __init__(self, problem: CoupledProblem):
        self.problem = problem
        self.ref = expand_materials(problem.mesh, problem.materials)
        self.masks = {}
        for e in problem.schedule.entries:
            key = (e.region, e.group)
            if key not in self.masks:
                self.masks[key] = problem.mesh.region_mask(e.region)

    def reference(self) -> CellMaterials:
        return self.ref

    def at(self, temperature, t: float) -> CellMaterials:
        """Materials with the schedule at time ``t`` and feedback laws at
        ``temperature`` (scalar or per-cell)."""
        prob = self.problem
        sa_ref = self.ref.sigma_a.copy()
        for e in prob.schedule.entries:
            f = e.value(t)
            if f != 1.0:
                sa_ref[e.group - 1, self.masks[(e.region, e.group)]] *= f
        d = self.ref.d.copy()
        sa = sa_ref
        for g in (0, 1):
            law_d = prob.laws.get(("d", g))
            if law_d is not None:
                d[g] = law_d.evaluate(temperature, ref=self.ref.d[g])
            law_a = prob.laws.get(("sigma_a", g))
            if law_a is not None:
                sa[g] = law_a.evaluate(temperature, ref=sa_ref[g])
        return replace_cell_materials(self.ref, d=d, sigma_a=sa)


def replace_cell_materials(cm: CellMaterials, d=None, sigma_a=None
                           ) -> CellMaterials:
    return CellMaterials(
        mesh=cm.mesh,
        d=cm.d if d is None else d,
        sigma_a=cm.sigma_a if sigma_a is None else sigma_a,
        sigma_s12=cm.sigma_s12, nu_sigma_f=cm.nu_sigma_f, chi=cm.chi,
        buckling=cm.buckling, velocity=cm.velocity,
        betas=cm.betas, lambdas=cm.lambdas)


# -- drivers -------------------------------------------------------------------

FIELD_NAMES = ("T", "phi1", "phi2")
WEAK_COUPLING_ITERATIONS = 2
SURROGATE_TOL = 1e-8


def _grid(problem: CoupledProblem, dt, t_end, sample_every):
    dt = problem.dt if dt is None else float(dt)
    t_end = problem.t_end if t_end is None else float(t_end)
    sample_every = problem.sample_every if sample_every is None \
        else float(sample_every)
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be > 0")
    sub = sample_every / dt
    if abs(sub - round(sub)) > 1e-9 or round(sub) < 1:
        raise ValueError("sample_every must be a whole multiple of dt")
    n_steps = round(t_end / dt)
    if abs(n_steps * dt - t_end) > 1e-9 * max(t_end, 1.0):
        raise ValueError("t_end must be a whole multiple of dt")
    return dt, int(n_steps), int(round(sub))


def _initial_state(problem: CoupledProblem, coeffs: _Coefficients):
    state = solve_keff(problem.mesh, coeffs.reference(), tol=problem.keff_tol)
    t0 = constant_field(problem.mesh, problem.t_ref)
    return state, t0


def _snapshot_set(problem, times, t_vals, phi_vals, meta) -> SnapshotSet:
    times = np.asarray(times)
    return SnapshotSet(
        mesh=problem.mesh, params=times,
        fields={"T": np.vstack(t_vals),
                "phi1": np.vstack([p[0] for p in phi_vals]),
                "phi2": np.vstack([p[1] for p in phi_vals])},
        grid_axes=(times,), param_names=("t",), meta=meta)


def _run_strong(problem: CoupledProblem, coeffs, dt, n_steps, sub, meta):
    """Shared fom/lcfom loop: coefficients at T^n, neutronics then heat."""
    state, temp = _initial_state(problem, coeffs)
    cth = expand_thermal(problem.mesh, problem.thermal)
    times, t_vals, phi_vals = [0.0], [temp.values], [state.phi_matrix()]
    n_ws, h_ws = {}, {}
    for i in range(n_steps):
        t_next = (i + 1) * dt
        cm = coeffs.at(temp.values, t_next)
        state = advance_neutronics(state, dt, cm, workspace=n_ws)
        q = power_density(state.phi, cm, problem.p0)
        temp = advance_heat(temp, q, cth, dt, workspace=h_ws)
        if (i + 1) % sub == 0:
            times.append(t_next)
            t_vals.append(temp.values)
            phi_vals.append(state.phi_matrix())
    meta = dict(meta, k_eff=state.k_eff)
    return _snapshot_set(problem, times, t_vals, phi_vals, meta)


def _neutronics_sweep(problem, coeffs, dt, n_steps, sub, temp_of_t):
    """Neutronics-only transient against an external temperature source;
    returns sampled times, flux stacks and power-density stacks."""
    state, _ = _initial_state(problem, coeffs)
    cm0 = coeffs.reference()
    times = [0.0]
    phis = [state.phi_matrix()]
    qs = [power_density(state.phi, cm0, problem.p0).values]
    ws = {}
    for i in range(n_steps):
        t_now, t_next = i * dt, (i + 1) * dt
        cm = coeffs.at(temp_of_t(t_now), t_next)
        state = advance_neutronics(state, dt, cm, workspace=ws)
        if (i + 1) % sub == 0:
            times.append(t_next)
            phis.append(state.phi_matrix())
            qs.append(power_density(state.phi, cm, problem.p0).values)
    return np.array(times), phis, np.vstack(qs), state.k_eff


def _thermal_sweep(problem, dt, n_steps, sub, q_of_t):
    cth = expand_thermal(problem.mesh, problem.thermal)
    temp = constant_field(problem.mesh, problem.t_ref)
    t_vals = [temp.values]
    ws = {}
    for i in range(n_steps):
        t_next = (i + 1) * dt
        q = ScalarField(problem.mesh, q_of_t(t_next))
        temp = advance_heat(temp, q, cth, dt, workspace=ws)
        if (i + 1) % sub == 0:
            t_vals.append(temp.values)
    return np.vstack(t_vals)


def _run_weak(problem: CoupledProblem, coeffs, dt, n_steps, sub, meta):
    """aFOM: surrogate-mediated weak coupling, two loop iterations plus a
    closing heat sweep."""
    mesh = problem.mesh
    t_ref = problem.t_ref
    times, phis, qs, keff = _neutronics_sweep(
        problem, coeffs, dt, n_steps, sub, temp_of_t=lambda t: t_ref)
    for _ in range(WEAK_COUPLING_ITERATIONS):
        q_sur = TimeSeriesSurrogate(mesh, times, qs, rel_tol=SURROGATE_TOL)
        t_stack = _thermal_sweep(problem, dt, n_steps, sub, q_sur)
        t_sur = TimeSeriesSurrogate(mesh, times, t_stack, rel_tol=SURROGATE_TOL)
        times, phis, qs, keff = _neutronics_sweep(
            problem, coeffs, dt, n_steps, sub, temp_of_t=t_sur)
    q_sur = TimeSeriesSurrogate(mesh, times, qs, rel_tol=SURROGATE_TOL)
    t_stack = _thermal_sweep(problem, dt, n_steps, sub, q_sur)
    meta = dict(meta, k_eff=keff)
    return _snapshot_set(problem, times, list(t_stack), phis, meta)


def run_transient(case, mode: str, mu=None, dt: float = None,
                  t_end: float = None, sample_every: float = None
                  ) -> SnapshotSet:
    """Run one coupled transient and sample T, phi1, phi2.

    ``case`` is either a CoupledProblem or a benchmark object exposing
    ``problem(mu)``; ``mode`` is one of 'fom', 'afom', 'lcfom'.
    """
    mode = mode.lower()
    if mode not in ("fom", "afom", "lcfom"):
        raise ValueError(f"unknown mode {mode!r}")
    if isinstance(case, CoupledProblem):
        problem = case
        name = getattr(case, "name", "custom")
    else:
        problem = case.problem(mu)
        name = getattr(case, "name", "custom")
    dt, n_steps, sub = _grid(problem, dt, t_end, sample_every)
    meta = {"benchmark": name, "mode": mode,
            "mu": None if mu is None else list(np.atleast_1d(mu)),
            "dt": dt, "p0": problem.p0}
    if mode == "lcfom":
        problem = problem.linearized()
    coeffs = _Coefficients(problem)
    if mode == "afom":
        return _run_weak(problem, coeffs, dt, n_steps, sub, meta)
    return _run_strong(problem, coeffs, dt, n_steps, sub, meta)
