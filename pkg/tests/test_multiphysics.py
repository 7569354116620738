import numpy as np
import pytest

from romassim.errors import (DegenerateRange, NonPositiveTemperature,
                             ParameterOutOfRange)
from romassim.fields import l2_norms
from romassim.harness.benchmarks import (get_benchmark, iaea_2d_pwr,
                                         twigl_schedule, twigl2d_a,
                                         twigl2d_b)
from romassim.multiphysics import (CoupledProblem, CouplingLaw,
                                   ScheduleEntry, TransientSchedule,
                                   coupling_eval, fit_linear_coupling,
                                   linearize_shape, run_transient,
                                   transient_factor)


class TestCouplingEval:
    def test_anchor_point_all_kinds(self):
        laws = [
            CouplingLaw("log", ref_value=1.5, gamma=3e-3),
            CouplingLaw("sqrt", ref_value=0.01, gamma=5e-3),
            CouplingLaw("sin", ref_value=1.4, gamma=2e-2),
            CouplingLaw("tanh", ref_value=0.15, gamma=4e-2),
        ]
        for law in laws:
            assert coupling_eval(law, 600.0) == pytest.approx(
                law.ref_value, rel=1e-15)

    def test_logarithmic_at_e_fold(self):
        law = CouplingLaw("log", ref_value=1.5, gamma=3e-3)
        assert coupling_eval(law, 600.0 * np.e) == pytest.approx(
            1.503, abs=1e-9)

    def test_tanh_saturation(self):
        law = CouplingLaw("tanh", ref_value=0.15, gamma=4e-2)
        assert coupling_eval(law, 1e9) == pytest.approx(0.15 * 1.04,
                                                        rel=1e-8)

    def test_nonpositive_temperature(self):
        law = CouplingLaw("log", ref_value=1.5, gamma=3e-3)
        with pytest.raises(NonPositiveTemperature):
            coupling_eval(law, 0.0)
        with pytest.raises(NonPositiveTemperature):
            coupling_eval(law, -5.0)

    def test_monotone_kinds(self):
        t = np.linspace(400.0, 1500.0, 200)
        log_law = CouplingLaw("log", ref_value=1.5, gamma=3e-3)
        sqrt_law = CouplingLaw("sqrt", ref_value=0.01, gamma=5e-3)
        assert np.all(np.diff(coupling_eval(log_law, t)) > 0)
        assert np.all(np.diff(coupling_eval(sqrt_law, t)) > 0)

    def test_vectorised_matches_scalar(self):
        law = CouplingLaw("sin", ref_value=1.4, gamma=2e-2)
        t = np.array([610.0, 700.0, 950.0])
        vec = coupling_eval(law, t)
        assert np.allclose(vec, [coupling_eval(law, v) for v in t],
                           rtol=1e-15)


class TestFitLinear:
    def test_linear_fixed_point(self):
        law = CouplingLaw("linear", slope=2e-3, intercept=0.3)
        fit = fit_linear_coupling(law, 600.0, 1200.0, 101)
        assert fit.slope == pytest.approx(2e-3, rel=1e-12)
        assert fit.intercept == pytest.approx(0.3, rel=1e-12)

    def test_constant_law_flat_fit(self):
        law = CouplingLaw("tanh", ref_value=0.15, gamma=0.0)
        fit = fit_linear_coupling(law, 600.0, 1200.0, 51)
        assert fit.slope == pytest.approx(0.0, abs=1e-15)
        assert fit.intercept == pytest.approx(0.15, rel=1e-12)

    def test_against_normal_equations_oracle(self):
        law = CouplingLaw("tanh", ref_value=0.15, gamma=4e-2)
        n = 601
        fit = fit_linear_coupling(law, 600.0, 1200.0, n)
        t = np.linspace(600.0, 1200.0, n)
        a = np.vstack([t, np.ones(n)]).T
        v = coupling_eval(law, t)
        m, q = np.linalg.solve(a.T @ a, a.T @ v)
        assert fit.slope == pytest.approx(m, abs=1e-10)
        assert fit.intercept == pytest.approx(q, abs=1e-10)

    def test_least_squares_optimality(self, rng):
        law = CouplingLaw("sin", ref_value=1.4, gamma=2e-2)
        t = np.linspace(600.0, 1200.0, 201)
        v = coupling_eval(law, t)
        fit = fit_linear_coupling(law, 600.0, 1200.0, 201)
        best = np.sum((v - (fit.slope * t + fit.intercept)) ** 2)
        for _ in range(25):
            m = fit.slope * (1 + 0.1 * rng.standard_normal())
            q = fit.intercept + 0.01 * rng.standard_normal()
            assert best <= np.sum((v - (m * t + q)) ** 2) + 1e-14

    def test_degenerate_range(self):
        law = CouplingLaw("log", ref_value=1.5, gamma=3e-3)
        with pytest.raises(DegenerateRange):
            fit_linear_coupling(law, 600.0, 600.0, 10)

    def test_shape_linearisation_consistent_with_absolute_fit(self):
        law = CouplingLaw("tanh", ref_value=0.15, gamma=4e-2)
        shape_fit = linearize_shape(law, 600.0, 1200.0, 301)
        abs_fit = fit_linear_coupling(law, 600.0, 1200.0, 301)
        t = np.linspace(650.0, 1150.0, 7)
        assert np.allclose(shape_fit.evaluate(t), abs_fit.evaluate(t),
                           rtol=1e-10)


class TestTransientFactor:
    def test_pre_transient_is_unity(self):
        iaea = get_benchmark("IAEA2DPWR").schedule
        assert transient_factor(iaea, 3, 1, -0.01) == 1.0
        assert transient_factor(iaea, 3, 2, 0.0) == 1.0

    def test_iaea_step(self):
        iaea = get_benchmark("IAEA2DPWR").schedule
        for g in (1, 2):
            assert transient_factor(iaea, 3, g, 0.5) == pytest.approx(0.9)
        assert transient_factor(iaea, 1, 1, 0.5) == 1.0

    def test_twigl_ramp_point(self):
        sched = twigl_schedule()
        assert transient_factor(sched, 1, 2, 0.1) == pytest.approx(
            0.988333, abs=1e-6)

    def test_twigl_branch_continuity(self):
        sched = twigl_schedule()
        ramp_end = transient_factor(sched, 1, 2, 0.2)
        held = transient_factor(sched, 1, 2, 0.2000001)
        assert abs(ramp_end - 0.97666) < 1e-4
        assert abs(held - 0.97666) < 1e-9
        assert transient_factor(sched, 1, 1, 0.5) == 1.0


def _mini_iaea(**kw):
    return iaea_2d_pwr(cells_per_side=17, **kw)


def _mini_twigl_b(**kw):
    return twigl2d_b(cells_per_side=20, **kw)


class TestRunTransient:
    def test_modes_share_initial_state(self):
        case = _mini_twigl_b()
        runs = {mode: run_transient(case, mode, 1.2, t_end=0.04)
                for mode in ("fom", "afom", "lcfom")}
        base = runs["fom"]
        for mode in ("afom", "lcfom"):
            for name in ("T", "phi1", "phi2"):
                assert np.array_equal(runs[mode].matrix(name)[0],
                                      base.matrix(name)[0])

    def test_parameter_box_enforced(self):
        case = _mini_twigl_b()
        with pytest.raises(ParameterOutOfRange):
            run_transient(case, "fom", 5.0, t_end=0.04)
        with pytest.raises(ParameterOutOfRange):
            run_transient(case, "fom", None, t_end=0.04)

    def test_zero_gamma_matches_uncoupled(self):
        # with the feedback strengths zeroed, the coupled run reproduces the
        # run with no laws at all
        case = _mini_iaea()
        problem = case.problem(None)
        problem.laws = {k: CouplingLaw(law.kind, gamma=0.0)
                        for k, law in problem.laws.items()}
        problem.t_end = 0.2
        coupled = run_transient(problem, "fom")
        problem2 = case.problem(None)
        problem2.laws = {k: None for k in problem2.laws}
        problem2.t_end = 0.2
        plain = run_transient(problem2, "fom")
        for name in ("T", "phi1", "phi2"):
            a, b = coupled.matrix(name), plain.matrix(name)
            assert np.max(np.abs(a - b)) <= 1e-8 * np.max(np.abs(b))

    def test_afom_equals_fom_without_feedback(self):
        # constant coupling laws: the weak-coupling surrogates are exact,
        # so afom and fom agree to solver precision
        case = _mini_iaea()
        problem = case.problem(None)
        problem.laws = {k: None for k in problem.laws}
        problem.t_end = 0.3
        fom = run_transient(problem, "fom")
        afom = run_transient(problem, "afom")
        for name in ("T", "phi1", "phi2"):
            a, b = afom.matrix(name), fom.matrix(name)
            rel = np.max(np.abs(a - b)) / np.max(np.abs(b))
            assert rel < 1e-8

    def test_twigl_b_fom_lcfom_diverge(self):
        from romassim.harness.metrics import global_outputs
        from romassim.neutronics import expand_materials
        case = _mini_twigl_b()
        mu = 1.9
        fom = run_transient(case, "fom", mu, t_end=1.0)
        lc = run_transient(case, "lcfom", mu, t_end=1.0)
        cm = expand_materials(case.mesh, case.materials)
        p_f = global_outputs(fom, cm, case.p0).power_rel
        p_l = global_outputs(lc, cm, case.p0).power_rel
        gap = np.max(np.abs(p_f - p_l) / np.abs(p_f))
        assert gap > 0.01

    def test_sampling_grid(self):
        case = _mini_twigl_b()
        snaps = run_transient(case, "fom", 1.0, dt=0.01, t_end=0.1,
                              sample_every=0.02)
        assert snaps.n_snapshots == 6
        assert np.allclose(snaps.params[:, 0], np.arange(6) * 0.02)

    def test_substepping_consistent(self):
        # halving dt below the sampling interval changes results only at
        # the discretisation level, and sampling times stay aligned
        case = _mini_twigl_b()
        a = run_transient(case, "fom", 1.0, dt=0.02, t_end=0.2)
        b = run_transient(case, "fom", 1.0, dt=0.01, t_end=0.2,
                          sample_every=0.02)
        assert np.allclose(a.params[:, 0], b.params[:, 0])
        rel = np.max(np.abs(a.matrix("T") - b.matrix("T")))
        assert 0 < rel < 5.0   # first-order dt effect, same trajectory
