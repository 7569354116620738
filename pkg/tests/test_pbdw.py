import numpy as np
import pytest
from scipy.linalg import eigh

from romassim.errors import (EmptyValidation, LibraryExhausted, RankDeficient,
                             SingularSaddle)
from romassim.fields import ScalarField, StructuredMesh, l2_norms
from romassim.geim import geim_greedy, geim_online
from romassim.pbdw import (background_update_model, best_fit_gap,
                           default_xi_grid, inf_sup, noise_trace_term,
                           pbdw_online, pbdw_online_batch, sgreedy, tune_xi,
                           xi_error_curve)
from romassim.reduction import SnapshotSet, compute_pod
from romassim.sensing import (apply_functional, build_sensor_library,
                              make_sensor, measure_matrix,
                              riesz_representation)

from conftest import random_field


def _ortho_rows(mesh, rows):
    q, _ = np.linalg.qr((rows * np.sqrt(mesh.cell_area)).T)
    return q.T / np.sqrt(mesh.cell_area)


def _train_set(mesh, rng, n_snaps=15, rank=6):
    x, y = mesh.cell_centers()
    shapes = np.vstack([np.cos(0.25 * (k + 1) * x) *
                        np.sin(0.2 * (k + 1) * y + 0.4) + 0.5
                        for k in range(rank)])
    coeffs = (rng.standard_normal((n_snaps, rank)) + 1.5) \
        * np.exp(-0.7 * np.arange(rank))
    return SnapshotSet(mesh, np.arange(float(n_snaps)), {"u": coeffs @ shapes})


class TestInfSup:
    def test_identical_spans(self, coarse_mesh, rng):
        rows = rng.standard_normal((3, coarse_mesh.n_cells))
        assert inf_sup(coarse_mesh, rows, rows.copy()) == pytest.approx(
            1.0, abs=1e-10)

    def test_orthogonal_spans(self, coarse_mesh):
        a = np.zeros((1, coarse_mesh.n_cells))
        b = np.zeros((1, coarse_mesh.n_cells))
        a[0, :30] = 1.0
        b[0, 60:] = 1.0
        assert inf_sup(coarse_mesh, a, b) == pytest.approx(0.0, abs=1e-12)

    def test_rank_deficient(self, coarse_mesh, rng):
        row = rng.standard_normal(coarse_mesh.n_cells)
        rows = np.vstack([row, 2.0 * row])
        with pytest.raises(RankDeficient):
            inf_sup(coarse_mesh, rows, rng.standard_normal(
                (2, coarse_mesh.n_cells)))

    def test_randomized_brute_force_oracle(self, coarse_mesh, rng):
        z = rng.standard_normal((3, coarse_mesh.n_cells))
        u = rng.standard_normal((5, coarse_mesh.n_cells))
        beta = inf_sup(coarse_mesh, z, u)
        zon = _ortho_rows(coarse_mesh, z)
        uon = _ortho_rows(coarse_mesh, u)
        best = np.inf
        for _ in range(100):
            c = rng.standard_normal((1000, 3))
            c /= np.linalg.norm(c, axis=1, keepdims=True)
            w = c @ zon
            proj = (w @ uon.T * coarse_mesh.cell_area) @ uon
            sup = l2_norms(coarse_mesh, proj) / l2_norms(coarse_mesh, w)
            best = min(best, float(sup.min()))
        assert beta == pytest.approx(best, abs=1e-3)

    def test_schur_eigenproblem_oracle(self, coarse_mesh, rng):
        # independent route: beta^2 is the smallest eigenvalue of
        # K^T A^-1 K z = lambda Z z with raw (unorthonormalised) Grams
        z = rng.standard_normal((3, coarse_mesh.n_cells))
        u = rng.standard_normal((5, coarse_mesh.n_cells))
        a = u @ u.T * coarse_mesh.cell_area
        k = u @ z.T * coarse_mesh.cell_area
        gz = z @ z.T * coarse_mesh.cell_area
        schur = k.T @ np.linalg.inv(a) @ k
        lam = eigh(schur, gz, eigvals_only=True)
        assert inf_sup(coarse_mesh, z, u) == pytest.approx(
            np.sqrt(min(abs(lam))), rel=1e-10)

    def test_zero_when_background_larger(self, coarse_mesh, rng):
        z = rng.standard_normal((4, coarse_mesh.n_cells))
        u = rng.standard_normal((2, coarse_mesh.n_cells))
        assert inf_sup(coarse_mesh, z, u) == 0.0


class TestSgreedy:
    def test_single_mode_peak_sensor(self, coarse_mesh, rng):
        # a single localised background mode: the sensor at its peak wins
        x, y = coarse_mesh.cell_centers()
        bump = np.exp(-((x - 6.5) ** 2 + (y - 6.5) ** 2) / 1.5)
        train = SnapshotSet(coarse_mesh, np.arange(4.0),
                            {"u": np.vstack([(1 + 0.1 * k) * bump
                                             for k in range(4)])})
        basis = compute_pod(train, "u", 1)
        library = build_sensor_library(coarse_mesh, stride=2, spread=0.8)
        model = sgreedy(basis, library, 3)
        best = max(range(len(library)),
                   key=lambda k: abs(apply_functional(
                       library[k], basis.mode(0))))
        assert model.sensor_indices[0] == best

    def test_nested_spans_give_unit_infsup(self, coarse_mesh):
        lib = build_sensor_library(coarse_mesh, stride=3, spread=0.9)
        g = np.vstack([riesz_representation(v).values for v in lib[:3]])
        model = background_update_model(coarse_mesh, "u", g, lib[:3])
        assert model.beta_table[2, 2] == pytest.approx(1.0, abs=1e-9)

    def test_library_exhausted(self, coarse_mesh, rng):
        basis = compute_pod(_train_set(coarse_mesh, rng), "u", 2)
        lib = build_sensor_library(coarse_mesh, stride=5, spread=1.0)
        with pytest.raises(LibraryExhausted):
            sgreedy(basis, lib, len(lib) + 1)

    def test_beta_history_matches_dense_oracle(self, coarse_mesh, rng):
        train = _train_set(coarse_mesh, rng)
        basis = compute_pod(train, "u", 4)
        library = build_sensor_library(coarse_mesh, stride=2, spread=0.8)
        model = sgreedy(basis, library, 10)
        z = basis.mode_matrix
        for m in range(1, 11):
            n = min(4, m)
            u = model.update[:m]
            a = u @ u.T * coarse_mesh.cell_area
            k = u @ z[:n].T * coarse_mesh.cell_area
            gz = z[:n] @ z[:n].T * coarse_mesh.cell_area
            lam = eigh(k.T @ np.linalg.inv(a) @ k, gz, eigvals_only=True)
            want = np.sqrt(min(abs(lam))) if m >= n else 0.0
            got = model.beta_table[n - 1, m - 1]
            assert got == pytest.approx(want, abs=1e-8)

    def test_beta_monotone_in_sensors(self, coarse_mesh, rng):
        train = _train_set(coarse_mesh, rng)
        basis = compute_pod(train, "u", 4)
        library = build_sensor_library(coarse_mesh, stride=2, spread=0.8)
        model = sgreedy(basis, library, 12)
        for n in range(model.beta_table.shape[0]):
            row = model.beta_table[n, n:]
            assert np.all(np.diff(row) >= -1e-12)

    def test_unisolvent_gram(self, coarse_mesh, rng):
        train = _train_set(coarse_mesh, rng)
        basis = compute_pod(train, "u", 4)
        library = build_sensor_library(coarse_mesh, stride=2, spread=0.8)
        model = sgreedy(basis, library, 8)
        eigvals = np.linalg.eigvalsh(model.A)
        assert eigvals[0] > 0
        assert np.max(np.abs(model.A - model.A.T)) < 1e-10


class TestOnline:
    def _fitted(self, mesh, rng, n=3, m=8):
        train = _train_set(mesh, rng)
        basis = compute_pod(train, "u", n)
        library = build_sensor_library(mesh, stride=2, spread=0.8)
        return sgreedy(basis, library, m), train

    def test_background_truth_recovered_exactly(self, coarse_mesh, rng):
        model, _ = self._fitted(coarse_mesh, rng)
        alpha_true = rng.standard_normal(3)
        truth = ScalarField(coarse_mesh, alpha_true @ model.background)
        y = measure_matrix(model.sensors, truth.values)[0]
        alpha, theta, est = pbdw_online(model, y, xi=0.0)
        assert np.max(np.abs(est.values - truth.values)) < 1e-9
        assert np.max(np.abs(theta)) < 1e-9

    def test_constraint_block_satisfied(self, coarse_mesh, rng):
        model, train = self._fitted(coarse_mesh, rng)
        truth = train.snapshot("u", 5)
        y = measure_matrix(model.sensors, truth.values)[0]
        alpha, theta, est = pbdw_online(model, y, xi=1e-3)
        assert np.max(np.abs(model.K.T @ theta)) < 1e-9

    def test_clean_data_interpolates_at_xi_zero(self, coarse_mesh, rng):
        model, train = self._fitted(coarse_mesh, rng)
        truth = train.snapshot("u", 7)
        y = measure_matrix(model.sensors, truth.values)[0]
        _, _, est = pbdw_online(model, y, xi=0.0)
        readings = measure_matrix(model.sensors, est.values)[0]
        assert np.max(np.abs(readings - y)) < 1e-9

    def test_large_xi_background_least_squares(self, coarse_mesh, rng):
        model, train = self._fitted(coarse_mesh, rng)
        truth = train.snapshot("u", 2)
        y = measure_matrix(model.sensors, truth.values)[0]
        alpha, theta, _ = pbdw_online(model, y, xi=1e12)
        # oracle: background-only least squares through the cross matrix
        alpha_ls, *_ = np.linalg.lstsq(model.K, y, rcond=None)
        assert np.max(np.abs(alpha - alpha_ls)) < 1e-6 * max(
            1.0, np.max(np.abs(alpha_ls)))
        assert np.max(np.abs(theta)) < 1e-9

    def test_geim_equivalence_special_case(self, coarse_mesh, rng):
        # xi = 0, background = first N magic functions, same N sensors
        train = _train_set(coarse_mesh, rng)
        library = build_sensor_library(coarse_mesh, stride=2, spread=0.8)
        gm = geim_greedy(train, "u", library, m_max=4)
        n = 4
        pm = background_update_model(coarse_mesh, "u",
                                     gm.magic_matrix[:n],
                                     gm.magic_sensors[:n])
        worst = 0.0
        for _ in range(10):
            truth = np.abs(rng.standard_normal(coarse_mesh.n_cells)) \
                + random_field(coarse_mesh, rng).values * 0.1
            y = measure_matrix(gm.magic_sensors[:n], truth)[0]
            _, est_geim = geim_online(gm, y, m=n)
            _, _, est_pbdw = pbdw_online(pm, y, xi=0.0)
            num = float(l2_norms(coarse_mesh,
                                 est_geim.values - est_pbdw.values)[0])
            den = float(l2_norms(coarse_mesh, est_geim.values)[0])
            worst = max(worst, num / den)
        assert worst < 1e-8

    def test_singular_saddle_reported(self, coarse_mesh, rng):
        model, _ = self._fitted(coarse_mesh, rng, n=3, m=2)
        # m < n with xi = 0 cannot determine the background
        with pytest.raises(SingularSaddle) as err:
            pbdw_online(model, np.ones(2), xi=0.0, m=2, n=3)
        assert err.value.smallest_singular_value is not None

    def test_batch_matches_loop(self, coarse_mesh, rng):
        model, train = self._fitted(coarse_mesh, rng)
        ys = measure_matrix(model.sensors, train.matrix("u")[:5])
        alphas, thetas, ests = pbdw_online_batch(model, ys, xi=1e-2)
        for i in range(5):
            a, t, e = pbdw_online(model, ys[i], xi=1e-2)
            assert np.allclose(alphas[i], a, atol=1e-12)
            assert np.allclose(thetas[i], t, atol=1e-12)
            assert np.allclose(ests[i], e.values, atol=1e-12)


class TestTuneXi:
    def _setup(self, mesh, rng, sigma):
        train = _train_set(mesh, rng)
        basis = compute_pod(train, "u", 3)
        library = build_sensor_library(mesh, stride=2, spread=0.8)
        model = sgreedy(basis, library, 8)
        truths = train.matrix("u")[:6]
        clean = measure_matrix(model.sensors, truths)
        ys = clean + sigma * rng.standard_normal(clean.shape)
        return model, truths, ys

    def test_single_point_grid(self, coarse_mesh, rng):
        model, truths, ys = self._setup(coarse_mesh, rng, sigma=0.1)
        assert tune_xi(model, truths, ys, [0.5]) == 0.5

    def test_clean_data_prefers_small_xi(self, coarse_mesh, rng):
        model, truths, ys = self._setup(coarse_mesh, rng, sigma=0.0)
        errs = xi_error_curve(model, truths, ys, [1e-8, 1e2])
        assert errs[0] <= errs[1] + 1e-14

    def test_matches_exhaustive_argmin(self, coarse_mesh, rng):
        model, truths, ys = self._setup(coarse_mesh, rng, sigma=0.3)
        grid = default_xi_grid()
        errs = xi_error_curve(model, truths, ys, grid)
        assert tune_xi(model, truths, ys, grid) == grid[int(np.argmin(errs))]

    def test_empty_validation(self, coarse_mesh, rng):
        model, truths, ys = self._setup(coarse_mesh, rng, sigma=0.1)
        with pytest.raises(EmptyValidation):
            tune_xi(model, truths, ys, [])
        with pytest.raises(EmptyValidation):
            tune_xi(model, np.empty((0, coarse_mesh.n_cells)),
                    np.empty((0, 8)), [0.1])


class TestDiagnostics:
    def test_trace_term_positive_and_decreasing_in_xi(self, coarse_mesh, rng):
        train = _train_set(coarse_mesh, rng)
        basis = compute_pod(train, "u", 3)
        library = build_sensor_library(coarse_mesh, stride=2, spread=0.8)
        model = sgreedy(basis, library, 8)
        t1 = noise_trace_term(model, xi=1e-3)
        t2 = noise_trace_term(model, xi=1.0)
        assert t1 > 0 and t2 > 0 and t2 < t1

    def test_apriori_bound_constant_reported(self, coarse_mesh, rng):
        # clean data: ||u - u*|| <= C / beta * best-fit gap; C is reported,
        # finite, and positive for out-of-span targets
        train = _train_set(coarse_mesh, rng)
        basis = compute_pod(train, "u", 3)
        library = build_sensor_library(coarse_mesh, stride=2, spread=0.8)
        model = sgreedy(basis, library, 8)
        beta = model.beta_table[2, 7]
        consts = []
        for i in (0, 4, 9):
            truth = train.snapshot("u", i)
            y = measure_matrix(model.sensors, truth.values)[0]
            _, _, est = pbdw_online(model, y, xi=0.0)
            err = float(l2_norms(coarse_mesh,
                                 truth.values - est.values)[0])
            gap = best_fit_gap(model, truth)
            if gap > 1e-13:
                consts.append(err * beta / gap)
        assert all(np.isfinite(c) and c >= 0 for c in consts)