import math

import mpmath
import numpy as np
import pytest

from pssmp.levy_model import (
    Direction,
    GateError,
    LevyModel,
    PredictionProblem,
    laplace_exponent,
)
from pssmp.lamperti_sim import (
    CHUNK_SIZE,
    PathConfig,
    SimulationError,
    XiPath,
    default_horizon,
    lamperti_build,
    locate_theta,
    mc_vk,
    objective_estimate,
    simulate_xi,
    sweep_K,
)
from pssmp.threshold_solver import solve_kstar
from pssmp.value_functions import v_k_1d, v_star_1d

KILLED_BM = PredictionProblem(LevyModel.brownian(1.0, 1.0, q=0.5), 1.5, Direction.MAX)


def within(a, b, se, n_se=3.0):
    return abs(a - b) < n_se * se


# expected overshoot of a Gaussian random walk over a level, per unit sigma*sqrt(dt)
OVERSHOOT = float(-mpmath.zeta(0.5) / mpmath.sqrt(2 * mpmath.pi))


def monitored(k, sigma, dt):
    """Level a continuous threshold effectively sits at when checked on a grid."""
    return k + OVERSHOOT * sigma * math.sqrt(dt)


class TestPathConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(dt=0.0), dict(dt=0.1, horizon=0.05), dict(n_paths=0), dict(x0=0.0), dict(seed=-1),
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            PathConfig(**kwargs)

    def test_default_horizon(self):
        assert default_horizon(LevyModel.brownian(1.0, 2.0)) == 20.0
        assert default_horizon(LevyModel.brownian(1.0, 0.0, q=4.0)) == 10.0
        assert PathConfig().resolved(LevyModel.brownian(1.0, 1.0)).horizon == 40.0
        with pytest.raises(ValueError):
            default_horizon(LevyModel.brownian(1.0, 0.0))


class TestSimulateXi:
    def test_unkilled_lifetime_is_infinite(self):
        paths = simulate_xi(LevyModel.brownian(1.0, 1.0), PathConfig(dt=0.1, horizon=1.0), 5)
        assert all(p.lifetime == math.inf and not p.killed for p in paths)

    def test_brownian_drift_law_of_large_numbers(self):
        horizon = 2.0
        paths = simulate_xi(LevyModel.brownian(1.0, 1.0),
                            PathConfig(dt=0.01, horizon=horizon, n_paths=10_000, seed=1))
        rate = np.array([p.xi[-1] / p.t[-1] for p in paths])
        assert paths[0].t[-1] == pytest.approx(horizon)
        assert within(rate.mean(), -1.0, rate.std(ddof=1) / math.sqrt(rate.size))

    def test_cramer_mean_at_time_one(self):
        model = LevyModel.cramer_lundberg(2.0, 1.0, 1.0)
        paths = simulate_xi(model, PathConfig(horizon=1.0, n_paths=10_000, seed=2))
        end = np.array([p.xi[-1] for p in paths])
        h = 1e-6
        slope = (laplace_exponent(model, h) - laplace_exponent(model, -h)) / (2 * h)
        assert slope == pytest.approx(1.0, rel=1e-8)
        assert within(end.mean(), slope, end.std(ddof=1) / math.sqrt(end.size))

    def test_cramer_jumps_are_downward(self):
        paths = simulate_xi(LevyModel.cramer_lundberg(1.0, 3.0, 1.0),
                            PathConfig(horizon=5.0, n_paths=50, seed=3))
        for p in paths:
            same_time = np.diff(p.t) == 0
            assert np.all(np.diff(p.xi)[same_time] < 0)
            assert np.all(np.diff(p.xi)[~same_time] > 0)

    @pytest.mark.parametrize("model", [LevyModel.brownian(1.0, 1.0, q=2.0),
                                       LevyModel.cramer_lundberg(1.0, 1.0, 1.0, q=2.0)])
    def test_killing(self, model):
        horizon = 1.0
        paths = simulate_xi(model, PathConfig(dt=0.01, horizon=horizon, n_paths=4000, seed=4))
        killed = np.array([p.killed for p in paths])
        p_kill = 1.0 - math.exp(-2.0 * horizon)
        assert within(killed.mean(), p_kill, math.sqrt(p_kill * (1 - p_kill) / killed.size))
        for p in paths:
            if p.killed:
                assert p.t[-1] == pytest.approx(p.lifetime)

    def test_seeded(self):
        cfg = PathConfig(dt=0.1, horizon=1.0, n_paths=3, seed=9)
        a, b = simulate_xi(LevyModel.brownian(1, 1), cfg), simulate_xi(LevyModel.brownian(1, 1), cfg)
        for p, r in zip(a, b):
            np.testing.assert_array_equal(p.xi, r.xi)


def drift_path(mu, horizon=5.0, dt=1e-3):
    t = np.arange(0.0, horizon + dt / 2, dt)
    return XiPath(t, -mu * t, math.inf, horizon)


class TestLampertiBuild:
    def test_zero_path_is_identity_clock(self):
        t = np.linspace(0.0, 3.0, 31)
        path = lamperti_build(XiPath(t, np.zeros_like(t), math.inf, 3.0), alpha=1.5, x0=2.0)
        np.testing.assert_allclose(path.x, 2.0)
        np.testing.assert_allclose(path.clock, t, rtol=1e-14)

    @pytest.mark.parametrize("alpha,mu", [(1.0, 1.0), (2.0, 0.5), (0.5, 3.0)])
    def test_linear_drift_clock(self, alpha, mu):
        path = drift_path(mu)
        clock = lamperti_build(path, alpha).clock
        exact = (1.0 - np.exp(-alpha * mu * path.t)) / (alpha * mu)
        np.testing.assert_allclose(clock, exact, rtol=1e-6, atol=1e-12)

    def test_scaling(self):
        xi = simulate_xi(LevyModel.brownian(1.0, 1.0), PathConfig(dt=0.01, horizon=3.0, seed=5), 1)[0]
        alpha, c = 1.5, 2.0
        one = lamperti_build(xi, alpha, x0=1.0)
        two = lamperti_build(xi, alpha, x0=c)
        # {c X_{c^-alpha u}}: the same point is reached at c^alpha times the time
        np.testing.assert_allclose(two.x, c * one.x, rtol=1e-14)
        np.testing.assert_allclose(two.u, c**alpha * one.u, rtol=1e-14)

    def test_lifetime_when_killed(self):
        t = np.array([0.0, 1.0])
        path = lamperti_build(XiPath(t, np.array([0.0, 0.0]), 1.0, 5.0), alpha=1.0, x0=3.0)
        assert path.zeta_kind == "killed"
        assert path.zeta == pytest.approx(3.0)

    def test_lifetime_tail_correction(self):
        alpha, mu = 1.0, 1.0
        path = lamperti_build(drift_path(mu), alpha, psi_alpha=-alpha * mu)
        assert path.zeta_kind == "tail-corrected"
        assert path.zeta == pytest.approx(1.0 / (alpha * mu), rel=1e-9)

    def test_lifetime_not_reached(self):
        assert lamperti_build(drift_path(1.0), 1.0).zeta_kind == "not-reached"

    def test_overflow_guard(self):
        t = np.array([0.0, 1.0, 2.0])
        path = lamperti_build(XiPath(t, np.array([0.0, 10.0, 1000.0]), math.inf, 2.0), 1.0)
        assert path.overflowed and path.zeta_kind == "overflow"
        assert path.x.size == 2


class TestLocateTheta:
    def test_decreasing_path(self):
        loc = locate_theta(drift_path(1.0), Direction.MAX, 1.0)
        assert loc.g == 0.0 and loc.theta == 0.0

    def test_jump_then_drift_down(self):
        t = np.array([0.0, 1.0, 1.0, 3.0])
        xi = np.array([0.0, 0.0, 2.0, 0.0])
        loc = locate_theta(XiPath(t, xi, math.inf, 100.0), Direction.MAX, 1.0)
        assert loc.g == 1.0 and loc.index == 2
        assert loc.theta == pytest.approx(1.0)

    def test_last_visit_on_ties(self):
        t = np.array([0.0, 1.0, 2.0, 3.0])
        xi = np.array([0.0, 1.0, 1.0, -1.0])
        assert locate_theta(XiPath(t, xi, math.inf, 100.0), Direction.MAX, 1.0).g == 2.0

    def test_minimum_of_dual(self):
        t = np.array([0.0, 1.0, 2.0])
        dual = XiPath(t, np.array([0.0, 1.0, 0.5]), math.inf, 100.0)
        loc = locate_theta(dual.dual(), Direction.MIN, 2.0, x0=2.0)
        assert loc.g == 1.0
        # X = x0 exp(-dual), clock of X's own Lamperti path, scaled by x0^alpha
        clock = 4.0 * (1.0 - math.exp(-2.0)) / 2.0
        assert loc.theta == pytest.approx(clock)

    def test_truncation_flag(self):
        t = np.linspace(0.0, 10.0, 101)
        rising = XiPath(t, t.copy(), math.inf, 10.0)
        assert locate_theta(rising, Direction.MAX, 1.0).truncated
        killed = XiPath(t, t.copy(), 10.0, 10.0)
        assert not locate_theta(killed, Direction.MAX, 1.0).truncated

    def test_matches_engine_in_path_mode(self, bm_max):
        # explicit-path Theta agrees in mean with the kernel's Theta
        cfg = PathConfig(dt=0.01, horizon=20.0, n_paths=2000, seed=6)
        thetas = [locate_theta(p, Direction.MAX, 1.0).theta for p in simulate_xi(bm_max.model, cfg)]
        report = sweep_K(bm_max, [0.47], cfg, tail="path")
        se = math.hypot(np.std(thetas) / math.sqrt(len(thetas)), report.theta_stderr)
        assert within(np.mean(thetas), report.theta_mean, se)


class TestExpectedTheta:
    def test_stable_under_horizon_doubling(self, bm_max):
        reports = [sweep_K(bm_max, [0.47], PathConfig(dt=0.01, horizon=h, n_paths=4000, seed=5),
                           tail="path") for h in (20.0, 40.0)]
        a, b = reports
        assert a.theta_mean > 0
        assert within(a.theta_mean, b.theta_mean, math.hypot(a.theta_stderr, b.theta_stderr), 2.0)


class TestSweep:
    def test_singleton_equals_objective_estimate(self):
        cfg = PathConfig(dt=1e-3, n_paths=3000, seed=8)
        row = sweep_K(KILLED_BM, [0.5], cfg).rows[0]
        assert objective_estimate(KILLED_BM, 0.5, cfg) == (row.mean, row.stderr)

    def test_deterministic(self, bm_max):
        cfg = PathConfig(dt=1e-3, n_paths=2000, seed=12)
        a = sweep_K(bm_max, [0.4, 0.47, 0.6], cfg)
        b = sweep_K(bm_max, [0.4, 0.47, 0.6], cfg)
        assert a.rows == b.rows
        np.testing.assert_array_equal(a.losses, b.losses)

    def test_independent_of_thread_count(self, bm_max, monkeypatch):
        cfg = PathConfig(dt=1e-2, n_paths=2 * CHUNK_SIZE + 17, seed=13)
        monkeypatch.setenv("PSSMP_THREADS", "1")
        a = sweep_K(bm_max, [0.47], cfg)
        monkeypatch.setenv("PSSMP_THREADS", "3")
        b = sweep_K(bm_max, [0.47], cfg)
        np.testing.assert_array_equal(a.losses, b.losses)

    def test_grid_order_does_not_matter(self, bm_max):
        cfg = PathConfig(dt=1e-2, n_paths=1000, seed=14)
        a = sweep_K(bm_max, [0.3, 0.6, 0.47], cfg)
        b = sweep_K(bm_max, [0.6, 0.47, 0.3], cfg)
        assert a.rows[0] == b.rows[2] and a.rows[1] == b.rows[0]

    def test_immediate_stop_has_zero_loss(self, bm_max, bessel3):
        cfg = PathConfig(dt=1e-2, n_paths=500, seed=15)
        assert sweep_K(bm_max, [1.0], cfg).rows[0].mean == 0.0
        assert sweep_K(bessel3, [1.0], cfg).rows[0].mean == 0.0

    def test_bessel3_argmin(self, bessel3):
        grid = np.round(np.arange(2.0, 3.21, 0.2), 1)
        report = sweep_K(bessel3, grid, PathConfig(dt=1e-3, n_paths=20_000, seed=11))
        assert 2.4 <= grid[report.argmin()] <= 2.8
        assert report.max_truncation_rate <= 0.01

    def test_shape_decreasing_then_increasing(self, bessel3):
        grid = np.round(np.arange(2.0, 3.21, 0.2), 1)
        report = sweep_K(bessel3, grid, PathConfig(dt=1e-3, n_paths=20_000, seed=11))
        best = report.argmin()
        for i in range(len(grid) - 1):
            diff, paired, _ = report.contrast(i + 1, i)
            if i < best:
                assert diff < 2 * paired
            else:
                assert diff > -2 * paired

    def test_argmin_near_threshold_bm_max(self, bm_max):
        K = solve_kstar(bm_max).K_star
        grid = K * np.array([0.6, 0.8, 1.0, 1.2, 1.4])
        report = sweep_K(bm_max, grid, PathConfig(dt=1e-3, n_paths=20_000, seed=16))
        assert abs(report.argmin() - 2) <= 1

    def test_path_and_conditional_tails_agree(self):
        cfg = PathConfig(dt=1e-2, horizon=30.0, n_paths=8000, seed=17)
        a = sweep_K(KILLED_BM, [0.5], cfg).rows[0]
        b = sweep_K(KILLED_BM, [0.5], cfg, tail="path").rows[0]
        assert within(a.mean, b.mean, math.hypot(a.stderr, b.stderr))

    def test_report_fields(self, bm_max):
        report = sweep_K(bm_max, [0.3, 0.47], PathConfig(dt=1e-2, n_paths=500, seed=18))
        assert report.label == "gated" and report.finite_variance
        assert report.theta_mean is None and report.tail == "conditional"
        assert all(r.stderr > 0 and r.n == 500 for r in report.rows)
        assert report.truncation_bias_bound == 0.0
        record = report.rows[0].as_record()
        assert set(record) == {"K", "mean", "stderr", "n", "truncation_rate"}
        dump = report.path_dump(1)
        assert len(dump) == 500 and dump[0][0] == 0
        diff, paired, unpaired = report.contrast(0, 1)
        assert diff == pytest.approx(report.rows[0].mean - report.rows[1].mean)
        assert paired > 0 and unpaired > 0

    def test_killed_paths_counted(self):
        report = sweep_K(KILLED_BM, [0.05], PathConfig(dt=1e-2, n_paths=2000, seed=19))
        assert 0 < report.killed_rate < 1

    def test_finite_variance_flags(self, bm_max, cramer, bessel3):
        cfg = PathConfig(dt=1e-2, n_paths=200, seed=20)
        assert sweep_K(bm_max, [0.47], cfg).finite_variance
        assert not sweep_K(bm_max, [0.47], replace_horizon(cfg, 5.0), tail="path").finite_variance
        assert not sweep_K(cramer, [0.04], cfg).finite_variance
        assert sweep_K(bessel3, [2.6], cfg).finite_variance

    def test_validation(self, bm_max, bessel3):
        cfg = PathConfig(dt=1e-2, n_paths=10)
        with pytest.raises(ValueError):
            sweep_K(bm_max, [1.2], cfg)
        with pytest.raises(ValueError):
            sweep_K(bessel3, [0.5], cfg)
        with pytest.raises(ValueError):
            sweep_K(bm_max, [], cfg)
        with pytest.raises(ValueError):
            sweep_K(bm_max, [0.5], cfg, tail="other")


def replace_horizon(cfg, horizon):
    return PathConfig(cfg.dt, horizon, cfg.n_paths, cfg.seed, cfg.x0)


class TestTruncationAndGating:
    def test_excess_truncation_fails(self, bm_max):
        with pytest.raises(SimulationError, match="truncated"):
            sweep_K(bm_max, [0.1], PathConfig(dt=1e-2, horizon=0.5, n_paths=500))

    def test_gate_enforced(self):
        problem = PredictionProblem(LevyModel.brownian(1.0, 1.0), 2.0)
        with pytest.raises(GateError):
            sweep_K(problem, [0.5], PathConfig(dt=1e-2, n_paths=100))

    def test_ungated_label(self):
        problem = PredictionProblem(LevyModel.brownian(1.0, 1.0), 2.0)
        report = sweep_K(problem, [0.5], PathConfig(dt=1e-2, n_paths=500, seed=21), gated=False)
        assert report.ungated and report.label == "ungated, biased"

    def test_gated_problem_run_ungated_is_not_labelled(self, bm_max):
        report = sweep_K(bm_max, [0.5], PathConfig(dt=1e-2, n_paths=100), gated=False)
        assert report.label == "gated"

    def test_mc_vk_truncation_fails(self, bessel3):
        with pytest.raises(SimulationError, match="horizon"):
            mc_vk(bessel3, 0.96, 0.0, PathConfig(dt=1e-2, horizon=0.05, n_paths=500))


class TestReducedObjective:
    def test_zero_beyond_threshold(self, bm_max):
        assert mc_vk(bm_max, 0.5, 0.7, PathConfig()) == (0.0, 0.0)

    def test_rejects_bad_arguments(self, bm_max):
        with pytest.raises(ValueError):
            mc_vk(bm_max, 0.5, -0.1, PathConfig())
        with pytest.raises(ValueError):
            mc_vk(bm_max, 0.5, 0.0, PathConfig(), payoff="g")

    def test_bm_max_optimal_value(self, bm_max):
        sol = solve_kstar(bm_max)
        mean, se = mc_vk(bm_max, sol.k_star, 0.2, PathConfig(dt=1e-3, n_paths=20_000, seed=22))
        exact = v_star_1d(bm_max, 0.2, sol)
        assert exact < 0
        assert within(mean, exact, se)

    def test_arbitrary_threshold_killed(self):
        # away from k* the slope of V_k in k is nonzero, so the grid-checked
        # trigger is compared with the level shifted by the expected overshoot
        k, dt = 0.4, 1e-3
        mean, se = mc_vk(KILLED_BM, k, 0.0, PathConfig(dt=dt, n_paths=20_000, seed=23))
        assert within(mean, v_k_1d(KILLED_BM, monitored(k, 1.0, dt), 0.0), se)

    def test_grid_trigger_bias_shrinks_with_step(self):
        k, exact = 0.4, v_k_1d(KILLED_BM, 0.4, 0.0)
        gaps = [exact - mc_vk(KILLED_BM, k, 0.0, PathConfig(dt=dt, n_paths=20_000, seed=23))[0]
                for dt in (4e-3, 2.5e-4)]
        assert gaps[1] < 0.5 * gaps[0]

    def test_payoff_zero_threshold_value_is_worse(self, bm_max):
        sol, dt = solve_kstar(bm_max), 1e-3
        at_k0, se = mc_vk(bm_max, sol.k0, 0.0, PathConfig(dt=dt, n_paths=20_000, seed=24))
        assert within(at_k0, v_k_1d(bm_max, monitored(sol.k0, 1.0, dt), 0.0), se)
        assert at_k0 > v_star_1d(bm_max, 0.0, sol) + 3 * se

    def test_bessel3(self, bessel3):
        sol = solve_kstar(bessel3)
        mean, se = mc_vk(bessel3, sol.k_star, 0.0, PathConfig(dt=1e-3, n_paths=20_000, seed=25))
        assert within(mean, v_star_1d(bessel3, 0.0, sol), se)

    def test_cramer_exact_events(self, cramer):
        sol = solve_kstar(cramer)
        mean, se = mc_vk(cramer, sol.k_star, 0.5, PathConfig(n_paths=20_000, seed=26))
        assert within(mean, v_star_1d(cramer, 0.5, sol), se)

    def test_constant_payoff_bound(self):
        beta, model = KILLED_BM.beta, KILLED_BM.model
        rate = model.q - (0.5 * beta**2 - beta)
        assert rate > 0
        mean, se = mc_vk(KILLED_BM, 1.0, 0.0, PathConfig(dt=1e-3, n_paths=5000, seed=27),
                         payoff="one")
        assert 0 < mean <= 1.0 / rate + 3 * se

    def test_discount_consistency(self, cramer):
        sol = solve_kstar(cramer)
        a = mc_vk(cramer, sol.k_star, 0.0, PathConfig(horizon=60.0, n_paths=20_000, seed=28))
        b = mc_vk(cramer, sol.k_star, 0.0, PathConfig(horizon=120.0, n_paths=20_000, seed=28))
        assert abs(a[0] - b[0]) < min(a[1], b[1])

    def test_discount_consistency_brownian(self):
        sol = solve_kstar(KILLED_BM)
        runs = [mc_vk(KILLED_BM, sol.k_star, 0.0,
                      PathConfig(dt=1e-2, horizon=h, n_paths=5000, seed=29)) for h in (40.0, 80.0)]
        assert abs(runs[0][0] - runs[1][0]) < min(runs[0][1], runs[1][1])

    def test_x0_scaling(self, bm_max):
        base = mc_vk(bm_max, 0.5, 0.0, PathConfig(dt=1e-2, n_paths=500, seed=30))
        scaled = mc_vk(bm_max, 0.5, 0.0, PathConfig(dt=1e-2, n_paths=500, seed=30, x0=2.0))
        assert scaled[0] == pytest.approx(2.0 * base[0], rel=1e-12)

    def test_reduction_consistency(self):
        K = 0.6
        cfg = PathConfig(dt=1e-3, n_paths=20_000, seed=31)
        two_d, se2 = objective_estimate(KILLED_BM, K, cfg)
        one_d, se1 = mc_vk(KILLED_BM, -math.log(K), 0.0, cfg)
        assert within(two_d, one_d, math.hypot(se1, se2))
