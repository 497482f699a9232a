import io
import math

import numpy as np
import pytest
from sklearn.base import clone

import gsid
from gsid import (Box, GridSearchEstimator, SineProduct, SystemSpec, ZeroInput,
                  gaussian, simulate, uniform_symmetric)
from gsid.estimator import (EstimatorConfig, ResidualData, SigmaScenario, build_grid,
                            c_phi, evaluation_times, g_hat, omega_indicator,
                            records_to_csv, run_estimation, sigma_domain,
                            sigma_side_bound, theta_side_bound)
from gsid.models import ExpressionModel, PowerBasis
from gsid.validation import ConfigurationError

SIN_SPEC = SystemSpec(model=SineProduct(), theta_box=Box.interval(0.0, 2 * math.pi))


def test_config_validation():
    EstimatorConfig(lambda_=0.02, gamma=2.0, kappa=8.0)
    with pytest.raises(ConfigurationError):
        EstimatorConfig(lambda_=0.2, gamma=2.0, kappa=8.0)  # 0.2 >= 1/4 - 1/16
    with pytest.raises(ConfigurationError):
        EstimatorConfig(lambda_=0.02, gamma=2.0, kappa=4.0)
    with pytest.raises(ConfigurationError):
        EstimatorConfig(lambda_=0.0, gamma=2.0, kappa=8.0)
    with pytest.raises(ConfigurationError):
        EstimatorConfig(lambda_=0.02, gamma=0.0, kappa=8.0)


def test_sigma_domain_scenarios():
    known = sigma_domain(123, SigmaScenario.known(0.25))
    assert known.lo[0] == known.hi[0] == 0.25
    unb = sigma_domain(7, SigmaScenario.unbounded())
    assert (unb.lo[0], unb.hi[0]) == (0.0, 7.0)
    bnd = sigma_domain(100, SigmaScenario.bounded(2.0))
    assert (bnd.lo[0], bnd.hi[0]) == (0.0, 2.0)


def test_build_grid_two_cells_per_dim():
    # side bound 100^(-0.14) ~ 0.5248 over a unit square: 2 cells per dimension
    cfg = EstimatorConfig(lambda_=0.01, gamma=1.0, kappa=5.0)
    bound = theta_side_bound(100, cfg)
    assert bound == pytest.approx(100 ** -0.14)
    grid = build_grid(Box(np.zeros(2), np.ones(2)), bound)
    assert grid.cells == (2, 2)
    centers = grid.centers()
    want = {(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)}
    assert set(map(tuple, centers)) == want


def test_build_grid_point_box():
    grid = build_grid(Box.point([0.3]), 0.1)
    assert grid.cells == (1,)
    assert grid.centers()[0] == pytest.approx([0.3])


def test_build_grid_sigma_forty_cells():
    cfg = EstimatorConfig(lambda_=0.05, gamma=1.0, kappa=8.0)
    bound = sigma_side_bound(16, cfg)
    assert bound == pytest.approx(16 ** -0.325)
    grid = build_grid(sigma_domain(16, SigmaScenario.unbounded()), bound)
    assert grid.cells == (40,)


def test_grid_legality_property():
    rng = np.random.default_rng(5)
    for _ in range(50):
        d = int(rng.integers(1, 4))
        lo = rng.uniform(-5, 5, size=d)
        hi = lo + rng.uniform(0.0, 10.0, size=d)
        box = Box(lo, hi)
        bound = float(rng.uniform(0.05, 3.0))
        grid = build_grid(box, bound)
        assert all(c >= 1 for c in grid.cells)
        assert np.all(grid.sides <= bound + 1e-15)
        assert grid.centers().shape == (grid.total, d)
        # centers tile the box: first/last center half a cell from the walls
        for j in range(d):
            axis = grid.centers_1d(j)
            assert axis[0] == pytest.approx(lo[j] + grid.sides[j] / 2)
            assert axis[-1] == pytest.approx(hi[j] - grid.sides[j] / 2)


def _traj_from_y(spec, y, c_w=math.inf, y_init=None):
    y = np.asarray(y, dtype=float)
    return ResidualData.from_arrays(spec, y, None, y_init, gamma=2.0, C=math.inf, c_w=c_w)


def test_omega_indicator_bounded_noise_all_active():
    traj = simulate(SIN_SPEC, uniform_symmetric(0.5), [1.3], ZeroInput(), T=16, seed=1)
    for i in range(traj.T + 1):
        want = 0 if i < traj.m else 1
        assert omega_indicator(traj, i, gamma=2.0, C=math.inf, c_w=0.5) == want


def test_omega_indicator_unbounded_noise_uses_gamma():
    traj = simulate(SIN_SPEC, gaussian(0.5), [1.3], ZeroInput(), T=16, seed=1)
    hist = traj.hist.copy()
    hist[5 + traj.m - 1] = 3.0  # push ||phi_5|| above gamma=2
    big = gsid.Trajectory(hist=hist, u=traj.u, w=traj.w, m=traj.m, seed=1,
                          noise_support=math.inf)
    assert omega_indicator(big, 5, gamma=2.0, C=math.inf, c_w=math.inf) == 0
    assert omega_indicator(big, 5, gamma=4.0, C=math.inf, c_w=math.inf) == 1
    # bounded-noise form ignores the current regressor
    assert omega_indicator(big, 5, gamma=2.0, C=math.inf, c_w=1.0) == 1
    # recurrence ball applies to the m-lagged regressor
    assert omega_indicator(big, 5 + big.m, gamma=10.0, C=2.0, c_w=math.inf) == 0


def test_g_hat_zero_noise_at_truth_is_zero():
    traj = simulate(SIN_SPEC, uniform_symmetric(0.0), [1.3], ZeroInput(),
                    T=12, seed=0, y_init=[0.4])
    data = ResidualData(SIN_SPEC, traj, gamma=2.0, C=math.inf)
    assert g_hat(data, [1.3], 0.0, 12) == 0.0


def test_g_hat_single_active_datum():
    # m=1; phi_1 = y_1 within gamma, phi_2 = y_2 outside: only step 1 active
    data = _traj_from_y(SIN_SPEC, [1.0, 5.0])
    assert data.ind.tolist() == [0.0, 1.0, 0.0]
    r = math.sin(0.7 * 1.0) - 5.0
    assert g_hat(data, [0.7], 0.3, 2) == pytest.approx(r * r - 0.3, abs=0)


def test_g_hat_golden_values():
    # SineProduct, theta=0.9, gaussian std 0.5, zero input, T=4, seed=7;
    # expected values frozen from a straight-loop recomputation of the sum
    traj = simulate(SIN_SPEC, gaussian(0.5), [0.9], ZeroInput(), T=4, seed=7)
    data = ResidualData(SIN_SPEC, traj, gamma=2.0, C=math.inf)
    golden = {
        0.5: 0.06372432577615927,
        1.0: 0.06979642148905851,
        1.5: 0.17970999983857305,
        2.0: 0.3689828616169132,
    }
    for x, want in golden.items():
        assert g_hat(data, [x], 0.1, 4) == want


def test_c_phi_examples():
    flat = SystemSpec(model=ExpressionModel("0*x_1 + y_1", n=1, m=1),
                      theta_box=Box.interval(0, 1))
    assert c_phi(flat, 2.0) == pytest.approx(1.0, abs=1e-12)
    assert c_phi(SIN_SPEC, 2.0) == pytest.approx(2.0, abs=0)
    pow_spec = SystemSpec(model=PowerBasis(1, 2), theta_box=Box(np.array([-3.0, -3.0]),
                                                                np.array([3.0, 3.0])))
    assert c_phi(pow_spec, 1.0) == pytest.approx(2.0, abs=0)


def test_initial_record_is_box_centers():
    traj = simulate(SIN_SPEC, gaussian(0.5), [1.3], ZeroInput(), T=8, seed=2)
    data = ResidualData(SIN_SPEC, traj, gamma=2.0, C=math.inf)
    cfg = EstimatorConfig(lambda_=0.02, gamma=2.0, kappa=8.0,
                          scenario=SigmaScenario.bounded(3.0), schedule="every-step")
    recs = run_estimation(SIN_SPEC, data, cfg)
    assert recs[0].t == 0
    assert recs[0].theta_hat == pytest.approx([math.pi])
    assert recs[0].sigma2_hat == pytest.approx(1.5)  # center of [0, 3]
    assert recs[0].feasible_count == 0


def test_carry_over_when_feasible_set_empty():
    # known-variance scenario with an absurd variance: |G| = eta * 1000 >> threshold
    traj = simulate(SIN_SPEC, uniform_symmetric(0.0), [1.3], ZeroInput(),
                    T=32, seed=0, y_init=[0.5])
    data = ResidualData(SIN_SPEC, traj, gamma=2.0, C=math.inf)
    cfg = EstimatorConfig(lambda_=0.02, gamma=2.0, kappa=8.0,
                          scenario=SigmaScenario.known(1000.0), schedule="every-step")
    recs = run_estimation(SIN_SPEC, data, cfg)
    assert all(rec.feasible_count == 0 for rec in recs[1:])
    for prev, cur in zip(recs, recs[1:]):
        assert np.array_equal(cur.theta_hat, prev.theta_hat)
        assert cur.sigma2_hat == prev.sigma2_hat


def test_noiseless_estimate_lands_within_one_cell():
    # rich playback excitation, zero noise, known zero variance
    gen = gsid.make_generator(424242)
    policy = gsid.PlaybackInput(3.5 * (2.0 * gen.random(64) - 1.0))
    traj = simulate(SIN_SPEC, uniform_symmetric(0.0), [1.3], policy, T=64, seed=5)
    cfg = EstimatorConfig(lambda_=0.02, gamma=2.0, kappa=8.0,
                          scenario=SigmaScenario.known(0.0), schedule="every-step")
    data = ResidualData(SIN_SPEC, traj, gamma=2.0, C=math.inf)
    recs = run_estimation(SIN_SPEC, data, cfg, true_theta=[1.3])
    final = recs[-1]
    cell = build_grid(SIN_SPEC.theta_box, theta_side_bound(64, cfg)).sides[0]
    assert final.t == 64
    assert final.error_norm <= cell


def _oracle_records(spec, data, cfg, eval_times, true_theta):
    """Exhaustive reimplementation: double loop over all cell pairs."""
    cphi = c_phi(spec, cfg.gamma)
    theta_hat = spec.theta_box.center.copy()
    sigma2_hat = float(sigma_domain(0, cfg.scenario).center[0])
    out = [(0, theta_hat.copy(), sigma2_hat, 0)]
    for t in eval_times:
        thr = cphi * t ** cfg.threshold_exponent
        tg = build_grid(spec.theta_box, theta_side_bound(t, cfg))
        sg = build_grid(sigma_domain(t, cfg.scenario), sigma_side_bound(t, cfg))
        X = tg.centers()
        sig = sg.centers_1d(0)
        eta = data.eta(t)
        feasible = []
        for i in range(X.shape[0]):
            gx = g_hat(data, X[i], 0.0, t)
            for j in range(sig.shape[0]):
                if abs(gx - eta * sig[j]) <= thr:
                    feasible.append((j, i))
        if feasible:
            j_star, i_star = min(feasible)
            theta_hat = X[i_star].copy()
            sigma2_hat = float(sig[j_star])
        out.append((t, theta_hat.copy(), sigma2_hat, len(feasible)))
    return out


@pytest.mark.parametrize("scenario", [
    SigmaScenario.unbounded(),
    SigmaScenario.known(0.25),
    SigmaScenario.bounded(1.0),
], ids=lambda s: s.kind)
def test_engine_matches_exhaustive_oracle(scenario):
    traj = simulate(SIN_SPEC, gaussian(0.5), [1.3], ZeroInput(), T=48, seed=17)
    cfg = EstimatorConfig(lambda_=0.02, gamma=2.0, kappa=8.0, scenario=scenario,
                          schedule="every-step")
    data = ResidualData(SIN_SPEC, traj, gamma=cfg.gamma, C=cfg.C)
    recs = run_estimation(SIN_SPEC, data, cfg, true_theta=[1.3])
    want = _oracle_records(SIN_SPEC, data, cfg,
                           evaluation_times(48, "every-step"), [1.3])
    assert len(recs) == len(want)
    for rec, (t, theta, sigma2, count) in zip(recs, want):
        assert rec.t == t
        assert np.array_equal(rec.theta_hat, theta)
        assert rec.sigma2_hat == sigma2
        assert rec.feasible_count == count


def test_engine_matches_oracle_two_dim_parameter():
    # n = 2 exercises multi-axis grids and the flat lexicographic cell order
    spec = SystemSpec(model=PowerBasis(1, 2),
                      theta_box=Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0])))
    traj = simulate(spec, gaussian(0.3), [0.4, -0.6], gsid.SineSweepInput(0.5, 9.0),
                    T=32, seed=31)
    cfg = EstimatorConfig(lambda_=0.02, gamma=3.0, kappa=8.0,
                          scenario=SigmaScenario.unbounded(), schedule="every-step")
    data = ResidualData(spec, traj, gamma=cfg.gamma, C=cfg.C)
    recs = run_estimation(spec, data, cfg, true_theta=[0.4, -0.6])
    want = _oracle_records(spec, data, cfg, evaluation_times(32, "every-step"),
                           [0.4, -0.6])
    for rec, (t, theta, sigma2, count) in zip(recs, want):
        assert rec.t == t
        assert np.array_equal(rec.theta_hat, theta)
        assert rec.sigma2_hat == sigma2
        assert rec.feasible_count == count


def test_engine_matches_oracle_lagged_regressor():
    # m = 2 exercises the lagged indicator and the two-column regressor window
    from gsid.models import DeadZone

    spec = SystemSpec(model=DeadZone(width=0.4), theta_box=Box.interval(1.0, 2.0))
    traj = simulate(spec, uniform_symmetric(1.2), [1.6], ZeroInput(), T=40, seed=13)
    cfg = EstimatorConfig(lambda_=0.02, gamma=4.0, kappa=8.0, C=3.0,
                          scenario=SigmaScenario.unbounded(), schedule="every-step")
    data = ResidualData(spec, traj, gamma=cfg.gamma, C=cfg.C)
    recs = run_estimation(spec, data, cfg, true_theta=[1.6])
    want = _oracle_records(spec, data, cfg, evaluation_times(40, "every-step"), [1.6])
    for rec, (t, theta, sigma2, count) in zip(recs, want):
        assert rec.t == t
        assert np.array_equal(rec.theta_hat, theta)
        assert rec.sigma2_hat == sigma2
        assert rec.feasible_count == count


def test_estimates_stay_in_domains():
    traj = simulate(SIN_SPEC, gaussian(0.5), [1.3], ZeroInput(), T=200, seed=23)
    cfg = EstimatorConfig(lambda_=0.02, gamma=2.0, kappa=8.0, schedule="every-step")
    data = ResidualData(SIN_SPEC, traj, gamma=cfg.gamma, C=cfg.C)
    recs = run_estimation(SIN_SPEC, data, cfg)
    for rec in recs:
        assert SIN_SPEC.theta_box.contains(rec.theta_hat)
        dom = sigma_domain(max(rec.t, 0), cfg.scenario)
        assert dom.lo[0] <= rec.sigma2_hat <= dom.hi[0]


def test_eta_monotone_and_bounded():
    traj = simulate(SIN_SPEC, gaussian(0.5), [1.3], ZeroInput(), T=100, seed=3)
    data = ResidualData(SIN_SPEC, traj, gamma=2.0, C=math.inf)
    last = 0.0
    for t in range(traj.T + 1):
        eta = data.eta(t)
        assert eta >= last
        assert eta <= t
        last = eta


def test_evaluation_times_schedules():
    times = evaluation_times(2000, "auto", extra=(600, 1024))
    assert times[0] == 2
    assert set(range(2, 513)).issubset(times)
    assert 600 in times and 1024 in times and 2000 in times
    assert all(t <= 2000 for t in times)
    dense = evaluation_times(64, "every-step")
    assert dense == list(range(2, 65))
    geo = evaluation_times(100, "geometric")
    assert geo[0] == 2 and geo[-1] == 100 and len(geo) < 30


def test_replay_determinism_csv(tmp_path):
    traj = simulate(SIN_SPEC, gaussian(0.5), [1.3], ZeroInput(), T=96, seed=29)
    paths = []
    for run in range(2):
        est = GridSearchEstimator(model=SineProduct(),
                                  theta_box=Box.interval(0.0, 2 * math.pi),
                                  lambda_=0.02, gamma=2.0, kappa=8.0,
                                  true_theta=[1.3], schedule="every-step")
        est.fit_trajectory(traj)
        p = tmp_path / f"run{run}.csv"
        records_to_csv(est.records_, p, n=1)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    header = paths[0].read_text().splitlines()[0]
    assert header == "t,theta_hat_1,sigma2_hat,error_norm,feasible_count,threshold"


def test_sklearn_surface():
    est = GridSearchEstimator(model=SineProduct(), theta_box=Box.interval(0.0, 2 * math.pi),
                              lambda_=0.03, gamma=1.5)
    params = est.get_params()
    assert params["lambda_"] == 0.03
    est2 = clone(est).set_params(gamma=2.5)
    assert est2.gamma == 2.5
    traj = simulate(SIN_SPEC, gaussian(0.5), [1.3], ZeroInput(), T=64, seed=4)
    est.fit(traj.y, traj.u)
    assert est.theta_.shape == (1,)
    assert 0.0 <= est.sigma2_ <= 64.0
    preds = est.predict([0.1, 0.5])
    assert preds == pytest.approx([math.sin(est.theta_[0] * 0.1),
                                   math.sin(est.theta_[0] * 0.5)])


def test_truth_cell_feasible_at_late_times():
    # with the true parameter and variance known, the cell pair holding the
    # truth should pass the feasibility test at almost every late evaluation
    cfg = EstimatorConfig(lambda_=0.02, gamma=2.0, kappa=8.0,
                          scenario=SigmaScenario.unbounded())
    cphi = c_phi(SIN_SPEC, cfg.gamma)
    sigma_true = 0.25
    failures = 0
    total = 0
    for seed in (1, 2, 3):
        traj = simulate(SIN_SPEC, gaussian(0.5), [1.3], ZeroInput(), T=2048, seed=seed)
        data = ResidualData(SIN_SPEC, traj, gamma=cfg.gamma, C=cfg.C)
        for t in evaluation_times(2048, "auto"):
            if t <= 256:
                continue
            thr = cphi * t ** cfg.threshold_exponent
            tg = build_grid(SIN_SPEC.theta_box, theta_side_bound(t, cfg))
            sg = build_grid(sigma_domain(t, cfg.scenario), sigma_side_bound(t, cfg))
            centers = tg.centers_1d(0)
            i_t = int(np.argmin(np.abs(centers - 1.3)))
            sig = sg.centers_1d(0)
            above = np.where(sig >= sigma_true)[0]
            j_t = int(above[0]) if above.size else sg.cells[0] - 1
            cost = g_hat(data, [centers[i_t]], float(sig[j_t]), t)
            total += 1
            if abs(cost) > thr:
                failures += 1
    assert failures <= 0.05 * total
