import json
import math

import numpy as np
import pytest
from sklearn.base import clone

from winddispatch import approximator as ap
from winddispatch._validation import InputError
from winddispatch.benchmarks import random_problem
from winddispatch.dispatch import (
    DispatchProblem,
    DynamicProgrammingDispatcher,
    Policy,
    TreeTooLarge,
    ValueTable,
    brute_force_optimal,
    discretize,
    evaluate_policy,
    greedy_policy,
    initial_value,
    kernels,
    load_solution,
    no_storage_policy,
    policy_values,
    problem_from_dict,
    save_solution,
    solve_dp,
    stationary_distribution,
    trace_csv,
)
from winddispatch.power import PowerParams
from winddispatch.sde import SdeModel, ou_model

from conftest import random_model


def frozen(kind="wind_speed"):
    return SdeModel(ap.constant_params(0.0), ap.constant_params(0.0), kind)


def frozen_problem(v_range, d_range, v0, d0, **kw):
    base = dict(eta_w=0.9, eta_a=0.5, capacity=40.0, max_charge=20.0, max_discharge=20.0,
                horizon_steps=4, dt=1.0, wind_model=frozen(), demand_model=frozen("demand_rate"),
                power_params=PowerParams(1.0, 2.0), soc_bins=5, wind_bins=3, demand_bins=3,
                wind_range=v_range, demand_range=d_range, initial_wind=v0, initial_demand=d0)
    base.update(kw)
    return DispatchProblem(**base)


def medium(seed):
    return random_problem(seed, horizon_steps=24, soc_bins=21, wind_bins=6, demand_bins=6,
                          random_kernels=False)


class TestKernel:
    def test_near_frozen_is_identity(self):
        m = SdeModel(ap.constant_params(0.0), ap.constant_params(1e-9))
        k = discretize(m, 10, (0.0, 9.0), 0.1)
        np.testing.assert_allclose(k, np.eye(10), atol=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_rows_stochastic(self, seed):
        k = discretize(random_model(seed), 12, (0.0, 5.0), 0.3)
        assert np.all(k >= 0)
        np.testing.assert_allclose(k.sum(axis=1), 1.0, rtol=0, atol=1e-9)

    def test_ou_stationary_mean(self):
        k = discretize(ou_model(1.0, 5.0, 0.5), 64, (0.0, 10.0), 0.01)
        pi = stationary_distribution(k)
        assert abs(pi @ np.linspace(0, 10, 64) - 5.0) < 0.1

    def test_degenerate_range(self):
        with pytest.raises(InputError):
            discretize(frozen(), 4, (1.0, 1.0), 0.1)


class TestProblem:
    @pytest.mark.parametrize("bad", [{"eta_w": 0.0}, {"eta_a": -1.0}, {"capacity": -1.0},
                                     {"soc_bins": 1}, {"wind_range": (3.0, 1.0)},
                                     {"terminal_value": "free"}, {"initial_soc": 50.0}])
    def test_invariants(self, bad):
        with pytest.raises(InputError):
            frozen_problem((0.0, 1.0), (1.0, 2.0), 0.0, 1.0, **bad)

    def test_from_dict_inline_models(self):
        doc = {"eta_w": 0.9, "eta_a": 0.5, "capacity": 10, "max_charge": 5, "max_discharge": 5,
               "horizon_steps": 2, "dt": 1.0, "wind_model": frozen().to_dict(),
               "demand_model": frozen("demand_rate").to_dict(),
               "power_params": {"rho": 1.0, "area": 2.0}, "wind_range": [0, 3]}
        p = problem_from_dict(doc)
        assert p.wind_range == (0.0, 3.0) and p.power_params.rho_area == 2.0

    def test_from_dict_missing_model(self):
        with pytest.raises(InputError):
            problem_from_dict({"eta_w": 0.9})


class TestClosedForms:
    def test_fossil_free(self):
        # P(v) = v^3 >= 27 W everywhere on the wind grid; demand at most 20 W
        p = frozen_problem((3.0, 4.0), (10.0, 20.0), 3.0, 20.0)
        policy, values = solve_dp(p)
        assert np.all(values.values == 0.0)
        assert initial_value(p, values) == 0.0
        assert initial_value(p, policy_values(p, greedy_policy(p))) == 0.0
        stats = evaluate_policy(policy, p, n_rollouts=20, seed=0)
        assert stats.mean_fossil_J == 0.0

    def test_zero_wind(self):
        d, n = 7.0, 4
        p = frozen_problem((0.0, 2.0), (d, 2 * d), 0.0, d, horizon_steps=n)
        policy, values = solve_dp(p)
        expected = n * d * p.dt / 0.5
        assert values.values[0, 0, 0, 0] == pytest.approx(expected, rel=1e-12)
        assert initial_value(p, values) == pytest.approx(expected, rel=1e-12)
        assert initial_value(p, policy_values(p, greedy_policy(p))) == pytest.approx(expected, rel=1e-12)
        for pol in (policy, greedy_policy(p)):
            assert evaluate_policy(pol, p, n_rollouts=5, seed=1).mean_fossil_J == expected

    def test_through_battery_with_no_storage_uses_only_fossil(self):
        d, n = 5.0, 3
        p = frozen_problem((3.0, 4.0), (d, 2 * d), 3.0, d, horizon_steps=n, capacity=0.0,
                           wind_through_battery_only=True)
        _, values = solve_dp(p)
        assert initial_value(p, values) == pytest.approx(n * d / 0.5, rel=1e-12)
        direct = p.replace(wind_through_battery_only=False)
        assert initial_value(direct, solve_dp(direct)[1]) == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_single_stage_is_myopic(self, seed):
        p = random_problem(seed, horizon_steps=1)
        wi = int(np.argmin(np.abs(p.wind_grid - p.initial_wind)))
        di = int(np.argmin(np.abs(p.demand_grid - p.initial_demand)))
        harvest = 0.5 * p.power_params.rho_area * p.wind_grid[wi] ** 3 * p.dt
        need = p.demand_grid[di] * p.dt
        shortfall = max(0.0, need - min(harvest, need))
        best = max(0.0, shortfall - min(p.initial_soc, p.max_discharge * p.dt)) / p.eta_a
        assert brute_force_optimal(p) == pytest.approx(best, rel=1e-12, abs=1e-12)
        assert initial_value(p, solve_dp(p)[1]) == pytest.approx(best, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_zero_capacity_expected_shortfall(self, seed):
        p = random_problem(seed, horizon_steps=4).replace(capacity=0.0, initial_soc=0.0)
        wk, dk = kernels(p)
        pw = np.zeros(p.wind_bins)
        pw[int(np.argmin(np.abs(p.wind_grid - p.initial_wind)))] = 1.0
        pd = np.zeros(p.demand_bins)
        pd[int(np.argmin(np.abs(p.demand_grid - p.initial_demand)))] = 1.0
        total = 0.0
        for _ in range(p.horizon_steps):
            for i, v in enumerate(p.wind_grid):
                for j, d in enumerate(p.demand_grid):
                    harvest = 0.5 * p.power_params.rho_area * v ** 3 * p.dt
                    total += pw[i] * pd[j] * max(0.0, d * p.dt - min(harvest, d * p.dt)) / p.eta_a
            pw, pd = pw @ wk, pd @ dk
        assert brute_force_optimal(p) == pytest.approx(total, rel=1e-12)
        assert initial_value(p, solve_dp(p)[1]) == pytest.approx(total, rel=1e-12)


class TestOptimality:
    @pytest.mark.parametrize("seed", range(6))
    def test_dp_matches_brute_force(self, seed):
        p = random_problem(seed)
        assert initial_value(p, solve_dp(p)[1]) == pytest.approx(brute_force_optimal(p), abs=1e-9)

    def test_dp_matches_brute_force_off_grid_start(self):
        p = random_problem(3)
        p = p.replace(initial_soc=0.37 * p.capacity)
        assert initial_value(p, solve_dp(p)[1]) == pytest.approx(brute_force_optimal(p), abs=1e-9)

    def test_tree_guard(self):
        with pytest.raises(TreeTooLarge):
            brute_force_optimal(random_problem(0, horizon_steps=8), max_nodes=1000)

    def test_dp_dominates_greedy_on_random_problems(self):
        for seed in range(100):
            p = random_problem(seed)
            dp = solve_dp(p)[1].values
            greedy = policy_values(p, greedy_policy(p)).values
            assert np.all(dp <= greedy + 1e-9), seed

    @pytest.mark.parametrize("seed", range(3))
    def test_ordering_and_monotonicity_medium(self, seed):
        p = medium(seed)
        dp = solve_dp(p)[1].values
        greedy = policy_values(p, greedy_policy(p)).values
        none = policy_values(p, no_storage_policy(p)).values
        assert np.all(dp <= greedy + 1e-9) and np.all(greedy <= none + 1e-9)
        assert np.all(np.diff(dp, axis=1) <= 1e-9)
        assert np.all(dp >= 0)

    @pytest.mark.parametrize("c", [0.5, 2.0])
    def test_eta_a_scaling(self, c):
        p = random_problem(7)
        q = p.replace(eta_a=p.eta_a * c)
        a, b = solve_dp(p)[1].values, solve_dp(q)[1].values
        np.testing.assert_allclose(b, a / c, rtol=1e-9, atol=1e-9)

    def test_fossil_equivalent_terminal(self):
        p = random_problem(2).replace(terminal_value="fossil_equivalent")
        _, values = solve_dp(p)
        np.testing.assert_allclose(values.values[-1, :, 0, 0], -p.soc_grid / p.eta_a)
        zero = solve_dp(p.replace(terminal_value="zero"))[1].values
        assert np.all(values.values <= zero + 1e-9)
        assert initial_value(p, values) == pytest.approx(brute_force_optimal(p), abs=1e-9)

    def test_policy_controls_in_bounds(self):
        p = medium(1)
        policy, _ = solve_dp(p)
        policy.validate(p)
        assert set(np.unique(policy.charge_fraction)) <= set(np.linspace(0, 1, 11))


class TestSerialisation:
    def test_policy_and_values_round_trip(self, tmp_path):
        p = random_problem(4)
        policy, values = solve_dp(p)
        doc = save_solution(tmp_path / "sol.json", p, policy, values)
        pol2, val2, doc2 = load_solution(tmp_path / "sol.json")
        np.testing.assert_array_equal(pol2.discharge, policy.discharge)
        np.testing.assert_array_equal(pol2.charge_fraction, policy.charge_fraction)
        np.testing.assert_array_equal(val2.values, values.values)
        assert doc2["optimal_value"] == doc["optimal_value"]
        assert doc2["policy"]["index_order"] == ["stage", "soc", "wind", "demand"]

    def test_validation_rejects_excess_discharge(self):
        p = random_problem(4)
        policy, _ = solve_dp(p)
        bad = policy.discharge.copy()
        bad[0, 0, 0, 0] = p.max_discharge * p.dt + 1.0
        with pytest.raises(InputError):
            Policy(policy.charge_fraction, policy.discharge_fraction, bad).validate(p)

    def test_validation_rejects_bad_fraction_and_shape(self):
        p = random_problem(4)
        policy, _ = solve_dp(p)
        cf = policy.charge_fraction.copy()
        cf[0, 0, 0, 0] = 1.5
        with pytest.raises(InputError):
            Policy(cf, policy.discharge_fraction, policy.discharge).validate(p)
        with pytest.raises(InputError):
            policy.validate(p.replace(horizon_steps=5))

    def test_malformed_documents(self, tmp_path):
        with pytest.raises(InputError):
            Policy.from_dict({"shape": [1, 2], "charge_fraction": [0.0]})
        with pytest.raises(InputError):
            ValueTable.from_dict({"shape": [1], "values": [math.nan]})
        (tmp_path / "x.json").write_text("{")
        with pytest.raises(InputError):
            load_solution(tmp_path / "x.json")


class TestRollout:
    def test_deterministic_and_balanced(self):
        p = medium(0)
        policy, _ = solve_dp(p)
        a = evaluate_policy(policy, p, n_rollouts=50, seed=3)
        assert a == evaluate_policy(policy, p, n_rollouts=50, seed=3)
        assert a.violations == 0 and a.soc_violations == 0
        assert a.mean_fossil_J >= 0

    def test_trace(self):
        p = medium(0)
        stats, rows = evaluate_policy(greedy_policy(p), p, n_rollouts=3, seed=0, trace=True)
        text = trace_csv(rows)
        lines = text.splitlines()
        assert lines[0] == "step,v,d,soc,wind_direct,charge,discharge,aux,spill"
        assert len(lines) == p.horizon_steps + 1
        fossil = sum(float(l.split(",")[7]) for l in lines[1:]) / p.eta_a
        assert fossil >= 0 and stats.n_rollouts == 3

    def test_stats_json(self):
        p = medium(0)
        stats = evaluate_policy(greedy_policy(p), p, n_rollouts=4, seed=0)
        assert type(stats).from_dict(json.loads(stats.to_json())) == stats

    @pytest.mark.parametrize("seed", range(2))
    def test_dp_not_worse_than_greedy(self, seed):
        p = medium(seed)
        a = evaluate_policy(solve_dp(p)[0], p, n_rollouts=300, seed=seed)
        b = evaluate_policy(greedy_policy(p), p, n_rollouts=300, seed=seed)
        pooled = math.hypot(a.se_fossil_J, b.se_fossil_J)
        assert a.mean_fossil_J <= b.mean_fossil_J + 2 * pooled


class TestEstimator:
    def test_params_and_clone(self):
        est = DynamicProgrammingDispatcher(policy="greedy")
        assert est.get_params() == {"policy": "greedy"}
        assert clone(est).get_params() == {"policy": "greedy"}

    def test_fit_predict_score(self):
        p = random_problem(5)
        est = DynamicProgrammingDispatcher().fit(p)
        assert est.optimal_value_ == pytest.approx(brute_force_optimal(p), abs=1e-9)
        out = est.predict([[0, p.initial_soc, p.initial_wind, p.initial_demand],
                           [1, 0.0, 0.0, p.demand_range[1]]])
        assert out.shape == (2, 2) and np.all((out >= 0) & (out <= 1))
        assert est.score(n_rollouts=10) <= 0

    def test_unfitted_and_unknown(self):
        with pytest.raises(AttributeError):
            DynamicProgrammingDispatcher().predict([[0, 0, 0, 0]])
        with pytest.raises(ValueError):
            DynamicProgrammingDispatcher(policy="random").fit(random_problem(0))
