import math

import numpy as np
import pytest

from winddispatch import approximator as ap
from winddispatch._validation import InputError
from winddispatch.power import (
    EnergyEstimate,
    PowerParams,
    energy_integral_physical,
    expected_energy,
    expected_power_rate,
    instantaneous_power,
    monte_carlo_power_rate,
    power_report,
)
from winddispatch.sde import SdeModel, SimulationGrid, linear_model, ou_model

from conftest import random_model


def const_model(f, g, kind="wind_speed"):
    return SdeModel(ap.constant_params(f), ap.constant_params(g), kind)


class TestInstantaneousPower:
    def test_examples(self):
        assert instantaneous_power(PowerParams(1.225, 1.0), 0.0) == 0.0
        assert instantaneous_power(PowerParams(2.0, 3.0), 1.0) == 3.0
        assert instantaneous_power(PowerParams(1.225, 100.0), 10.0) == pytest.approx(61250.0, rel=1e-12)

    def test_homogeneous_and_increasing(self):
        pp = PowerParams()
        v = np.linspace(0.1, 25, 200)
        p = instantaneous_power(pp, v)
        assert np.all(np.diff(p) > 0)
        np.testing.assert_allclose(instantaneous_power(pp, 2 * v), 8 * p, rtol=1e-14)

    def test_negative_rejected(self):
        with pytest.raises(InputError):
            instantaneous_power(PowerParams(), -0.1)

    @pytest.mark.parametrize("rho,area", [(0, 1), (1, -1), (math.inf, 1)])
    def test_params_validated(self, rho, area):
        with pytest.raises(InputError):
            PowerParams(rho, area)


class TestExpectedPowerRate:
    def test_modes_agree_without_diffusion(self):
        m = const_model(0.5, 0.0)
        pp = PowerParams(2.0, 1.0)
        for mode in ("ito_consistent", "paper_literal"):
            assert expected_power_rate(m, pp, 2.0, mode) == pytest.approx(6.0, abs=1e-14)

    def test_factor_two_gap(self):
        m = const_model(0.0, 1.0)
        pp = PowerParams(2.0, 1.0)
        assert expected_power_rate(m, pp, 1.0, "ito_consistent") == pytest.approx(3.0, abs=1e-14)
        assert expected_power_rate(m, pp, 1.0, "paper_literal") == pytest.approx(6.0, abs=1e-14)

    def test_unknown_mode(self):
        with pytest.raises(InputError):
            expected_power_rate(const_model(0, 1), PowerParams(), 1.0, "stratonovich")

    def test_negative_speed(self):
        with pytest.raises(InputError):
            expected_power_rate(const_model(0, 1), PowerParams(), -1.0)

    def test_ou_matches_monte_carlo(self):
        m = ou_model(1.0, 5.0, 0.5)
        pp = PowerParams(1.225, 1.0)
        est, se = monte_carlo_power_rate(m, pp, 4.0, delta=1e-3, n_paths=10**6, seed=0)
        assert abs(est - expected_power_rate(m, pp, 4.0)) < 3 * se

    @pytest.mark.parametrize("seed", range(3))
    def test_random_models_match_monte_carlo(self, seed):
        m = random_model(100 + seed)
        pp = PowerParams(1.225, 1.0)
        est, se = monte_carlo_power_rate(m, pp, 2.0, n_paths=10**6, seed=seed)
        assert abs(est - expected_power_rate(m, pp, 2.0)) < 3 * se

    def test_paper_literal_rejected_by_oracle(self):
        m = ou_model(1.0, 5.0, 2.0)
        pp = PowerParams(1.225, 1.0)
        est, se = monte_carlo_power_rate(m, pp, 4.0, n_paths=10**6, seed=1)
        assert abs(est - expected_power_rate(m, pp, 4.0, "ito_consistent")) < 3 * se
        assert abs(est - expected_power_rate(m, pp, 4.0, "paper_literal")) > 3 * se

    def test_monte_carlo_deterministic(self):
        m = random_model(4)
        a = monte_carlo_power_rate(m, PowerParams(), 3.0, n_paths=1000, seed=5)
        assert a == monte_carlo_power_rate(m, PowerParams(), 3.0, n_paths=1000, seed=5)


class TestExpectedEnergy:
    def test_frozen_wind_gives_zero(self):
        e = expected_energy(const_model(0, 0), PowerParams(), 7.0, SimulationGrid(0, 5, 0.1))
        assert e.estimate_J == 0.0 and e.std_error_J == 0.0

    def test_deterministic_endpoint_difference(self):
        # rho * A = 2, so P(v) = v^3: relaxing from 4 to 5 releases 125 - 64 J
        m = ou_model(1.0, 5.0, 0.0)
        pp = PowerParams(2.0, 1.0)
        e = expected_energy(m, pp, 4.0, SimulationGrid(0, 30, 1e-3), n_paths=1)
        assert e.estimate_J == pytest.approx(61.0, rel=0.01)

    def test_additive_without_noise(self):
        m = linear_model(-0.3, 2.0, 0.0)
        pp = PowerParams()
        whole = expected_energy(m, pp, 1.0, SimulationGrid(0, 4, 0.01), n_paths=1).estimate_J
        first = expected_energy(m, pp, 1.0, SimulationGrid(0, 2, 0.01), n_paths=1).estimate_J
        # continue from the exact state reached at t = 2 on the same Euler grid
        v2 = 1.0
        for _ in range(200):
            v2 = abs(v2 + m.f(v2) * 0.01)
        second = expected_energy(m, pp, v2, SimulationGrid(2, 4, 0.01), n_paths=1).estimate_J
        assert first + second == pytest.approx(whole, rel=1e-9)

    def test_deterministic_given_seed(self):
        m = random_model(6)
        grid = SimulationGrid(0, 1, 0.01)
        a = expected_energy(m, PowerParams(), 2.0, grid, n_paths=1, seed=3)
        assert a == expected_energy(m, PowerParams(), 2.0, grid, n_paths=1, seed=3)

    def test_physical_variant_constant_wind(self):
        pp = PowerParams(2.0, 1.0)
        e = energy_integral_physical(const_model(0, 0), pp, 3.0, SimulationGrid(0, 10, 0.5), n_paths=3)
        assert e.mode == "physical"
        assert e.estimate_J == pytest.approx(270.0, rel=1e-14)

    def test_bad_inputs(self):
        grid = SimulationGrid(0, 1, 0.1)
        with pytest.raises(InputError):
            expected_energy(const_model(0, 0), PowerParams(), -1.0, grid)
        with pytest.raises(InputError):
            expected_energy(const_model(0, 0), PowerParams(), 1.0, grid, n_paths=0)
        with pytest.raises(InputError):
            expected_energy(const_model(0, 0), PowerParams(), 1.0, grid, variant="exact")


def test_report_schema():
    rep = power_report(ou_model(1.0, 5.0, 0.5), PowerParams(), 5.0, SimulationGrid(0, 1, 0.01), 20, 0)
    assert set(rep) == {"ito_consistent", "paper_literal", "physical", "n_paths", "grid"}
    for key in ("ito_consistent", "paper_literal", "physical"):
        assert set(rep[key]) == {"mode", "estimate_J", "std_error_J", "n_paths"}
        assert EnergyEstimate.from_dict(rep[key]).to_dict() == rep[key]
    assert rep["paper_literal"]["estimate_J"] > rep["ito_consistent"]["estimate_J"]
