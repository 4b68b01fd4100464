"""Synthetic benchmark data: OU/GBM series and seeded random dispatch instances."""

import numpy as np

from . import approximator as ap
from .dispatch.problem import DispatchProblem
from .power import PowerParams
from .sde import SdeModel, SimulationGrid, ou_model, simulate_path


def ou_series(theta=1.0, mu=5.0, sigma=0.5, dt=0.01, n_samples=50_000, x0=None, seed=0,
              state_kind="wind_speed"):
    """Euler-simulated OU series (reflected at 0 for physical state kinds)."""
    model = ou_model(theta, mu, sigma, state_kind)
    grid = SimulationGrid(0.0, dt * (n_samples - 1), dt)
    return simulate_path(model, mu if x0 is None else x0, grid, seed)


def gbm_series(drift=0.05, vol=0.2, dt=0.01, n_samples=10_000, x0=1.0, seed=0,
               state_kind="demand_rate"):
    """Euler-simulated geometric Brownian motion, ``dX = a X dt + b X dB``.

    The diffusion head is an affine network with a linear output, which is
    nonnegative for nonnegative states.
    """
    model = SdeModel(ap.affine_params(drift, 0.0), ap.affine_params(vol, 0.0), state_kind)
    grid = SimulationGrid(0.0, dt * (n_samples - 1), dt)
    return simulate_path(model, x0, grid, seed)


def _random_kernel(rng, n):
    k = rng.dirichlet(np.full(n, 0.7), size=n)
    return k / k.sum(axis=1, keepdims=True)


def random_problem(seed, horizon_steps=3, soc_bins=5, wind_bins=2, demand_bins=2,
                   random_kernels=True, control_points=11):
    """Seeded random dispatch instance with harvest and demand of similar size.

    With ``random_kernels`` the exogenous kernels are drawn from a Dirichlet
    distribution; otherwise they come from random OU wind/demand models.
    """
    rng = np.random.default_rng(seed)
    wind = ou_model(rng.uniform(0.05, 0.5), rng.uniform(1.5, 3.0), rng.uniform(0.3, 1.0))
    demand = ou_model(rng.uniform(0.05, 0.5), rng.uniform(10.0, 25.0), rng.uniform(1.0, 5.0),
                      "demand_rate")
    kwargs = {}
    if random_kernels:
        kwargs = {"wind_kernel": _random_kernel(rng, wind_bins),
                  "demand_kernel": _random_kernel(rng, demand_bins)}
    wind_range = (0.0, float(rng.uniform(3.0, 4.0)))
    demand_range = tuple(sorted(rng.uniform(5.0, 35.0, size=2)))
    capacity = float(rng.uniform(10.0, 60.0))
    initial_soc = capacity * int(rng.integers(0, soc_bins)) / (soc_bins - 1)
    return DispatchProblem(
        eta_w=float(rng.uniform(0.6, 1.0)),
        eta_a=float(rng.uniform(0.3, 0.9)),
        capacity=capacity,
        max_charge=float(rng.uniform(5.0, 30.0)),
        max_discharge=float(rng.uniform(5.0, 30.0)),
        horizon_steps=horizon_steps,
        dt=1.0,
        wind_model=wind,
        demand_model=demand,
        power_params=PowerParams(rho=1.0, area=2.0),
        soc_bins=soc_bins,
        wind_bins=wind_bins,
        demand_bins=demand_bins,
        wind_range=wind_range,
        demand_range=demand_range,
        initial_soc=initial_soc,
        initial_wind=float(rng.uniform(*wind_range)),
        initial_demand=float(rng.uniform(*demand_range)),
        control_points=control_points,
        **kwargs,
    )
