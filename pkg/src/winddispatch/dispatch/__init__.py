"""Storage dispatch minimising auxiliary (fossil) energy."""

import numpy as np
from sklearn.base import BaseEstimator

from .kernel import discretize, nearest_index, stationary_distribution
from .problem import DispatchProblem, load_problem, problem_from_dict
from .rollout import RolloutStats, evaluate_policy, trace_csv
from .solver import (
    Policy,
    TreeTooLarge,
    ValueTable,
    brute_force_optimal,
    greedy_policy,
    initial_value,
    kernels,
    load_solution,
    no_storage_policy,
    policy_values,
    save_solution,
    solve_dp,
    step_dynamics,
)


class DynamicProgrammingDispatcher(BaseEstimator):
    """Estimator front end for :func:`solve_dp`.

    ``fit(problem)`` solves the problem; ``predict`` maps rows of
    ``[stage, soc, wind_speed, demand_rate]`` to ``[charge_fraction,
    discharge_fraction]`` by nearest-grid lookup.
    """

    def __init__(self, policy="dp"):
        self.policy = policy

    def fit(self, problem, y=None):
        if self.policy == "dp":
            self.policy_, self.value_table_ = solve_dp(problem)
        elif self.policy == "greedy":
            self.policy_ = greedy_policy(problem)
            self.value_table_ = policy_values(problem, self.policy_)
        else:
            raise ValueError(f"unknown policy {self.policy!r}")
        self.problem_ = problem
        self.optimal_value_ = initial_value(problem, self.value_table_)
        return self

    def predict(self, X):
        if not hasattr(self, "policy_"):
            raise AttributeError("DynamicProgrammingDispatcher is not fitted yet")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p = self.problem_
        k = np.clip(X[:, 0].astype(int), 0, p.horizon_steps - 1)
        si = nearest_index(p.soc_grid, X[:, 1])
        wi = nearest_index(p.wind_grid, X[:, 2])
        di = nearest_index(p.demand_grid, X[:, 3])
        return np.column_stack(self.policy_.controls_at(k, si, wi, di))

    def score(self, problem=None, y=None, n_rollouts=100, seed=0):
        """Negative mean fossil energy over Monte Carlo rollouts."""
        stats = evaluate_policy(self.policy_, problem or self.problem_, n_rollouts, seed)
        return -stats.mean_fossil_J


__all__ = [
    "DispatchProblem", "DynamicProgrammingDispatcher", "Policy", "RolloutStats",
    "TreeTooLarge", "ValueTable", "brute_force_optimal", "discretize",
    "evaluate_policy", "greedy_policy", "initial_value", "kernels", "load_problem",
    "load_solution", "nearest_index", "no_storage_policy", "policy_values",
    "problem_from_dict", "save_solution", "solve_dp", "stationary_distribution",
    "step_dynamics", "trace_csv",
]
