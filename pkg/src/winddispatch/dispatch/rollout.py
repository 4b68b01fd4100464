"""Monte Carlo evaluation of dispatch policies on continuous SDE paths."""

import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .._validation import ConstraintViolation, check_int
from ..sde import SimulationGrid, simulate_ensemble
from .kernel import nearest_index
from .solver import step_dynamics

TRACE_COLUMNS = ("step", "v", "d", "soc", "wind_direct", "charge", "discharge", "aux", "spill")


@dataclass(frozen=True)
class RolloutStats:
    n_rollouts: int
    mean_fossil_J: float
    std_fossil_J: float
    mean_spill_J: float
    std_spill_J: float
    violations: int
    soc_violations: int

    @property
    def se_fossil_J(self):
        return self.std_fossil_J / math.sqrt(self.n_rollouts)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)


def _std(x):
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def evaluate_policy(policy, problem, n_rollouts=100, seed=0, balance_tol=1e-9, trace=False):
    """Roll ``policy`` forward on simulated wind and demand paths.

    Rollout ``i`` uses wind seed ``seed + i`` and demand seed
    ``seed + n_rollouts + i``. The policy is looked up at the nearest grid
    point of each state and its fractions are applied to the actual state.
    Raises :class:`ConstraintViolation` if the energy balance or the SoC bounds
    fail at any step. With ``trace=True`` returns ``(stats, rows)`` where rows
    trace rollout 0.
    """
    n_rollouts = check_int(n_rollouts, "n_rollouts", lower=1)
    n = problem.horizon_steps
    grid = SimulationGrid(0.0, n * problem.dt, problem.dt)
    winds = simulate_ensemble(problem.wind_model, problem.initial_wind, grid, n_rollouts, seed)
    demands = simulate_ensemble(problem.demand_model, problem.initial_demand, grid,
                                n_rollouts, seed + n_rollouts)
    soc = np.full(n_rollouts, float(problem.initial_soc))
    fossil = np.zeros(n_rollouts)
    spill = np.zeros(n_rollouts)
    soc_grid, wind_grid, demand_grid = problem.soc_grid, problem.wind_grid, problem.demand_grid
    rows = []
    for k in range(n):
        v, d = winds[:, k], demands[:, k]
        si = nearest_index(soc_grid, soc)
        wi = nearest_index(wind_grid, v)
        di = nearest_index(demand_grid, d)
        cf = policy.charge_fraction[k, si, wi, di]
        df = policy.discharge_fraction[k, si, wi, di]
        dyn = step_dynamics(problem, soc, v, d, cf, df)
        gap = np.abs(dyn["need"] - (dyn["direct"] + dyn["discharge"] + dyn["aux"]))
        if np.any(gap > balance_tol * np.maximum(1.0, dyn["need"])):
            bad = int(np.argmax(gap))
            raise ConstraintViolation(
                f"energy balance violated at step {k} of rollout {bad} (gap {gap[bad]:.3g} J)")
        new_soc = dyn["soc_next"]
        if np.any(new_soc < 0) or np.any(new_soc > problem.capacity):
            raise ConstraintViolation(f"state of charge out of bounds at step {k}")
        if trace:
            rows.append((k, v[0], d[0], soc[0], dyn["direct"][0], dyn["stored"][0],
                         dyn["discharge"][0], dyn["aux"][0], dyn["spill"][0]))
        fossil += dyn["cost"]
        spill += dyn["spill"]
        soc = new_soc
    stats = RolloutStats(
        n_rollouts=n_rollouts,
        mean_fossil_J=float(fossil.mean()),
        std_fossil_J=_std(fossil),
        mean_spill_J=float(spill.mean()),
        std_spill_J=_std(spill),
        violations=0,
        soc_violations=0,
    )
    return (stats, rows) if trace else stats


def trace_csv(rows):
    buf = io.StringIO()
    buf.write(",".join(TRACE_COLUMNS) + "\n")
    for row in rows:
        buf.write(str(row[0]) + "," + ",".join(f"{x:.17g}" for x in row[1:]) + "\n")
    return buf.getvalue()
