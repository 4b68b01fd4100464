"""Backward-induction dispatch, baseline policies, and the exhaustive oracle.

The discretised system has state ``(soc, wind, demand)`` on grids. Wind and
demand follow independent Markov kernels. A post-decision SoC that falls
between two SoC grid points moves to the lower point with probability
``1 - lam`` and to the upper point with probability ``lam``, where ``lam`` is
its linear-interpolation weight, so expected stored energy is preserved and the
discrete model is a finite MDP solved exactly by backward induction.

Controls are two fractions on a ``control_points`` grid over [0, 1]: the share
of the wind surplus to store and the share of the deliverable storage energy
``min(soc, max_discharge * dt, shortfall)`` to discharge.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .._validation import DivergenceError, InputError
from ..power import instantaneous_power
from .kernel import discretize, nearest_index

INDEX_ORDER = ["stage", "soc", "wind", "demand"]


def kernels(problem):
    wk = problem.wind_kernel
    if wk is None:
        wk = discretize(problem.wind_model, problem.wind_bins, problem.wind_range, problem.dt)
    dk = problem.demand_kernel
    if dk is None:
        dk = discretize(problem.demand_model, problem.demand_bins, problem.demand_range, problem.dt)
    return wk, dk


def control_grid(problem):
    return np.linspace(0.0, 1.0, problem.control_points)


def step_dynamics(problem, soc, v, d, charge_fraction, discharge_fraction):
    """One dispatch step; all arguments broadcast. Returns a dict of arrays.

    Keys: ``harvest, direct, stored, discharge, aux, spill, soc_next, cost``
    (energies in J; ``cost`` is fossil energy ``aux / eta_a``).
    """
    dt = problem.dt
    harvest = instantaneous_power(problem.power_params, v) * dt
    need = np.asarray(d, dtype=float) * dt
    if problem.wind_through_battery_only:
        direct = np.zeros(np.broadcast(harvest, need).shape)
    else:
        direct = np.minimum(harvest, need)
    surplus = harvest - direct
    stored = np.minimum(charge_fraction * surplus, problem.max_charge * dt)
    raised = soc + problem.eta_w * stored
    soc_mid = np.minimum(raised, problem.capacity)
    spill = surplus - stored + (raised - soc_mid) / problem.eta_w
    shortfall = need - direct
    deliverable = np.maximum(np.minimum(np.minimum(soc_mid, problem.max_discharge * dt), shortfall), 0.0)
    discharge = discharge_fraction * deliverable
    aux = np.maximum(shortfall - discharge, 0.0)
    soc_next = np.clip(soc_mid - discharge, 0.0, problem.capacity)
    return {
        "harvest": harvest, "direct": direct, "stored": stored, "discharge": discharge,
        "aux": aux, "spill": spill, "soc_next": soc_next, "cost": aux / problem.eta_a,
        "need": need,
    }


def soc_lottery(problem, soc):
    """Lower grid index and upper-point weight for (possibly off-grid) SoC."""
    soc = np.asarray(soc, dtype=float)
    if problem.capacity == 0:
        return np.zeros(soc.shape, dtype=int), np.zeros(soc.shape)
    spacing = problem.capacity / (problem.soc_bins - 1)
    pos = np.clip(soc / spacing, 0.0, problem.soc_bins - 1)
    lower = np.minimum(np.floor(pos).astype(int), problem.soc_bins - 2)
    return lower, pos - lower


def terminal_values(problem):
    shape = problem.shape
    if problem.terminal_value == "zero":
        return np.zeros(shape)
    saving = -problem.soc_grid / problem.eta_a
    return np.broadcast_to(saving[:, None, None], shape).copy()


def _expected_next(value, wk, dk):
    """E[V(s, w', d') | w, d] for every (s, w, d)."""
    return np.einsum("ab,cd,sbd->sac", wk, dk, value, optimize=True)


def _continuation(problem, ev, soc_next):
    """Lottery-interpolated ``ev`` at post-decision SoC; ``soc_next`` has
    shape (S, W, D, ...) aligned with the state axes of ``ev``."""
    lower, lam = soc_lottery(problem, soc_next)
    extra = soc_next.ndim - 3
    w_idx = np.arange(problem.wind_bins).reshape((1, -1, 1) + (1,) * extra)
    d_idx = np.arange(problem.demand_bins).reshape((1, 1, -1) + (1,) * extra)
    upper = np.minimum(lower + 1, problem.soc_bins - 1)
    return (1.0 - lam) * ev[lower, w_idx, d_idx] + lam * ev[upper, w_idx, d_idx]


def _state_arrays(problem):
    s = problem.soc_grid[:, None, None]
    v = problem.wind_grid[None, :, None]
    d = problem.demand_grid[None, None, :]
    return s, v, d


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Expected fossil cost-to-go, shape (stages + 1, soc, wind, demand)."""

    values: np.ndarray

    def to_dict(self):
        return {"index_order": INDEX_ORDER, "shape": list(self.values.shape),
                "values": self.values.ravel().tolist()}

    @classmethod
    def from_dict(cls, data):
        try:
            shape = tuple(int(s) for s in data["shape"])
            values = np.array(data["values"], dtype=float).reshape(shape)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed value table: {exc}") from None
        if not np.all(np.isfinite(values)):
            raise InputError("value table entries must be finite")
        return cls(values)


@dataclass(frozen=True, eq=False)
class Policy:
    """Per (stage, soc, wind, demand) controls.

    ``charge_fraction`` and ``discharge_fraction`` are the decision fractions;
    ``discharge`` is the resulting discharge in joules at the grid state.
    """

    charge_fraction: np.ndarray
    discharge_fraction: np.ndarray
    discharge: np.ndarray

    @property
    def shape(self):
        return self.charge_fraction.shape

    def controls_at(self, stage, soc_idx, wind_idx, demand_idx):
        key = (stage, soc_idx, wind_idx, demand_idx)
        return self.charge_fraction[key], self.discharge_fraction[key]

    def to_dict(self):
        return {
            "index_order": INDEX_ORDER,
            "shape": list(self.shape),
            "charge_fraction": self.charge_fraction.ravel().tolist(),
            "discharge_fraction": self.discharge_fraction.ravel().tolist(),
            "discharge": self.discharge.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            shape = tuple(int(s) for s in data["shape"])
            arrays = [np.array(data[k], dtype=float).reshape(shape)
                      for k in ("charge_fraction", "discharge_fraction", "discharge")]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed policy: {exc}") from None
        return cls(*arrays)

    def validate(self, problem):
        """Raise :class:`InputError` unless every control is within bounds."""
        expected = (problem.horizon_steps,) + problem.shape
        if self.shape != expected:
            raise InputError(f"policy shape {self.shape} does not match problem {expected}")
        for name in ("charge_fraction", "discharge_fraction"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1:
                raise InputError(f"{name} outside [0, 1]")
        tol = 1e-9 * max(1.0, problem.capacity)
        limit = np.full(problem.shape, problem.max_discharge * problem.dt)
        if problem.wind_through_battery_only:
            limit = np.minimum(limit, problem.capacity)
        else:
            limit = np.minimum(limit, problem.soc_grid[:, None, None])
        dis = self.discharge
        if not np.all(np.isfinite(dis)) or dis.min() < -tol or np.any(dis > limit[None] + tol):
            raise InputError("discharge outside [0, min(SoC, max_discharge * dt)]")


def _pick(q, tol_rel=1e-12):
    """First control (in grid order) within a relative tolerance of the min."""
    qmin = q.min(axis=-1, keepdims=True)
    tol = tol_rel * np.maximum(1.0, np.abs(qmin))
    return np.argmax(q <= qmin + tol, axis=-1)


def solve_dp(problem):
    """Backward induction. Returns ``(policy, value_table)``.

    Controls are searched discharge-major so ties resolve to the lowest
    discharge, then the lowest charge fraction.
    """
    wk, dk = kernels(problem)
    n = problem.horizon_steps
    grid = control_grid(problem)
    dis_f, chg_f = (a.ravel() for a in np.meshgrid(grid, grid, indexing="ij"))
    s, v, d = (a[..., None] for a in _state_arrays(problem))
    dyn = step_dynamics(problem, s, v, d, chg_f, dis_f)
    cost = np.broadcast_to(dyn["cost"], problem.shape + (dis_f.size,))
    soc_next = np.broadcast_to(dyn["soc_next"], cost.shape)
    discharge = np.broadcast_to(dyn["discharge"], cost.shape)

    values = np.empty((n + 1,) + problem.shape)
    values[n] = terminal_values(problem)
    shape = (n,) + problem.shape
    pol_c, pol_d, pol_j = np.empty(shape), np.empty(shape), np.empty(shape)
    for k in range(n - 1, -1, -1):
        ev = _expected_next(values[k + 1], wk, dk)
        q = cost + _continuation(problem, ev, soc_next)
        best = _pick(q)
        sel = best[..., None]
        values[k] = np.take_along_axis(q, sel, axis=-1)[..., 0]
        if not np.all(np.isfinite(values[k])):
            raise DivergenceError(f"non-finite value at stage {k}", index=k)
        pol_c[k] = chg_f[best]
        pol_d[k] = dis_f[best]
        pol_j[k] = np.take_along_axis(discharge, sel, axis=-1)[..., 0]
    return Policy(pol_c, pol_d, pol_j), ValueTable(values)


def _fixed_policy(problem, charge, discharge_fraction):
    shape = (problem.horizon_steps,) + problem.shape
    cf = np.full(shape, float(charge))
    df = np.full(shape, float(discharge_fraction))
    s, v, d = _state_arrays(problem)
    dyn = step_dynamics(problem, s, v, d, charge, discharge_fraction)
    dis = np.broadcast_to(dyn["discharge"], problem.shape)
    return Policy(cf, df, np.broadcast_to(dis, shape).copy())


def greedy_policy(problem):
    """Store all surplus and discharge as much as the shortfall allows."""
    return _fixed_policy(problem, 1.0, 1.0)


def no_storage_policy(problem):
    return _fixed_policy(problem, 0.0, 0.0)


def policy_values(problem, policy):
    """Exact expected cost-to-go of ``policy`` under the discretised model."""
    wk, dk = kernels(problem)
    n = problem.horizon_steps
    s, v, d = _state_arrays(problem)
    values = np.empty((n + 1,) + problem.shape)
    values[n] = terminal_values(problem)
    for k in range(n - 1, -1, -1):
        dyn = step_dynamics(problem, s, v, d, policy.charge_fraction[k], policy.discharge_fraction[k])
        ev = _expected_next(values[k + 1], wk, dk)
        soc_next = np.broadcast_to(dyn["soc_next"], problem.shape)
        values[k] = dyn["cost"] + _continuation(problem, ev, soc_next)
    return ValueTable(values)


def initial_value(problem, values):
    """Value at the problem's initial state: SoC lottery, nearest exogenous bins."""
    v0 = values.values[0] if isinstance(values, ValueTable) else values[0]
    lower, lam = soc_lottery(problem, problem.initial_soc)
    w = int(nearest_index(problem.wind_grid, problem.initial_wind))
    d = int(nearest_index(problem.demand_grid, problem.initial_demand))
    upper = min(int(lower) + 1, problem.soc_bins - 1)
    return float((1 - lam) * v0[int(lower), w, d] + lam * v0[upper, w, d])


class TreeTooLarge(InputError):
    pass


def brute_force_optimal(problem, max_nodes=10**6):
    """Exhaustive minimum over the scenario tree from the initial state.

    Every distinct control is tried at every node and every outcome with
    positive probability is expanded, without memoisation. Raises
    :class:`TreeTooLarge` once more than ``max_nodes`` nodes are visited.
    """
    wk, dk = kernels(problem)
    n = problem.horizon_steps
    grid = control_grid(problem)
    soc_grid, wind_grid, demand_grid = problem.soc_grid, problem.wind_grid, problem.demand_grid
    terminal = terminal_values(problem)
    dis_f, chg_f = (a.ravel() for a in np.meshgrid(grid, grid, indexing="ij"))
    count = [0]
    cache = {}

    def options(si, wi, di):
        # distinct (stage cost, SoC branches) pairs reachable by some control
        key = (si, wi, di)
        if key not in cache:
            dyn = step_dynamics(problem, soc_grid[si], wind_grid[wi], demand_grid[di], chg_f, dis_f)
            seen = {}
            for cost, soc_next in zip(np.broadcast_to(dyn["cost"], chg_f.shape).tolist(),
                                      np.broadcast_to(dyn["soc_next"], chg_f.shape).tolist()):
                if (cost, soc_next) in seen:
                    continue
                lower, lam = soc_lottery(problem, soc_next)
                branches = [(int(lower), 1.0 - float(lam))]
                if lam > 0:
                    branches.append((int(lower) + 1, float(lam)))
                seen[(cost, soc_next)] = (cost, branches)
            cache[key] = list(seen.values())
        return cache[key]

    def node(k, si, wi, di):
        count[0] += 1
        if count[0] > max_nodes:
            raise TreeTooLarge(f"scenario tree exceeds {max_nodes} nodes")
        if k == n:
            return float(terminal[si, wi, di])
        outcomes = options(si, wi, di)
        best = math.inf
        for cost, branches in outcomes:
            total = cost
            for s_next, ps in branches:
                if ps == 0:
                    continue
                for w_next in np.flatnonzero(wk[wi]):
                    for d_next in np.flatnonzero(dk[di]):
                        p = ps * wk[wi, w_next] * dk[di, d_next]
                        total += p * node(k + 1, s_next, int(w_next), int(d_next))
            best = min(best, total)
        return best

    lower, lam = soc_lottery(problem, problem.initial_soc)
    wi = int(nearest_index(wind_grid, problem.initial_wind))
    di = int(nearest_index(demand_grid, problem.initial_demand))
    value = (1 - lam) * node(0, int(lower), wi, di)
    if lam > 0:
        value += lam * node(0, int(lower) + 1, wi, di)
    return float(value)


def save_solution(path, problem, policy, values, extra=None):
    doc = {
        "optimal_value": initial_value(problem, values),
        "grids": {
            "soc": problem.soc_grid.tolist(),
            "wind": problem.wind_grid.tolist(),
            "demand": problem.demand_grid.tolist(),
        },
        "policy": policy.to_dict(),
        "value_table": values.to_dict(),
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    return doc


def load_solution(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return Policy.from_dict(doc["policy"]), ValueTable.from_dict(doc["value_table"]), doc
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read policy file {path}: {exc}") from None
