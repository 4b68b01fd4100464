"""Dispatch problem definition and JSON config loading."""

import json
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .._validation import InputError, check_int, check_scalar
from ..power import PowerParams
from ..sde import SdeModel

TERMINAL_RULES = ("zero", "fossil_equivalent")


@dataclass(frozen=True, eq=False)
class DispatchProblem:
    """Wind + storage + auxiliary supply of a stochastic demand.

    Energies are in joules, rates in watts, ``dt`` in seconds. ``wind_kernel``
    and ``demand_kernel`` optionally override the kernels that would
    otherwise be discretised from ``wind_model`` and ``demand_model``.
    """

    eta_w: float
    eta_a: float
    capacity: float
    max_charge: float
    max_discharge: float
    horizon_steps: int
    dt: float
    wind_model: SdeModel
    demand_model: SdeModel
    power_params: PowerParams = field(default_factory=PowerParams)
    soc_bins: int = 11
    wind_bins: int = 8
    demand_bins: int = 8
    wind_range: tuple = (0.0, 15.0)
    demand_range: tuple = (0.0, 1000.0)
    initial_soc: float = 0.0
    initial_wind: float = None
    initial_demand: float = None
    wind_through_battery_only: bool = False
    terminal_value: str = "zero"
    control_points: int = 11
    wind_kernel: np.ndarray = None
    demand_kernel: np.ndarray = None

    def __post_init__(self):
        check_scalar(self.eta_w, "eta_w", lower=0.0, upper=1.0, lower_inclusive=False)
        check_scalar(self.eta_a, "eta_a", lower=0.0, lower_inclusive=False)
        check_scalar(self.capacity, "capacity", lower=0.0)
        check_scalar(self.max_charge, "max_charge", lower=0.0)
        check_scalar(self.max_discharge, "max_discharge", lower=0.0)
        check_int(self.horizon_steps, "horizon_steps", lower=1)
        check_scalar(self.dt, "dt", lower=0.0, lower_inclusive=False)
        for name in ("soc_bins", "wind_bins", "demand_bins"):
            check_int(getattr(self, name), name, lower=2)
        check_int(self.control_points, "control_points", lower=2)
        for name in ("wind_range", "demand_range"):
            lo, hi = (check_scalar(v, name) for v in getattr(self, name))
            if not lo < hi:
                raise InputError(f"{name} must satisfy min < max, got {(lo, hi)}")
            object.__setattr__(self, name, (lo, hi))
        if self.wind_range[0] < 0 or self.demand_range[0] < 0:
            raise InputError("wind and demand ranges must be nonnegative")
        if self.terminal_value not in TERMINAL_RULES:
            raise InputError(f"terminal_value must be one of {TERMINAL_RULES}")
        soc0 = check_scalar(self.initial_soc, "initial_soc", lower=0.0)
        if soc0 > self.capacity:
            raise InputError("initial_soc exceeds capacity")
        if self.initial_wind is None:
            object.__setattr__(self, "initial_wind", float(np.mean(self.wind_range)))
        if self.initial_demand is None:
            object.__setattr__(self, "initial_demand", float(np.mean(self.demand_range)))
        check_scalar(self.initial_wind, "initial_wind", lower=0.0)
        check_scalar(self.initial_demand, "initial_demand", lower=0.0)
        for name, bins in (("wind_kernel", self.wind_bins), ("demand_kernel", self.demand_bins)):
            k = getattr(self, name)
            if k is None:
                continue
            k = np.array(k, dtype=float)
            if k.shape != (bins, bins):
                raise InputError(f"{name} must have shape {(bins, bins)}, got {k.shape}")
            if np.any(k < 0) or not np.allclose(k.sum(axis=1), 1.0, rtol=0, atol=1e-9):
                raise InputError(f"{name} must be row-stochastic")
            k.flags.writeable = False
            object.__setattr__(self, name, k)

    @property
    def soc_grid(self):
        return np.linspace(0.0, self.capacity, self.soc_bins)

    @property
    def wind_grid(self):
        return np.linspace(*self.wind_range, self.wind_bins)

    @property
    def demand_grid(self):
        return np.linspace(*self.demand_range, self.demand_bins)

    @property
    def shape(self):
        return (self.soc_bins, self.wind_bins, self.demand_bins)

    def replace(self, **changes):
        return replace(self, **changes)


def _resolve_model(value, base_dir):
    if isinstance(value, dict):
        return SdeModel.from_dict(value)
    if isinstance(value, str):
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        return SdeModel.load(path)
    raise InputError("model entries must be a path or an inline model document")


def problem_from_dict(data, base_dir="."):
    """Build a problem from a config mapping; model entries may be file paths
    (relative to ``base_dir``) or inline model documents."""
    if not isinstance(data, dict):
        raise InputError("dispatch config must be a JSON object")
    known = {f.name for f in fields(DispatchProblem)}
    kwargs = {k: v for k, v in data.items() if k in known}
    for key in ("wind_model", "demand_model"):
        if key not in kwargs:
            raise InputError(f"dispatch config is missing {key!r}")
        kwargs[key] = _resolve_model(kwargs[key], base_dir)
    if "power_params" in kwargs:
        try:
            kwargs["power_params"] = PowerParams(**kwargs["power_params"])
        except TypeError as exc:
            raise InputError(f"bad power_params: {exc}") from None
    for key in ("wind_range", "demand_range"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        return DispatchProblem(**kwargs)
    except TypeError as exc:
        raise InputError(f"bad dispatch config: {exc}") from None


def load_problem(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read dispatch config {path}: {exc}") from None
    return problem_from_dict(data, os.path.dirname(os.path.abspath(path)))
