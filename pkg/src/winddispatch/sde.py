"""Scalar SDE models, Euler-Maruyama simulation and one-step densities."""

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from . import approximator as ap
from ._validation import DivergenceError, InputError, check_finite, check_int, check_scalar

STATE_KINDS = ("wind_speed", "demand_rate", "unconstrained")
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SdeModel:
    """``dX = drift(X) dt + diffusion(X) dB`` over a scalar state.

    ``wind_speed`` and ``demand_rate`` states are reflected at zero after
    every Euler step; ``unconstrained`` states are not.
    """

    drift: ap.ApproximatorParams
    diffusion: ap.ApproximatorParams
    state_kind: str = "wind_speed"

    def __post_init__(self):
        if self.state_kind not in STATE_KINDS:
            raise InputError(f"unknown state_kind {self.state_kind!r}")

    @property
    def reflecting(self):
        return self.state_kind != "unconstrained"

    def f(self, x):
        return ap.forward(self.drift, x)

    def g(self, x):
        return ap.forward(self.diffusion, x)

    def to_dict(self):
        return {
            "state_kind": self.state_kind,
            "drift": self.drift.to_dict(),
            "diffusion": self.diffusion.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "drift" not in data or "diffusion" not in data:
            raise InputError("model document needs 'drift' and 'diffusion' entries")
        return cls(
            ap.ApproximatorParams.from_dict(data["drift"]),
            ap.ApproximatorParams.from_dict(data["diffusion"]),
            data.get("state_kind", "wind_speed"),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read model file {path}: {exc}") from None
        return cls.from_dict(data)


def linear_model(drift_slope, drift_intercept, diffusion, state_kind="wind_speed"):
    """Model with affine drift and constant diffusion (OU when slope < 0)."""
    return SdeModel(
        ap.affine_params(drift_slope, drift_intercept),
        ap.constant_params(diffusion),
        state_kind,
    )


def ou_model(theta, mu, sigma, state_kind="wind_speed"):
    """Ornstein-Uhlenbeck: drift ``theta * (mu - x)``, diffusion ``sigma``."""
    return linear_model(-theta, theta * mu, sigma, state_kind)


@dataclass(frozen=True)
class TimeSeries:
    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t0", check_scalar(self.t0, "t0"))
        object.__setattr__(self, "dt", check_scalar(self.dt, "dt", lower=0.0, lower_inclusive=False))
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size == 0:
            raise InputError("series must be nonempty")
        check_finite(values, "series values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.values.size)

    def window(self, start, length):
        """Sub-series of ``length`` samples starting at index ``start``."""
        return TimeSeries(self.t0 + start * self.dt, self.dt, self.values[start:start + length])

    def to_csv(self):
        buf = io.StringIO()
        buf.write("t,value\n")
        for t, v in zip(self.times, self.values):
            buf.write(f"{t:.17g},{v:.17g}\n")
        return buf.getvalue()

    def save_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text, rtol=1e-6, nonnegative=False):
        """Parse ``t,value`` CSV text; errors name the offending line."""
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("line 1: empty file") from None
        if [h.strip() for h in header] != ["t", "value"]:
            raise InputError(f"line 1: expected header 't,value', got {','.join(header)!r}")
        ts, vs = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise InputError(f"line {line}: expected 2 fields, got {len(row)}")
            try:
                t, v = float(row[0]), float(row[1])
            except ValueError:
                raise InputError(f"line {line}: non-numeric field in {row!r}") from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise InputError(f"line {line}: non-finite value")
            if nonnegative and v < 0:
                raise InputError(f"line {line}: negative value {v} in a nonnegative series")
            if ts:
                step = t - ts[-1]
                if step <= 0:
                    raise InputError(f"line {line}: time stamps must increase")
                if len(ts) >= 2:
                    dt0 = ts[1] - ts[0]
                    if abs(step - dt0) > rtol * abs(dt0):
                        raise InputError(
                            f"line {line}: non-uniform spacing {step!r} vs {dt0!r}"
                        )
            ts.append(t)
            vs.append(v)
        if len(ts) < 2:
            raise InputError("need at least two samples to infer dt")
        dt = (ts[-1] - ts[0]) / (len(ts) - 1)
        return cls(ts[0], dt, np.array(vs))

    @classmethod
    def load_csv(cls, path, nonnegative=False):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read series {path}: {exc}") from None
        return cls.from_csv(text, nonnegative=nonnegative)


@dataclass(frozen=True)
class SimulationGrid:
    t0: float
    T: float
    dt: float

    def __post_init__(self):
        check_scalar(self.t0, "t0")
        check_scalar(self.T, "T")
        check_scalar(self.dt, "dt", lower=0.0, lower_inclusive=False)
        if not self.T > self.t0:
            raise InputError(f"horizon T={self.T} must exceed t0={self.t0}")
        ratio = (self.T - self.t0) / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise InputError(f"(T - t0) / dt = {ratio!r} is not a positive integer")

    @property
    def n_steps(self):
        return int(round((self.T - self.t0) / self.dt))

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


def _reflect(model, y):
    return np.abs(y) if model.reflecting else y


def euler_step(model, x, dt, noise):
    """One Euler-Maruyama step; accepts scalars or equally shaped arrays."""
    dt = check_scalar(dt, "dt", lower=0.0, lower_inclusive=False)
    x_arr = check_finite(x, "x")
    with np.errstate(over="ignore", invalid="ignore"):
        y = x_arr + model.f(x_arr) * dt + model.g(x_arr) * math.sqrt(dt) * np.asarray(noise, float)
        y = _reflect(model, y)
    if not np.all(np.isfinite(y)):
        raise DivergenceError("Euler step produced a non-finite state")
    return float(y) if np.ndim(y) == 0 else y


def _simulate(model, x0, n_steps, dt, noise):
    """Vectorised Euler scheme over paths; ``noise`` has shape (n_paths, n_steps)."""
    x = np.full(noise.shape[0], float(x0))
    out = np.empty((noise.shape[0], n_steps + 1))
    out[:, 0] = x
    sq = math.sqrt(dt)
    for k in range(n_steps):
        with np.errstate(over="ignore", invalid="ignore"):
            x = x + model.f(x) * dt + model.g(x) * sq * noise[:, k]
            x = _reflect(model, x)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"path diverged at step {k + 1}", index=k + 1)
        out[:, k + 1] = x
    return out


def _check_x0(model, x0):
    x0 = check_scalar(x0, "x0")
    if model.state_kind == "wind_speed" and x0 < 0:
        raise InputError("initial wind speed must be nonnegative")
    return x0


def simulate_path(model, x0, grid, seed):
    """Single Euler-Maruyama path; step ``i`` uses the ``i``-th standard normal
    draw of ``numpy.random.default_rng(seed)``."""
    x0 = _check_x0(model, x0)
    noise = np.random.default_rng(seed).standard_normal(grid.n_steps)[None, :]
    path = _simulate(model, x0, grid.n_steps, grid.dt, noise)[0]
    return TimeSeries(grid.t0, grid.dt, path)


def simulate_ensemble(model, x0, grid, n_paths, seed, block=512):
    """Paths ``i = 0..n_paths-1`` equal ``simulate_path(model, x0, grid, seed + i)``.

    Returns an array of shape ``(n_paths, n_steps + 1)``. Paths advance
    together in blocks of ``block`` steps, each drawing from its own stream.
    """
    x0 = _check_x0(model, x0)
    n_paths = check_int(n_paths, "n_paths", lower=1)
    n = grid.n_steps
    rngs = [np.random.default_rng(seed + i) for i in range(n_paths)]
    out = np.empty((n_paths, n + 1))
    out[:, 0] = x0
    x = np.full(n_paths, x0)
    sq = math.sqrt(grid.dt)
    for start in range(0, n, block):
        stop = min(n, start + block)
        noise = np.stack([r.standard_normal(stop - start) for r in rngs])
        for j, k in enumerate(range(start, stop)):
            with np.errstate(over="ignore", invalid="ignore"):
                x = x + model.f(x) * grid.dt + model.g(x) * sq * noise[:, j]
                x = _reflect(model, x)
            if not np.all(np.isfinite(x)):
                bad = int(np.flatnonzero(~np.isfinite(x))[0])
                raise DivergenceError(f"path {bad} diverged at step {k + 1}", index=k + 1)
            out[:, k + 1] = x
    return out


def transition_log_density(model, x_from, x_to, dt):
    """Log of the Euler Gaussian density N(x_from + f dt, g^2 dt) at ``x_to``."""
    dt = check_scalar(dt, "dt", lower=0.0, lower_inclusive=False)
    x_from = check_finite(x_from, "x_from")
    x_to = check_finite(x_to, "x_to")
    mean = x_from + model.f(x_from) * dt
    g = np.asarray(model.g(x_from))
    if np.any(g <= 0):
        raise InputError("diffusion must be strictly positive for a Gaussian transition")
    var = g * g * dt
    out = -0.5 * (LOG_2PI + np.log(var)) - 0.5 * (x_to - mean) ** 2 / var
    return float(out) if np.ndim(out) == 0 else out
