"""Pseudo-likelihood calibration of neural drift/diffusion models.

The loss for a series ``x_0..x_n`` sampled every ``dt`` seconds is

    sum_k -log N(x_{k+1}; x_k + f(x_k) dt, g(x_k)^2 dt) * dt
  + kappa * sum_k (|f'(x_k)| + |g'(x_k)| - C)^2 * dt

and is minimised by momentum gradient descent over random contiguous windows.
"""

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from . import approximator as ap
from ._validation import DivergenceError, InputError, check_int, check_scalar
from .sde import LOG_2PI, SdeModel, TimeSeries


@dataclass(frozen=True)
class CalibrationHyperparams:
    kappa: float = 0.1
    C: float = 1.0
    learning_rate: float = 1e-3
    steps: int = 5000
    batch_len: int = 256
    seed: int = 0
    fd_step: float = 1e-4
    one_sided: bool = False
    momentum: float = 0.9
    eval_every: int = 100

    def __post_init__(self):
        check_scalar(self.kappa, "kappa", lower=0.0)
        check_scalar(self.C, "C")
        check_scalar(self.learning_rate, "learning_rate", lower=0.0, lower_inclusive=False)
        check_int(self.steps, "steps", lower=0)
        check_int(self.batch_len, "batch_len", lower=1)
        check_int(self.seed, "seed", lower=0)
        check_scalar(self.fd_step, "fd_step", lower=0.0, lower_inclusive=False)
        check_scalar(self.momentum, "momentum", lower=0.0, upper=1.0)
        check_int(self.eval_every, "eval_every", lower=1)

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainingLog:
    step: list = field(default_factory=list)
    nll: list = field(default_factory=list)
    penalty: list = field(default_factory=list)
    total: list = field(default_factory=list)

    def append(self, step, nll, penalty, total):
        self.step.append(step)
        self.nll.append(nll)
        self.penalty.append(penalty)
        self.total.append(total)

    def __len__(self):
        return len(self.step)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("step,nll,penalty,total\n")
        for row in zip(self.step, self.nll, self.penalty, self.total):
            buf.write(f"{row[0]},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        log = cls()
        rows = list(csv.reader(io.StringIO(text)))
        for row in rows[1:]:
            if row:
                log.append(int(row[0]), float(row[1]), float(row[2]), float(row[3]))
        return log


def _check_pairs(series):
    if len(series) < 2:
        raise InputError("series needs at least two samples")


def _pair_terms(model, x, y, dt):
    """Per-pair NLL terms plus the partials with respect to f(x) and g(x)."""
    f = ap.forward(model.drift, x)
    g = ap.forward(model.diffusion, x)
    if np.any(g <= 0):
        raise InputError("diffusion must be strictly positive")
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        resid = y - x - f * dt
        var = g * g * dt
        terms = (0.5 * (LOG_2PI + np.log(var)) + 0.5 * resid * resid / var) * dt
        d_f = -resid / (g * g) * dt
        d_g = (1.0 / g - resid * resid / (g ** 3 * dt)) * dt
    return terms, d_f, d_g


def nll_loss(model, series):
    """dt-weighted negative log pseudo-likelihood of consecutive pairs."""
    _check_pairs(series)
    x = series.values
    terms, _, _ = _pair_terms(model, x[:-1], x[1:], series.dt)
    return float(math.fsum(terms))


def _penalty_residual(model, x, hp):
    df = ap.input_derivative(model.drift, x)
    dg = ap.input_derivative(model.diffusion, x)
    r = np.abs(df) + np.abs(dg) - hp.C
    if hp.one_sided:
        r = np.maximum(r, 0.0)
    return r, df, dg


def lipschitz_penalty(model, series, hp):
    """kappa * sum_k (|f'(x_k)| + |g'(x_k)| - C)^2 * dt over every sample."""
    if hp.kappa == 0:
        return 0.0
    r, _, _ = _penalty_residual(model, series.values, hp)
    return float(hp.kappa * math.fsum(r * r) * series.dt)


def _mixed_gradient(params, x, weights, h):
    """sum_k weights_k * d/dtheta [d forward / dx](x_k), via central differences
    of the analytic parameter gradient along x."""
    plus = ap.param_gradient(params, x + h, weights / (2 * h)).to_vector()
    minus = ap.param_gradient(params, x - h, weights / (2 * h)).to_vector()
    return plus - minus


def model_vector(model):
    return np.concatenate([model.drift.to_vector(), model.diffusion.to_vector()])


def model_from_vector(model, vec):
    n = model.drift.n_params
    return replace(
        model,
        drift=model.drift.from_vector(vec[:n]),
        diffusion=model.diffusion.from_vector(vec[n:]),
    )


def total_loss_and_gradient(model, series, hp, scale=1.0):
    """Total loss and its gradient over the flattened ``[drift, diffusion]``
    parameter vector.

    Returns ``(total, gradient, nll, penalty)``, every quantity multiplied by
    ``scale``. The NLL gradient is exact; the penalty gradient differences the
    analytic parameter gradient along the input with step ``hp.fd_step``.
    """
    _check_pairs(series)
    x, y, dt = series.values[:-1], series.values[1:], series.dt
    terms, d_f, d_g = _pair_terms(model, x, y, dt)
    bad = ~np.isfinite(terms)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise DivergenceError(f"non-finite loss at pair {k}", index=k)
    nll = math.fsum(terms)
    grad = np.concatenate([
        ap.param_gradient(model.drift, x, d_f).to_vector(),
        ap.param_gradient(model.diffusion, x, d_g).to_vector(),
    ])
    penalty = 0.0
    if hp.kappa > 0:
        xs = series.values
        r, df, dg = _penalty_residual(model, xs, hp)
        penalty = hp.kappa * math.fsum(r * r) * dt
        w = 2.0 * hp.kappa * dt * r
        grad = grad + np.concatenate([
            _mixed_gradient(model.drift, xs, w * np.sign(df), hp.fd_step),
            _mixed_gradient(model.diffusion, xs, w * np.sign(dg), hp.fd_step),
        ])
    return scale * (nll + penalty), scale * grad, scale * nll, scale * penalty


def initial_model(series, layer_sizes=ap.DEFAULT_LAYER_SIZES, init_seed=0, state_kind="wind_speed",
                  diffusion_init=False):
    """Random drift and diffusion networks adapted to the data range.

    The first layer is rescaled so the observed range maps onto [-1, 1]. With
    ``diffusion_init`` the diffusion output bias is also set from the increment
    standard deviation.
    """
    x = series.values
    centre = 0.5 * (x.max() + x.min())
    half = 0.5 * (x.max() - x.min())
    if half <= 0:
        half = 1.0
    heads = []
    for offset, activation in ((0, "linear-output"), (1, "softplus-output")):
        p = ap.init_params(layer_sizes, init_seed + offset, activation)
        w0 = p.weights[0] / half
        b0 = p.biases[0] - w0[:, 0] * centre
        heads.append(ap.ApproximatorParams(
            p.layer_sizes, (w0,) + p.weights[1:], (b0,) + p.biases[1:], activation))
    drift, diffusion = heads
    if diffusion_init and len(x) > 1:
        sd = float(np.std(np.diff(x))) / math.sqrt(series.dt)
        if sd > 0:
            bias = list(diffusion.biases)
            # softplus^-1(sd), guarded against overflow for large sd
            bias[-1] = bias[-1] + (sd if sd > 30 else math.log(math.expm1(sd)))
            diffusion = ap.ApproximatorParams(
                diffusion.layer_sizes, diffusion.weights, tuple(bias), diffusion.activation)
    return SdeModel(drift, diffusion, state_kind)


def fit(series, hp=CalibrationHyperparams(), init_seed=0, layer_sizes=ap.DEFAULT_LAYER_SIZES,
        state_kind="wind_speed", model=None):
    """Momentum gradient descent on the total loss.

    Each step draws a contiguous window of ``hp.batch_len`` pairs (from the
    stream seeded by ``hp.seed``) and rescales its loss to the full series.
    Every ``hp.eval_every`` steps, and after the last step, the full-series
    loss is evaluated; the best checkpoint is returned with the log.
    """
    _check_pairs(series)
    if model is None:
        model = initial_model(series, layer_sizes, init_seed, state_kind)
    log = TrainingLog()
    if hp.steps == 0:
        return model, log

    n_pairs = len(series) - 1
    win = min(hp.batch_len, n_pairs)
    scale = n_pairs / win
    rng = np.random.default_rng(hp.seed)
    theta = model_vector(model)
    velocity = np.zeros_like(theta)
    best_loss, best_theta = math.inf, theta.copy()

    def full_loss(th):
        m = model_from_vector(model, th)
        return nll_loss(m, series) + lipschitz_penalty(m, series, hp)

    for step in range(hp.steps):
        start = int(rng.integers(0, n_pairs - win + 1))
        window = series.window(start, win + 1)
        current = model_from_vector(model, theta)
        try:
            total, grad, nll, pen = total_loss_and_gradient(current, window, hp, scale)
        except (DivergenceError, InputError, FloatingPointError) as exc:
            raise DivergenceError(f"training diverged at step {step}: {exc}", index=step) from None
        if not (math.isfinite(total) and np.all(np.isfinite(grad))):
            raise DivergenceError(f"training diverged at step {step}", index=step)
        log.append(step, nll, pen, total)
        velocity = hp.momentum * velocity - hp.learning_rate * grad
        theta = theta + velocity
        if (step + 1) % hp.eval_every == 0 or step + 1 == hp.steps:
            try:
                loss = full_loss(theta)
            except InputError:
                loss = math.nan
            if not math.isfinite(loss):
                raise DivergenceError(f"training diverged at step {step}", index=step)
            if loss < best_loss:
                best_loss, best_theta = loss, theta.copy()
    return model_from_vector(model, best_theta), log


def smoothed(values, window=50):
    """Trailing moving average (shorter windows at the start)."""
    v = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


class SdeCalibrator(BaseEstimator):
    """Estimator wrapper around :func:`fit`.

    ``fit`` accepts a :class:`TimeSeries` or a 1-d array sampled every ``dt``
    seconds. After fitting, ``model_`` holds the calibrated
    :class:`SdeModel` and ``log_`` the :class:`TrainingLog`.
    """

    def __init__(self, kappa=0.1, C=1.0, learning_rate=1e-3, steps=5000, batch_len=256,
                 seed=0, fd_step=1e-4, one_sided=False, momentum=0.9, eval_every=100,
                 layer_sizes=ap.DEFAULT_LAYER_SIZES, init_seed=0, state_kind="wind_speed",
                 dt=1.0):
        self.kappa = kappa
        self.C = C
        self.learning_rate = learning_rate
        self.steps = steps
        self.batch_len = batch_len
        self.seed = seed
        self.fd_step = fd_step
        self.one_sided = one_sided
        self.momentum = momentum
        self.eval_every = eval_every
        self.layer_sizes = layer_sizes
        self.init_seed = init_seed
        self.state_kind = state_kind
        self.dt = dt

    def hyperparams(self):
        names = CalibrationHyperparams.__dataclass_fields__
        return CalibrationHyperparams(**{k: v for k, v in self.get_params().items() if k in names})

    def _as_series(self, X):
        if isinstance(X, TimeSeries):
            return X
        X = np.asarray(X, dtype=float)
        if X.ndim == 2 and X.shape[1] == 1:
            X = X[:, 0]
        if X.ndim != 1:
            raise InputError(f"expected a 1-d series, got shape {X.shape}")
        return TimeSeries(0.0, self.dt, X)

    def fit(self, X, y=None):
        series = self._as_series(X)
        self.model_, self.log_ = fit(series, self.hyperparams(), self.init_seed,
                                     tuple(self.layer_sizes), self.state_kind)
        self.n_samples_ = len(series)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise AttributeError("SdeCalibrator is not fitted yet; call fit first")

    def drift(self, x):
        self._check_fitted()
        return self.model_.f(x)

    def diffusion(self, x):
        self._check_fitted()
        return self.model_.g(x)

    def predict(self, X):
        """Drift and diffusion at the states ``X`` as an ``(n, 2)`` array."""
        self._check_fitted()
        x = np.asarray(X, dtype=float).reshape(-1)
        return np.column_stack([self.model_.f(x), self.model_.g(x)])

    def score(self, X, y=None):
        """Mean per-pair log pseudo-likelihood (higher is better)."""
        self._check_fitted()
        series = self._as_series(X)
        return -nll_loss(self.model_, series) / ((len(series) - 1) * series.dt)

