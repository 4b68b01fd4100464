"""Feed-forward scalar function approximator with analytic derivatives.

Networks map a scalar input to a scalar output through tanh hidden layers.
The ``activation`` tag selects the output head:

* ``"linear-output"``: identity output (drift heads)
* ``"softplus-output"``: softplus output, strictly positive (diffusion heads)
* ``"tanh"``: tanh on the output as well (bounded output)

All evaluation functions accept a scalar or a 1-d array of inputs. Gradients
with respect to parameters are summed over the inputs.
"""

from dataclasses import dataclass
import json

import numpy as np

from ._validation import InputError, check_finite

ACTIVATIONS = ("linear-output", "softplus-output", "tanh")
DEFAULT_LAYER_SIZES = (1, 16, 16, 1)


@dataclass(frozen=True, eq=False)
class ApproximatorParams:
    """Weights and biases of a scalar feed-forward network.

    ``weights[l]`` has shape ``(layer_sizes[l + 1], layer_sizes[l])`` and
    ``biases[l]`` has shape ``(layer_sizes[l + 1],)``. The same container is
    used for parameter gradients.
    """

    layer_sizes: tuple
    weights: tuple
    biases: tuple
    activation: str = "linear-output"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise InputError("layer_sizes needs at least an input and an output entry")
        if sizes[0] != 1 or sizes[-1] != 1:
            raise InputError(f"input and output widths must be 1, got {list(sizes)}")
        if any(s <= 0 for s in sizes):
            raise InputError(f"layer widths must be positive, got {list(sizes)}")
        if self.activation not in ACTIVATIONS:
            raise InputError(f"unknown activation {self.activation!r}")
        weights = tuple(np.array(w, dtype=float).reshape(np.shape(w)) for w in self.weights)
        biases = tuple(np.array(b, dtype=float).reshape(-1) for b in self.biases)
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise InputError("need one weight matrix and one bias vector per layer")
        for l, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (sizes[l + 1], sizes[l]):
                raise InputError(
                    f"weight {l} has shape {w.shape}, expected {(sizes[l + 1], sizes[l])}"
                )
            if b.shape != (sizes[l + 1],):
                raise InputError(f"bias {l} has shape {b.shape}, expected {(sizes[l + 1],)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InputError("parameters must be finite")
            w.flags.writeable = False
            b.flags.writeable = False
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_vector(self):
        """Flatten as ``[W0, b0, W1, b1, ...]`` (row-major)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def from_vector(self, vec):
        """Return params of the same architecture holding ``vec``."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.n_params,):
            raise InputError(f"expected vector of length {self.n_params}, got {vec.shape}")
        weights, biases, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[pos:pos + w.size].reshape(w.shape))
            pos += w.size
            biases.append(vec[pos:pos + b.size])
            pos += b.size
        return ApproximatorParams(self.layer_sizes, tuple(weights), tuple(biases), self.activation)

    def with_activation(self, activation):
        return ApproximatorParams(self.layer_sizes, self.weights, self.biases, activation)

    def __eq__(self, other):
        if not isinstance(other, ApproximatorParams):
            return NotImplemented
        return (
            self.layer_sizes == other.layer_sizes
            and self.activation == other.activation
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    __hash__ = None

    def to_dict(self):
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                layer_sizes=tuple(data["layer_sizes"]),
                weights=tuple(np.array(w, dtype=float) for w in data["weights"]),
                biases=tuple(np.array(b, dtype=float) for b in data["biases"]),
                activation=data.get("activation", "linear-output"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed approximator document: {exc}") from None

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def init_params(layer_sizes=DEFAULT_LAYER_SIZES, seed=0, activation="linear-output"):
    """Random network with N(0, 1/fan_in) weights and zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if not sizes:
        raise InputError("layer_sizes must be nonempty")
    if any(s <= 0 for s in sizes):
        raise InputError(f"layer widths must be positive, got {sizes}")
    if len(sizes) < 2 or sizes[0] != 1 or sizes[-1] != 1:
        raise InputError(f"first and last layer widths must be 1, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return ApproximatorParams(tuple(sizes), tuple(weights), tuple(biases), activation)


def constant_params(value, activation="linear-output"):
    """Single affine layer returning ``value`` everywhere."""
    return affine_params(0.0, value, activation)


def affine_params(slope, intercept, activation="linear-output"):
    """Single affine layer ``slope * x + intercept`` (before the output head)."""
    return ApproximatorParams(
        (1, 1), (np.array([[float(slope)]]),), (np.array([float(intercept)]),), activation
    )


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _output(z, activation):
    if activation == "softplus-output":
        return _softplus(z)
    if activation == "tanh":
        return np.tanh(z)
    return z


def _output_slope(z, activation):
    if activation == "softplus-output":
        return _sigmoid(z)
    if activation == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return np.ones_like(z)


def _prepare(x):
    x = check_finite(x, "x")
    return x.ndim == 0, np.atleast_1d(x).reshape(-1, 1)


def _hidden_pass(params, a):
    """Hidden activations ``[a0, a1, ..., a_{L-1}]`` and the final pre-activation."""
    acts = [a]
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = np.tanh(a @ w.T + b)
        acts.append(a)
    z = a @ params.weights[-1].T + params.biases[-1]
    return acts, z


def forward(params, x):
    scalar, a = _prepare(x)
    _, z = _hidden_pass(params, a)
    out = _output(z, params.activation)[:, 0]
    return float(out[0]) if scalar else out


def input_derivative(params, x):
    """Exact d forward / dx by forward-mode chain rule."""
    scalar, a = _prepare(x)
    da = np.ones_like(a)
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = np.tanh(a @ w.T + b)
        da = (1.0 - a * a) * (da @ w.T)
    z = a @ params.weights[-1].T + params.biases[-1]
    dz = da @ params.weights[-1].T
    out = (_output_slope(z, params.activation) * dz)[:, 0]
    return float(out[0]) if scalar else out


def forward_and_derivative(params, x):
    """Output and input derivative in a single pass (array in, arrays out)."""
    _, a = _prepare(x)
    da = np.ones_like(a)
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = np.tanh(a @ w.T + b)
        da = (1.0 - a * a) * (da @ w.T)
    z = a @ params.weights[-1].T + params.biases[-1]
    dz = da @ params.weights[-1].T
    return _output(z, params.activation)[:, 0], (_output_slope(z, params.activation) * dz)[:, 0]


def param_gradient(params, x, upstream):
    """Gradient of ``sum(upstream * forward(x))`` with respect to the parameters.

    ``upstream`` broadcasts against ``x``. The result is an
    :class:`ApproximatorParams` holding the gradient arrays.
    """
    _, a = _prepare(x)
    up = check_finite(upstream, "upstream")
    up = np.broadcast_to(up, (a.shape[0],)).reshape(-1, 1)
    acts, z = _hidden_pass(params, a)
    delta = up * _output_slope(z, params.activation)
    n_layers = len(params.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        grad_w[l] = delta.T @ acts[l]
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l]) * (1.0 - acts[l] ** 2)
    return ApproximatorParams(params.layer_sizes, tuple(grad_w), tuple(grad_b), params.activation)
