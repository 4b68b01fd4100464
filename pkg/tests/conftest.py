import numpy as np
import pytest

from winddispatch import approximator as ap
from winddispatch.sde import SdeModel


def random_params(seed, layer_sizes=(1, 5, 4, 1), activation="linear-output", bias_scale=0.5):
    """Random network with nonzero biases (init_params leaves biases at zero)."""
    p = ap.init_params(layer_sizes, seed, activation)
    rng = np.random.default_rng(seed + 10_000)
    biases = tuple(rng.normal(scale=bias_scale, size=b.shape) for b in p.biases)
    return ap.ApproximatorParams(p.layer_sizes, p.weights, biases, activation)


def random_model(seed, layer_sizes=(1, 6, 1), state_kind="wind_speed"):
    return SdeModel(
        random_params(seed, layer_sizes, "linear-output"),
        random_params(seed + 1, layer_sizes, "softplus-output"),
        state_kind,
    )


def central_difference(fn, x, h):
    return (fn(x + h) - fn(x - h)) / (2 * h)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
