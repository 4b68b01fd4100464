"""Small input-validation helpers shared across modules."""

import math

import numpy as np


class InputError(ValueError):
    """Malformed input: bad file, bad config, out-of-domain argument."""


class DivergenceError(ArithmeticError):
    """A numerical procedure produced a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConstraintViolation(RuntimeError):
    """A physical constraint (energy balance, SoC bounds) was violated."""


def check_finite(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} must be finite")
    return arr


def check_scalar(x, name, lower=None, upper=None, lower_inclusive=True):
    try:
        x = float(x)
    except (TypeError, ValueError):
        raise InputError(f"{name} must be a number, got {x!r}") from None
    if not math.isfinite(x):
        raise InputError(f"{name} must be finite, got {x}")
    if lower is not None:
        if lower_inclusive and x < lower:
            raise InputError(f"{name} must be >= {lower}, got {x}")
        if not lower_inclusive and x <= lower:
            raise InputError(f"{name} must be > {lower}, got {x}")
    if upper is not None and x > upper:
        raise InputError(f"{name} must be <= {upper}, got {x}")
    return x


def check_int(x, name, lower=None):
    if isinstance(x, bool) or not isinstance(x, (int, np.integer)):
        raise InputError(f"{name} must be an integer, got {x!r}")
    x = int(x)
    if lower is not None and x < lower:
        raise InputError(f"{name} must be >= {lower}, got {x}")
    return x
