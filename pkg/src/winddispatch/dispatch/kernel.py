"""Markov-chain discretisation of a scalar SDE over a grid of points."""

import math

import numpy as np
from scipy.special import ndtr

from .._validation import InputError, check_int, check_scalar


def cell_edges(points):
    """Interior boundaries between neighbouring grid points (Voronoi cells)."""
    return 0.5 * (points[1:] + points[:-1])


def nearest_index(points, x):
    """Index of the grid point nearest to ``x`` (ties go to the lower point)."""
    idx = np.searchsorted(cell_edges(points), np.asarray(x, dtype=float), side="left")
    return idx


def discretize(model, bins, state_range, dt):
    """Row-stochastic one-step kernel between ``bins`` grid points.

    Grid points are ``linspace(min, max, bins)``. Row ``i`` is the Euler
    Gaussian N(c_i + f(c_i) dt, g(c_i)^2 dt) integrated over the cell of every
    point; the end cells extend to -inf and +inf and so absorb the tails.
    """
    bins = check_int(bins, "bins", lower=2)
    dt = check_scalar(dt, "dt", lower=0.0, lower_inclusive=False)
    lo, hi = (check_scalar(v, "range") for v in state_range)
    if not lo < hi:
        raise InputError(f"degenerate range {(lo, hi)}")
    centres = np.linspace(lo, hi, bins)
    edges = cell_edges(centres)
    mean = centres + model.f(centres) * dt
    sd = np.asarray(model.g(centres)) * math.sqrt(dt)
    if np.any(sd < 0) or not np.all(np.isfinite(mean)):
        raise InputError("model yields an invalid transition")
    kernel = np.zeros((bins, bins))
    for i in range(bins):
        if sd[i] == 0:
            kernel[i, np.searchsorted(edges, mean[i], side="left")] = 1.0
            continue
        cdf = ndtr((edges - mean[i]) / sd[i])
        kernel[i] = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
    kernel = np.clip(kernel, 0.0, None)
    kernel /= kernel.sum(axis=1, keepdims=True)
    return kernel


def stationary_distribution(kernel, tol=1e-13, max_iter=1_000_000):
    """Left fixed point of ``kernel`` by power iteration."""
    pi = np.full(kernel.shape[0], 1.0 / kernel.shape[0])
    for _ in range(max_iter):
        nxt = pi @ kernel
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    return pi
