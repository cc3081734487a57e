"""Built-in synthetic datasets for the experiments and the CLI."""

from __future__ import annotations

import numpy as np

from .core import ConfigError, EmpiricalMeasure, RngStream

RING8_RADIUS = 4.0
RING8_STD = 0.2


def ring8(rng: RngStream, n: int) -> EmpiricalMeasure:
    """Mixture of 8 Gaussians on a circle of radius 4, component std 0.2."""
    angles = 2.0 * np.pi * np.arange(8) / 8.0
    centers = RING8_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    which = rng.integers(0, 8, size=n)
    return EmpiricalMeasure.uniform(centers[which] + RING8_STD * rng.normal((n, 2)))


def gauss2d_pair(rng: RngStream, n: int):
    """Centered bivariate Gaussians with covariances diag(2,2) and diag(5,1)."""
    a = rng.normal((n, 2)) * np.sqrt(np.array([2.0, 2.0]))
    b = rng.normal((n, 2)) * np.sqrt(np.array([5.0, 1.0]))
    return EmpiricalMeasure.uniform(a), EmpiricalMeasure.uniform(b)


def gauss_hd_pair(rng: RngStream, n: int, d: int):
    """Standard Gaussian against one with variances (5, 3, 1, ..., 1)."""
    if d < 2:
        raise ConfigError("gaussHD needs d >= 2")
    scales = np.ones(d)
    scales[0], scales[1] = np.sqrt(5.0), np.sqrt(3.0)
    a = rng.normal((n, d))
    b = rng.normal((n, d)) * scales
    return EmpiricalMeasure.uniform(a), EmpiricalMeasure.uniform(b)


def make_dataset(name: str, rng: RngStream, n: int, d: int = 2) -> EmpiricalMeasure:
    """Single-measure datasets used as training targets."""
    if name == "ring8":
        return ring8(rng, n)
    if name == "gauss2d":
        return gauss2d_pair(rng, n)[1]
    if name == "gaussHD":
        return gauss_hd_pair(rng, n, d)[1]
    raise ConfigError(f"unknown dataset {name!r}")
