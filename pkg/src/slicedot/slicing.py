"""Sphere sampling, linear and circular projections, and the pushforward map.

Directions live on the unit sphere S^{d-1}. The pushforward map sends the
sphere to itself through an affine layer (optionally preceded by a small MLP
with a residual skip) followed by row normalization; feeding it uniform
directions reparametrizes an arbitrary slice distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grad
from .core import ConfigError, DegenerateMap, DomainError, RngStream, ShapeError

_NORM_FLOOR = 1e-12


def sample_uniform_sphere(rng: RngStream, n: int, d: int) -> np.ndarray:
    """n i.i.d. uniform directions on S^{d-1} (normalized Gaussian rows)."""
    if n < 1 or d < 1:
        raise DomainError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    x = rng.normal((n, d))
    norms = np.linalg.norm(x, axis=1)
    while np.any(norms < _NORM_FLOOR):  # probability-zero guard
        bad = norms < _NORM_FLOOR
        x[bad] = rng.normal((int(bad.sum()), d))
        norms = np.linalg.norm(x, axis=1)
    return x / norms[:, None]


@dataclass(frozen=True)
class DefiningFunction:
    """Projection family: linear slices <x, theta> or circular ||x - r theta||."""

    kind: str = "linear"
    radius: float = 1000.0

    def __post_init__(self):
        if self.kind not in ("linear", "circular"):
            raise ConfigError(f"unknown defining function {self.kind!r}")
        if self.radius <= 0:
            raise ConfigError(f"circular radius must be positive, got {self.radius}")


LINEAR = DefiningFunction("linear")


def circular(radius: float = 1000.0) -> DefiningFunction:
    return DefiningFunction("circular", radius)


def project(points: np.ndarray, dirs: np.ndarray, defining: DefiningFunction = LINEAR) -> np.ndarray:
    """Project k points along n directions; returns an (n, k) array."""
    points = np.asarray(points, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    if points.ndim != 2 or dirs.ndim != 2 or points.shape[1] != dirs.shape[1]:
        raise ShapeError(f"projection shapes points {points.shape} dirs {dirs.shape}")
    if defining.kind == "linear":
        return dirs @ points.T
    diff = points[None, :, :] - defining.radius * dirs[:, None, :]
    return np.sqrt((diff * diff).sum(axis=2))


def concentration_statistic(dirs: np.ndarray) -> float:
    """Mean absolute pairwise cosine over all (i, j) pairs, diagonal included."""
    dirs = np.asarray(dirs, dtype=np.float64)
    return float(np.abs(dirs @ dirs.T).mean())


def offdiag_coherence(dirs: np.ndarray) -> float:
    """Unbiased estimate of E|theta^T theta'| over independent draws.

    Excludes the diagonal and normalizes by n(n-1); this is the regularizer
    estimator, distinct from concentration_statistic which keeps the diagonal.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    n = dirs.shape[0]
    if n < 2:
        return 0.0
    gram = np.abs(dirs @ dirs.T)
    return float((gram.sum() - np.trace(gram)) / (n * (n - 1)))


class SphereMap:
    """Measurable map from S^{d-1} to itself: affine stack plus normalization.

    The default is a single affine layer, f(theta) = normalize(W theta + b),
    initialized near the identity so the initial pushforward stays close to
    uniform. With hidden layers the output is normalize(theta + mlp(theta)),
    again near-identity at initialization.
    """

    def __init__(self, weights, biases, residual: bool = False, slope: float = 0.2):
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("need one bias per weight matrix")
        self.residual = bool(residual)
        self.slope = float(slope)

    @classmethod
    def near_identity(cls, d: int, rng: RngStream | None = None, hidden=(), scale: float = 0.01):
        hidden = tuple(int(h) for h in hidden)
        noise = (lambda shape: rng.normal(shape)) if rng is not None else (lambda shape: np.zeros(shape))
        if not hidden:
            return cls([np.eye(d) + scale * noise((d, d))], [np.zeros(d)], residual=False)
        dims = (d, *hidden, d)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(noise((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        weights[-1] *= scale  # keep the residual branch small at the start
        return cls(weights, biases, residual=True)

    @property
    def dim(self) -> int:
        return self.weights[-1].shape[0]

    def params(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def copy(self) -> "SphereMap":
        return SphereMap(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            residual=self.residual,
            slope=self.slope,
        )

    def _pre_normalize(self, thetas: np.ndarray) -> np.ndarray:
        h = thetas
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = h @ w.T + b
            h = np.where(h > 0, h, self.slope * h)
        out = h @ self.weights[-1].T + self.biases[-1]
        if self.residual:
            out = out + thetas
        return out

    def forward(self, thetas: np.ndarray) -> np.ndarray:
        """Map unit directions through the net; rows come back unit-norm."""
        thetas = np.asarray(thetas, dtype=np.float64)
        out = self._pre_normalize(thetas)
        norms = np.linalg.norm(out, axis=1)
        if norms.min(initial=np.inf) < _NORM_FLOOR:
            raise DegenerateMap("pushforward row with norm below 1e-12")
        return out / norms[:, None]

    def forward_tape(self, tape: grad.Tape, thetas: np.ndarray):
        """Tape-recorded forward pass; returns (output node, parameter nodes)."""
        thetas = np.asarray(thetas, dtype=np.float64)
        pnodes = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            pnodes[f"w{i}"] = tape.param(w, f"w{i}")
            pnodes[f"b{i}"] = tape.param(b, f"b{i}")
        h = tape.const(thetas)
        last = len(self.weights) - 1
        for i in range(last):
            h = grad.leaky_relu(grad.affine(pnodes[f"w{i}"], pnodes[f"b{i}"], h), self.slope)
        out = grad.affine(pnodes[f"w{last}"], pnodes[f"b{last}"], h)
        if self.residual:
            out = grad.add(out, tape.const(thetas))
        norms = np.linalg.norm(out.value, axis=1)
        if norms.min(initial=np.inf) < _NORM_FLOOR:
            raise DegenerateMap("pushforward row with norm below 1e-12")
        return grad.l2_normalize_rows(out), pnodes
