"""Exact one-dimensional Wasserstein distance and an exact d-dimensional oracle.

The 1D distance integrates |F_a^{-1} - F_b^{-1}|^p over the merged
cumulative-weight ladder of the two measures; the equal-size uniform case
reduces to sorting and pairing. The d-dimensional oracle (Hungarian
assignment for uniform equal-size inputs, otherwise a small exact LP) exists
for validation and evaluation, not for training paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from .core import (
    DomainError,
    EmpiricalMeasure,
    NumericError,
    ShapeError,
    SizeError,
    as_tensor,
)

ASSIGNMENT_BUDGET = 4096  # largest k for the k x k assignment solve
LP_BUDGET = 10_000  # largest k_a * k_b for the general coupling LP
_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class Measure1D:
    """Weighted atoms on the real line with total mass 1."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        loc = as_tensor(self.locations).reshape(-1)
        w = as_tensor(self.weights).reshape(-1)
        if loc.shape != w.shape or loc.size == 0:
            raise ShapeError("locations and weights must be equal-length and non-empty")
        if np.any(w < 0):
            raise DomainError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise DomainError(f"weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_values(cls, locations, weights=None) -> "Measure1D":
        loc = as_tensor(locations).reshape(-1)
        if weights is None:
            weights = np.full(loc.size, 1.0 / loc.size)
        return cls(loc, weights)


@dataclass(frozen=True)
class Coupling:
    """Sparse transport plan as (source index, target index, mass) triples."""

    pairs: tuple

    def marginals(self, k_a: int, k_b: int):
        a = np.zeros(k_a)
        b = np.zeros(k_b)
        for i, j, mass in self.pairs:
            a[i] += mass
            b[j] += mass
        return a, b


def _abs_pow(diff: np.ndarray, p: float) -> np.ndarray:
    if p == 2.0:
        return diff * diff
    if p == 1.0:
        return np.abs(diff)
    return np.abs(diff) ** p


def _quantile_cost(xa, wa, xb, wb, p: float) -> float:
    """Integral of |F_a^{-1}(z) - F_b^{-1}(z)|^p over z in (0, 1)."""
    order_a = np.argsort(xa, kind="stable")
    order_b = np.argsort(xb, kind="stable")
    xa, wa = xa[order_a], wa[order_a]
    xb, wb = xb[order_b], wb[order_b]
    cwa = np.cumsum(wa)
    cwb = np.cumsum(wb)
    qs = np.concatenate([cwa, cwb])
    qs.sort(kind="stable")
    deltas = np.diff(qs, prepend=0.0)
    mids = qs - 0.5 * deltas
    ia = np.minimum(np.searchsorted(cwa, mids, side="left"), xa.size - 1)
    ib = np.minimum(np.searchsorted(cwb, mids, side="left"), xb.size - 1)
    return float(np.sum(deltas * _abs_pow(xa[ia] - xb[ib], p)))


def wasserstein_1d(a: Measure1D, b: Measure1D, p: float = 2.0) -> float:
    """Closed-form W_p between two measures on the line."""
    if p < 1:
        raise DomainError(f"order p must be >= 1, got {p}")
    return _quantile_cost(a.locations, a.weights, b.locations, b.weights, p) ** (1.0 / p)


def sorted_matching_cost(x_proj, y_proj, p: float = 2.0):
    """W_p^p for equal-size uniform samples plus the sort permutations.

    Ties break by original index (stable sort) so the matching, and any
    gradient reconstructed through it, is deterministic. Returns
    (cost^p, ix, iy) with cost^p = mean |x[ix] - y[iy]|^p.
    """
    x = np.asarray(x_proj, dtype=np.float64).reshape(-1)
    y = np.asarray(y_proj, dtype=np.float64).reshape(-1)
    if x.shape != y.shape or x.size == 0:
        raise ShapeError(f"expected equal non-empty sizes, got {x.shape} and {y.shape}")
    if p < 1:
        raise DomainError(f"order p must be >= 1, got {p}")
    ix = np.argsort(x, kind="stable")
    iy = np.argsort(y, kind="stable")
    cost_p = float(np.mean(np.abs(x[ix] - y[iy]) ** p))
    return cost_p, ix, iy


def _assignment_solve(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float):
    cost = _abs_pow(cdist(mu.points, nu.points), p)
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum()) / mu.k
    pairs = tuple((int(i), int(j), 1.0 / mu.k) for i, j in zip(rows, cols))
    return total ** (1.0 / p), Coupling(pairs)


def _lp_solve(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float):
    ka, kb = mu.k, nu.k
    cost = _abs_pow(cdist(mu.points, nu.points), p).ravel()
    a_eq = np.zeros((ka + kb, ka * kb))
    for i in range(ka):
        a_eq[i, i * kb : (i + 1) * kb] = 1.0
    for j in range(kb):
        a_eq[ka + j, j::kb] = 1.0
    b_eq = np.concatenate([mu.weights, nu.weights])
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise NumericError(f"transport LP failed: {res.message}")
    plan = res.x.reshape(ka, kb)
    pairs = tuple(
        (int(i), int(j), float(plan[i, j]))
        for i, j in zip(*np.nonzero(plan > 1e-12))
    )
    return float(res.fun) ** (1.0 / p), Coupling(pairs)


def exact_wasserstein(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float = 2.0):
    """Exact W_p and an optimal coupling between two small point clouds."""
    if mu.dim != nu.dim:
        raise ShapeError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if p < 1:
        raise DomainError(f"order p must be >= 1, got {p}")
    if mu.k == nu.k and mu.is_uniform() and nu.is_uniform():
        if mu.k > ASSIGNMENT_BUDGET:
            raise SizeError(f"assignment instance k={mu.k} above budget {ASSIGNMENT_BUDGET}")
        return _assignment_solve(mu, nu, p)
    if mu.k * nu.k > LP_BUDGET:
        raise SizeError(f"coupling LP with {mu.k * nu.k} variables above budget {LP_BUDGET}")
    return _lp_solve(mu, nu, p)
