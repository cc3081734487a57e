"""The six sliced distances: SW, GSW, Max-SW, Max-GSW-NN, DSW, and DGSW.

All of them reduce d-dimensional transport to exact 1D transport along
projections. SW and GSW average W_p^p over uniformly sampled directions.
Max-SW climbs a single direction by projected gradient ascent; Max-GSW-NN
does the same over a small leaky-ReLU network used as a nonlinear slice.
DSW and DGSW fit a pushforward map f on the sphere by stochastic gradient
ascent of

    DS(f) = ( mean_i W_p^p(proj via f(theta_i)) )^(1/p)
            - lambda_c * mean_{i != j} |f(theta_i)^T f(theta_j)|

with fresh uniform theta batches every step, then report the first term
(sliced_value) from an independent direction batch at the fitted map. The
additive lambda_c * C constant of the dual is unknown and never reported;
dual_value_without_constant is labeled accordingly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import grad
from .core import (
    ConfigError,
    DomainError,
    EmpiricalMeasure,
    RngStream,
    ShapeError,
    max_threads,
)
from .slicing import (
    LINEAR,
    DefiningFunction,
    SphereMap,
    offdiag_coherence,
    project,
    sample_uniform_sphere,
)
from .transport import Measure1D, sorted_matching_cost, wasserstein_1d


@dataclass
class SlicedConfig:
    """Shared estimator knobs: order p, projection count, projection family."""

    p: float = 2.0
    n_projections: int = 100
    defining: DefiningFunction = LINEAR
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError(f"order p must be >= 1, got {self.p}")
        if self.n_projections < 1:
            raise ConfigError(f"need at least one projection, got {self.n_projections}")


@dataclass
class DswConfig:
    """DSW/DGSW knobs on top of SlicedConfig.

    lambda_c weighs the pairwise-cosine regularizer; ascent_steps stochastic
    gradient steps update the sphere map before the final evaluation, which
    uses eval_projections fresh directions (defaults to n_projections).
    """

    base: SlicedConfig = field(default_factory=SlicedConfig)
    lambda_c: float = 1.0
    ascent_steps: int = 1
    ascent_lr: float = 5e-4
    betas: tuple = (0.5, 0.999)
    eval_projections: int | None = None

    def __post_init__(self):
        if self.lambda_c < 0:
            raise ConfigError(f"lambda_c must be nonnegative, got {self.lambda_c}")
        if self.ascent_steps < 0:
            raise ConfigError(f"ascent_steps must be >= 0, got {self.ascent_steps}")
        if self.ascent_lr <= 0:
            raise ConfigError(f"ascent_lr must be positive, got {self.ascent_lr}")


@dataclass
class DswResult:
    """Fitted-map evaluation: sliced value, dual value (sans the lambda_c * C
    constant), regularizer estimate, the directions used, and the Monte Carlo
    standard error of sliced_value."""

    sliced_value: float
    dual_value_without_constant: float
    reg_estimate: float
    directions_used: np.ndarray
    sliced_stderr: float


def _check_same_dim(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> None:
    if mu.dim != nu.dim:
        raise ShapeError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


def _require_matched_uniform(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> None:
    _check_same_dim(mu, nu)
    if mu.k != nu.k:
        raise ShapeError(f"estimator path needs equal sizes, got {mu.k} and {nu.k}")
    if not (mu.is_uniform() and nu.is_uniform()):
        raise DomainError("estimator path needs uniform weights")


def _abs_pow(diff: np.ndarray, p: float) -> np.ndarray:
    if p == 2.0:
        return diff * diff
    if p == 1.0:
        return np.abs(diff)
    return np.abs(diff) ** p


def per_direction_costs(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    dirs: np.ndarray,
    p: float = 2.0,
    defining: DefiningFunction = LINEAR,
) -> np.ndarray:
    """W_p^p between the projected measures for each direction row."""
    _check_same_dim(mu, nu)
    proj_mu = project(mu.points, dirs, defining)
    proj_nu = project(nu.points, dirs, defining)
    if mu.k == nu.k and mu.is_uniform() and nu.is_uniform():
        a = np.sort(proj_mu, axis=1)
        b = np.sort(proj_nu, axis=1)
        return _abs_pow(a - b, p).mean(axis=1)
    costs = np.empty(dirs.shape[0])
    for i in range(dirs.shape[0]):
        costs[i] = wasserstein_1d(
            Measure1D(proj_mu[i], mu.weights), Measure1D(proj_nu[i], nu.weights), p
        ) ** p
    return costs


def _chunked_costs(mu, nu, dirs, p, defining) -> np.ndarray:
    threads = max_threads()
    n = dirs.shape[0]
    if threads <= 1 or n < 2 * threads:
        return per_direction_costs(mu, nu, dirs, p, defining)
    bounds = np.linspace(0, n, threads + 1, dtype=int)
    chunks = [dirs[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: per_direction_costs(mu, nu, c, p, defining), chunks))
    return np.concatenate(parts)  # chunk order is fixed, so the reduction is too


def sliced_from_dirs(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    dirs: np.ndarray,
    p: float = 2.0,
    defining: DefiningFunction = LINEAR,
) -> float:
    """Frozen-direction sliced estimate: (mean_i W_p^p)^(1/p)."""
    return float(_chunked_costs(mu, nu, dirs, p, defining).mean() ** (1.0 / p))


def sw(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cfg: SlicedConfig, rng: RngStream | None = None) -> float:
    """Monte Carlo sliced distance over fresh uniform directions."""
    _check_same_dim(mu, nu)
    if cfg.defining.kind != "linear":
        raise ConfigError("sw uses linear projections; call gsw for circular slices")
    rng = rng if rng is not None else RngStream(cfg.seed)
    dirs = sample_uniform_sphere(rng, cfg.n_projections, mu.dim)
    return sliced_from_dirs(mu, nu, dirs, cfg.p, cfg.defining)


def gsw(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cfg: SlicedConfig, rng: RngStream | None = None) -> float:
    """Generalized sliced distance through the circular projection family."""
    _check_same_dim(mu, nu)
    if cfg.defining.kind != "circular":
        raise ConfigError("gsw needs a circular defining function")
    rng = rng if rng is not None else RngStream(cfg.seed)
    dirs = sample_uniform_sphere(rng, cfg.n_projections, mu.dim)
    return sliced_from_dirs(mu, nu, dirs, cfg.p, cfg.defining)


# ---------------------------------------------------------------------------
# Differentiable building blocks shared by the optimizing distances
# ---------------------------------------------------------------------------


def _project_node(dirs_node, points, defining: DefiningFunction):
    if defining.kind == "linear":
        return grad.linear_project(dirs_node, points)
    return grad.circular_project(dirs_node, points, defining.radius)


def _matched_cost_node(px, py, p: float):
    """Mean W_p^p over direction rows with sort permutations frozen.

    Uses the default (deterministic) argsort: cost and gradients only depend
    on tie-breaking at exact float ties, where any frozen permutation is a
    valid subgradient choice.
    """
    ix = np.argsort(px.value, axis=1)
    iy = np.argsort(py.value, axis=1)
    diff = grad.sub(grad.permute_rows(px, ix), grad.permute_rows(py, iy))
    return grad.mean(grad.pow_p(diff, p))  # pow_p is |.|^p, no abs node needed


_CHUNK_BUDGET = 1 << 18  # directions x points per block, keeps blocks cache-sized


def _mc_mean_node(u, x_points, y_points, p, defining):
    """Mean projected cost over all direction rows of u, block by block."""
    n = u.value.shape[0]
    k = max(x_points.shape[0], y_points.shape[0])
    chunk = max(1, _CHUNK_BUDGET // max(k, 1))
    if chunk >= n:
        return _matched_cost_node(
            _project_node(u, x_points, defining), _project_node(u, y_points, defining), p
        )
    acc = None
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        uc = grad.gather_rows(u, rows)
        cost = _matched_cost_node(
            _project_node(uc, x_points, defining), _project_node(uc, y_points, defining), p
        )
        term = grad.scalar_mul(cost, len(rows) / n)
        acc = term if acc is None else grad.add(acc, term)
    return acc


def _ds_nodes(tape, sphere_map, x_points, y_points, thetas, p, lambda_c, defining):
    """Build the DS objective graph; returns (ds, sliced, param nodes)."""
    u, pnodes = sphere_map.forward_tape(tape, thetas)
    sliced = grad.root_p(_mc_mean_node(u, x_points, y_points, p, defining), p)
    n = thetas.shape[0]
    if lambda_c > 0 and n > 1:
        gram = grad.abs(grad.matmul(u, grad.transpose(u)))
        mask = 1.0 - np.eye(n)
        reg = grad.scalar_mul(grad.inner(gram, tape.const(mask)), 1.0 / (n * (n - 1)))
        ds = grad.sub(sliced, grad.scalar_mul(reg, lambda_c))
    else:
        ds = sliced
    return ds, sliced, pnodes


def ds_value(sphere_map, mu, nu, thetas, p, lambda_c, defining=LINEAR) -> float:
    """DS objective at fixed directions (no update); handy for checks."""
    tape = grad.Tape()
    ds, _, _ = _ds_nodes(tape, sphere_map, mu.points, nu.points, thetas, p, lambda_c, defining)
    return float(ds.value)


def sphere_map_ascent_step(
    sphere_map: SphereMap,
    x_points: np.ndarray,
    y_points: np.ndarray,
    cfg: DswConfig,
    rng: RngStream,
    opt: grad.Adam,
    thetas: np.ndarray | None = None,
) -> float:
    """One stochastic ascent step on the map parameters; returns the DS estimate."""
    if thetas is None:
        thetas = sample_uniform_sphere(rng, cfg.base.n_projections, sphere_map.dim)
    tape = grad.Tape()
    ds, _, pnodes = _ds_nodes(
        tape, sphere_map, x_points, y_points, thetas, cfg.base.p, cfg.lambda_c, cfg.base.defining
    )
    grads = grad.backward(grad.scalar_mul(ds, -1.0))
    opt.step(sphere_map.params(), {name: grads[node] for name, node in pnodes.items()})
    return float(ds.value)


def _evaluate_fitted(mu, nu, cfg: DswConfig, sphere_map: SphereMap, rng: RngStream) -> DswResult:
    n_eval = cfg.eval_projections if cfg.eval_projections is not None else cfg.base.n_projections
    thetas = sample_uniform_sphere(rng, n_eval, sphere_map.dim)
    dirs = sphere_map.forward(thetas)
    costs = _chunked_costs(mu, nu, dirs, cfg.base.p, cfg.base.defining)
    mc = float(costs.mean())
    sliced = mc ** (1.0 / cfg.base.p)
    if n_eval > 1 and mc > 0:
        se_mc = float(costs.std(ddof=1)) / np.sqrt(n_eval)
        stderr = se_mc * (1.0 / cfg.base.p) * mc ** (1.0 / cfg.base.p - 1.0)
    else:
        stderr = 0.0
    reg = offdiag_coherence(dirs)
    return DswResult(
        sliced_value=sliced,
        dual_value_without_constant=sliced - cfg.lambda_c * reg,
        reg_estimate=reg,
        directions_used=dirs,
        sliced_stderr=stderr,
    )


def _fit_distributional(mu, nu, cfg, sphere_map, rng, opt) -> DswResult:
    _require_matched_uniform(mu, nu)
    rng = rng if rng is not None else RngStream(cfg.base.seed)
    if sphere_map is None:
        sphere_map = SphereMap.near_identity(mu.dim, rng.child(0x5A9))
    if sphere_map.dim != mu.dim:
        raise ShapeError(f"sphere map dimension {sphere_map.dim} != data dimension {mu.dim}")
    opt = opt if opt is not None else grad.Adam(cfg.ascent_lr, cfg.betas)
    for _ in range(cfg.ascent_steps):
        sphere_map_ascent_step(sphere_map, mu.points, nu.points, cfg, rng, opt)
    return _evaluate_fitted(mu, nu, cfg, sphere_map, rng)


def dsw(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    cfg: DswConfig,
    sphere_map: SphereMap | None = None,
    rng: RngStream | None = None,
    opt: grad.Adam | None = None,
) -> DswResult:
    """Distributional sliced distance via ascent on the pushforward map.

    The map is updated in place so callers can warm-start it across calls;
    passing the same optimizer keeps its moments alive as well.
    """
    if cfg.base.defining.kind != "linear":
        raise ConfigError("dsw uses linear projections; call dgsw for circular slices")
    return _fit_distributional(mu, nu, cfg, sphere_map, rng, opt)


def dgsw(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    cfg: DswConfig,
    sphere_map: SphereMap | None = None,
    rng: RngStream | None = None,
    opt: grad.Adam | None = None,
) -> DswResult:
    """DSW through the circular projection family."""
    if cfg.base.defining.kind != "circular":
        raise ConfigError("dgsw needs a circular defining function")
    return _fit_distributional(mu, nu, cfg, sphere_map, rng, opt)


# ---------------------------------------------------------------------------
# Max-SW and the neural Max-GSW baseline
# ---------------------------------------------------------------------------


def max_sw(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    p: float = 2.0,
    iters: int = 50,
    lr: float = 1e-2,
    seed: int = 0,
    restarts: int = 1,
):
    """Best single slice by projected gradient ascent on the sphere.

    theta <- normalize(theta + lr * grad W_p^p) from a uniform start; returns
    the largest projected W_p seen and its direction. Every candidate value
    is an exact 1D cost, so the result never exceeds the true W_p.
    """
    _require_matched_uniform(mu, nu)
    if p < 1:
        raise DomainError(f"order p must be >= 1, got {p}")
    rng = RngStream(seed)
    d = mu.dim
    best_value, best_theta = -np.inf, None

    def consider(theta_row):
        nonlocal best_value, best_theta
        cost_p, _, _ = sorted_matching_cost(
            mu.points @ theta_row, nu.points @ theta_row, p
        )
        value = cost_p ** (1.0 / p)
        if value > best_value:
            best_value, best_theta = value, theta_row.copy()

    for _ in range(max(1, restarts)):
        theta = sample_uniform_sphere(rng, 1, d)
        for _ in range(iters):
            tape = grad.Tape()
            th = tape.param(theta)
            px = grad.linear_project(th, mu.points)
            py = grad.linear_project(th, nu.points)
            cost = _matched_cost_node(px, py, p)
            consider(theta[0])
            g = grad.backward(cost)[th]
            theta = theta + lr * g
            norm = np.linalg.norm(theta)
            if norm < 1e-12:
                theta = sample_uniform_sphere(rng, 1, d)
            else:
                theta = theta / norm
        consider(theta[0])
    return best_value, best_theta


class _ScalarNet:
    """Three affine layers with leaky-ReLU between, mapping R^d to R."""

    def __init__(self, d: int, hidden, rng: RngStream, slope: float = 0.2):
        dims = (d, *[int(h) for h in hidden], 1)
        if len(dims) != 4:
            raise ConfigError(f"expected two hidden sizes, got {hidden!r}")
        self.slope = slope
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = rng.normal((fan_out, fan_in)) / np.sqrt(fan_in)
            self.weights.append(w / max(np.linalg.norm(w), 1e-12))
            self.biases.append(np.zeros(fan_out))

    def params(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def renormalize(self) -> None:
        # projected ascent: each weight matrix stays on the unit Frobenius sphere
        for w in self.weights:
            w /= max(np.linalg.norm(w), 1e-12)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = h @ w.T + b
            h = np.where(h > 0, h, self.slope * h)
        return (h @ self.weights[-1].T + self.biases[-1]).ravel()

    def param_nodes(self, tape) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = tape.param(w, f"w{i}")
            out[f"b{i}"] = tape.param(b, f"b{i}")
        return out

    def apply_tape(self, tape, x, pnodes: dict | None = None):
        """Tape forward pass; pnodes=None treats the weights as constants."""
        h = x if isinstance(x, grad.Node) else tape.const(x)
        for i in range(len(self.weights)):
            if pnodes is None:
                wn, bn = tape.const(self.weights[i]), tape.const(self.biases[i])
            else:
                wn, bn = pnodes[f"w{i}"], pnodes[f"b{i}"]
            h = grad.affine(wn, bn, h)
            if i < len(self.weights) - 1:
                h = grad.leaky_relu(h, self.slope)
        return grad.flatten(h)


def max_gsw_nn(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    p: float = 2.0,
    iters: int = 50,
    hidden=(32, 32),
    lr: float = 1e-2,
    seed: int = 0,
    return_net: bool = False,
):
    """Best nonlinear slice from a 3-layer leaky-ReLU network, baseline only."""
    _require_matched_uniform(mu, nu)
    rng = RngStream(seed)
    net = _ScalarNet(mu.dim, hidden, rng.child(1))
    opt = grad.Adam(lr, (0.5, 0.999))
    best_value, best_state = -np.inf, None

    def consider():
        nonlocal best_value, best_state
        cost_p, _, _ = sorted_matching_cost(net.forward(mu.points), net.forward(nu.points), p)
        value = cost_p ** (1.0 / p)
        if value > best_value:
            best_value = value
            best_state = ([w.copy() for w in net.weights], [b.copy() for b in net.biases])

    for _ in range(iters):
        consider()
        tape = grad.Tape()
        pnodes = net.param_nodes(tape)  # shared by both point clouds
        sx = net.apply_tape(tape, mu.points, pnodes)
        sy = net.apply_tape(tape, nu.points, pnodes)
        ix = np.argsort(sx.value, kind="stable")
        iy = np.argsort(sy.value, kind="stable")
        diff = grad.sub(grad.gather_rows(sx, ix), grad.gather_rows(sy, iy))
        cost = grad.mean(grad.pow_p(grad.abs(diff), p))
        grads = grad.backward(grad.scalar_mul(cost, -1.0))
        opt.step(net.params(), {name: grads[node] for name, node in pnodes.items()})
        net.renormalize()
    consider()
    if best_state is not None:
        net.weights = best_state[0]
        net.biases = best_state[1]
    if return_net:
        return best_value, net
    return best_value
