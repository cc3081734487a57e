"""Desk-scale generative training by minimum expected sliced distance.

train_mede fits a feed-forward generator so that minibatch empirical
measures of its samples match minibatches of the data under a configured
sliced distance; with DSW/DGSW the sphere map takes its ascent steps before
each generator step and is warm-started across iterations. train_jci fits a
generator and a deterministic encoder jointly by matching the two
latent-observed joint distributions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import grad
from .core import (
    ConfigError,
    EmpiricalMeasure,
    NumericError,
    RngStream,
    SizeError,
    save_tensors,
)
from .distances import (
    DswConfig,
    SlicedConfig,
    _matched_cost_node,
    _project_node,
    max_gsw_nn,
    max_sw,
    sphere_map_ascent_step,
)
from .slicing import LINEAR, SphereMap, sample_uniform_sphere
from .transport import exact_wasserstein

_EVAL_BUDGET = 2000


class Mlp:
    """Plain feed-forward stack of (W, b, activation) layers."""

    def __init__(self, weights, biases, activation: str = "leaky_relu", slope: float = 0.2,
                 out_activation: str | None = None):
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        self.activation = activation
        self.slope = float(slope)
        self.out_activation = out_activation

    @classmethod
    def create(cls, dims, rng: RngStream, activation: str = "leaky_relu",
               slope: float = 0.2, out_activation: str | None = None,
               out_scale: float = 1.0) -> "Mlp":
        """He-initialized stack; out_scale=0 zeroes the output layer so the
        initial pushforward is a point mass (a deterministic blank start)."""
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(rng.normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        weights[-1] *= float(out_scale)
        return cls(weights, biases, activation, slope, out_activation)

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[0]

    def _act(self, h: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return np.maximum(h, 0.0)
        if self.activation == "tanh":
            return np.tanh(h)
        return np.where(h > 0, h, self.slope * h)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = self._act(h @ w.T + b)
        h = h @ self.weights[-1].T + self.biases[-1]
        if self.out_activation == "tanh":
            h = np.tanh(h)
        return h

    def _act_node(self, h):
        if self.activation == "relu":
            return grad.relu(h)
        if self.activation == "tanh":
            return grad.tanh(h)
        return grad.leaky_relu(h, self.slope)

    def forward_tape(self, tape, x):
        """Returns (output node, parameter nodes keyed w0/b0/w1/b1/...)."""
        pnodes = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            pnodes[f"w{i}"] = tape.param(w, f"w{i}")
            pnodes[f"b{i}"] = tape.param(b, f"b{i}")
        h = x if isinstance(x, grad.Node) else tape.const(x)
        last = len(self.weights) - 1
        for i in range(last):
            h = self._act_node(grad.affine(pnodes[f"w{i}"], pnodes[f"b{i}"], h))
        h = grad.affine(pnodes[f"w{last}"], pnodes[f"b{last}"], h)
        if self.out_activation == "tanh":
            h = grad.tanh(h)
        return h, pnodes

    def params(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def save(self, path: str) -> None:
        save_tensors(path, self.param_arrays())

    def copy(self) -> "Mlp":
        return type(self)(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.slope,
            self.out_activation,
        )


class Generator(Mlp):
    """Pushforward of standard normal noise through an Mlp: T(z) in R^{d_x}."""

    @property
    def d_z(self) -> int:
        return self.d_in


class Encoder(Mlp):
    """Deterministic inference map R^{d_x} -> R^{d_z}."""


@dataclass
class TrainConfig:
    """Training knobs; the sliced-distance choice rides along in `distance`."""

    distance: str = "dsw"
    p: float = 2.0
    n_projections: int = 10
    defining: object = LINEAR
    lambda_c: float = 10.0
    ascent_steps: int = 1
    ascent_lr: float = 5e-4
    batch_size: int = 512
    iterations: int = 1000
    lr: float = 5e-4
    betas: tuple = (0.5, 0.999)
    seed: int = 0
    eval_every: int = 0
    eval_size: int = 512
    latent_scale: float = 1.0
    inner_iters: int = 50  # ascent iterations for the max-style distances

    def __post_init__(self):
        if self.distance not in ("sw", "gsw", "maxsw", "maxgswnn", "dsw", "dgsw"):
            raise ConfigError(f"unknown distance {self.distance!r}")
        if self.batch_size < 2:
            raise ConfigError("batch size must be at least 2")
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if self.distance in ("gsw", "dgsw") and self.defining.kind != "circular":
            raise ConfigError(f"{self.distance} needs a circular defining function")
        if self.distance in ("sw", "dsw") and self.defining.kind != "linear":
            raise ConfigError(f"{self.distance} uses linear projections")


@dataclass
class TrainRecord:
    iteration: int
    wall_ms: float
    loss: float
    eval_metric: float  # nan when not evaluated at this step


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as handle:
            handle.write("iteration,wall_ms,loss,eval_metric\n")
            for r in self.records:
                metric = "" if np.isnan(r.eval_metric) else repr(float(r.eval_metric))
                handle.write(f"{r.iteration},{r.wall_ms:.3f},{float(r.loss)!r},{metric}\n")

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def eval_metrics(self) -> list:
        return [(r.iteration, r.eval_metric) for r in self.records if not np.isnan(r.eval_metric)]


def _batch_indices(rng: RngStream, k: int, m: int):
    """Without-replacement minibatches, reshuffled each epoch."""
    while True:
        order = rng.permutation(k)
        for start in range(0, k - m + 1, m):
            yield order[start : start + m]


def _check_finite(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise NumericError(f"{what} became non-finite")
    return float(value)


def _sliced_loss_node(tape, x_points, y_node, dirs, p, defining):
    """Differentiable sliced distance from constant data to generated points."""
    px = _project_node(tape.const(dirs), x_points, defining)
    py = _project_node(tape.const(dirs), y_node, defining)
    return grad.root_p(_matched_cost_node(px, py, p), p)


def _maxgsw_loss_node(tape, net, x_points, y_node, p):
    sx = net.apply_tape(tape, x_points, None)
    sy = net.apply_tape(tape, y_node, None)
    ix = np.argsort(sx.value, kind="stable")
    iy = np.argsort(sy.value, kind="stable")
    diff = grad.sub(grad.gather_rows(sx, ix), grad.gather_rows(sy, iy))
    return grad.root_p(grad.mean(grad.pow_p(grad.abs(diff), p)), p)


class _DirectionEngine:
    """Per-iteration supplier of the differentiable loss for each distance."""

    def __init__(self, cfg: TrainConfig, d: int, rng: RngStream):
        self.cfg = cfg
        self.d = d
        self.rng = rng
        self.sphere_map = None
        self.map_opt = None
        if cfg.distance in ("dsw", "dgsw"):
            self.sphere_map = SphereMap.near_identity(d, rng.child(7))
            self.map_opt = grad.Adam(cfg.ascent_lr, cfg.betas)
            self.dsw_cfg = DswConfig(
                base=SlicedConfig(p=cfg.p, n_projections=cfg.n_projections,
                                  defining=cfg.defining, seed=cfg.seed),
                lambda_c=cfg.lambda_c,
                ascent_steps=cfg.ascent_steps,
                ascent_lr=cfg.ascent_lr,
                betas=cfg.betas,
            )

    def loss_node(self, tape, x_batch: np.ndarray, y_values: np.ndarray, y_node):
        cfg = self.cfg
        if cfg.distance in ("sw", "gsw"):
            dirs = sample_uniform_sphere(self.rng, cfg.n_projections, self.d)
            return _sliced_loss_node(tape, x_batch, y_node, dirs, cfg.p, cfg.defining)
        if cfg.distance in ("dsw", "dgsw"):
            for _ in range(cfg.ascent_steps):
                sphere_map_ascent_step(
                    self.sphere_map, x_batch, y_values, self.dsw_cfg, self.rng, self.map_opt
                )
            thetas = sample_uniform_sphere(self.rng, cfg.n_projections, self.d)
            dirs = self.sphere_map.forward(thetas)
            return _sliced_loss_node(tape, x_batch, y_node, dirs, cfg.p, cfg.defining)
        if cfg.distance == "maxsw":
            _, theta = max_sw(
                EmpiricalMeasure.uniform(x_batch),
                EmpiricalMeasure.uniform(y_values),
                p=cfg.p,
                iters=cfg.inner_iters,
                seed=int(self.rng.integers(0, 2**62)),
            )
            return _sliced_loss_node(tape, x_batch, y_node, theta[None, :], cfg.p, LINEAR)
        _, net = max_gsw_nn(
            EmpiricalMeasure.uniform(x_batch),
            EmpiricalMeasure.uniform(y_values),
            p=cfg.p,
            iters=cfg.inner_iters,
            seed=int(self.rng.integers(0, 2**62)),
            return_net=True,
        )
        return _maxgsw_loss_node(tape, net, x_batch, y_node, cfg.p)


def evaluate_model(
    gen: Generator,
    holdout: EmpiricalMeasure,
    n_eval: int = 512,
    p: float = 2.0,
    rng: RngStream | None = None,
) -> float:
    """Exact W_p between generated samples and a held-out slice of the data."""
    if n_eval > _EVAL_BUDGET:
        raise SizeError(f"n_eval {n_eval} above exact-evaluation budget {_EVAL_BUDGET}")
    rng = rng if rng is not None else RngStream(0)
    n = min(n_eval, holdout.k)
    z = rng.normal((n, gen.d_z))
    samples = gen.forward(z)
    pts = holdout.points
    if holdout.k > n:
        pts = pts[rng.permutation(holdout.k)[:n]]
    value, _ = exact_wasserstein(
        EmpiricalMeasure.uniform(samples), EmpiricalMeasure.uniform(pts), p
    )
    return value


def reconstruction_error(gen: Generator, enc: Encoder, measure: EmpiricalMeasure) -> float:
    """Mean Euclidean error of the decode(encode(x)) round trip."""
    recon = gen.forward(enc.forward(measure.points))
    return float(np.linalg.norm(recon - measure.points, axis=1).mean())


def train_mede(
    data: EmpiricalMeasure,
    gen: Generator,
    cfg: TrainConfig,
    rng: RngStream | None = None,
    holdout: EmpiricalMeasure | None = None,
) -> TrainLog:
    """Minimum expected sliced-distance fit of the generator to the data."""
    if cfg.batch_size > data.k:
        raise ConfigError(f"batch size {cfg.batch_size} exceeds data size {data.k}")
    rng = rng if rng is not None else RngStream(cfg.seed)
    batch_rng, noise_rng, dir_rng, eval_rng, init_rng = (rng.child(i) for i in range(5))
    holdout = holdout if holdout is not None else data
    engine = _DirectionEngine(cfg, data.dim, dir_rng)
    opt = grad.Adam(cfg.lr, cfg.betas)
    batches = _batch_indices(batch_rng, data.k, cfg.batch_size)
    log = TrainLog()

    def due(it: int) -> bool:
        return cfg.eval_every > 0 and (it % cfg.eval_every == 0 or it == cfg.iterations)

    def evaluate(it: int) -> float:
        return evaluate_model(gen, holdout, cfg.eval_size, cfg.p, eval_rng.child(it))

    # baseline row: loss of an untouched minibatch pair plus the initial metric
    x0 = data.points[next(batches)]
    y0 = gen.forward(init_rng.normal((cfg.batch_size, gen.d_z)))
    tape0 = grad.Tape()
    dirs0 = sample_uniform_sphere(init_rng, cfg.n_projections, data.dim)
    loss0 = _sliced_loss_node(tape0, x0, tape0.const(y0), dirs0, cfg.p, cfg.defining)
    metric0 = evaluate(0) if cfg.eval_every > 0 else float("nan")
    log.records.append(TrainRecord(0, 0.0, _check_finite(float(loss0.value), "loss"), metric0))

    start = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        x_batch = data.points[next(batches)]
        z = noise_rng.normal((cfg.batch_size, gen.d_z))
        y_values = gen.forward(z)
        tape = grad.Tape()
        y_node, pnodes = gen.forward_tape(tape, z)
        loss = engine.loss_node(tape, x_batch, y_values, y_node)
        grads = grad.backward(loss)
        opt.step(gen.params(), {name: grads[node] for name, node in pnodes.items()})
        wall_ms = (time.perf_counter() - start) * 1000.0
        metric = evaluate(it) if due(it) else float("nan")
        log.records.append(
            TrainRecord(it, wall_ms, _check_finite(float(loss.value), "loss"), metric)
        )
    return log


def train_jci(
    data: EmpiricalMeasure,
    gen: Generator,
    enc: Encoder,
    cfg: TrainConfig,
    rng: RngStream | None = None,
    holdout: EmpiricalMeasure | None = None,
) -> TrainLog:
    """Joint contrastive fit: match (z, T(z)) against (enc(x), x).

    Both joints concatenate latent coordinates (scaled by cfg.latent_scale)
    before observed ones; the sliced distance acts in R^{d_z + d_x} and both
    parameter sets update from the same loss. eval_metric is the exact W_p
    between generated and held-out observed marginals.
    """
    if cfg.batch_size > data.k:
        raise ConfigError(f"batch size {cfg.batch_size} exceeds data size {data.k}")
    if enc.d_in != data.dim or enc.d_out != gen.d_z:
        raise ConfigError("encoder shape must map data dim to the generator latent dim")
    rng = rng if rng is not None else RngStream(cfg.seed)
    batch_rng, noise_rng, dir_rng, eval_rng = (rng.child(i) for i in range(4))
    holdout = holdout if holdout is not None else data
    d_joint = gen.d_z + data.dim
    engine = _DirectionEngine(cfg, d_joint, dir_rng)
    opt = grad.Adam(cfg.lr, cfg.betas)
    batches = _batch_indices(batch_rng, data.k, cfg.batch_size)
    log = TrainLog()
    scale = float(cfg.latent_scale)

    def joints(tape, x_batch, z_prior):
        y_node, gen_nodes = gen.forward_tape(tape, z_prior)
        gen_joint = grad.concat_cols(tape.const(scale * z_prior), y_node)
        ze_node, enc_nodes = enc.forward_tape(tape, x_batch)
        inf_joint = grad.concat_cols(grad.scalar_mul(ze_node, scale), tape.const(x_batch))
        pnodes = {f"gen_{k}": v for k, v in gen_nodes.items()}
        pnodes.update({f"enc_{k}": v for k, v in enc_nodes.items()})
        return gen_joint, inf_joint, pnodes

    def joint_values(x_batch, z_prior):
        gj = np.hstack([scale * z_prior, gen.forward(z_prior)])
        ij = np.hstack([scale * enc.forward(x_batch), x_batch])
        return gj, ij

    def merged_params():
        out = {f"gen_{k}": v for k, v in gen.params().items()}
        out.update({f"enc_{k}": v for k, v in enc.params().items()})
        return out

    def evaluate(it: int) -> float:
        return evaluate_model(gen, holdout, cfg.eval_size, cfg.p, eval_rng.child(it))

    metric0 = evaluate(0) if cfg.eval_every > 0 else float("nan")
    x0 = data.points[next(batches)]
    z0 = noise_rng.normal((cfg.batch_size, gen.d_z))
    gj0, ij0 = joint_values(x0, z0)
    dirs0 = sample_uniform_sphere(dir_rng.child(0), cfg.n_projections, d_joint)
    tape0 = grad.Tape()
    loss0 = _sliced_loss_node(tape0, gj0, tape0.const(ij0), dirs0, cfg.p, cfg.defining)
    log.records.append(TrainRecord(0, 0.0, _check_finite(float(loss0.value), "loss"), metric0))

    start = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        x_batch = data.points[next(batches)]
        z_prior = noise_rng.normal((cfg.batch_size, gen.d_z))
        gj_values, ij_values = joint_values(x_batch, z_prior)
        tape = grad.Tape()
        gen_joint, inf_joint, pnodes = joints(tape, x_batch, z_prior)
        if cfg.distance in ("dsw", "dgsw"):
            for _ in range(cfg.ascent_steps):
                sphere_map_ascent_step(
                    engine.sphere_map, ij_values, gj_values, engine.dsw_cfg,
                    engine.rng, engine.map_opt,
                )
            thetas = sample_uniform_sphere(engine.rng, cfg.n_projections, d_joint)
            dirs = engine.sphere_map.forward(thetas)
        else:
            dirs = sample_uniform_sphere(engine.rng, cfg.n_projections, d_joint)
        px = _project_node(tape.const(dirs), inf_joint, cfg.defining)
        py = _project_node(tape.const(dirs), gen_joint, cfg.defining)
        loss = grad.root_p(_matched_cost_node(px, py, cfg.p), cfg.p)
        grads = grad.backward(loss)
        opt.step(merged_params(), {name: grads[node] for name, node in pnodes.items()})
        wall_ms = (time.perf_counter() - start) * 1000.0
        metric = evaluate(it) if (cfg.eval_every > 0 and (it % cfg.eval_every == 0 or it == cfg.iterations)) else float("nan")
        log.records.append(
            TrainRecord(it, wall_ms, _check_finite(float(loss.value), "loss"), metric)
        )
    return log
