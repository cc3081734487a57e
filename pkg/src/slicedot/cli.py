"""Command-line entry points: distance computation, the Gaussian direction
demo, the regularization sweep, desk-scale training, and the scaling bench.

Every command is deterministic given --seed; reruns produce bit-identical
output files except for wall-clock columns. Exit codes: 0 success, 2 on
parse or configuration errors, 3 on numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import datasets, grad
from .core import (
    ConfigError,
    DegenerateMap,
    DomainError,
    EmpiricalMeasure,
    NonScalarRoot,
    NumericError,
    ParseError,
    RngStream,
    ShapeError,
    SizeError,
    load_measure,
)
from .distances import (
    DswConfig,
    SlicedConfig,
    dgsw,
    dsw,
    gsw,
    max_gsw_nn,
    max_sw,
    sliced_from_dirs,
    sphere_map_ascent_step,
    sw,
)
from .mede import Encoder, Generator, TrainConfig, train_jci, train_mede
from .slicing import LINEAR, SphereMap, circular, offdiag_coherence, sample_uniform_sphere
from .transport import exact_wasserstein

_USAGE_ERRORS = (ParseError, ConfigError, DomainError, ShapeError, SizeError, FileNotFoundError)
_NUMERIC_ERRORS = (DegenerateMap, NumericError, NonScalarRoot)


def _write_svg_scatter(path: str, xy: np.ndarray, title: str) -> None:
    """Standalone unit-circle scatter; no plotting dependency."""
    size, margin = 480, 40
    half = size / 2

    def to_px(v):
        return half + v * (half - margin) / 1.3

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<circle cx="{half}" cy="{half}" r="{(half - margin) / 1.3:.2f}" '
        'fill="none" stroke="#cccccc" stroke-width="1"/>',
        f'<text x="{margin}" y="{margin / 2 + 6}" font-family="monospace" '
        f'font-size="14">{title}</text>',
    ]
    for x, y in np.asarray(xy):
        lines.append(
            f'<circle cx="{to_px(x):.2f}" cy="{to_px(-y):.2f}" r="2.5" '
            'fill="#1f6fb4" fill-opacity="0.45"/>'
        )
    lines.append("</svg>")
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(str(v) for v in row) + "\n")


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# dist
# ---------------------------------------------------------------------------


def cmd_dist(args) -> int:
    mu = load_measure(args.file_a)
    nu = load_measure(args.file_b)
    start = time.perf_counter()
    extras = {}
    steps = args.steps
    if args.distance == "exact":
        value, _ = exact_wasserstein(mu, nu, args.p)
    elif args.distance == "sw":
        value = sw(mu, nu, SlicedConfig(args.p, args.n, LINEAR, args.seed))
    elif args.distance == "gsw":
        value = gsw(mu, nu, SlicedConfig(args.p, args.n, circular(args.r), args.seed))
    elif args.distance == "maxsw":
        value, theta = max_sw(mu, nu, args.p, iters=steps if steps is not None else 50,
                              lr=args.lr, seed=args.seed)
        extras["argmax_direction"] = [float(v) for v in theta]
    elif args.distance == "maxgswnn":
        value = max_gsw_nn(mu, nu, args.p, iters=steps if steps is not None else 50,
                           lr=args.lr, seed=args.seed)
    else:
        defining = LINEAR if args.distance == "dsw" else circular(args.r)
        cfg = DswConfig(
            base=SlicedConfig(args.p, args.n, defining, args.seed),
            lambda_c=args.lambda_c,
            ascent_steps=steps if steps is not None else 1,
            ascent_lr=args.lr,
        )
        fit = dsw if args.distance == "dsw" else dgsw
        result = fit(mu, nu, cfg)
        value = result.sliced_value
        extras["reg_estimate"] = result.reg_estimate
        extras["dual_value_without_constant"] = result.dual_value_without_constant
        extras["sliced_stderr"] = result.sliced_stderr
    wall_ms = (time.perf_counter() - start) * 1000.0
    payload = {
        "distance": args.distance,
        "value": float(value),
        "n_projections": args.n,
        "seed": args.seed,
        "wall_ms": round(wall_ms, 3),
    }
    payload.update(extras)
    print(json.dumps(payload))
    return 0


# ---------------------------------------------------------------------------
# gauss-demo
# ---------------------------------------------------------------------------


def fit_demo_map(
    lambda_c: float,
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    rng: RngStream,
    hidden=(64,),
    steps: int = 2500,
    n_projections: int = 96,
    lr: float = 1e-2,
    minibatch: int = 512,
) -> SphereMap:
    """Fit the pushforward map on minibatches of a fixed measure pair.

    The demo map carries one hidden layer: strongly regularized slice
    distributions put mass on several orthogonal directions at once, which a
    single affine layer cannot express.
    """
    smap = SphereMap.near_identity(mu.dim, rng.child(1), hidden=hidden)
    opt = grad.Adam(lr, (0.5, 0.999))
    cfg = DswConfig(
        base=SlicedConfig(2.0, n_projections, LINEAR, 0),
        lambda_c=lambda_c,
        ascent_lr=lr,
    )
    mb_rng, dir_rng = rng.child(2), rng.child(3)
    m = min(minibatch, mu.k, nu.k)
    for _ in range(steps):
        ia = mb_rng.integers(0, mu.k, size=m)
        ib = mb_rng.integers(0, nu.k, size=m)
        sphere_map_ascent_step(smap, mu.points[ia], nu.points[ib], cfg, dir_rng, opt)
    return smap


def cmd_gauss_demo(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    rng = RngStream(args.seed)
    mu, nu = datasets.gauss2d_pair(rng.child(0), args.samples)
    summary = []
    for i, lam in enumerate(args.lambdas):
        # heavy regularization leaves only a faint data signal to rotate the
        # fitted cross onto the eigen-axes, so give those runs extra steps
        steps = args.steps if lam < 100 else 3 * args.steps
        smap = fit_demo_map(lam, mu, nu, rng.child(100 + i), steps=steps, lr=args.lr)
        thetas = sample_uniform_sphere(rng.child(200 + i), 4000, 2)
        dirs = smap.forward(thetas)
        reg = offdiag_coherence(dirs)
        sliced = sliced_from_dirs(mu, nu, dirs, 2.0, LINEAR)
        tag = f"{lam:g}"
        _write_csv(
            os.path.join(args.out, f"directions_lambda{tag}.csv"),
            ["x", "y"],
            ([_fmt(x), _fmt(y)] for x, y in dirs[:1000]),
        )
        _write_svg_scatter(
            os.path.join(args.out, f"directions_lambda{tag}.svg"),
            dirs[:1000],
            f"fitted slice directions, lambda_c={tag}",
        )
        summary.append([tag, _fmt(reg), _fmt(sliced)])
    _write_csv(
        os.path.join(args.out, "summary.csv"),
        ["lambda_c", "reg_estimate", "sliced_value"],
        summary,
    )
    return 0


# ---------------------------------------------------------------------------
# lambda-sweep
# ---------------------------------------------------------------------------


def sweep_statistic(smap: SphereMap, rng: RngStream, n_dirs: int = 10, replicates: int = 20) -> float:
    """Mean over replicate batches of the off-diagonal |cos| among n_dirs
    fitted directions; replicates tame the noise of a single 10-direction draw."""
    vals = []
    for i in range(replicates):
        thetas = sample_uniform_sphere(rng.child(i), n_dirs, smap.dim)
        vals.append(offdiag_coherence(smap.forward(thetas)))
    return float(np.mean(vals))


def cmd_lambda_sweep(args) -> int:
    rng = RngStream(args.seed)
    mu, nu = datasets.gauss_hd_pair(rng.child(0), args.samples, args.d)
    rows = []
    for i, lam in enumerate(args.lambdas):
        smap = SphereMap.near_identity(args.d, rng.child(10 + i))
        opt = grad.Adam(args.lr, (0.5, 0.999))
        cfg = DswConfig(
            base=SlicedConfig(2.0, args.n, LINEAR, 0),
            lambda_c=lam,
            ascent_lr=args.lr,
        )
        dir_rng = rng.child(100 + i)
        for _ in range(args.steps):
            sphere_map_ascent_step(smap, mu.points, nu.points, cfg, dir_rng, opt)
        stat = sweep_statistic(smap, rng.child(200 + i), n_dirs=args.n)
        rows.append([f"{lam:g}", _fmt(stat)])
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        _write_csv(args.out, ["lambda_c", "coherence"], rows)
    for lam, stat in rows:
        print(f"lambda_c={lam} coherence={stat}")
    return 0


# ---------------------------------------------------------------------------
# mede / jci
# ---------------------------------------------------------------------------


def _train_config(args, defining) -> TrainConfig:
    return TrainConfig(
        distance=args.distance,
        p=args.p,
        n_projections=args.n,
        defining=defining,
        lambda_c=args.lambda_c,
        ascent_steps=args.steps if args.steps is not None else 1,
        ascent_lr=args.ascent_lr,
        batch_size=args.batch,
        iterations=args.iters,
        lr=args.lr,
        seed=args.seed,
        eval_every=args.eval_every,
        eval_size=args.eval_size,
    )


def _dataset_pair(args, rng):
    data = datasets.make_dataset(args.dataset, rng.child(0), args.data_size, args.d)
    holdout = datasets.make_dataset(args.dataset, rng.child(1), args.eval_size, args.d)
    return data, holdout


def cmd_mede(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.distance in ("gsw", "dgsw"):
        defining = circular(args.r)
    else:
        defining = LINEAR
    rng = RngStream(args.seed)
    data, holdout = _dataset_pair(args, rng)
    gen = Generator.create((args.dz, 64, 64, 64, data.dim), rng.child(2), out_scale=0.0)
    cfg = _train_config(args, defining)
    gen.save(os.path.join(args.out, "model_init.swt"))
    log = train_mede(data, gen, cfg, rng.child(3), holdout=holdout)
    gen.save(os.path.join(args.out, "model_final.swt"))
    log.write_csv(os.path.join(args.out, "log.csv"))
    samples = gen.forward(rng.child(4).normal((1024, gen.d_z)))
    _write_csv(
        os.path.join(args.out, "samples.csv"),
        [f"x{j}" for j in range(samples.shape[1])],
        ([_fmt(v) for v in row] for row in samples),
    )
    return 0


def cmd_jci(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    defining = circular(args.r) if args.distance in ("gsw", "dgsw") else LINEAR
    rng = RngStream(args.seed)
    data, holdout = _dataset_pair(args, rng)
    gen = Generator.create((args.dz, 64, 64, 64, data.dim), rng.child(2), out_scale=0.0)
    enc = Encoder.create((data.dim, 64, 64, args.dz), rng.child(5))
    cfg = _train_config(args, defining)
    gen.save(os.path.join(args.out, "model_init.swt"))
    log = train_jci(data, gen, enc, cfg, rng.child(3), holdout=holdout)
    gen.save(os.path.join(args.out, "model_final.swt"))
    enc.save(os.path.join(args.out, "encoder_final.swt"))
    log.write_csv(os.path.join(args.out, "log.csv"))
    samples = gen.forward(rng.child(4).normal((1024, gen.d_z)))
    _write_csv(
        os.path.join(args.out, "samples.csv"),
        [f"x{j}" for j in range(samples.shape[1])],
        ([_fmt(v) for v in row] for row in samples),
    )
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def _time_distance(name: str, k: int, n_proj: int, d: int, p: float, seed: int, reps: int) -> float:
    rng = RngStream(seed)
    mu = EmpiricalMeasure.uniform(rng.normal((k, d)))
    nu = EmpiricalMeasure.uniform(rng.normal((k, d)) * 1.5 + 0.3)
    best = np.inf
    for rep in range(reps):
        if name == "sw":
            start = time.perf_counter()
            sw(mu, nu, SlicedConfig(p, n_proj, LINEAR, seed + rep))
        elif name == "gsw":
            start = time.perf_counter()
            gsw(mu, nu, SlicedConfig(p, n_proj, circular(), seed + rep))
        elif name == "dsw":
            cfg = DswConfig(base=SlicedConfig(p, n_proj, LINEAR, seed + rep), ascent_steps=1)
            smap = SphereMap.near_identity(d, rng.child(rep))
            start = time.perf_counter()
            dsw(mu, nu, cfg, smap)
        else:
            raise ConfigError(f"bench does not time {name!r}")
        best = min(best, time.perf_counter() - start)
    return best * 1000.0


def cmd_bench(args) -> int:
    rows = []
    for name in args.distances:
        for k in args.sizes:
            wall = _time_distance(name, k, args.n, args.d, args.p, args.seed, args.reps)
            rows.append([name, k, args.n, f"{wall:.3f}"])
    header = ["distance", "k", "n_projections", "wall_ms"]
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        _write_csv(args.out, header, rows)
    print(",".join(header))
    for row in rows:
        print(",".join(str(v) for v in row))
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _str_list(text: str) -> list[str]:
    return [tok.strip() for tok in text.split(",") if tok.strip()]


def _add_common(sub, with_out_dir: bool = False):
    sub.add_argument("--n", type=int, default=100, help="number of projections")
    sub.add_argument("--p", type=float, default=2.0, help="transport order")
    sub.add_argument("--lambda", dest="lambda_c", type=float, default=1.0,
                     help="regularization weight for dsw/dgsw")
    sub.add_argument("--steps", type=int, default=None,
                     help="ascent steps (dsw/dgsw) or ascent iterations (maxsw)")
    sub.add_argument("--lr", type=float, default=5e-4, help="ascent learning rate")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--r", type=float, default=1000.0, help="circular projection radius")
    if with_out_dir:
        sub.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slicedot",
        description="Sliced optimal-transport distances and desk-scale experiments",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_dist = subs.add_parser("dist", help="distance between two point-cloud files")
    p_dist.add_argument("file_a")
    p_dist.add_argument("file_b")
    p_dist.add_argument("--distance", required=True,
                        choices=["sw", "gsw", "maxsw", "maxgswnn", "dsw", "dgsw", "exact"])
    _add_common(p_dist)
    p_dist.set_defaults(func=cmd_dist)

    p_demo = subs.add_parser("gauss-demo", help="fitted slice distributions on the Gaussian pair")
    p_demo.add_argument("--lambdas", type=_float_list, default=[0.0, 50.0, 1000.0])
    p_demo.add_argument("--samples", type=int, default=10_000)
    p_demo.add_argument("--steps", type=int, default=2500)
    p_demo.add_argument("--lr", type=float, default=1e-2)
    p_demo.add_argument("--seed", type=int, default=0)
    p_demo.add_argument("--out", required=True)
    p_demo.set_defaults(func=cmd_gauss_demo)

    p_sweep = subs.add_parser("lambda-sweep", help="direction coherence versus lambda_c")
    p_sweep.add_argument("--d", type=int, default=784)
    p_sweep.add_argument("--lambdas", type=_float_list, default=[0.0, 1.0, 10.0, 100.0, 1000.0])
    p_sweep.add_argument("--samples", type=int, default=512)
    p_sweep.add_argument("--n", type=int, default=10)
    p_sweep.add_argument("--steps", type=int, default=800)
    p_sweep.add_argument("--lr", type=float, default=2e-2)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--out", default="")
    p_sweep.set_defaults(func=cmd_lambda_sweep)

    for name, fn in (("mede", cmd_mede), ("jci", cmd_jci)):
        p_train = subs.add_parser(name, help=f"{name} training on a synthetic dataset")
        p_train.add_argument("--dataset", choices=["ring8", "gauss2d", "gaussHD"], default="ring8")
        p_train.add_argument("--d", type=int, default=2, help="dimension for gaussHD")
        p_train.add_argument("--dz", type=int, default=2, help="latent dimension")
        p_train.add_argument("--distance", default="dsw",
                             choices=["sw", "gsw", "maxsw", "maxgswnn", "dsw", "dgsw"])
        p_train.add_argument("--iters", type=int, default=3000)
        p_train.add_argument("--batch", type=int, default=512)
        p_train.add_argument("--data-size", type=int, default=8192)
        p_train.add_argument("--eval-every", type=int, default=500)
        p_train.add_argument("--eval-size", type=int, default=512)
        p_train.add_argument("--gen-lr", dest="lr", type=float, default=5e-4)
        p_train.add_argument("--ascent-lr", dest="ascent_lr", type=float, default=5e-4)
        p_train.add_argument("--n", type=int, default=10)
        p_train.add_argument("--p", type=float, default=2.0)
        p_train.add_argument("--lambda", dest="lambda_c", type=float, default=10.0)
        p_train.add_argument("--steps", type=int, default=None)
        p_train.add_argument("--seed", type=int, default=0)
        p_train.add_argument("--r", type=float, default=1000.0)
        p_train.add_argument("--out", required=True)
        p_train.set_defaults(func=fn)

    p_bench = subs.add_parser("bench", help="wall time versus minibatch size")
    p_bench.add_argument("--sizes", type=_int_list, default=[512, 1024, 2048, 4096, 8192])
    p_bench.add_argument("--distances", type=_str_list, default=["sw", "dsw"])
    p_bench.add_argument("--n", type=int, default=100)
    p_bench.add_argument("--d", type=int, default=16)
    p_bench.add_argument("--p", type=float, default=2.0)
    p_bench.add_argument("--reps", type=int, default=3)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default="")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3
    except _USAGE_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
