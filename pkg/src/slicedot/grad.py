"""Reverse-mode automatic differentiation over float64 arrays.

A Tape records one forward evaluation as a flat node list; backward() walks
it once in reverse. Subgradient conventions: d|x|/dx is 0 at x = 0, sorting
permutations are frozen at forward time, leaky_relu takes its negative slope
at the kink. Tapes are single-threaded and never reused across optimization
steps.
"""

from __future__ import annotations

import numpy as np

from .core import DomainError, NonScalarRoot, ShapeError

_NORM_FLOOR = 1e-12


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []
        self.params: list[Node] = []

    def param(self, value, name: str | None = None) -> "Node":
        node = Node(self, value, (), None)
        node.param = True
        node.needs_grad = True
        node.name = name
        self.params.append(node)
        return node

    def const(self, value) -> "Node":
        return Node(self, value, (), None)


class Node:
    __slots__ = ("tape", "value", "parents", "vjp", "param", "name", "idx", "needs_grad")

    def __init__(self, tape: Tape, value, parents=(), vjp=None):
        self.tape = tape
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjp = vjp
        self.param = False
        self.name = None
        self.needs_grad = any(p.needs_grad for p in parents)
        self.idx = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape


def _tape_of(*args) -> Tape:
    for a in args:
        if isinstance(a, Node):
            return a.tape
    raise TypeError("at least one argument must be a tape node")


def _as_node(tape: Tape, x) -> "Node":
    if isinstance(x, Node):
        if x.tape is not tape:
            raise ValueError("nodes from different tapes cannot be combined")
        return x
    return tape.const(x)


def _binary(a, b):
    tape = _tape_of(a, b)
    return tape, _as_node(tape, a), _as_node(tape, b)


def backward(root: Node) -> dict:
    """Adjoints of every parameter leaf with respect to a scalar root."""
    if root.value.size != 1:
        raise NonScalarRoot(f"backward needs a scalar root, got shape {root.shape}")
    nodes = root.tape.nodes
    adjoints: list = [None] * len(nodes)
    owned: list = [False] * len(nodes)
    adjoints[root.idx] = np.ones_like(root.value)
    owned[root.idx] = True
    for i in range(root.idx, -1, -1):
        grad = adjoints[i]
        if grad is None:
            continue
        node = nodes[i]
        if node.vjp is None:
            continue
        for parent, contrib in zip(node.parents, node.vjp(grad)):
            if contrib is None or not parent.needs_grad:
                continue
            if contrib.shape != parent.value.shape:
                raise ShapeError(
                    f"adjoint shape {contrib.shape} != value shape {parent.value.shape}"
                )
            j = parent.idx
            if adjoints[j] is None:
                # first touch borrows the contribution; copy before mutating
                adjoints[j] = contrib
                owned[j] = False
            else:
                if not owned[j]:
                    adjoints[j] = adjoints[j].copy()
                    owned[j] = True
                np.add(adjoints[j], contrib, out=adjoints[j])
    out = {}
    for p in root.tape.params:
        g = adjoints[p.idx]
        out[p] = g if g is not None else np.zeros_like(p.value)
    return out


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def _same_shape(a: Node, b: Node):
    if a.value.shape != b.value.shape:
        raise ShapeError(f"shape mismatch: {a.value.shape} vs {b.value.shape}")


def add(a, b) -> Node:
    tape, a, b = _binary(a, b)
    _same_shape(a, b)
    return Node(tape, a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Node:
    tape, a, b = _binary(a, b)
    _same_shape(a, b)
    return Node(tape, a.value - b.value, (a, b), lambda g: (g, -g))


def scalar_mul(x: Node, c: float) -> Node:
    c = float(c)
    return Node(x.tape, x.value * c, (x,), lambda g: (g * c,))


def matmul(a, b) -> Node:
    tape, a, b = _binary(a, b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul shapes {a.value.shape} x {b.value.shape}")
    av, bv = a.value, b.value
    need_a, need_b = a.needs_grad, b.needs_grad

    def vjp(g):
        return (g @ bv.T if need_a else None, av.T @ g if need_b else None)

    return Node(tape, av @ bv, (a, b), vjp)


def transpose(x: Node) -> Node:
    if x.value.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    return Node(x.tape, x.value.T.copy(), (x,), lambda g: (g.T,))


def abs(x: Node) -> Node:  # noqa: A001 - mirrors the primitive's name
    sign = np.sign(x.value)
    return Node(x.tape, np.abs(x.value), (x,), lambda g: (g * sign,))


def pow_p(x: Node, p: float) -> Node:
    """|x|^p elementwise, p >= 1; non-integer p never touches complex values."""
    p = float(p)
    if p < 1:
        raise DomainError(f"pow_p needs p >= 1, got {p}")
    if p == 2.0:  # the default order; avoids float-power cost on the hot path
        value = x.value * x.value
        local = 2.0 * x.value
    elif p == 1.0:
        value = np.abs(x.value)
        local = np.sign(x.value)
    else:
        ax = np.abs(x.value)
        value = ax**p
        local = p * ax ** (p - 1.0) * np.sign(x.value)
    return Node(x.tape, value, (x,), lambda g: (g * local,))


def root_p(x: Node, p: float) -> Node:
    """Scalar x^(1/p) for x >= 0; gradient clamps to 0 at x = 0."""
    p = float(p)
    if x.value.size != 1:
        raise ShapeError("root_p expects a scalar")
    if p < 1:
        raise DomainError(f"root_p needs p >= 1, got {p}")
    v = float(x.value)
    if v < 0:
        raise DomainError("root_p needs a nonnegative argument")
    local = (1.0 / p) * v ** (1.0 / p - 1.0) if v > 0 else 0.0
    return Node(x.tape, np.asarray(v ** (1.0 / p)), (x,), lambda g: (g * local,))


def mean(x: Node) -> Node:
    n = x.value.size
    shape = x.value.shape

    def vjp(g):
        # read-only broadcast; backward copies borrowed buffers before adding
        return (np.broadcast_to(np.asarray(float(g) / n), shape),)

    return Node(x.tape, np.asarray(x.value.mean()), (x,), vjp)


def sum(x: Node) -> Node:  # noqa: A001 - mirrors the primitive's name
    shape = x.value.shape

    def vjp(g):
        return (np.broadcast_to(np.asarray(float(g)), shape),)

    return Node(x.tape, np.asarray(x.value.sum()), (x,), vjp)


def inner(a, b) -> Node:
    tape, a, b = _binary(a, b)
    _same_shape(a, b)
    av, bv = a.value, b.value
    return Node(tape, np.asarray(np.vdot(av, bv)), (a, b), lambda g: (float(g) * bv, float(g) * av))


def gather_rows(x: Node, index_list) -> Node:
    """x[idx] along the first axis; backward scatter-adds into the sources."""
    idx = np.asarray(index_list, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(x.value)
        np.add.at(out, idx, g)
        return (out,)

    return Node(x.tape, x.value[idx], (x,), vjp)


def permute_rows(x: Node, perm) -> Node:
    """Per-row reordering of a matrix: out[i, j] = x[i, perm[i, j]].

    Each row of perm must be a permutation (the frozen sort order of the
    forward pass), which makes the backward pass the inverse permutation.
    """
    perm = np.asarray(perm, dtype=np.intp)
    if x.value.ndim != 2 or perm.shape != x.value.shape:
        raise ShapeError("permute_rows expects a matrix and a same-shape permutation")

    def vjp(g):
        out = np.empty_like(g)
        np.put_along_axis(out, perm, g, axis=1)
        return (out,)

    return Node(x.tape, np.take_along_axis(x.value, perm, axis=1), (x,), vjp)


def relu(x: Node) -> Node:
    mask = (x.value > 0).astype(np.float64)
    return Node(x.tape, x.value * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x: Node, slope: float = 0.2) -> Node:
    local = np.where(x.value > 0, 1.0, float(slope))
    return Node(x.tape, np.where(x.value > 0, x.value, x.value * slope), (x,), lambda g: (g * local,))


def tanh(x: Node) -> Node:
    t = np.tanh(x.value)
    return Node(x.tape, t, (x,), lambda g: (g * (1.0 - t * t),))


def sqrt(x: Node) -> Node:
    if np.any(x.value < 0):
        raise DomainError("sqrt of a negative value")
    s = np.sqrt(x.value)
    safe = np.maximum(s, _NORM_FLOOR)
    return Node(x.tape, s, (x,), lambda g: (g * 0.5 / safe,))


def norm_rows(x: Node) -> Node:
    if x.value.ndim != 2:
        raise ShapeError("norm_rows expects a matrix")
    norms = np.sqrt((x.value * x.value).sum(axis=1))
    if norms.min(initial=np.inf) < _NORM_FLOOR:
        raise DomainError("norm_rows: row with near-zero norm")
    return Node(x.tape, norms, (x,), lambda g: (g[:, None] * x.value / norms[:, None],))


def affine(W, b, x) -> Node:
    """Rows of x through the map v -> W v + b."""
    tape = _tape_of(W, b, x)
    W, b, x = _as_node(tape, W), _as_node(tape, b), _as_node(tape, x)
    if W.value.ndim != 2 or x.value.ndim != 2 or b.value.ndim != 1:
        raise ShapeError("affine expects W (out,in), b (out,), x (n,in)")
    if x.value.shape[1] != W.value.shape[1] or b.value.shape[0] != W.value.shape[0]:
        raise ShapeError(
            f"affine shapes W{W.value.shape} b{b.value.shape} x{x.value.shape}"
        )
    Wv, xv = W.value, x.value
    need_w, need_b, need_x = W.needs_grad, b.needs_grad, x.needs_grad

    def vjp(g):
        return (
            g.T @ xv if need_w else None,
            g.sum(axis=0) if need_b else None,
            g @ Wv if need_x else None,
        )

    return Node(tape, xv @ Wv.T + b.value, (W, b, x), vjp)


def l2_normalize_rows(x: Node) -> Node:
    if x.value.ndim != 2:
        raise ShapeError("l2_normalize_rows expects a matrix")
    norms = np.sqrt((x.value * x.value).sum(axis=1))
    if norms.min(initial=np.inf) < _NORM_FLOOR:
        raise DomainError("l2_normalize_rows: row with norm below 1e-12")
    u = x.value / norms[:, None]

    def vjp(g):
        dots = (g * u).sum(axis=1, keepdims=True)
        return ((g - dots * u) / norms[:, None],)

    return Node(x.tape, u, (x,), vjp)


def linear_project(dirs, points) -> Node:
    """out[i, j] = <points[j], dirs[i]>; differentiable in both arguments."""
    tape = _tape_of(dirs, points)
    dirs, points = _as_node(tape, dirs), _as_node(tape, points)
    if dirs.value.shape[1] != points.value.shape[1]:
        raise ShapeError(
            f"projection dims differ: dirs {dirs.value.shape} points {points.value.shape}"
        )
    dv, pv = dirs.value, points.value
    need_d, need_p = dirs.needs_grad, points.needs_grad

    def vjp(g):
        return (g @ pv if need_d else None, g.T @ dv if need_p else None)

    return Node(tape, dv @ pv.T, (dirs, points), vjp)


def circular_project(dirs, points, radius: float) -> Node:
    """out[i, j] = ||points[j] - radius * dirs[i]||, differentiable in both."""
    tape = _tape_of(dirs, points)
    dirs, points = _as_node(tape, dirs), _as_node(tape, points)
    if dirs.value.shape[1] != points.value.shape[1]:
        raise ShapeError(
            f"projection dims differ: dirs {dirs.value.shape} points {points.value.shape}"
        )
    r = float(radius)
    diff = points.value[None, :, :] - r * dirs.value[:, None, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    if dist.min(initial=np.inf) < _NORM_FLOOR:
        raise DomainError("circular_project: point coincides with a scaled direction")
    need_d, need_p = dirs.needs_grad, points.needs_grad

    def vjp(g):
        scaled = g / dist
        grad_dirs = -r * np.einsum("ij,ijd->id", scaled, diff) if need_d else None
        grad_points = np.einsum("ij,ijd->jd", scaled, diff) if need_p else None
        return (grad_dirs, grad_points)

    return Node(tape, dist, (dirs, points), vjp)


def concat_cols(a, b) -> Node:
    tape, a, b = _binary(a, b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[0] != b.value.shape[0]:
        raise ShapeError("concat_cols expects matrices with equal row counts")
    split = a.value.shape[1]
    return Node(
        tape,
        np.hstack([a.value, b.value]),
        (a, b),
        lambda g: (g[:, :split], g[:, split:]),
    )


def flatten(x: Node) -> Node:
    shape = x.value.shape
    return Node(x.tape, x.value.ravel().copy(), (x,), lambda g: (g.reshape(shape),))


# ---------------------------------------------------------------------------
# Optimizer and finite differences
# ---------------------------------------------------------------------------


class Adam:
    """Adaptive-moment update, state keyed by parameter name.

    Updates arrays in place so that callers can hold long-lived parameter
    storage across tapes.
    """

    def __init__(self, lr: float = 5e-4, betas=(0.5, 0.999), eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self._m: dict = {}
        self._v: dict = {}
        self._t: dict = {}
        self._scratch: dict = {}

    def step(self, params: dict, grads: dict) -> None:
        for name, value in params.items():
            g = grads[name]
            if name not in self._m:
                self._m[name] = np.zeros_like(value)
                self._v[name] = np.zeros_like(value)
                self._scratch[name] = (np.empty_like(value), np.empty_like(value))
                self._t[name] = 0
            self._t[name] += 1
            t = self._t[name]
            m, v = self._m[name], self._v[name]
            s1, s2 = self._scratch[name]
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=s1)
            m += s1
            v *= self.beta2
            np.multiply(g, g, out=s1)
            s1 *= 1.0 - self.beta2
            v += s1
            np.multiply(m, 1.0 / (1.0 - self.beta1**t), out=s1)  # bias-corrected moment
            np.multiply(v, 1.0 / (1.0 - self.beta2**t), out=s2)
            np.sqrt(s2, out=s2)
            s2 += self.eps
            s1 /= s2
            s1 *= self.lr
            value -= s1


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function over every entry of x."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        fp = float(f(x))
        flat[i] = keep - h
        fm = float(f(x))
        flat[i] = keep
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def gradient_mismatch(analytic, numeric, guard: float = 1e-8, abs_tol: float = 1e-7) -> float:
    """Worst relative error between two gradients.

    Entries where both are below `guard` are compared with `abs_tol` instead
    of a relative test; returns inf when such an entry disagrees.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.shape != n.shape:
        raise ShapeError("gradient arrays differ in size")
    scale = np.maximum(np.abs(a), np.abs(n))
    small = scale < guard
    worst = 0.0
    if np.any(small) and np.max(np.abs(a[small] - n[small]), initial=0.0) > abs_tol:
        return float("inf")
    big = ~small
    if np.any(big):
        worst = float(np.max(np.abs(a[big] - n[big]) / scale[big]))
    return worst
