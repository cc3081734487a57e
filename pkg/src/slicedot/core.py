"""Dense float64 tensors, deterministic RNG streams, empirical measures, and file I/O.

Everything downstream carries values as C-contiguous float64 numpy arrays.
Measures and arrays are immutable after construction; random streams are
counter-based (Philox) so that the same (seed, stream_id) reproduces the
same sequence on any platform and child streams are independent of
scheduling order.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np


class SlicedotError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SlicedotError):
    """Malformed input file (bad magic, truncated payload, non-numeric row)."""


class DomainError(SlicedotError):
    """Value outside the mathematical domain of an operation."""


class ShapeError(SlicedotError):
    """Incompatible array shapes."""


class SizeError(SlicedotError):
    """Instance exceeds an exact-solve budget."""


class ConfigError(SlicedotError):
    """Invalid configuration value."""


class NonScalarRoot(SlicedotError):
    """backward() called on a non-scalar node."""


class DegenerateMap(SlicedotError):
    """Sphere map produced a vector too short to normalize."""


class NumericError(SlicedotError):
    """Non-finite value escaped a numeric routine."""


def as_tensor(data, shape=None) -> np.ndarray:
    """Validate external input as a finite, C-contiguous float64 array."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    if arr.size and not np.all(np.isfinite(arr)):
        raise DomainError("tensor contains NaN or Inf")
    return arr


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Identical keys give bitwise-identical sequences; distinct stream ids give
    statistically independent sequences, so parallel work derives children by
    id instead of sharing one stream.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RngStream":
        """Derive an independent stream; deterministic in (self, index)."""
        mixed = _splitmix64(self.stream_id ^ _splitmix64(int(index) & _MASK64))
        return RngStream(self.seed, mixed)

    def normal(self, shape=()) -> np.ndarray:
        return self._gen.standard_normal(shape, dtype=np.float64)

    def uniform(self, low=0.0, high=1.0, shape=()) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def sample_standard_normal(rng: RngStream, shape) -> np.ndarray:
    """I.i.d. N(0,1) entries, deterministic in (seed, stream_id, call index)."""
    return rng.normal(shape)


def max_threads() -> int:
    """Worker-thread cap for projection loops, from SLICEDOT_THREADS (default 1)."""
    raw = os.environ.get("SLICEDOT_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


# ---------------------------------------------------------------------------
# Empirical measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point cloud in R^d with weights normalized to total mass 1."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = as_tensor(self.points)
        if pts.ndim != 2:
            raise ShapeError(f"points must be 2-d (k, d), got shape {pts.shape}")
        k, d = pts.shape
        if k < 1 or d < 1:
            raise DomainError("measure needs at least one point and one dimension")
        w = as_tensor(self.weights)
        if w.shape != (k,):
            raise ShapeError(f"weights must have shape ({k},), got {w.shape}")
        if np.any(w < 0):
            raise DomainError("weights must be nonnegative")
        total = w.sum()
        if total <= 0:
            raise DomainError("weights must have positive total mass")
        w = w / total
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        pts = as_tensor(points)
        if pts.ndim != 2:
            raise ShapeError(f"points must be 2-d (k, d), got shape {pts.shape}")
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @property
    def k(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def is_uniform(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.weights - 1.0 / self.k)) <= tol)


# ---------------------------------------------------------------------------
# CSV format: one point per row, optional header, optional final `weight` column
# ---------------------------------------------------------------------------


def _parse_float(token: str, where: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{where}: cannot parse {token!r} as a number") from None
    if not np.isfinite(value):
        raise ParseError(f"{where}: non-finite value {token!r}")
    return value


def _looks_numeric(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _load_csv(path: str) -> EmpiricalMeasure:
    with open(path, newline="") as handle:
        rows = [row for row in csv.reader(handle) if any(cell.strip() for cell in row)]
    if not rows:
        raise DomainError(f"{path}: no data rows")
    has_weight = False
    if not all(_looks_numeric(cell) for cell in rows[0]):
        header = [cell.strip().lower() for cell in rows[0]]
        has_weight = bool(header) and header[-1] == "weight"
        rows = rows[1:]
        if not rows:
            raise DomainError(f"{path}: no data rows")
    width = len(rows[0])
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path}: row {i + 1} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            data[i, j] = _parse_float(cell, f"{path}: row {i + 1}")
    if has_weight:
        if width < 2:
            raise ParseError(f"{path}: weight column present but no coordinates")
        return EmpiricalMeasure(data[:, :-1], data[:, -1])
    return EmpiricalMeasure.uniform(data)


def _format_float(value: float) -> str:
    # repr of a Python float is the shortest string that round-trips exactly
    return repr(float(value))


def _save_csv(path: str, measure: EmpiricalMeasure) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{j}" for j in range(measure.dim)] + ["weight"])
        for point, weight in zip(measure.points, measure.weights):
            writer.writerow([_format_float(v) for v in point] + [_format_float(weight)])


# ---------------------------------------------------------------------------
# SWT binary format: "SWT1", u32 LE rank, rank u32 LE extents, f64 LE payload.
# A file may hold several records back to back (e.g. model parameter stacks).
# ---------------------------------------------------------------------------

_SWT_MAGIC = b"SWT1"


def save_tensors(path: str, arrays) -> None:
    with open(path, "wb") as handle:
        for arr in arrays:
            a = np.ascontiguousarray(arr, dtype="<f8")
            handle.write(_SWT_MAGIC)
            handle.write(np.uint32(a.ndim).newbyteorder("<").tobytes())
            handle.write(np.asarray(a.shape, dtype="<u4").tobytes())
            handle.write(a.tobytes())


def load_tensors(path: str) -> list[np.ndarray]:
    out = []
    with open(path, "rb") as handle:
        while True:
            magic = handle.read(4)
            if not magic:
                break
            if magic != _SWT_MAGIC:
                raise ParseError(f"{path}: bad magic {magic!r}")
            raw_rank = handle.read(4)
            if len(raw_rank) != 4:
                raise ParseError(f"{path}: truncated header")
            rank = int(np.frombuffer(raw_rank, dtype="<u4")[0])
            raw_shape = handle.read(4 * rank)
            if len(raw_shape) != 4 * rank:
                raise ParseError(f"{path}: truncated extents")
            shape = tuple(int(v) for v in np.frombuffer(raw_shape, dtype="<u4"))
            count = int(np.prod(shape)) if shape else 1
            payload = handle.read(8 * count)
            if len(payload) != 8 * count:
                raise ParseError(f"{path}: truncated payload")
            out.append(as_tensor(np.frombuffer(payload, dtype="<f8"), shape))
    return out


def _load_swt(path: str) -> EmpiricalMeasure:
    records = load_tensors(path)
    if len(records) != 1:
        raise ParseError(f"{path}: expected one tensor record, found {len(records)}")
    pts = records[0]
    if pts.ndim != 2:
        raise ParseError(f"{path}: measure tensor must be rank 2, got rank {pts.ndim}")
    return EmpiricalMeasure.uniform(pts)


def _save_swt(path: str, measure: EmpiricalMeasure) -> None:
    if not measure.is_uniform():
        raise DomainError("swt measure files store uniform point clouds; use csv for weights")
    save_tensors(path, [measure.points])


_FORMATS = {"csv": (_load_csv, _save_csv), "swt": (_load_swt, _save_swt)}


def _pick_format(path: str, fmt: str | None) -> str:
    if fmt is None:
        fmt = os.path.splitext(path)[1].lstrip(".").lower()
    if fmt not in _FORMATS:
        raise ConfigError(f"unknown measure format {fmt!r} (expected csv or swt)")
    return fmt


def load_measure(path: str, fmt: str | None = None) -> EmpiricalMeasure:
    """Read a point cloud; uniform weights unless a csv `weight` column exists."""
    return _FORMATS[_pick_format(path, fmt)][0](path)


def save_measure(path: str, measure: EmpiricalMeasure, fmt: str | None = None) -> None:
    _FORMATS[_pick_format(path, fmt)][1](path, measure)
