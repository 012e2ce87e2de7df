"""Flat-torus geometry: points, uniform grids and sampled functions.

Everything lives on the unit torus T^d = R^d / Z^d with d in {1, 2}.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GeometryError(ValueError):
    """Raised on dimension or grid mismatches and invalid data."""


def _as_coords(coords) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(coords, dtype=float))
    if arr.ndim != 1 or arr.size not in (1, 2):
        raise GeometryError(f"torus points must have 1 or 2 coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("torus coordinates must be finite")
    return arr


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple

    def __init__(self, coords):
        arr = np.mod(_as_coords(coords), 1.0)
        # np.mod can return exactly 1.0 for tiny negative inputs
        arr[arr >= 1.0] = 0.0
        object.__setattr__(self, "coords", tuple(float(c) for c in arr))

    @property
    def d(self) -> int:
        return len(self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)


def wrap(delta) -> np.ndarray:
    """Map displacements to the minimal representative in [-1/2, 1/2)."""
    delta = np.asarray(delta, dtype=float)
    return delta - np.floor(delta + 0.5)


def torus_distance(x, y) -> float:
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.shape != b.shape:
        raise GeometryError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(wrap(a - b)))


def torus_distances(points, x) -> np.ndarray:
    """Vectorised torus distance between point sets.

    ``points`` has shape (..., d) and ``x`` has shape (..., d); the usual
    broadcasting rules apply over the leading axes.
    """
    diff = wrap(np.asarray(points, dtype=float) - np.asarray(x, dtype=float))
    return np.sqrt(np.sum(diff * diff, axis=-1))


def min_displacement(x, y) -> list[np.ndarray]:
    """All lifted displacements x - y + k, k in {-1,0,1}^d, sorted by norm."""
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.shape != b.shape:
        raise GeometryError(f"dimension mismatch: {a.shape} vs {b.shape}")
    base = np.mod(a, 1.0) - np.mod(b, 1.0)
    cands = [base + np.asarray(k, dtype=float) for k in itertools.product((-1, 0, 1), repeat=a.size)]
    # stable sort keeps the k-lexicographic order among equal norms
    return sorted(cands, key=lambda v: float(np.linalg.norm(v)))


@dataclass(frozen=True)
class Grid:
    d: int
    N: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise GeometryError(f"only d in {{1, 2}} is supported, got {self.d}")
        if self.N < 2:
            raise GeometryError(f"need N >= 2 points per axis, got {self.N}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N**self.d

    def indices(self) -> np.ndarray:
        """Integer node indices, row-major, shape (size, d)."""
        axes = [np.arange(self.N)] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def nodes(self) -> np.ndarray:
        """Node coordinates, row-major, shape (size, d)."""
        return self.indices() / self.N

    def sample(self, fn) -> "GridFunction":
        """Evaluate ``fn`` on the node array of shape (size, d)."""
        return GridFunction(self, np.asarray(fn(self.nodes()), dtype=float))

    def constant(self, c: float) -> "GridFunction":
        return GridFunction(self, np.full(self.size, float(c)))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a function on every node of a torus grid (flat, row-major)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size != self.grid.size:
            raise GeometryError(f"expected {self.grid.size} values, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise GeometryError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            return GridFunction(self.grid, self.values + other.values)
        return GridFunction(self.grid, self.values + float(other))

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            return GridFunction(self.grid, self.values - other.values)
        return GridFunction(self.grid, self.values - float(other))

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def as_array(self) -> np.ndarray:
        """Values reshaped to the grid shape (N,) or (N, N)."""
        return self.values.reshape(self.grid.shape)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow([f"i_{k + 1}" for k in range(self.grid.d)] + ["value"])
        for idx, val in zip(self.grid.indices(), self.values):
            writer.writerow([*(int(i) for i in idx), format(float(val), ".17g")])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), newline="")

    @classmethod
    def from_csv(cls, text: str) -> "GridFunction":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        d = len(header) - 1
        if d not in (1, 2) or header[-1] != "value":
            raise GeometryError(f"malformed grid-function header {header!r}")
        idx = np.array([[int(v) for v in r[:d]] for r in body])
        vals = np.array([float(r[d]) for r in body])
        N = int(round(len(body) ** (1.0 / d)))
        grid = Grid(d, N)
        if len(body) != grid.size:
            raise GeometryError(f"{len(body)} rows do not form a {d}-d square grid")
        flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
        out = np.empty(grid.size)
        out[flat] = vals
        return cls(grid, out)

    @classmethod
    def read_csv(cls, path) -> "GridFunction":
        return cls.from_csv(Path(path).read_text())


def _check_same_grid(f: GridFunction, g: GridFunction) -> None:
    if f.grid != g.grid:
        raise GeometryError(f"grid mismatch: {f.grid} vs {g.grid}")


def sup_distance(f: GridFunction, g: GridFunction) -> float:
    _check_same_grid(f, g)
    return float(np.max(np.abs(f.values - g.values)))
