"""McShane extension of finite samples and the finite-point reduction.

For samples psi(z_i) and K >= Lip[psi], the function

    ext(x) = min_i psi(z_i) + K d(z_i, x)

is K-Lipschitz and interpolates the samples.  When K also dominates the
kernel constant K_0 and t >= 1, evolving the extension only depends on the
sample values: T_t ext(x) = min_i e^{lam t} psi(z_i) + D(t, z_i, x).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Grid, GridFunction, torus_distances
from .kernel import KernelTable, kernel_values
from .lagrangians import LagrangianModel
from .evolution import minplus_naive


class ExtensionError(ValueError):
    pass


def pairwise_lipschitz(points: np.ndarray, values: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    dist = torus_distances(points[:, None, :], points[None, :, :])
    gap = np.abs(values[:, None] - values[None, :])
    off = dist > 0
    if np.any(~off & (gap > 0) & ~np.eye(len(points), dtype=bool)):
        raise ExtensionError("two samples share a point but carry different values")
    return float(np.max(np.where(off, gap / np.where(off, dist, 1.0), 0.0)))


@dataclass(frozen=True, eq=False)
class SampleSet:
    points: np.ndarray
    values: np.ndarray
    K_psi: float

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if len(pts) < 1 or len(pts) != len(vals):
            raise ExtensionError("need m >= 1 points with one value each")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(vals))):
            raise ExtensionError("samples must be finite")
        lip = pairwise_lipschitz(np.mod(pts, 1.0), vals)
        if self.K_psi < lip * (1 - 1e-12):
            raise ExtensionError(f"K_psi={self.K_psi} is below the sample Lipschitz constant {lip}")
        object.__setattr__(self, "points", np.mod(pts, 1.0))
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_samples(cls, points, values, K0: float = 0.0) -> "SampleSet":
        """K_psi = max(K0, Lip[psi]) with the exact pairwise Lipschitz constant."""
        pts = np.mod(np.atleast_2d(np.asarray(points, dtype=float)), 1.0)
        vals = np.atleast_1d(np.asarray(values, dtype=float))
        return cls(pts, vals, max(float(K0), pairwise_lipschitz(pts, vals)))

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def to_csv(self) -> str:
        head = ",".join(f"z_{k + 1}" for k in range(self.d)) + ",value"
        rows = [",".join(format(float(c), ".17g") for c in (*p, v)) for p, v in zip(self.points, self.values)]
        return "\r\n".join([head, *rows]) + "\r\n"

    def write(self, csv_path, json_path=None) -> None:
        Path(csv_path).write_text(self.to_csv(), newline="")
        if json_path is not None:
            Path(json_path).write_text(json.dumps({"K_psi": self.K_psi}) + "\n")

    @classmethod
    def read(cls, csv_path, json_path) -> "SampleSet":
        lines = [ln for ln in Path(csv_path).read_text().splitlines() if ln]
        body = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]])
        meta = json.loads(Path(json_path).read_text())
        return cls(body[:, :-1], body[:, -1], float(meta["K_psi"]))


def mcshane_values(samples: SampleSet, points: np.ndarray) -> np.ndarray:
    """Evaluate the extension at arbitrary torus points of shape (M, d)."""
    dist = torus_distances(np.asarray(points, dtype=float)[:, None, :], samples.points[None, :, :])
    return np.min(samples.values[None, :] + samples.K_psi * dist, axis=1)


def mcshane_extend(samples: SampleSet, grid: Grid) -> GridFunction:
    if samples.d != grid.d:
        raise ExtensionError(f"samples are {samples.d}-d but the grid is {grid.d}-d")
    return GridFunction(grid, mcshane_values(samples, grid.nodes()))


def reduced_evolution(samples: SampleSet, model: LagrangianModel, t: float, grid: Grid) -> np.ndarray:
    """min_i e^{lam t} psi(z_i) + D(t, z_i, x) at every grid node x, with exact D."""
    nodes = grid.nodes()
    disp = nodes[:, None, :] - samples.points[None, :, :]
    disp = disp - np.floor(disp + 0.5)  # minimal lift; D grows with |displacement|
    best = np.full(len(nodes), np.inf)
    for shift in _lift_shifts(grid.d):
        D = kernel_values(t, disp + shift, model)
        best = np.minimum(best, np.min(math.exp(model.lam * t) * samples.values[None, :] + D, axis=1))
    return best


def _lift_shifts(d):
    return [np.asarray(s, dtype=float) for s in itertools.product((-1, 0, 1), repeat=d)]


@dataclass(frozen=True)
class ReductionReport:
    defect: float
    tolerance: float
    t: float
    N: int


def finite_reduction_defect(samples: SampleSet, model: LagrangianModel, table: KernelTable) -> ReductionReport:
    """Compare full-grid evolution of the extension with the m-point formula.

    The grid minimum can only exceed the continuum one, by at most
    (e^{lam t} K_psi + K_0) times the distance from a sample to its nearest
    node; that bound is reported as ``tolerance``.
    """
    t = table.t
    if t < 1:
        raise ExtensionError(f"the finite-point reduction needs t >= 1, got t={t}")
    if samples.K_psi < table.K0:
        raise ExtensionError(f"K_psi={samples.K_psi} is below K_0={table.K0}; reduction hypothesis fails")
    grid = table.grid
    ext = mcshane_extend(samples, grid)
    full = minplus_naive(ext.values, math.exp(table.lam * t), table)
    reduced = reduced_evolution(samples, model, t, grid)
    defect = float(np.max(np.abs(full - reduced)))
    tol = (math.exp(model.lam * t) * samples.K_psi + table.K0) * math.sqrt(grid.d) * 0.5 * grid.h
    return ReductionReport(defect, tol, t, grid.N)
