"""Finite families of initial data and their materialized traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..evolution import Trace, trace_array
from ..extension import SampleSet, mcshane_extend
from ..geometry import Grid, GridFunction


class FamilyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Family:
    """Members are rows of ``initial`` (M, size); ``traces`` is (M, n, size) once materialized."""

    label: str
    grid: Grid
    initial: np.ndarray = field(repr=False)
    descriptors: tuple = ()
    tau: float | None = None
    traces: np.ndarray | None = field(default=None, repr=False)
    method: str | None = None

    def __post_init__(self):
        init = np.atleast_2d(np.asarray(self.initial, dtype=float))
        if init.shape[1] != self.grid.size:
            raise FamilyError(f"members have {init.shape[1]} values, grid has {self.grid.size}")
        object.__setattr__(self, "initial", init)
        if self.traces is not None:
            tr = np.asarray(self.traces, dtype=float)
            if tr.ndim != 3 or tr.shape[0] != init.shape[0] or tr.shape[2] != self.grid.size:
                raise FamilyError(f"trace array shape {tr.shape} does not match the family")
            object.__setattr__(self, "traces", tr)

    def __len__(self) -> int:
        return self.initial.shape[0]

    @property
    def n(self) -> int:
        self._require_traces()
        return self.traces.shape[1]

    @property
    def materialized(self) -> bool:
        return self.traces is not None

    def _require_traces(self):
        if self.traces is None:
            raise FamilyError(f"family {self.label!r} has not been materialized")

    def materialize(self, engine, tau: float, n: int) -> "Family":
        if n < 1:
            raise FamilyError("need at least one frame")
        return replace(self, tau=float(tau), traces=trace_array(self.initial, tau, n, engine), method=engine.method)

    def member(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.initial[i])

    def trace(self, i: int) -> Trace:
        self._require_traces()
        return Trace(self.member(i), self.tau, [GridFunction(self.grid, f) for f in self.traces[i]], self.method)

    def subset(self, idx) -> "Family":
        idx = np.asarray(idx, dtype=int)
        desc = tuple(self.descriptors[i] for i in idx) if self.descriptors else ()
        tr = None if self.traces is None else self.traces[idx]
        return replace(self, initial=self.initial[idx], descriptors=desc, traces=tr)


def shift_delta_step(eps: float, lam: float, t_max: float, a: float) -> float:
    """Sampling step for the shift family, finer than the smallest ball radius seen."""
    return min(eps * math.exp(-lam * t_max) / 10.0, a / 1000.0)


def shift_family(phi0: GridFunction, a: float, delta_step: float, label: str = "shift") -> Family:
    """{phi0 + delta : delta in [0, a]} sampled with the given step (both ends included)."""
    if a < 0 or delta_step <= 0:
        raise FamilyError("need a >= 0 and delta_step > 0")
    count = int(math.floor(a / delta_step + 1e-9)) + 1
    deltas = np.arange(count) * delta_step
    if a - deltas[-1] > 1e-12 * max(1.0, a):
        deltas = np.append(deltas, a)
    return Family(label, phi0.grid, phi0.values[None, :] + deltas[:, None], tuple(float(x) for x in deltas))


def fourier_family(grid: Grid, count: int, R: float, rng: np.random.Generator, modes: int = 3) -> Family:
    """Random trigonometric polynomials rescaled so that the sup norm is at most R."""
    nodes = grid.nodes()
    rows, desc = [], []
    for _ in range(count):
        vals = np.full(grid.size, rng.uniform(-1.0, 1.0))
        for k in range(1, modes + 1):
            for j in range(grid.d):
                a, b = rng.normal(size=2) / k
                vals += a * np.cos(2 * np.pi * k * nodes[:, j]) + b * np.sin(2 * np.pi * k * nodes[:, j])
        scale = rng.uniform(0.3, 1.0) * R / np.max(np.abs(vals))
        rows.append(vals * scale)
        desc.append(float(scale))
    return Family("fourier", grid, np.array(rows), tuple(desc))


def mcshane_family(grid: Grid, count: int, m: int, K0: float, R: float, rng: np.random.Generator) -> Family:
    """Extensions of random sample sets; values are clipped so every member stays within [-R, R]."""
    rows, desc = [], []
    for _ in range(count):
        pts = rng.random((m, grid.d))
        vals = rng.uniform(-R, R, m)
        samples = SampleSet.from_samples(pts, vals, K0)
        rows.append(np.clip(mcshane_extend(samples, grid).values, -R, R))
        desc.append(samples.K_psi)
    return Family("mcshane", grid, np.array(rows), tuple(desc))


def family_from_functions(label: str, functions: list[GridFunction]) -> Family:
    if not functions:
        raise FamilyError("empty family")
    grid = functions[0].grid
    if any(f.grid != grid for f in functions):
        raise FamilyError("all members must share one grid")
    return Family(label, grid, np.stack([f.values for f in functions]))
