"""Separated families for the lower bound, slope fitting, and the explicit cover
behind the upper bound."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..evolution import InvariantViolation, trace_array
from ..extension import SampleSet, mcshane_extend
from ..geometry import Grid, GridFunction, torus_distances
from ..kernel import kernel_values
from .families import Family, FamilyError


# --------------------------------------------------------------------------
# lower bound


def build_separated_family(phi0: GridFunction, eps: float, t: float, lam: float, count: int) -> Family:
    """phi_m = phi0 + 2 m eps e^{-lam t}, m = 0..count-1."""
    if lam <= 0:
        raise FamilyError("the separated family needs lam > 0")
    if count < 2:
        raise FamilyError("need at least two members")
    spacing = 2.0 * eps * math.exp(-lam * t)
    shifts = np.arange(count) * spacing
    return Family("separated", phi0.grid, phi0.values[None, :] + shifts[:, None], tuple(float(s) for s in shifts))


def evolved_spacings(family: Family, t: float, engine) -> np.ndarray:
    """sup |T_t phi_m - T_t phi_{m-1}| for consecutive members."""
    out = engine.apply_array(family.initial, t)
    return np.max(np.abs(np.diff(out, axis=0)), axis=1)


@dataclass(frozen=True)
class LowerBoundCount:
    members: int
    displayed: int
    displayed_raw: float
    spacing: float


def lower_bound_count(phi0, a: float, eps: float, t: float, lam: float) -> LowerBoundCount:
    """Members of the separated family inside the shift interval [0, a].

    ``members`` counts phi_m with spacing 2 eps e^{-lam t}; ``displayed`` is
    floor(a / (2 e^{lam t} eps)) + 1, the other sign of the exponent.  The
    initial datum does not change either number.
    """
    if min(a, eps, t) <= 0 or lam <= 0:
        raise FamilyError("need a, eps, t > 0 and lam > 0")
    spacing = 2.0 * eps * math.exp(-lam * t)
    members = int(math.floor(a / spacing + 1e-12)) + 1
    raw = a / (2.0 * math.exp(lam * t) * eps)
    return LowerBoundCount(members, int(math.floor(raw)) + 1, raw, spacing)


# --------------------------------------------------------------------------
# slope fitting


@dataclass(frozen=True)
class EntropyEstimate:
    ts: tuple
    counts: tuple
    slope: float
    intercept: float
    residuals: tuple
    degenerate: bool = False
    eps: float | None = None

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def slope_fit(points, eps: float | None = None) -> EntropyEstimate:
    """Least-squares slope of log(count) against t."""
    pts = sorted((float(t), c) for t, c in points)
    if len(pts) < 4:
        raise ValueError(f"slope fit needs at least 4 points, got {len(pts)}")
    ts = np.array([p[0] for p in pts])
    counts = np.array([p[1] for p in pts], dtype=float)
    if np.any(counts < 1):
        raise ValueError("counts must be >= 1 before taking logs")
    y = np.log(counts.astype(float))
    if np.all(counts == counts[0]):
        return EntropyEstimate(tuple(ts), tuple(p[1] for p in pts), 0.0, float(y[0]), tuple(np.zeros(len(ts))), True, eps)
    A = np.stack([ts, np.ones_like(ts)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (slope * ts + icpt)
    return EntropyEstimate(tuple(ts), tuple(p[1] for p in pts), float(slope), float(icpt), tuple(res), False, eps)


# --------------------------------------------------------------------------
# upper bound: explicit cover


@dataclass(frozen=True)
class NetAudit:
    points: np.ndarray = field(repr=False)
    covering_radius: float
    eps: float

    @property
    def ok(self) -> bool:
        return self.covering_radius < self.eps


def _axis_radius(coords: np.ndarray) -> float:
    c = np.sort(np.unique(np.mod(coords, 1.0)))
    gaps = np.diff(np.append(c, c[0] + 1.0))
    return float(np.max(gaps) / 2.0)


def regular_net(eps: float, grid: Grid) -> NetAudit:
    """Product net with floor(sqrt(d)/(2 eps)) + 1 points per axis, snapped to grid nodes.

    The covering radius of a product net is the Euclidean combination of the
    per-axis half gaps, so the audit is exact on the torus.
    """
    m_axis = int(math.floor(math.sqrt(grid.d) / (2.0 * eps))) + 1
    axis = np.unique(np.mod(np.round((np.arange(m_axis) + 0.5) / m_axis * grid.N), grid.N)) / grid.N
    mesh = np.meshgrid(*([axis] * grid.d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    radius = math.sqrt(grid.d) * _axis_radius(axis)
    return NetAudit(pts, radius, eps)


def audit_net(points: np.ndarray, eps: float, grid: Grid) -> NetAudit:
    """Covering radius measured at the grid nodes and cell centres."""
    probe = np.concatenate([grid.nodes(), np.mod(grid.nodes() + 0.5 * grid.h, 1.0)])
    dist = torus_distances(probe[:, None, :], np.asarray(points, dtype=float)[None, :, :])
    return NetAudit(np.asarray(points, dtype=float), float(np.max(np.min(dist, axis=1))), eps)


def level_set(R: float, eps: float, n: int, k: int, lam: float, K0: float) -> np.ndarray:
    """Sorted distinct values of U_{n,k}."""
    ls = np.arange(int(math.ceil(K0 / eps)) + 2)
    js = np.arange(1, n + 1)
    vals = -R + k * eps * math.exp(-lam * n) + np.outer(np.exp(-lam * js) * eps, ls).ravel()
    return np.unique(vals)


def cover_count_bound(R: float, eps: float, n: int, m: int, lam: float, K0: float) -> float:
    return (2.0 * R * math.exp(lam * n) / eps + 1.0) * n**m * (K0 / eps + 3.0) ** m


@dataclass(frozen=True)
class TheoreticalCover:
    centers: Family
    strata: tuple
    sample_values: np.ndarray = field(repr=False)
    stratum_sizes: dict
    family_size: int
    bound: float
    pigeonhole_checks: int
    member_defects: np.ndarray
    radius: float
    net: NetAudit
    stratum_bound: float

    @property
    def bound_ok(self) -> bool:
        within = all(s <= self.stratum_bound for s in self.stratum_sizes.values())
        return within and self.family_size <= self.bound

    @property
    def cover_ok(self) -> bool:
        return bool(np.all(self.member_defects < self.radius))


def _ball_minima(values: np.ndarray, grid: Grid, net: np.ndarray, eps: float) -> np.ndarray:
    """min of each member over the grid nodes inside each open net ball, shape (M, m)."""
    dist = torus_distances(grid.nodes()[:, None, :], net[None, :, :])
    inside = dist < eps
    return np.stack([np.min(np.where(inside[:, i][None, :], values, np.inf), axis=1) for i in range(len(net))], axis=1)


def build_theoretical_cover(V: Family, R: float, eps: float, n: int, net: NetAudit, lam: float, K0: float, engine) -> TheoreticalCover:
    """Assign every member of V its centre from the explicit family F_n and audit it.

    For each member: the stratum k from its minimum, the sample values
    psi(z_i) = max{c in U_{n,k} : c <= phi on B(z_i, eps)}, and the McShane
    extension with K_psi = max(K0, Lip psi).  Audits: net covering, stratum
    sizes against the closed-form bound, the pigeonhole level inequality at
    every node and frame, and the cover radius (1 + K0) eps over frames 1..n.
    """
    if lam <= 0:
        raise FamilyError("the explicit cover needs lam > 0")
    if not net.ok:
        raise FamilyError(f"net covering radius {net.covering_radius} is not below eps={eps}")
    if np.max(np.abs(V.initial)) > R * (1 + 1e-12):
        raise FamilyError("family is not inside the sup-norm ball of radius R")
    grid = V.grid
    z = net.points
    m = len(z)
    k_max = int(math.floor(2.0 * R * math.exp(lam * n) / eps))
    gap = eps * math.exp(-lam * n)
    ball_min = _ball_minima(V.initial, grid, z, eps)

    strata, samples, rows, sizes = [], [], [], {}
    for r, phi in enumerate(V.initial):
        k = min(max(int(math.floor((phi.min() + R) / gap)), 0), k_max)
        U = level_set(R, eps, n, k, lam, K0)
        pos = np.searchsorted(U, ball_min[r], side="right") - 1
        if np.any(pos < 0):
            raise InvariantViolation(f"member {r}: no level of U_(n,{k}) lies below the ball minimum")
        psi = U[pos]
        ss = SampleSet.from_samples(z, psi, K0)
        rows.append(mcshane_extend(ss, grid).values)
        strata.append(k)
        samples.append(psi)
        sizes[k] = len(U) ** m

    centers = Family("theoretical-cover", grid, np.array(rows), tuple(strata))
    samples = np.array(samples)
    tr_v = trace_array(V.initial, 1.0, n, engine)
    tr_c = trace_array(centers.initial, 1.0, n, engine)
    defects = np.max(np.abs(tr_v - tr_c), axis=(1, 2))
    family_size = (k_max + 1) * len(level_set(R, eps, n, 0, lam, K0)) ** m

    # pigeonhole step: the sample selected by the m-point minimum sits low enough
    checks = 0
    nodes = grid.nodes()
    disp = nodes[:, None, :] - z[None, :, :]
    disp = disp - np.floor(disp + 0.5)
    for j in range(1, n + 1):
        lifts = [kernel_values(float(j), disp + np.asarray(s, dtype=float), engine.model) for s in _shifts(grid.d)]
        D = np.min(lifts, axis=0)
        for r in range(len(V)):
            val = math.exp(lam * j) * samples[r][None, :] + D
            ix = np.argmin(val, axis=1)
            limit = -R + strata[r] * gap + K0 * math.exp(-lam * j)
            bad = samples[r][ix] > limit + 1e-12
            checks += len(ix)
            if np.any(bad):
                raise InvariantViolation(f"pigeonhole level check fails for member {r} at frame {j}")

    centers = Family(centers.label, grid, centers.initial, centers.descriptors, 1.0, tr_c, engine.method)
    return TheoreticalCover(
        centers=centers,
        strata=tuple(strata),
        sample_values=samples,
        stratum_sizes=sizes,
        family_size=family_size,
        bound=cover_count_bound(R, eps, n, m, lam, K0),
        pigeonhole_checks=checks,
        member_defects=defects,
        radius=(1.0 + K0) * eps,
        net=net,
        stratum_bound=float(n**m * (K0 / eps + 3.0) ** m),
    )


def _shifts(d):
    return list(itertools.product((-1, 0, 1), repeat=d))


@dataclass(frozen=True)
class CoverCheck:
    ok: bool
    witness: dict
    counterexample: tuple | None = None


def verify_cover(V: Family, centers: Family, radius: float, k_range) -> CoverCheck:
    """Every member of V within ``radius`` of some centre over frames k_range.

    On failure returns (member, nearest centre, worst frame, distance).
    """
    k0, k1 = k_range
    if V.tau != centers.tau or V.grid != centers.grid:
        raise FamilyError("families must share grid and time step")
    if not (1 <= k0 <= k1 <= min(V.n, centers.n)):
        raise FamilyError(f"frame range {k_range} outside the materialized traces")
    ks = np.arange(k0 - 1, k1)
    witness = {}
    for i in range(len(V)):
        per_frame = np.max(np.abs(centers.traces[:, ks, :] - V.traces[i, ks, :][None]), axis=2)
        dist = np.max(per_frame, axis=1)
        c = int(np.argmin(dist))
        if not dist[c] < radius:
            return CoverCheck(False, witness, (i, c, int(ks[np.argmax(per_frame[c])]) + 1, float(dist[c])))
        witness[i] = c
    return CoverCheck(True, witness)
