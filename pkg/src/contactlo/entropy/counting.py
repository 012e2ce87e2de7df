"""Dynamical balls, generating and separated counts on materialized families.

Two traces are within a dynamical ball of radius eps over frames k0..k1 when
max_k sup_x |f_k(x) - g_k(x)| < eps.  Frame indices are 1-based (frame k is
the state at time k*tau); a range starting above 1 gives the truncated ball.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..evolution import InvariantViolation, Trace
from .families import Family, FamilyError

EXACT_COVER_LIMIT = 20
EXACT_SEPARATED_LIMIT = 20


def _frames(k_range, n: int) -> np.ndarray:
    k0, k1 = k_range
    if not (1 <= k0 <= k1 <= n):
        raise FamilyError(f"frame range {k_range} must lie inside [1, {n}]")
    return np.arange(k0 - 1, k1)


def ball_contains(center: Trace, other: Trace, eps: float, k_range) -> bool:
    if center.phi0.grid != other.phi0.grid or center.tau != other.tau:
        raise FamilyError("traces must share grid and time step")
    ks = _frames(k_range, min(center.n, other.n))
    a, b = center.array()[ks], other.array()[ks]
    return bool(np.max(np.abs(a - b)) < eps)


def dynamical_distance(traces: np.ndarray, i: int, js, ks) -> np.ndarray:
    """max over frames ks of the sup distance between member i and members js."""
    diff = traces[np.asarray(js)][:, ks, :] - traces[i, ks, :][None]
    return np.max(np.abs(diff), axis=(1, 2))


def neighbour_lists(family: Family, eps: float, k_range, chunk: int = 1 << 22) -> list[np.ndarray]:
    """For each member, the sorted indices of members inside its dynamical ball.

    Candidates are pruned with frame means, which are 1-Lipschitz for the sup
    norm, so no true neighbour is ever dropped.
    """
    family._require_traces()
    ks = _frames(k_range, family.n)
    tr = family.traces
    M = len(family)
    means = tr[:, ks, :].mean(axis=2)
    col = int(np.argmax(np.ptp(means, axis=0))) if M > 1 else 0
    order = np.argsort(means[:, col], kind="stable")
    key = means[order, col]
    lo = np.searchsorted(key, key - eps, side="right")
    hi = np.searchsorted(key, key + eps, side="left")
    out = [None] * M
    for pos in range(M):
        i = order[pos]
        cand = order[lo[pos] : hi[pos]]
        cand = cand[np.all(np.abs(means[cand] - means[i]) < eps, axis=1)]
        step = max(1, chunk // max(1, len(ks) * tr.shape[2]))
        keep = []
        for s in range(0, len(cand), step):
            part = cand[s : s + step]
            keep.append(part[dynamical_distance(tr, i, part, ks) < eps])
        out[i] = np.sort(np.concatenate(keep)) if keep else np.array([i])
    return out


@dataclass(frozen=True)
class CoverResult:
    eps: float
    k_range: tuple
    count: int
    witness: np.ndarray = field(repr=False)
    centers: tuple = ()
    method: str = "greedy"

    def witness_map(self) -> dict:
        return {int(i): int(c) for i, c in enumerate(self.witness)}


def validate_witness(family: Family, result: CoverResult) -> None:
    """Re-check every member against the centre it was assigned to."""
    ks = _frames(result.k_range, family.n)
    tr = family.traces
    for i, c in enumerate(result.witness):
        if c < 0:
            raise InvariantViolation(f"member {i} has no centre")
        if result.method != "separated" and dynamical_distance(tr, int(c), [i], ks)[0] >= result.eps:
            raise InvariantViolation(f"member {i} is not inside the ball of centre {c}")
    if len(set(int(c) for c in result.witness)) > result.count:
        raise InvariantViolation("witness uses more centres than reported")


def greedy_cover_count(family: Family, eps: float, k_range, nbrs=None) -> CoverResult:
    """Greedy generating set with centres drawn from the family.

    Members are visited in construction order.  An uncovered member is
    covered by promoting the candidate from its own ball that covers the most
    still-uncovered members (lowest index on ties).
    """
    nbrs = neighbour_lists(family, eps, k_range) if nbrs is None else nbrs
    M = len(family)
    covered = np.zeros(M, dtype=bool)
    witness = np.full(M, -1, dtype=int)
    centers = []
    for i in range(M):
        if covered[i]:
            continue
        cands = nbrs[i]
        gains = [np.count_nonzero(~covered[nbrs[c]]) for c in cands]
        c = int(cands[int(np.argmax(gains))])
        fresh = nbrs[c][~covered[nbrs[c]]]
        witness[fresh] = c
        covered[fresh] = True
        centers.append(c)
    res = CoverResult(eps, tuple(k_range), len(centers), witness, tuple(centers), "greedy")
    validate_witness(family, res)
    return res


def greedy_separated_count(family: Family, eps: float, k_range, nbrs=None) -> CoverResult:
    """Greedy maximal separated subset in construction order.

    The witness maps every member to a selected member whose ball contains it
    (a maximal separated set is also generating), or to itself.
    """
    nbrs = neighbour_lists(family, eps, k_range) if nbrs is None else nbrs
    M = len(family)
    chosen = np.zeros(M, dtype=bool)
    witness = np.full(M, -1, dtype=int)
    for i in range(M):
        hit = nbrs[i][chosen[nbrs[i]]]
        if hit.size == 0:
            chosen[i] = True
            witness[i] = i
        else:
            witness[i] = int(hit[0])
    centers = tuple(int(i) for i in np.flatnonzero(chosen))
    return CoverResult(eps, tuple(k_range), len(centers), witness, centers, "separated")


def _masks(nbrs) -> list[int]:
    return [sum(1 << int(j) for j in row) for row in nbrs]


def exact_cover_count(family: Family, eps: float, k_range) -> CoverResult:
    """Minimum generating set with centres from the family, by branch and bound."""
    M = len(family)
    if M > EXACT_COVER_LIMIT:
        raise FamilyError(f"exact cover limited to {EXACT_COVER_LIMIT} members, got {M}")
    nbrs = neighbour_lists(family, eps, k_range)
    masks = _masks(nbrs)
    full = (1 << M) - 1
    covering = [[c for c in range(M) if masks[c] >> e & 1] for e in range(M)]
    best = [list(range(M))]

    def search(cov, chosen):
        if cov == full:
            if len(chosen) < len(best[0]):
                best[0] = list(chosen)
            return
        if len(chosen) + 1 >= len(best[0]):
            return
        e = (~cov & (cov + 1)).bit_length() - 1
        for c in covering[e]:
            chosen.append(c)
            search(cov | masks[c], chosen)
            chosen.pop()

    search(0, [])
    centers = sorted(best[0])
    witness = np.array([next(c for c in centers if masks[c] >> i & 1) for i in range(M)])
    res = CoverResult(eps, tuple(k_range), len(centers), witness, tuple(centers), "exact")
    validate_witness(family, res)
    return res


def exact_separated_count(family: Family, eps: float, k_range) -> CoverResult:
    """Largest separated subset (maximum independent set of the ball graph)."""
    M = len(family)
    if M > EXACT_SEPARATED_LIMIT:
        raise FamilyError(f"exact separated count limited to {EXACT_SEPARATED_LIMIT} members, got {M}")
    masks = _masks(neighbour_lists(family, eps, k_range))
    best = [[]]

    def search(avail, chosen):
        if len(chosen) + bin(avail).count("1") <= len(best[0]):
            return
        if avail == 0:
            best[0] = list(chosen)
            return
        v = (avail & -avail).bit_length() - 1
        chosen.append(v)
        search(avail & ~masks[v] & ~(1 << v), chosen)
        chosen.pop()
        search(avail & ~(1 << v), chosen)

    search((1 << M) - 1, [])
    centers = tuple(sorted(best[0]))
    witness = np.array([i if i in centers else next((c for c in centers if masks[c] >> i & 1), i) for i in range(M)])
    return CoverResult(eps, tuple(k_range), len(centers), witness, centers, "separated-exact")


@dataclass(frozen=True)
class TruncationReport:
    g_t: int
    g_t0: int
    g_t0_t: int
    g_t_2eps: int
    monotone_ok: bool
    product_ok: bool

    @property
    def holds(self) -> bool:
        return self.monotone_ok and self.product_ok


def truncated_inequality_audit(family: Family, k0: int, k_max: int, eps: float) -> TruncationReport:
    """Exact check of g_{t0,t}(eps) <= g_t(eps) and g_{t0}(eps) g_{t0,t}(eps) >= g_t(2 eps)."""
    if not 1 <= k0 <= k_max:
        raise FamilyError("need 1 <= k0 <= k_max")
    g_t = exact_cover_count(family, eps, (1, k_max)).count
    g_t0 = exact_cover_count(family, eps, (1, k0)).count
    g_t0_t = exact_cover_count(family, eps, (k0, k_max)).count
    g_2 = exact_cover_count(family, 2 * eps, (1, k_max)).count
    rep = TruncationReport(g_t, g_t0, g_t0_t, g_2, g_t0_t <= g_t, g_t0 * g_t0_t >= g_2)
    if not rep.holds:
        raise InvariantViolation(f"truncated-ball inequalities fail: {rep}")
    return rep
