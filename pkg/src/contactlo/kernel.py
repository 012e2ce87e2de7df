"""Discounted fundamental solutions on the torus.

For L = l(v) + lam*u the Lax-Oleinik operator reduces to a min-plus
convolution with the kernel

    D(t, y, x) = inf over arcs from y to x of  int_0^t e^{lam (t-s)} l(xi') ds
               = e^{lam t} A(t, y, x),

which for x-independent l depends only on the lifted displacement x - y.
Three independent routes are provided: a closed form for l = |v|^2/2, a
shooting solver built on the conserved momentum e^{-lam s} l_v(xi'), and a
dynamic-programming oracle over discretised paths.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Grid
from .lagrangians import LagrangianModel, QuadraticKinetic

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


class KernelError(RuntimeError):
    pass


class ResourceGuardError(KernelError):
    pass


def _gl_times(t: float):
    s = 0.5 * t * (GL_NODES + 1.0)
    return s, 0.5 * t * GL_WEIGHTS


def _check_time(t):
    if not t > 0:
        raise KernelError(f"kernel time must be positive, got {t}")


def quadratic_coefficient(t: float, lam: float) -> float:
    """c(t, lam) with D = c |delta|^2 for l = |v|^2/2; equals 1/(2t) at lam = 0."""
    _check_time(t)
    if lam == 0.0:
        return 1.0 / (2.0 * t)
    return lam * np.exp(lam * t) / (2.0 * np.expm1(lam * t))


def kernel_closed_form_quadratic(t: float, delta, lam: float):
    delta = np.asarray(delta, dtype=float)
    c = quadratic_coefficient(t, lam)
    if delta.ndim == 0:
        return c * float(delta) ** 2
    return c * np.sum(delta * delta, axis=-1)


# --------------------------------------------------------------------------
# shooting


@dataclass
class ShootingSolution:
    """Constant momentum p with l_v(xi'(s)) = p e^{lam s}; arrays over inputs."""

    t: float
    lam: float
    momentum: np.ndarray
    delta: np.ndarray

    def velocity(self, model: LagrangianModel, s):
        q = self.momentum * np.exp(self.lam * np.asarray(s, dtype=float))[..., None]
        return model.kinetic.grad_inv(None, q)


def _as_delta(delta, d):
    delta = np.asarray(delta, dtype=float)
    if delta.ndim == 0:
        delta = delta.reshape(1)
    if d is not None and delta.shape[-1] != d:
        raise KernelError(f"displacement has dimension {delta.shape[-1]}, expected {d}")
    return delta


def _require_x_independent(model):
    if not model.kinetic.x_independent:
        raise KernelError("kernel routes require an x-independent kinetic energy")


def solve_momentum(t: float, delta, model: LagrangianModel, max_iter: int = 200) -> ShootingSolution:
    """Find p with int_0^t (l_v)^{-1}(p e^{lam s}) ds = delta.

    Separable kinetics use bracketing bisection per axis (the left side is
    increasing in each momentum component); others use damped Newton with
    Jacobian int e^{lam s} (l_vv)^{-1} ds.
    """
    _check_time(t)
    _require_x_independent(model)
    lam = model.lam
    delta = _as_delta(delta, None)
    s, w = _gl_times(t)
    growth = np.exp(lam * s)
    kin = model.kinetic

    if kin.separable:
        target = delta.reshape(-1)

        def residual(p):
            q = p[:, None] * growth[None, :]
            return kin.scalar_grad_inv(q) @ w - target

        scale = np.maximum(np.abs(target) / t, 1e-300)
        v_guess = kin.scalar_grad(scale)
        lo = -np.abs(v_guess) - 1.0
        hi = np.abs(v_guess) + 1.0
        for _ in range(200):
            rl, rh = residual(lo), residual(hi)
            if np.all(rl <= 0) and np.all(rh >= 0):
                break
            lo = np.where(rl > 0, 2 * lo, lo)
            hi = np.where(rh < 0, 2 * hi, hi)
        else:
            raise KernelError("could not bracket the shooting momentum")
        hit = residual(np.zeros_like(lo)) == 0
        lo = np.where(hit, 0.0, lo)
        hi = np.where(hit, 0.0, hi)
        # halving reaches float resolution within ~2100 steps even for subnormal targets
        for it in range(max(max_iter, 2200)):
            mid = 0.5 * (lo + hi)
            r = residual(mid)
            lo = np.where(r < 0, mid, lo)
            hi = np.where(r < 0, hi, mid)
            lo = np.where(r == 0, mid, lo)
            # stop once every bracket is at floating-point resolution
            if np.all((hi - lo) <= 4 * np.spacing(np.maximum(np.abs(lo), np.abs(hi)))):
                break
        else:
            raise KernelError("momentum bisection did not converge")
        p = 0.5 * (lo + hi)
        return ShootingSolution(t, lam, p.reshape(delta.shape), delta)

    # non-separable: damped Newton on p in R^d, batched over inputs
    flat = delta.reshape(-1, delta.shape[-1])
    d = flat.shape[-1]
    p = kin.grad(None, flat / t)

    def residual_jac(p):
        q = p[:, None, :] * growth[None, :, None]
        v = kin.grad_inv(None, q)
        res = np.einsum("bsd,s->bd", v, w) - flat
        Hinv = np.linalg.inv(kin.hess(None, v))
        J = np.einsum("bsij,s->bij", Hinv, w * growth)
        return res, J

    res, J = residual_jac(p)
    for it in range(max_iter):
        norm = np.linalg.norm(res, axis=-1)
        if np.all(norm <= 1e-14 * (1 + np.linalg.norm(flat, axis=-1))):
            return ShootingSolution(t, lam, p.reshape(delta.shape), delta)
        step = np.linalg.solve(J, -res[..., None])[..., 0]
        alpha = np.ones(len(p))
        for _ in range(40):
            cand = p + alpha[:, None] * step
            cres, cJ = residual_jac(cand)
            ok = np.linalg.norm(cres, axis=-1) < norm
            ok = ok | (norm <= 1e-14 * (1 + np.linalg.norm(flat, axis=-1)))
            if ok.all():
                break
            alpha = np.where(ok, alpha, 0.5 * alpha)
        p, res, J = cand, cres, cJ
    raise KernelError(f"momentum Newton did not converge in {max_iter} iterations")


def _minimiser_integrals(t, deltas, model):
    """Return (A, D) along shooting minimisers for a batch of shape (M, d)."""
    s, w = _gl_times(t)
    lam = model.lam
    sol = solve_momentum(t, deltas, model)
    q = sol.momentum[..., None, :] * np.exp(lam * s)[:, None]
    v = model.kinetic.grad_inv(None, q)
    lv = model.kinetic.value(None, v)
    A = lv @ (w * np.exp(-lam * s))
    return A, np.exp(lam * t) * A


def _single_delta(delta):
    arr = np.atleast_1d(np.asarray(delta, dtype=float))
    if arr.ndim != 1:
        raise KernelError("expected one displacement (scalar or length-d vector)")
    return arr[None, :]


def kernel_action(t: float, delta, model: LagrangianModel) -> float:
    """A(t, delta) = int_0^t e^{-lam s} l(xi'(s)) ds along the minimiser."""
    return float(_minimiser_integrals(t, _single_delta(delta), model)[0][0])


def kernel_shooting(t: float, delta, model: LagrangianModel) -> float:
    """D(t, delta) = e^{lam t} A(t, delta) via shooting + 32-node Gauss-Legendre."""
    return float(_minimiser_integrals(t, _single_delta(delta), model)[1][0])


def kernel_shooting_batch(t: float, deltas, model: LagrangianModel) -> np.ndarray:
    """Vectorised ``kernel_shooting`` over displacements of shape (M, d)."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 2:
        raise KernelError("batch displacements must have shape (M, d)")
    return _minimiser_integrals(t, deltas, model)[1]


def terminal_velocity(t: float, delta, model: LagrangianModel):
    sol = solve_momentum(t, _single_delta(delta), model)
    return sol.velocity(model, np.array(t))[0], sol.momentum[0] * np.exp(model.lam * t)


# --------------------------------------------------------------------------
# dynamic-programming oracle


@dataclass
class DPResult:
    value: float
    path: np.ndarray
    passes: int
    touched_boundary_first_pass: bool
    history: list = field(default_factory=list)


def kernel_brute_force(
    t: float,
    delta,
    model: LagrangianModel,
    time_steps: int = 200,
    position_levels: int = 201,
    passes: int = 10,
    shrink: float = 0.4,
    budget: float = 5e8,
    return_path: bool = False,
):
    """Minimal discretised action over piecewise-linear paths by dynamic programming.

    The path starts at 0 and ends at ``delta`` after ``time_steps`` equal
    steps; each interior breakpoint takes one of ``position_levels`` levels
    per axis.  Step i costs e^{lam (t - s_mid)} l(dx / tau) tau.

    The first pass spans the lifted segment +/- 0.5 per axis.  A fixed
    lattice spacing ``s`` leaves an error of order s^2/tau per lattice jump,
    so later passes re-centre a window of ``position_levels`` levels on
    the previous optimum with half-width multiplied by ``shrink``.  With an
    odd level count the previous path stays on the lattice, so each pass is
    no worse than the last.
    """
    _check_time(t)
    _require_x_independent(model)
    N, P = int(time_steps), int(position_levels)
    if N < 2 or P < 3:
        raise KernelError("need time_steps >= 2 and position_levels >= 3")
    if P % 2 == 0:
        P += 1
    delta = _as_delta(delta, None).reshape(-1)
    d = delta.size
    work = N * float(P) ** (2 * d)
    if work > budget:
        raise ResourceGuardError(f"DP work N*P^(2d) = {work:.3g} exceeds budget {budget:.3g}")
    lam = model.lam
    tau = t / N
    weights = np.exp(lam * (t - (np.arange(N) + 0.5) * tau)) * tau
    kin = model.kinetic

    lo = np.minimum(0.0, delta) - 0.5
    hi = np.maximum(0.0, delta) + 0.5
    axes = [np.linspace(lo[k], hi[k], P) for k in range(d)]
    lattice = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    levels = np.broadcast_to(lattice, (N - 1,) + lattice.shape).copy()
    half = 0.5 * (hi - lo)

    history = []
    touched = False
    best_path = None
    for pass_no in range(passes):
        value, path, idx = _dp_pass(levels, delta, weights, tau, kin)
        interior = _interior(idx, P, d)
        if pass_no == 0:
            touched = not interior
        history.append(value)
        best_path = path
        if pass_no + 1 == passes:
            break
        if interior:
            half = half * shrink
        offsets = [np.linspace(-half[k], half[k], P) for k in range(d)]
        grid = np.stack([m.ravel() for m in np.meshgrid(*offsets, indexing="ij")], axis=-1)
        levels = path[1:-1, None, :] + grid[None, :, :]
    if return_path:
        return DPResult(history[-1], best_path, len(history), touched, history)
    return history[-1]


def _interior(idx, P, d):
    sub = np.stack(np.unravel_index(idx, (P,) * d), axis=-1)
    return bool(np.all((sub > 0) & (sub < P - 1)))


def _dp_pass(levels, delta, weights, tau, kin):
    N = len(weights)
    start = np.zeros_like(delta)
    # value of reaching each level of breakpoint 1
    V = weights[0] * kin.value(None, (levels[0] - start) / tau)
    back = []
    for i in range(1, N - 1):
        step = (levels[i][None, :, :] - levels[i - 1][:, None, :]) / tau
        total = V[:, None] + weights[i] * kin.value(None, step)
        arg = np.argmin(total, axis=0)
        back.append(arg)
        V = total[arg, np.arange(total.shape[1])]
    final = V + weights[N - 1] * kin.value(None, (delta[None, :] - levels[N - 2]) / tau)
    j = int(np.argmin(final))
    value = float(final[j])
    idx = [j]
    for arg in reversed(back):
        j = int(arg[j])
        idx.append(j)
    idx = idx[::-1]
    path = np.vstack([start, levels[np.arange(N - 1), idx], delta])
    return value, path, np.asarray(idx)


# --------------------------------------------------------------------------
# Lipschitz constants


@dataclass(frozen=True)
class LipschitzConstants:
    K0: float
    K1: float
    t_min: float = 1.0
    t_max: float = 1.0
    terminal_speed_monotone: bool = True


def lipschitz_constants(model: LagrangianModel, t_max: float = 8.0, d: int = 1) -> LipschitzConstants:
    """Certified K_0 (terminal momentum) and K_1 (speed) over t in [1, t_max].

    Times are sampled log-uniformly (64 samples), displacements on the box
    [-1/2, 1/2]^d which contains every minimal lift.  K_1 takes the larger
    of the initial and terminal speed, since |xi'| is monotone along a
    minimiser; for lam > 0 that is the terminal one.
    """
    _require_x_independent(model)
    if t_max < 1:
        raise KernelError("t_max must be >= 1")
    ts = np.geomspace(1.0, t_max, 64) if t_max > 1 else np.array([1.0])
    per_axis = 65 if d == 1 else 17
    axis = np.linspace(-0.5, 0.5, per_axis)
    box = np.stack([m.ravel() for m in np.meshgrid(*([axis] * d), indexing="ij")], axis=-1)
    K0 = 0.0
    K1 = 0.0
    speeds = []
    for t in ts:
        sol = solve_momentum(t, box, model)
        v_end = sol.velocity(model, np.array(t))
        v_start = sol.velocity(model, np.array(0.0))
        mom_end = sol.momentum * np.exp(model.lam * t)
        K0 = max(K0, float(np.max(np.linalg.norm(mom_end, axis=-1))))
        spd = float(np.max(np.linalg.norm(v_end, axis=-1)))
        K1 = max(K1, spd, float(np.max(np.linalg.norm(v_start, axis=-1))))
        speeds.append(spd)
    monotone = bool(np.all(np.diff(speeds) <= 1e-12 * max(speeds)))
    return LipschitzConstants(K0, K1, 1.0, float(t_max), monotone)


# --------------------------------------------------------------------------
# tabulated kernel


@dataclass(frozen=True, eq=False)
class KernelTable:
    """rho_t at every grid displacement, minimised over the {-1,0,1}^d lifts.

    ``rho`` is flat row-major over displacement indices (i_1, ..., i_d)
    meaning displacement (i_1/N, ..., i_d/N).  For d = 1, ``lifted`` holds
    the unwrapped kernel at j/N for j = -2N..2N, used by the monotone
    row-minima path.
    """

    t: float
    lam: float
    grid: Grid
    rho: np.ndarray
    K0: float
    lifted: np.ndarray | None = None
    model_info: dict = field(default_factory=dict)

    def lifted_at(self, j):
        return self.lifted[np.asarray(j) + 2 * self.grid.N]

    def to_csv(self) -> str:
        lines = ["displacement_index,rho"]
        lines += [f"{i},{float(r)!r}" for i, r in enumerate(self.rho)]
        return "\r\n".join(lines) + "\r\n"

    def metadata(self) -> dict:
        return {"t": self.t, "lambda": self.lam, "K0": self.K0, "d": self.grid.d, "N": self.grid.N}

    def write(self, csv_path, json_path=None) -> None:
        Path(csv_path).write_text(self.to_csv(), newline="")
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")


def kernel_values(t: float, deltas, model: LagrangianModel) -> np.ndarray:
    """D(t, delta) for an array of lifted displacements of shape (..., d)."""
    deltas = np.asarray(deltas, dtype=float)
    if isinstance(model.kinetic, QuadraticKinetic):
        return kernel_closed_form_quadratic(t, deltas, model.lam)
    shape = deltas.shape[:-1]
    flat = deltas.reshape(-1, deltas.shape[-1])
    if model.kinetic.separable:
        # D is a sum of one-dimensional kernels for separable l
        out = np.zeros(len(flat))
        for k in range(flat.shape[-1]):
            comp = flat[:, k]
            uniq, inv = np.unique(comp, return_inverse=True)
            vals = kernel_shooting_batch(t, uniq[:, None], model)
            out += vals[inv]
        return out.reshape(shape)
    return kernel_shooting_batch(t, flat, model).reshape(shape)


def build_kernel_table(t: float, model: LagrangianModel, grid: Grid, K0: float | None = None) -> KernelTable:
    _check_time(t)
    _require_x_independent(model)
    N, d = grid.N, grid.d
    lifted = None
    if d == 1:
        j = np.arange(-2 * N, 2 * N + 1)
        lifted = kernel_values(t, (j / N)[:, None], model)
        i = np.arange(N)
        rho = np.minimum(np.minimum(lifted[i + N], lifted[i + 2 * N]), lifted[i + 3 * N])
    else:
        idx = grid.indices()
        rho = np.full(grid.size, np.inf)
        for shift in itertools.product((-1, 0, 1), repeat=d):
            disp = idx / N + np.asarray(shift, dtype=float)
            rho = np.minimum(rho, kernel_values(t, disp, model))
    if K0 is None:
        K0 = lipschitz_constants(model, max(1.0, t), d).K0
    return KernelTable(t, model.lam, grid, rho, float(K0), lifted, model.describe())
