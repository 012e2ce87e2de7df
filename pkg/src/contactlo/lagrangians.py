"""Contact Lagrangians L(x, v, u) = l(x, v) + f(u).

A model couples a kinetic part ``l`` with a coupling ``f`` whose derivative
is declared to lie in ``[lambda_low, lambda_high]``; ``kappa`` bounds
``|L_u|``.  Bounds are declared and audited by sampling, never inferred.

Array conventions: positions ``x`` and velocities ``v`` carry the spatial
dimension on the last axis, so ``v`` of shape (..., d) evaluates to (...).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ModelError(ValueError):
    pass


class LegendreError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# kinetic parts


class Kinetic:
    """Base class for kinetic energies l(x, v).

    Separable kinetics are sums of one scalar function over the axes and
    expose ``scalar``/``scalar_grad``/``scalar_grad_inv``; the kernel
    module uses those for per-axis root finding.
    """

    name = "kinetic"
    x_independent = True
    separable = False
    even = True

    def value(self, x, v):
        raise NotImplementedError

    def grad(self, x, v):
        raise NotImplementedError

    def hess(self, x, v):
        """Hessian in v, shape (..., d, d); finite differences of ``grad`` by default."""
        v = np.asarray(v, dtype=float)
        d = v.shape[-1]
        step = 1e-6
        cols = []
        for k in range(d):
            e = np.zeros(d)
            e[k] = step
            cols.append((self.grad(x, v + e) - self.grad(x, v - e)) / (2 * step))
        return np.stack(cols, axis=-1)

    def grad_inv(self, x, q, max_iter: int = 100, tol: float = 1e-13):
        """Solve grad l(x, v) = q for v, batched over leading axes.

        Damped Newton on the concave objective q.v - l(x, v), started at
        v = q; a sample that fails to converge raises ``LegendreError``.
        """
        q = np.asarray(q, dtype=float)
        x = np.broadcast_to(np.asarray(x, dtype=float), q.shape)
        d = q.shape[-1]
        v = q.copy()
        obj = np.sum(q * v, axis=-1) - self.value(x, v)
        eye = np.eye(d)
        for _ in range(max_iter):
            r = q - self.grad(x, v)
            if np.all(np.linalg.norm(r, axis=-1) <= tol * (1.0 + np.linalg.norm(q, axis=-1))):
                return v
            H = self.hess(x, v) + 1e-12 * eye
            dv = np.linalg.solve(H, r[..., None])[..., 0]
            alpha = np.ones(q.shape[:-1])
            for _ in range(40):
                cand = v + alpha[..., None] * dv
                cobj = np.sum(q * cand, axis=-1) - self.value(x, cand)
                ok = cobj >= obj - 1e-15 * (1 + np.abs(obj))
                if ok.all():
                    break
                alpha = np.where(ok, alpha, 0.5 * alpha)
            v, obj = cand, cobj
        raise LegendreError(f"gradient inversion did not converge in {max_iter} iterations")

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"kind": self.name, **self.params()}


class SeparableKinetic(Kinetic):
    separable = True

    def scalar(self, v):
        raise NotImplementedError

    def scalar_grad(self, v):
        raise NotImplementedError

    def scalar_hess(self, v):
        raise NotImplementedError

    def scalar_grad_inv(self, q):
        raise NotImplementedError

    def value(self, x, v):
        return np.sum(self.scalar(np.asarray(v, dtype=float)), axis=-1)

    def grad(self, x, v):
        return self.scalar_grad(np.asarray(v, dtype=float))

    def hess(self, x, v):
        v = np.asarray(v, dtype=float)
        diag = self.scalar_hess(v)
        return diag[..., :, None] * np.eye(v.shape[-1])

    def grad_inv(self, x, q, **kwargs):
        return self.scalar_grad_inv(np.asarray(q, dtype=float))


class QuadraticKinetic(SeparableKinetic):
    name = "quadratic"

    def scalar(self, v):
        return 0.5 * v * v

    def scalar_grad(self, v):
        return np.asarray(v, dtype=float)

    def scalar_hess(self, v):
        return np.ones_like(v, dtype=float)

    def scalar_grad_inv(self, q):
        return np.asarray(q, dtype=float)


class QuarticKinetic(SeparableKinetic):
    """l(v) = sum_k v_k^4 / 4 (degenerate Hessian at the origin only)."""

    name = "quartic"

    def scalar(self, v):
        return 0.25 * v**4

    def scalar_grad(self, v):
        return v**3

    def scalar_hess(self, v):
        return 3.0 * v * v

    def scalar_grad_inv(self, q):
        return np.cbrt(q)


class CoshKinetic(SeparableKinetic):
    name = "cosh"

    def scalar(self, v):
        return np.cosh(v) - 1.0

    def scalar_grad(self, v):
        return np.sinh(v)

    def scalar_hess(self, v):
        return np.cosh(v)

    def scalar_grad_inv(self, q):
        return np.arcsinh(q)


class AbsKinetic(SeparableKinetic):
    """l(v) = sum_k |v_k|: convex but neither smooth nor strictly convex."""

    name = "abs"

    def scalar(self, v):
        return np.abs(v)

    def scalar_grad(self, v):
        return np.sign(v)

    def scalar_hess(self, v):
        return np.zeros_like(v, dtype=float)

    def scalar_grad_inv(self, q):
        raise ModelError("|v| has no invertible gradient")


@dataclass(frozen=True, eq=False)
class CustomKinetic(SeparableKinetic):
    """Separable kinetic from user callables acting elementwise."""

    fn: Callable = None
    grad_fn: Callable = None
    hess_fn: Callable | None = None
    grad_inv_fn: Callable | None = None
    label: str = "custom_v"
    even: bool = False
    name = "custom_v"

    def scalar(self, v):
        return self.fn(v)

    def scalar_grad(self, v):
        return self.grad_fn(v)

    def scalar_hess(self, v):
        if self.hess_fn is not None:
            return self.hess_fn(v)
        step = 1e-6
        return (self.grad_fn(v + step) - self.grad_fn(v - step)) / (2 * step)

    def scalar_grad_inv(self, q):
        if self.grad_inv_fn is not None:
            return self.grad_inv_fn(q)
        return _invert_monotone(self.grad_fn, np.asarray(q, dtype=float))

    def params(self):
        return {"label": self.label}


def _invert_monotone(g, q, iters=200):
    """Solve g(v) = q elementwise for increasing g by bracketing + bisection."""
    lo = -np.ones_like(q)
    hi = np.ones_like(q)
    for _ in range(200):
        bad = g(lo) > q
        if not bad.any():
            break
        lo = np.where(bad, 2 * lo, lo)
    for _ in range(200):
        bad = g(hi) < q
        if not bad.any():
            break
        hi = np.where(bad, 2 * hi, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = g(mid) < q
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return 0.5 * (lo + hi)


class RadialKinetic(Kinetic):
    """l(v) = |v|^2/2 + |v|^4/4, strictly convex and not separable for d = 2."""

    name = "radial"

    def value(self, x, v):
        r2 = np.sum(np.asarray(v, dtype=float) ** 2, axis=-1)
        return 0.5 * r2 + 0.25 * r2 * r2

    def grad(self, x, v):
        v = np.asarray(v, dtype=float)
        r2 = np.sum(v * v, axis=-1, keepdims=True)
        return (1.0 + r2) * v

    def hess(self, x, v):
        v = np.asarray(v, dtype=float)
        r2 = np.sum(v * v, axis=-1)[..., None, None]
        eye = np.eye(v.shape[-1])
        return (1.0 + r2) * eye + 2.0 * v[..., :, None] * v[..., None, :]


@dataclass(frozen=True, eq=False)
class TrigPotentialKinetic(Kinetic):
    """l(x, v) = |v|^2/2 + sum_j c_j (1 - cos(2 pi k_j . x)).

    ``coeffs`` is a table of (wave vector, amplitude) pairs; the potential
    term is nonnegative for nonnegative amplitudes, so l >= 0 = l(x, 0) on
    its minimum set.
    """

    coeffs: tuple = ()
    name = "trig_potential"
    x_independent = False

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for k, c in self.coeffs:
            k = np.broadcast_to(np.asarray(k, dtype=float), (x.shape[-1],))
            out = out + c * (1.0 - np.cos(2 * np.pi * (x @ k)))
        return out

    def value(self, x, v):
        v = np.asarray(v, dtype=float)
        return 0.5 * np.sum(v * v, axis=-1) + self.potential(x)

    def grad(self, x, v):
        return np.array(v, dtype=float)

    def hess(self, x, v):
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(np.eye(v.shape[-1]), v.shape + (v.shape[-1],)).copy()

    def params(self):
        return {"coeffs": [[list(np.atleast_1d(k).tolist()), c] for k, c in self.coeffs]}


# --------------------------------------------------------------------------
# couplings


class Coupling:
    name = "coupling"
    lambda_low: float
    lambda_high: float

    def value(self, u):
        raise NotImplementedError

    def deriv(self, u):
        raise NotImplementedError

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class LinearCoupling(Coupling):
    lam: float
    name = "linear"

    @property
    def lambda_low(self):
        return self.lam

    @property
    def lambda_high(self):
        return self.lam

    def value(self, u):
        return self.lam * np.asarray(u, dtype=float)

    def deriv(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.lam)

    def params(self):
        return {"lambda": self.lam}


@dataclass(frozen=True)
class SineCoupling(Coupling):
    """f(u) = lam * u + amp * sin(u), so lam - amp <= f' <= lam + amp."""

    lam: float
    amp: float
    name = "sine"

    def __post_init__(self):
        if self.amp < 0:
            raise ModelError("amp must be nonnegative")

    @property
    def lambda_low(self):
        return self.lam - self.amp

    @property
    def lambda_high(self):
        return self.lam + self.amp

    def value(self, u):
        u = np.asarray(u, dtype=float)
        return self.lam * u + self.amp * np.sin(u)

    def deriv(self, u):
        return self.lam + self.amp * np.cos(np.asarray(u, dtype=float))

    def params(self):
        return {"lambda": self.lam, "amp": self.amp}


@dataclass(frozen=True, eq=False)
class CustomCoupling(Coupling):
    fn: Callable
    deriv_fn: Callable
    lambda_low: float
    lambda_high: float
    name = "custom"

    def value(self, u):
        return self.fn(np.asarray(u, dtype=float))

    def deriv(self, u):
        return self.deriv_fn(np.asarray(u, dtype=float))


# --------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class Coercivity:
    """Superlinearity data (theta_0 description, c_0); metadata only."""

    theta0: str = "unspecified"
    c0: float = 0.0


@dataclass(frozen=True, eq=False)
class LagrangianModel:
    kinetic: Kinetic
    coupling: Coupling
    kappa: float | None = None
    coercivity: Coercivity | None = None
    preset: str | None = None
    preset_params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.coupling.lambda_low, self.coupling.lambda_high
        if lo > hi:
            raise ModelError(f"declared lambda_low={lo} exceeds upper bound {hi}")
        need = max(abs(lo), abs(hi))
        if self.kappa is None:
            object.__setattr__(self, "kappa", need)
        elif self.kappa < need:
            raise ModelError(f"kappa={self.kappa} is below max|f'| bound {need}")

    @property
    def lambda_low(self) -> float:
        return self.coupling.lambda_low

    @property
    def lambda_high(self) -> float:
        return self.coupling.lambda_high

    @property
    def lam(self) -> float:
        """Discount rate of a linear coupling."""
        if not isinstance(self.coupling, LinearCoupling):
            raise ModelError("discount rate is only defined for linear coupling")
        return self.coupling.lam

    @property
    def is_discounted(self) -> bool:
        return isinstance(self.coupling, LinearCoupling) and self.kinetic.x_independent

    def value(self, x, v, u):
        return self.kinetic.value(x, v) + self.coupling.value(u)

    def describe(self) -> dict:
        return {
            "preset": self.preset,
            "params": dict(self.preset_params),
            "kinetic": self.kinetic.describe(),
            "coupling": {"kind": self.coupling.name, **self.coupling.params()},
            "lambda_low": self.lambda_low,
            "lambda_high": self.lambda_high,
            "kappa": self.kappa,
        }


def lagrangian_value(model: LagrangianModel, x, v, u) -> float:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if not np.all(np.isfinite(v)):
        raise ModelError("velocity must be finite")
    x = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), v.shape)
    return float(model.value(x, v, u))


# --------------------------------------------------------------------------
# presets

PRESETS = {
    "quadratic_discounted": ("lambda",),
    "quartic_discounted": ("lambda",),
    "cosh_discounted": ("lambda",),
    "radial_discounted": ("lambda",),
    "nonlinear_u": ("lambda", "amp"),
    "trig_potential": ("lambda", "coeffs"),
}


def make_model(preset: str, **params) -> LagrangianModel:
    if preset not in PRESETS:
        raise ModelError(f"unknown model preset {preset!r}; known: {sorted(PRESETS)}")
    missing = [k for k in PRESETS[preset] if k not in params and k != "coeffs"]
    extra = [k for k in params if k not in PRESETS[preset]]
    if missing or extra:
        raise ModelError(f"preset {preset!r} takes {PRESETS[preset]}; missing {missing}, unexpected {extra}")
    lam = float(params["lambda"])
    if preset == "nonlinear_u":
        return LagrangianModel(
            QuadraticKinetic(),
            SineCoupling(lam, float(params["amp"])),
            preset=preset,
            preset_params=dict(params),
        )
    if preset == "trig_potential":
        table = tuple((tuple(np.atleast_1d(k).tolist()), float(c)) for k, c in params.get("coeffs", []))
        return LagrangianModel(
            TrigPotentialKinetic(table), LinearCoupling(lam), preset=preset, preset_params=dict(params)
        )
    kinetic = {
        "quadratic_discounted": QuadraticKinetic,
        "quartic_discounted": QuarticKinetic,
        "cosh_discounted": CoshKinetic,
        "radial_discounted": RadialKinetic,
    }[preset]()
    return LagrangianModel(kinetic, LinearCoupling(lam), preset=preset, preset_params=dict(params))


# --------------------------------------------------------------------------
# structure audit


@dataclass(frozen=True)
class StructureReport:
    min_hessian_eig: float
    hessian_witness: tuple
    lu_min: float
    lu_max: float
    lu_witness: float | None
    hessian_ok: bool
    lu_ok: bool
    sample_count: int

    @property
    def passed(self) -> bool:
        return self.hessian_ok and self.lu_ok


def validate_structure(
    model: LagrangianModel,
    sample_count: int = 256,
    velocity_box: float = 2.0,
    u_box: float = 5.0,
    rng_seed: int = 0,
    d: int = 1,
    tol: float = 1e-6,
) -> StructureReport:
    """Sample-based audit of strict convexity in v and of the declared L_u band.

    Hessians and f' are taken by central differences with step 1e-4.  The
    Hessian witness is the sample with the smallest eigenvalue; ties go to
    the sample of smallest speed.  Failures are reported, never raised.
    """
    if sample_count < 1:
        raise ModelError("sample_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    xs = rng.random((sample_count, d))
    vs = rng.uniform(-velocity_box, velocity_box, (sample_count, d))
    us = rng.uniform(-u_box, u_box, sample_count)
    step = 1e-4
    lk = model.kinetic

    eigs = np.empty(sample_count)
    for n in range(sample_count):
        H = np.empty((d, d))
        for a in range(d):
            for b in range(d):
                ea = np.zeros(d)
                eb = np.zeros(d)
                ea[a] = step
                eb[b] = step
                H[a, b] = (
                    lk.value(xs[n], vs[n] + ea + eb)
                    - lk.value(xs[n], vs[n] + ea - eb)
                    - lk.value(xs[n], vs[n] - ea + eb)
                    + lk.value(xs[n], vs[n] - ea - eb)
                ) / (4 * step * step)
        eigs[n] = np.linalg.eigvalsh(0.5 * (H + H.T))[0]
    emin = float(eigs.min())
    near = np.flatnonzero(eigs <= emin + 1e-12)
    w = near[np.argmin(np.linalg.norm(vs[near], axis=1))]

    f = model.coupling
    lu = (f.value(us + step) - f.value(us - step)) / (2 * step)
    lo_ok = lu >= model.lambda_low - tol
    hi_ok = lu <= model.lambda_high + tol
    bad = np.flatnonzero(~(lo_ok & hi_ok))
    return StructureReport(
        min_hessian_eig=emin,
        hessian_witness=tuple(float(c) for c in vs[w]),
        lu_min=float(lu.min()),
        lu_max=float(lu.max()),
        lu_witness=float(us[bad[0]]) if bad.size else None,
        hessian_ok=emin > 0,
        lu_ok=bad.size == 0,
        sample_count=sample_count,
    )


# --------------------------------------------------------------------------
# Legendre duality


def legendre_argmax(kinetic: Kinetic, x, p, max_iter: int = 100, tol: float = 1e-13):
    """Velocity v maximising p.v - l(x, v), i.e. the solution of grad l(v) = p."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    x = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), p.shape)
    if isinstance(kinetic, QuadraticKinetic):
        return p.copy()
    v = p.copy()
    obj = float(p @ v - kinetic.value(x, v))
    for it in range(max_iter):
        r = p - kinetic.grad(x, v)
        if np.linalg.norm(r) <= tol * (1.0 + np.linalg.norm(p)):
            return v
        H = kinetic.hess(x, v) + 1e-12 * np.eye(p.size)
        try:
            dv = np.linalg.solve(H, r)
        except np.linalg.LinAlgError:
            dv = r
        alpha = 1.0
        while alpha > 1e-12:
            cand = v + alpha * dv
            cobj = float(p @ cand - kinetic.value(x, cand))
            if cobj >= obj - 1e-15 * (1 + abs(obj)):
                break
            alpha *= 0.5
        v, obj = cand, cobj
    raise LegendreError(
        f"Legendre Newton did not converge in {max_iter} iterations: p={p.tolist()}, "
        f"v={v.tolist()}, residual={np.linalg.norm(p - kinetic.grad(x, v)):.3e}"
    )


def legendre_hamiltonian(model: LagrangianModel, x, p) -> float:
    """h(x, p) = sup_v {p.v - l(x, v)} by damped Newton."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if isinstance(model.kinetic, QuadraticKinetic):
        return float(0.5 * p @ p)
    x = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), p.shape)
    v = legendre_argmax(model.kinetic, x, p)
    return float(p @ v - model.kinetic.value(x, v))


def legendre_lagrangian(model: LagrangianModel, x, v, max_iter: int = 100, tol: float = 1e-12) -> float:
    """Reverse transform l(x, v) = sup_p {p.v - h(x, p)}, Newton in p.

    Uses only h, its gradient (the inner maximiser) and its Hessian
    (inverse of the inner Hessian); l itself enters only through h.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    x = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), v.shape)
    k = model.kinetic

    def objective(q):
        return float(q @ v - legendre_hamiltonian(model, x, q))

    p = v.copy()
    obj = objective(p)
    for _ in range(max_iter):
        vstar = legendre_argmax(k, x, p)
        r = v - vstar
        if np.linalg.norm(r) <= tol * (1.0 + np.linalg.norm(v)):
            return obj
        Hh = np.linalg.inv(k.hess(x, vstar) + 1e-12 * np.eye(v.size))
        step = np.linalg.solve(Hh, r)
        alpha = 1.0
        while alpha > 1e-12:
            cand = p + alpha * step
            cobj = objective(cand)
            if cobj >= obj - 1e-15 * (1 + abs(obj)):
                break
            alpha *= 0.5
        p, obj = cand, cobj
    raise LegendreError(f"reverse Legendre transform did not converge at v={v.tolist()}")
