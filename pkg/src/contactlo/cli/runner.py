"""Experiment orchestration: one function per experiment block."""

from __future__ import annotations

import hashlib
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from ..entropy import (
    build_theoretical_cover,
    cover_count_bound,
    exact_cover_count,
    exact_separated_count,
    fourier_family,
    greedy_cover_count,
    greedy_separated_count,
    level_set,
    lower_bound_count,
    mcshane_family,
    regular_net,
    shift_delta_step,
    shift_family,
    slope_fit,
    truncated_inequality_audit,
    verify_cover,
)
from ..entropy.families import Family
from ..evolution import (
    DiscountedEngine,
    EvolveSettings,
    InvariantViolation,
    contraction_audit,
    make_engine,
    make_trace,
    minplus_monotone,
    minplus_naive,
    semigroup_defect,
)
from ..extension import SampleSet, mcshane_extend
from ..geometry import Grid, GridFunction
from ..kernel import (
    build_kernel_table,
    kernel_brute_force,
    kernel_closed_form_quadratic,
    kernel_shooting,
    lipschitz_constants,
)
from ..lagrangians import make_model, validate_structure
from ..rng import stream
from .config import ExperimentConfig
from .plots import emit_plot


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(header, rows) -> str:
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    return "\r\n".join(lines) + "\r\n"


@dataclass
class RunManifest:
    config: dict
    versions: dict
    wall_clock: float
    started: str
    checksums: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


class Outputs:
    """Single owner of every file written by a run; records checksums."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        if name in self.files:
            raise RuntimeError(f"{name} written twice in one run")
        self.files.append(name)
        return self.root / name

    def text(self, name: str, text: str) -> None:
        self.path(name).write_text(text, newline="")

    def checksums(self) -> dict:
        return {n: hashlib.sha256((self.root / n).read_bytes()).hexdigest() for n in sorted(self.files)}


def initial_datum(source: str, amplitude: float, grid: Grid) -> GridFunction:
    if source == "sine":
        return grid.sample(lambda x: amplitude * np.sin(2 * np.pi * x[:, 0]))
    if source == "cosine":
        return grid.sample(lambda x: amplitude * np.cos(2 * np.pi * x[:, 0]))
    if source == "constant":
        return grid.constant(amplitude)
    if source == "zero":
        return grid.constant(0.0)
    phi = GridFunction.read_csv(source)
    if phi.grid != grid:
        raise ValueError(f"{source} holds a {phi.grid} function, configured grid is {grid}")
    return phi


def _setup(cfg: ExperimentConfig):
    model = make_model(cfg.model.preset, **cfg.model.params)
    grid = Grid(cfg.grid.d, cfg.grid.N)
    e = cfg.engine
    settings = EvolveSettings(tau=e.tau, n_sub=e.n_sub, v_max=e.v_max)
    engine = make_engine(e.kind, model, grid, settings, minplus=e.minplus)
    return model, grid, engine


# --------------------------------------------------------------------------
# experiments


def run_kernel(cfg, out: Outputs, threads: int) -> dict:
    model, grid, _ = _setup(cfg)
    b = cfg.block
    t, lam = float(b["t"]), cfg.lam
    rows = []
    for dx in b["delta"]:
        delta = np.zeros(grid.d)
        delta[0] = dx
        if b["method"] == "closed":
            if model.preset != "quadratic_discounted":
                raise ValueError("the closed form is only available for quadratic_discounted")
            val = float(kernel_closed_form_quadratic(t, delta, lam))
        elif b["method"] == "shoot":
            val = kernel_shooting(t, delta, model)
        else:
            val = kernel_brute_force(t, delta, model).value
        rows.append((dx, t, lam, b["method"], val))
    out.text("kernel_values.csv", csv_text(["delta", "t", "lambda", "method", "value"], rows))
    summary = {"values": len(rows)}
    if b["table"]:
        table = build_kernel_table(t, model, grid)
        table.write(out.path("kernel_table.csv"), out.path("kernel_table.json"))
        summary["K0"] = table.K0
    return summary


def run_evolve(cfg, out: Outputs, threads: int) -> dict:
    model, grid, engine = _setup(cfg)
    b = cfg.block
    n = int(round(b["t"] / b["tau"]))
    if n < 1 or abs(n * b["tau"] - b["t"]) > 1e-9 * b["t"]:
        raise ValueError(f"t={b['t']} is not a positive integer multiple of tau={b['tau']}")
    phi = initial_datum(b["phi"], b["amplitude"], grid)
    trace = make_trace(phi, b["tau"], n, engine)
    out.text("phi0.csv", phi.to_csv())
    names = []
    for k, frame in enumerate(trace.frames, start=1):
        name = f"frame_{k:03d}.csv"
        out.text(name, frame.to_csv())
        names.append(name)
    sums = {nm: hashlib.sha256((out.root / nm).read_bytes()).hexdigest() for nm in names}
    meta = {"tau": b["tau"], "n": n, "engine": engine.method, "model": model.describe(), "checksums": sums}
    out.text("evolve.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return {"frames": n, "final_sup": float(np.max(np.abs(trace.frames[-1].values)))}


def lower_bound_counts(engine, phi0: GridFunction, a: float, lam: float, eps: float, ts, method: str):
    """Counts on the shift family for one eps over the time ladder."""
    t_max = max(ts)
    fam = shift_family(phi0, a, shift_delta_step(eps, abs(lam), t_max, a)).materialize(engine, 1.0, t_max)
    counter = greedy_cover_count if method == "greedy" else greedy_separated_count
    return len(fam), [(t, counter(fam, eps, (1, t)).count) for t in ts]


def run_entropy_lower(cfg, out: Outputs, threads: int) -> dict:
    _, grid, engine = _setup(cfg)
    b = cfg.block
    lam = cfg.lam
    phi0 = initial_datum(b["phi"], b["amplitude"], grid)
    ts = sorted(int(t) for t in b["t"])
    eps_list = list(b["eps"])
    if isinstance(engine, DiscountedEngine):
        engine.table(1.0)  # settle K0 before threads share the cache
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda e: lower_bound_counts(engine, phi0, b["a"], lam, e, ts, b["method"]), eps_list))
    count_rows, slope_rows, lb_rows, series = [], [], [], {}
    for eps, (size, pts) in zip(eps_list, results):
        for t, c in pts:
            count_rows.append((eps, t, c, b["method"]))
            lb = lower_bound_count(phi0, b["a"], eps, t, lam)
            lb_rows.append((eps, t, lb.members, lb.displayed, lb.displayed_raw))
        est = slope_fit(pts, eps)
        slope_rows.append((eps, est.slope, est.intercept, est.max_residual, lam, est.degenerate, size))
        series[f"eps={eps:g}"] = ([p[0] for p in pts], [p[1] for p in pts])
    out.text("counts.csv", csv_text(["epsilon", "t", "count", "method"], count_rows))
    out.text("slopes.csv", csv_text(["epsilon", "slope", "intercept", "max_residual", "lambda", "degenerate", "family_size"], slope_rows))
    out.text("lower_bound.csv", csv_text(["epsilon", "t", "members", "displayed", "displayed_raw"], lb_rows))
    emit_plot(series, lam, out.path("entropy_lower.svg"), title="shift family counts")
    return {"slopes": {f"{r[0]:g}": r[1] for r in slope_rows}}


def run_entropy_upper(cfg, out: Outputs, threads: int) -> dict:
    model, grid, engine = _setup(cfg)
    b = cfg.block
    lam, eps, R = cfg.lam, b["eps"], b["R"]
    ns = sorted(int(n) for n in b["n"])
    K0 = lipschitz_constants(model, max(8.0, ns[-1]), grid.d).K0
    net = regular_net(eps, grid)
    if not net.ok:
        raise InvariantViolation(f"net covering radius {net.covering_radius} is not below eps")
    m = len(net.points)
    rows, pts = [], []
    for n in ns:
        k_max = int(math.floor(2 * R * math.exp(lam * n) / eps))
        size = (k_max + 1) * len(level_set(R, eps, n, 0, lam, K0)) ** m
        bound = cover_count_bound(R, eps, n, m, lam, K0)
        if size > bound:
            raise InvariantViolation(f"explicit family size {size} exceeds the bound {bound} at n={n}")
        rows.append((eps, n, size, "explicit"))
        pts.append((n, size))
    est = slope_fit(pts, eps)
    bounds = [(n, cover_count_bound(R, eps, n, m, lam, K0)) for n in ns]
    out.text("counts.csv", csv_text(["epsilon", "t", "count", "method"], rows))
    out.text("bounds.csv", csv_text(["epsilon", "n", "bound", "log_bound_over_n"], [(eps, n, bd, math.log(bd) / n) for n, bd in bounds]))
    out.text("slopes.csv", csv_text(["epsilon", "slope", "intercept", "max_residual", "lambda", "net_size", "K0"], [(eps, est.slope, est.intercept, est.max_residual, lam, m, K0)]))
    emit_plot({f"eps={eps:g}": (ns, [p[1] for p in pts])}, lam, out.path("entropy_upper.svg"), title="explicit cover size", xlabel="n")
    return {"slope": est.slope, "net_size": m}


def random_family(kind: str, grid: Grid, members: int, R: float, K0: float, seed: int) -> Family:
    if kind == "fourier":
        return fourier_family(grid, members, R, stream(seed, "cover-family"))
    return mcshane_family(grid, members, 5, K0, R, stream(seed, "cover-family"))


def run_cover(cfg, out: Outputs, threads: int) -> dict:
    model, grid, engine = _setup(cfg)
    if not isinstance(engine, DiscountedEngine):
        raise ValueError("the explicit cover needs the kernel engine")
    b = cfg.block
    lam, eps, R = cfg.lam, b["eps"], b["R"]
    ns = sorted(int(n) for n in b["n"])
    K0 = engine.K0
    V = random_family(b["family"], grid, b["members"], R, K0, cfg.seed)
    net = regular_net(eps, grid)
    rows, witness = [], {}
    for n in ns:
        tc = build_theoretical_cover(V, R, eps, n, net, lam, K0, engine)
        check = verify_cover(V.materialize(engine, 1.0, n), tc.centers, tc.radius, (1, n))
        rows.append((n, len(V), len(net.points), tc.family_size, tc.bound, float(tc.member_defects.max()), tc.radius, tc.pigeonhole_checks, tc.bound_ok, check.ok))
        witness[str(n)] = {
            "strata": list(tc.strata),
            "samples": [[_fmt(v) for v in row] for row in tc.sample_values],
            "assignment": {str(k): v for k, v in check.witness.items()},
            "counterexample": check.counterexample,
        }
        if not (check.ok and tc.bound_ok and tc.cover_ok):
            out.text("cover.csv", csv_text(COVER_HEADER, rows))
            raise InvariantViolation(f"explicit cover audit failed at n={n}: {check.counterexample}")
    out.text("cover.csv", csv_text(COVER_HEADER, rows))
    out.text("witness.json", json.dumps({"net": net.points.tolist(), "K0": K0, "frames": witness}, indent=2, sort_keys=True) + "\n")
    return {"n": ns, "verified": True}


COVER_HEADER = ["n", "members", "net_size", "family_size", "bound", "max_defect", "radius", "pigeonhole_checks", "bound_ok", "verified"]


def run_audit(cfg, out: Outputs, threads: int) -> dict:
    _, grid, engine = _setup(cfg)
    b = cfg.block
    rng = stream(cfg.seed, "audit")
    rows = []
    for c in range(b["configs"]):
        eps = float(rng.uniform(b["eps_min"], b["eps_max"]))
        k_max = int(rng.integers(1, b["k_max"] + 1))
        k0 = int(rng.integers(1, k_max + 1))
        fam = fourier_family(grid, b["members"], 0.3, rng).materialize(engine, 1.0, k_max)
        rep = truncated_inequality_audit(fam, k0, k_max, eps)
        lo = exact_cover_count(fam, eps, (1, k_max)).count
        sep = exact_separated_count(fam, eps, (1, k_max)).count
        hi = exact_cover_count(fam, eps / 2, (1, k_max)).count
        if not lo <= sep <= hi:
            raise InvariantViolation(f"cover/separated duality fails in config {c}: {lo}, {sep}, {hi}")
        rows.append((c, eps, k0, k_max, rep.g_t, rep.g_t0, rep.g_t0_t, rep.g_t_2eps, rep.monotone_ok, rep.product_ok, True))
    header = ["config", "epsilon", "k0", "k_max", "g_t", "g_t0", "g_t0_t", "g_t_2eps", "monotone_ok", "product_ok", "duality_ok"]
    out.text("audit.csv", csv_text(header, rows))
    return {"configs": len(rows)}


def validation_checks(cfg) -> list[tuple[str, bool, str]]:
    model, grid, engine = _setup(cfg)
    rng = stream(cfg.seed, "validate")
    checks = []
    rep = validate_structure(model, sample_count=cfg.block["samples"], rng_seed=int(rng.integers(2**31)), d=grid.d)
    checks.append(("structure", rep.passed, f"min_hessian_eig={rep.min_hessian_eig:.6g} lu=[{rep.lu_min:.6g},{rep.lu_max:.6g}]"))

    if model.preset == "quadratic_discounted":
        gap = max(abs(kernel_shooting(1.0, [dx] + [0.0] * (grid.d - 1), model) - float(kernel_closed_form_quadratic(1.0, np.array([dx] + [0.0] * (grid.d - 1)), cfg.lam))) for dx in (0.1, 0.3, 0.5))
        checks.append(("kernel_closed_vs_shooting", gap <= 1e-10, f"max_gap={gap:.3g}"))

    x = rng.normal(size=grid.size) * 0.1
    phi = GridFunction(grid, x)
    lin = model.is_discounted
    t = 1.0 if isinstance(engine, DiscountedEngine) else engine.settings.tau * max(1, round(1.0 / engine.settings.tau))
    if lin:
        const = engine.evolve(grid.constant(0.3), t).values
        want = 0.3 * math.exp(cfg.lam * t)
        tol = 1e-10 if isinstance(engine, DiscountedEngine) else 5e-3
        checks.append(("constant_law", bool(np.max(np.abs(const - want)) <= tol), f"err={np.max(np.abs(const - want)):.3g}"))
        shifted = engine.evolve(phi + 0.05, t).values - engine.evolve(phi, t).values
        err = float(np.max(np.abs(shifted - 0.05 * math.exp(cfg.lam * t))))
        checks.append(("constant_shift_law", err <= (1e-10 if isinstance(engine, DiscountedEngine) else 5e-3), f"err={err:.3g}"))
    bump = GridFunction(grid, x + np.abs(rng.normal(size=grid.size)) * 0.1)
    mono = bool(np.all(engine.evolve(phi, t).values <= engine.evolve(bump, t).values + 1e-12))
    checks.append(("monotonicity", mono, ""))
    try:
        ratio = contraction_audit(phi, bump, t, engine)
        checks.append(("contraction", True, f"ratio={ratio:.6g}"))
    except InvariantViolation as exc:
        checks.append(("contraction", False, str(exc)))
    if isinstance(engine, DiscountedEngine):
        sine = initial_datum("sine", 0.2, grid)
        dfc = semigroup_defect(sine, 1.0, 1.0, engine)
        checks.append(("semigroup_defect", dfc <= 10 * grid.h, f"defect={dfc:.3g}"))
        if grid.d == 1:
            tab = engine.table(1.0)
            same = np.array_equal(minplus_naive(x, math.exp(cfg.lam), tab), minplus_monotone(x, math.exp(cfg.lam), tab))
            checks.append(("minplus_paths_agree", bool(same), ""))
    pts = rng.random((5, grid.d))
    ss = SampleSet.from_samples(pts, rng.uniform(-0.2, 0.2, 5), 1.0)
    ext = mcshane_extend(ss, grid)
    again = mcshane_extend(SampleSet(grid.nodes(), ext.values, ss.K_psi), grid)
    checks.append(("mcshane_idempotent", bool(np.allclose(again.values, ext.values, atol=1e-12)), ""))
    return checks


def run_validate(cfg, out: Outputs, threads: int) -> dict:
    checks = validation_checks(cfg)
    out.text("validate.csv", csv_text(["check", "passed", "detail"], checks))
    failed = [c[0] for c in checks if not c[1]]
    if failed:
        raise InvariantViolation(f"validation failed: {failed}")
    return {"checks": len(checks)}


def run_bench(cfg, out: Outputs, threads: int) -> dict:
    b = cfg.block
    model = make_model(cfg.model.preset, **cfg.model.params)
    rng = stream(cfg.seed or 0, "bench")
    rows = []
    for N in b["sizes"]:
        grid = Grid(1, int(N))
        table = build_kernel_table(1.0, model, grid)
        vals = rng.normal(size=grid.size)
        scale = math.exp(cfg.lam)
        res = {}
        for name, fn in (("naive", minplus_naive), ("monotone", minplus_monotone)):
            best = math.inf
            for _ in range(b["repeats"]):
                t0 = time.perf_counter()
                res[name] = fn(vals, scale, table)
                best = min(best, time.perf_counter() - t0)
            rows.append((N, name, best))
        if not np.array_equal(res["naive"], res["monotone"]):
            raise InvariantViolation(f"min-plus paths disagree at N={N}")
    out.text("bench.csv", csv_text(["N", "method", "seconds"], rows))
    return {"sizes": list(b["sizes"])}


RUNNERS = {
    "kernel": run_kernel,
    "evolve": run_evolve,
    "entropy-lower": run_entropy_lower,
    "entropy-upper": run_entropy_upper,
    "cover": run_cover,
    "audit": run_audit,
    "validate": run_validate,
    "bench": run_bench,
}


def versions() -> dict:
    import matplotlib

    return {"contactlo": __version__, "numpy": np.__version__, "matplotlib": matplotlib.__version__, "python": platform.python_version()}


def run(cfg: ExperimentConfig, threads: int = 1) -> RunManifest:
    """Execute the configured block, write its artifacts and the manifest."""
    out = Outputs(cfg.output)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        summary = RUNNERS[cfg.experiment](cfg, out, threads)
    finally:
        manifest = RunManifest(cfg.to_dict(), versions(), round(time.perf_counter() - t0, 3), started, out.checksums())
        (out.root / "manifest.json").write_text(manifest.to_json())
    manifest.summary = summary
    (out.root / "manifest.json").write_text(manifest.to_json())
    return manifest
