"""Experiment configuration: TOML or JSON in, validated dataclasses out.

Every violation is collected before reporting; unknown keys are errors and
come with the closest valid spelling.
"""

from __future__ import annotations

import difflib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli

from ..lagrangians import PRESETS

EXPERIMENTS = ("kernel", "evolve", "entropy-lower", "entropy-upper", "cover", "audit", "validate", "bench")
RANDOMIZED = ("cover", "audit", "validate")
NEEDS_POSITIVE_LAMBDA = ("entropy-lower", "entropy-upper", "cover")


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


# --------------------------------------------------------------------------
# schema helpers


def _num(lo=-math.inf, hi=math.inf, lo_open=False, integer=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return "must be a number"
        if integer and int(v) != v:
            return "must be an integer"
        if not math.isfinite(v):
            return "must be finite"
        if (v <= lo if lo_open else v < lo) or v > hi:
            left = "(" if lo_open else "["
            return f"must lie in {left}{lo}, {hi}]"
        return None

    return check


def _choice(*options):
    def check(v):
        return None if v in options else f"must be one of {list(options)}"

    return check


def _list_of(inner, min_len=1):
    def check(v):
        if not isinstance(v, list) or len(v) < min_len:
            return f"must be a list with at least {min_len} entries"
        for x in v:
            msg = inner(x)
            if msg:
                return f"entry {x!r} {msg}"
        return None

    return check


def _text(v):
    return None if isinstance(v, str) and v else "must be a non-empty string"


def _flag(v):
    return None if isinstance(v, bool) else "must be true or false"


def _optional(inner):
    return lambda v: None if v is None else inner(v)


@dataclass
class ModelConfig:
    preset: str = "quadratic_discounted"
    params: dict = field(default_factory=lambda: {"lambda": 0.5})


@dataclass
class GridConfig:
    d: int = 1
    N: int = 128


@dataclass
class EngineConfig:
    kind: str = "kernel"
    tau: float = 0.05
    n_sub: int = 8
    v_max: float | None = None
    minplus: str = "naive"


BLOCKS = {
    "kernel": {
        "t": (1.0, _num(0, 64, lo_open=True)),
        "delta": ([0.1, 0.2, 0.3, 0.4, 0.5], _list_of(_num(-0.5, 0.5))),
        "method": ("shoot", _choice("closed", "shoot", "dp")),
        "table": (True, _flag),
    },
    "evolve": {
        "phi": ("sine", _text),
        "amplitude": (0.2, _num(0, 100)),
        "t": (2.0, _num(0, 64, lo_open=True)),
        "tau": (1.0, _num(0, 64, lo_open=True)),
    },
    "entropy-lower": {
        "a": (1.0, _num(0, 100, lo_open=True)),
        "eps": ([0.1, 0.05], _list_of(_num(0, 10, lo_open=True))),
        "t": ([2, 3, 4, 5, 6], _list_of(_num(1, 64, integer=True), min_len=4)),
        "phi": ("sine", _text),
        "amplitude": (0.2, _num(0, 100)),
        "method": ("greedy", _choice("greedy", "separated")),
    },
    "entropy-upper": {
        "R": (1.0, _num(0, 100, lo_open=True)),
        "eps": (0.1, _num(0, 1, lo_open=True)),
        "n": ([2, 3, 4, 5], _list_of(_num(1, 32, integer=True), min_len=4)),
    },
    "cover": {
        "R": (1.0, _num(0, 100, lo_open=True)),
        "eps": (0.1, _num(0, 1, lo_open=True)),
        "n": ([2, 3, 4], _list_of(_num(1, 32, integer=True))),
        "members": (10, _num(1, 1000, integer=True)),
        "family": ("fourier", _choice("fourier", "mcshane")),
    },
    "audit": {
        "configs": (20, _num(1, 1000, integer=True)),
        "members": (10, _num(1, 20, integer=True)),
        "eps_min": (0.02, _num(0, 10, lo_open=True)),
        "eps_max": (0.2, _num(0, 10, lo_open=True)),
        "k_max": (4, _num(1, 16, integer=True)),
    },
    "validate": {
        "samples": (256, _num(8, 100000, integer=True)),
    },
    "bench": {
        "sizes": ([256, 1024, 4096], _list_of(_num(4, 16384, integer=True))),
        "repeats": (3, _num(1, 100, integer=True)),
    },
}

TOP = {"experiment", "seed", "output", "model", "grid", "engine", *EXPERIMENTS}
GRID_KEYS = {"d": _choice(1, 2), "N": _num(4, 8192, integer=True)}
ENGINE_KEYS = {
    "kind": _choice("kernel", "semilag"),
    "tau": _num(0, 64, lo_open=True),
    "n_sub": _num(4, 4096, integer=True),
    "v_max": _optional(_num(0, 1e6, lo_open=True)),
    "minplus": _choice("naive", "monotone"),
}
PARAM_CHECKS = {
    "lambda": _num(-10, 10),
    "amp": _num(0, 10),
    "coeffs": _list_of(lambda v: None if isinstance(v, list) and len(v) == 2 else "must be a [k, c] pair", min_len=0),
}


@dataclass
class ExperimentConfig:
    experiment: str
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    block: dict = field(default_factory=dict)
    output: str = "out"
    seed: int | None = None

    @property
    def lam(self) -> float:
        return float(self.model.params["lambda"])

    def to_dict(self) -> dict:
        out = {"experiment": self.experiment, "output": self.output}
        if self.seed is not None:
            out["seed"] = self.seed
        out["model"] = {"preset": self.model.preset, **self.model.params}
        out["grid"] = asdict(self.grid)
        eng = asdict(self.engine)
        if eng["v_max"] is None:
            del eng["v_max"]
        out["engine"] = eng
        out[self.experiment] = dict(self.block)
        return out


def _unknown(key, valid, where):
    near = difflib.get_close_matches(key, sorted(valid), n=1, cutoff=0.5)
    hint = f"; did you mean {near[0]!r}?" if near else f"; valid keys: {sorted(valid)}"
    return f"unknown key {key!r} in {where}{hint}"


def _section(raw, name, checks, errors):
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        errors.append(f"[{name}] must be a table")
        return {}
    out = {}
    for k, v in sec.items():
        if k not in checks:
            errors.append(_unknown(k, checks, f"[{name}]"))
            continue
        msg = checks[k](v)
        if msg:
            errors.append(f"{name}.{k} = {v!r} {msg}")
        else:
            out[k] = v
    return out


def parse_dict(raw: dict) -> ExperimentConfig:
    errors: list[str] = []
    for k in raw:
        if k not in TOP:
            errors.append(_unknown(k, TOP, "the top level"))
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        errors.append(f"experiment = {experiment!r} must be one of {list(EXPERIMENTS)}")
        raise ConfigError(errors)

    seed = raw.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64):
        errors.append(f"seed = {seed!r} must be an unsigned 64-bit integer")
    if seed is None and experiment in RANDOMIZED:
        errors.append(f"experiment {experiment!r} draws random families and needs a seed")
    output = raw.get("output", "out")
    if _text(output):
        errors.append("output must be a non-empty path")

    model_raw = dict(raw.get("model", {}))
    preset = model_raw.pop("preset", "quadratic_discounted")
    params = {}
    if preset not in PRESETS:
        errors.append(_unknown(preset, PRESETS, "model.preset").replace("unknown key", "unknown preset"))
    else:
        allowed = PRESETS[preset]
        for k, v in model_raw.items():
            if k not in allowed:
                errors.append(_unknown(k, (*allowed, "preset"), "[model]"))
                continue
            msg = PARAM_CHECKS[k](v)
            if msg:
                errors.append(f"model.{k} = {v!r} {msg}")
            else:
                params[k] = v
        params.setdefault("lambda", 0.5)
        if "amp" in allowed:
            params.setdefault("amp", 0.1)
        lam = params.get("lambda")
        if experiment in NEEDS_POSITIVE_LAMBDA and isinstance(lam, (int, float)) and lam <= 0:
            errors.append(f"model.lambda = {lam} must be > 0 for {experiment!r} (the entropy bounds need a positive rate)")
        if preset == "nonlinear_u" and experiment == "entropy-lower" and params.get("amp", 0) >= (lam or 0):
            errors.append("nonlinear_u needs amp < lambda so that the coupling derivative stays positive")

    grid = _section(raw, "grid", GRID_KEYS, errors)
    engine = _section(raw, "engine", ENGINE_KEYS, errors)
    schema = BLOCKS[experiment]
    block_raw = _section(raw, experiment, {k: c for k, (_, c) in schema.items()}, errors)
    block = {k: block_raw.get(k, default) for k, (default, _) in schema.items()}
    if experiment == "audit" and block["eps_min"] > block["eps_max"]:
        errors.append("audit.eps_min must not exceed audit.eps_max")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        experiment=experiment,
        model=ModelConfig(preset, params),
        grid=GridConfig(**{**asdict(GridConfig()), **grid}),
        engine=EngineConfig(**{**asdict(EngineConfig()), **engine}),
        block=block,
        output=output,
        seed=seed,
    )


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file {str(p)!r} does not exist"])
    text = p.read_text()
    try:
        raw = json.loads(text) if p.suffix == ".json" else tomli.loads(text)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError([f"cannot parse {p.name}: {exc}"]) from exc
    return parse_dict(raw)
