"""
Experiment configuration files
==============================

JSON documents with a versioned ``schema`` field and up to five sections:

``experiment``
    Monte Carlo system identification (``krsl run``).
``outlier_sweep``
    Optional grid over outlier variance and probability, run after the
    experiment.
``theory``
    A list of steady-state / transient prediction cases (``krsl theory``).
``surface``
    Performance-surface grids (``krsl surface``).
``bounds``
    Scalar robustness bounds and their randomized validation (``krsl bounds``).

Unknown keys are rejected everywhere, and every error names the offending
field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .batch_solver import RobustnessScenario
from .exceptions import ConfigError, InapplicableRegimeError, KrslError
from .harness import AlgorithmSpec, ExperimentConfig, INPUT_STRUCTURES
from .noise import MixtureOutliers, noise_from_dict
from .similarity import KrslParams
from .theory import TheoryConfig

SCHEMA = "krsl-config/1"
SECTIONS = ("experiment", "outlier_sweep", "theory", "surface", "bounds")
PRESET_PREFIX = "preset:"


def _object(value, path, required=(), optional=()):
    if not isinstance(value, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(value).__name__}")
    unknown = set(value) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {sorted(unknown)}")
    missing = [k for k in required if k not in value]
    if missing:
        raise ConfigError(f"{path or 'config'}: missing required key(s) {missing}")
    return value


def _number(value, path, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if integer and not (isinstance(value, int) or float(value).is_integer()):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{path}: must be finite")
    if positive and not value > 0:
        raise ConfigError(f"{path}: must be positive, got {value!r}")
    return int(value) if integer else float(value)


def _vector(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a non-empty list of numbers")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _bool(value, path):
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true or false, got {value!r}")
    return value


def _noise(value, path):
    try:
        return noise_from_dict(value)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except (ValueError, KrslError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _krsl_params(value, path):
    _object(value, path, required=("sigma", "lam"))
    try:
        return KrslParams(_number(value["sigma"], f"{path}.sigma"), _number(value["lam"], f"{path}.lam"))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _guard(path, build):
    """Turn domain errors raised while building an object into configuration errors."""
    try:
        return build()
    except (ConfigError, InapplicableRegimeError):
        raise
    except (ValueError, TypeError, KrslError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# sections

@dataclass(frozen=True)
class ExperimentJob:
    config: ExperimentConfig
    compare_theory: tuple
    burn_in: int


def parse_experiment(d, path="experiment") -> ExperimentJob:
    _object(d, path, required=("true_weights", "noise", "algorithms", "iterations", "runs"),
            optional=("seed", "steady_state_window", "input", "input_structure", "record_emse",
                      "compare_theory", "burn_in"))
    algs = d["algorithms"]
    if not isinstance(algs, list) or not algs:
        raise ConfigError(f"{path}.algorithms: expected a non-empty list")
    roster = []
    for i, a in enumerate(algs):
        p = f"{path}.algorithms[{i}]"
        _object(a, p, required=("algo", "step_size"), optional=("params", "label"))
        params = a.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"{p}.params: expected an object")
        roster.append(_guard(p, lambda a=a, p=p, params=params: AlgorithmSpec(
            a["algo"], _number(a["step_size"], f"{p}.step_size", positive=True),
            {k: _number(v, f"{p}.params.{k}") for k, v in params.items()}, a.get("label", ""))))
    structure = d.get("input_structure", "tapped_delay")
    if structure not in INPUT_STRUCTURES:
        raise ConfigError(f"{path}.input_structure: must be one of {list(INPUT_STRUCTURES)}")
    iterations = _number(d["iterations"], f"{path}.iterations", positive=True, integer=True)
    cfg = _guard(path, lambda: ExperimentConfig(
        true_weights=_vector(d["true_weights"], f"{path}.true_weights"),
        noise=_noise(d["noise"], f"{path}.noise"),
        algorithms=tuple(roster),
        iterations=iterations,
        runs=_number(d["runs"], f"{path}.runs", positive=True, integer=True),
        seed=_number(d.get("seed", 0), f"{path}.seed", integer=True),
        steady_state_window=_number(d.get("steady_state_window", min(1000, iterations)),
                                    f"{path}.steady_state_window", positive=True, integer=True),
        input=_noise(d.get("input", {"kind": "gaussian", "variance": 1.0}), f"{path}.input"),
        input_structure=structure,
        record_emse=_bool(d.get("record_emse", True), f"{path}.record_emse"),
    ))
    compare = d.get("compare_theory", [])
    if not isinstance(compare, list) or not all(isinstance(c, str) for c in compare):
        raise ConfigError(f"{path}.compare_theory: expected a list of algorithm labels")
    labels = {a.label for a in cfg.algorithms}
    for c in compare:
        if c not in labels:
            raise ConfigError(f"{path}.compare_theory: no algorithm labelled {c!r}")
    burn_in = _number(d.get("burn_in", 100), f"{path}.burn_in", integer=True)
    if not 0 <= burn_in < cfg.iterations:
        raise ConfigError(f"{path}.burn_in: must lie in [0, iterations)")
    return ExperimentJob(cfg, tuple(compare), burn_in)


@dataclass(frozen=True)
class SweepJob:
    label: str | None
    outlier_variances: tuple
    probabilities: tuple


def parse_sweep(d, experiment: ExperimentJob, path="outlier_sweep") -> SweepJob:
    _object(d, path, required=("outlier_variances", "probabilities"), optional=("label",))
    if not isinstance(experiment.config.noise, MixtureOutliers):
        raise ConfigError(f"{path}: the experiment noise must be a mixture")
    sv = tuple(_number(v, f"{path}.outlier_variances[{i}]", positive=True)
               for i, v in enumerate(_vector(d["outlier_variances"], f"{path}.outlier_variances")))
    cs = tuple(_vector(d["probabilities"], f"{path}.probabilities"))
    for i, c in enumerate(cs):
        if not 0.0 <= c <= 1.0:
            raise ConfigError(f"{path}.probabilities[{i}]: must lie in [0, 1]")
    label = d.get("label")
    if label is not None and label not in {a.label for a in experiment.config.algorithms}:
        raise ConfigError(f"{path}.label: no algorithm labelled {label!r}")
    return SweepJob(label, sv, cs)


@dataclass(frozen=True)
class TheoryCase:
    """One prediction: MKRSL via the energy-conservation theory, or classical LMS."""

    name: str
    algo: str
    eta: float
    m: int
    input_variance: float
    noise: object
    params: KrslParams | None
    transient_iterations: int
    initial_wep: float
    exact: bool

    def theory_config(self) -> TheoryConfig:
        return TheoryConfig(self.params, self.eta, m=self.m, input_variance=self.input_variance, noise=self.noise)


def parse_theory(cases, path="theory") -> list[TheoryCase]:
    if not isinstance(cases, list) or not cases:
        raise ConfigError(f"{path}: expected a non-empty list of cases")
    out, names = [], set()
    for i, d in enumerate(cases):
        p = f"{path}[{i}]"
        _object(d, p, required=("name", "eta"),
                optional=("algo", "params", "m", "input_variance", "noise", "transient", "exact"))
        name = d["name"]
        if not isinstance(name, str) or not name or name in names:
            raise ConfigError(f"{p}.name: expected a unique non-empty string")
        names.add(name)
        algo = d.get("algo", "mkrsl")
        if algo not in ("mkrsl", "lms"):
            raise ConfigError(f"{p}.algo: theory covers 'mkrsl' and 'lms', got {algo!r}")
        if algo == "mkrsl":
            if "params" not in d:
                raise ConfigError(f"{p}: missing required key(s) ['params']")
            params = _krsl_params(d["params"], f"{p}.params")
        else:
            if "params" in d:
                raise ConfigError(f"{p}.params: LMS takes no parameters")
            params = None
        noise = _noise(d.get("noise", {"kind": "gaussian", "variance": 1.0}), f"{p}.noise")
        if algo == "lms" and not math.isfinite(noise.variance):
            raise ConfigError(f"{p}.noise: classical LMS theory needs finite noise variance")
        transient = d.get("transient")
        n_tr, w_init = 0, math.nan
        if transient is not None:
            _object(transient, f"{p}.transient", required=("iterations", "initial_wep"))
            n_tr = _number(transient["iterations"], f"{p}.transient.iterations", positive=True, integer=True)
            w_init = _number(transient["initial_wep"], f"{p}.transient.initial_wep", positive=True)
        case = TheoryCase(
            name, algo,
            _number(d["eta"], f"{p}.eta", positive=True),
            _number(d.get("m", 20), f"{p}.m", positive=True, integer=True),
            _number(d.get("input_variance", 1.0), f"{p}.input_variance", positive=True),
            noise, params, n_tr, w_init,
            _bool(d.get("exact", True), f"{p}.exact"),
        )
        if algo == "mkrsl":
            _guard(p, case.theory_config)
        out.append(case)
    return out


@dataclass(frozen=True)
class SurfaceJob:
    true_weights: tuple
    params: KrslParams
    samples: int
    seed: int
    input: object
    noise: object
    grid: tuple
    closs: bool


def parse_surface(d, path="surface") -> SurfaceJob:
    _object(d, path, required=("true_weights", "params", "samples", "grid"),
            optional=("seed", "input", "noise", "closs"))
    w0 = tuple(_vector(d["true_weights"], f"{path}.true_weights"))
    if len(w0) not in (1, 2):
        raise ConfigError(f"{path}.true_weights: grid output supports m = 1 or 2, got m = {len(w0)}")
    grid = d["grid"]
    if not isinstance(grid, list) or len(grid) != len(w0):
        raise ConfigError(f"{path}.grid: expected one [lo, hi, steps] triple per weight")
    axes = []
    for i, g in enumerate(grid):
        p = f"{path}.grid[{i}]"
        if not isinstance(g, list) or len(g) != 3:
            raise ConfigError(f"{p}: expected [lo, hi, steps]")
        lo, hi = _number(g[0], f"{p}[0]"), _number(g[1], f"{p}[1]")
        steps = _number(g[2], f"{p}[2]", positive=True, integer=True)
        if not hi > lo or steps < 2:
            raise ConfigError(f"{p}: need lo < hi and at least 2 steps")
        axes.append((lo, hi, steps))
    return SurfaceJob(
        w0, _krsl_params(d["params"], f"{path}.params"),
        _number(d["samples"], f"{path}.samples", positive=True, integer=True),
        _number(d.get("seed", 0), f"{path}.seed", integer=True),
        _noise(d.get("input", {"kind": "gaussian", "variance": 1.0}), f"{path}.input"),
        _noise(d.get("noise", {"kind": "gaussian", "variance": 1.0}), f"{path}.noise"),
        tuple(axes),
        _bool(d.get("closs", True), f"{path}.closs"),
    )


@dataclass(frozen=True)
class BoundsJob:
    scenario: RobustnessScenario
    instances: int
    seed: int
    max_outlier: float
    random_parameters: bool


def parse_bounds(d, path="bounds") -> BoundsJob:
    """Parse the bounds section; an inapplicable scenario raises :class:`InapplicableRegimeError`."""
    _object(d, path, required=("N", "M", "lam", "sigma", "eps_v", "c"), optional=("validation",))
    params = _krsl_params({"sigma": d["sigma"], "lam": d["lam"]}, path)
    N = _number(d["N"], f"{path}.N", positive=True, integer=True)
    M = _number(d["M"], f"{path}.M", positive=True, integer=True)
    eps = _number(d["eps_v"], f"{path}.eps_v", positive=True)
    c = _number(d["c"], f"{path}.c", positive=True)
    scenario = RobustnessScenario(N, M, eps, c, params)
    v = d.get("validation")
    if v is None:
        return BoundsJob(scenario, 0, 0, 1e6, False)
    p = f"{path}.validation"
    _object(v, p, required=("instances",), optional=("seed", "max_outlier", "random_parameters"))
    return BoundsJob(
        scenario,
        _number(v["instances"], f"{p}.instances", positive=True, integer=True),
        _number(v.get("seed", 0), f"{p}.seed", integer=True),
        _number(v.get("max_outlier", 1e6), f"{p}.max_outlier", positive=True),
        _bool(v.get("random_parameters", False), f"{p}.random_parameters"),
    )


# ---------------------------------------------------------------------------
# documents

def preset_names() -> list[str]:
    root = resources.files("krsl") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def read_config_text(source: str) -> tuple[str, str]:
    """Return ``(text, display_name)`` for a file path or ``preset:NAME``."""
    if source.startswith(PRESET_PREFIX):
        name = source[len(PRESET_PREFIX):]
        if name not in preset_names():
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
        return (resources.files("krsl") / "presets" / f"{name}.json").read_text(encoding="utf-8"), source
    path = Path(source)
    try:
        return path.read_text(encoding="utf-8"), str(path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None


def load_document(source: str) -> dict:
    """Read and structurally validate a configuration document."""
    text, name = read_config_text(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    _object(doc, "", required=("schema",), optional=("description",) + SECTIONS)
    if doc["schema"] != SCHEMA:
        raise ConfigError(f"schema: expected {SCHEMA!r}, got {doc['schema']!r}")
    return doc


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
