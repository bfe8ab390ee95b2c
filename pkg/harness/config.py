"""
Experiment configuration for hidden-vi
File: harness/config.py
JSON experiment files parsed with ujson and validated into dataclasses
before any run starts, plus per-run seed derivation and thread settings
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import ujson

from core.errors import ConfigError, HiddenVIError
from core.surrogate import AlphaRule, LStarMode
from operations.solvers import DGN, GD, GN, LM, AdamW, FixedSteps, InnerStrategy, StepKind

logger = logging.getLogger(__name__)

EXPERIMENT_NAMES = (
    "counterexample", "pennies", "rps", "pbe-linear",
    "pbe-nonlinear", "stochastic-audit", "quasi-fejer",
)
THREADS_ENV = "HIDDEN_VI_THREADS"
CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
MASK64 = (1 << 64) - 1


def derive_seed(master: int, index: int) -> int:
    """splitmix64 finalizer of master + index (mod 2^64)"""
    z = (master + index + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class MethodSpec:
    """One solver block: step kind, stopping rule and optional per-method overrides"""
    name: str
    step: StepKind
    stop: Union[FixedSteps, AlphaRule]
    eta: Optional[float] = None
    alpha: Optional[float] = None
    algorithm: Optional[str] = None

    @property
    def strategy(self) -> InnerStrategy:
        return InnerStrategy(self.step, self.stop)

    @property
    def inner_budget(self) -> int:
        return self.stop.m if isinstance(self.stop, FixedSteps) else self.stop.max_inner


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    seeds: int
    output_path: str
    eta: float
    alpha: float
    t_outer: int
    lstar_mode: LStarMode
    record_timing: bool
    methods: List[MethodSpec]
    stop_dist_sq: Optional[float] = None
    problem: Dict[str, Any] = field(default_factory=dict)
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)

    def run_seeds(self) -> List[int]:
        return [derive_seed(self.seed, i) for i in range(self.seeds)]

    def method_eta(self, method: MethodSpec) -> float:
        return self.eta if method.eta is None else method.eta

    def method_alpha(self, method: MethodSpec) -> float:
        return self.alpha if method.alpha is None else method.alpha


def _number(block: Dict[str, Any], key: str, default=None, kind=float):
    value = block.get(key, default)
    if value is None:
        raise ConfigError(f"missing required key '{key}'")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    if kind is int and float(value) != int(value):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    return kind(value)


def parse_step(block: Dict[str, Any]) -> StepKind:
    kind = str(block.get("kind", "")).lower()
    if kind == "gd":
        return GD(_number(block, "lr"))
    if kind == "gn":
        return GN(_number(block, "tol", 1e-12))
    if kind == "dgn":
        return DGN(_number(block, "eta_gn"), _number(block, "tol", 1e-12))
    if kind == "lm":
        return LM(_number(block, "lambda"))
    if kind == "adamw":
        return AdamW(
            lr=_number(block, "lr", 1e-3),
            beta1=_number(block, "beta1", 0.9),
            beta2=_number(block, "beta2", 0.999),
            eps=_number(block, "eps", 1e-8),
            weight_decay=_number(block, "weight_decay", 0.0),
            decay=_number(block, "decay", 1.0),
        )
    raise ConfigError(f"unknown solver kind {block.get('kind')!r}; expected gd, gn, dgn, lm or adamw")


def parse_stop(block: Optional[Dict[str, Any]], alpha: float, lstar_mode: LStarMode):
    """{"fixed": M} or {"alpha_rule": true, "max_inner": K}; absent means one fixed step"""
    if block is None:
        return FixedSteps(1)
    if "fixed" in block:
        return FixedSteps(_number(block, "fixed", kind=int))
    if block.get("alpha_rule"):
        return AlphaRule(alpha, lstar_mode, _number(block, "max_inner", 1000, kind=int))
    raise ConfigError(f"stop block {block!r} needs 'fixed' or 'alpha_rule'")


def parse_method(block: Dict[str, Any], index: int, alpha: float, lstar_mode: LStarMode) -> MethodSpec:
    if not isinstance(block, dict):
        raise ConfigError(f"method #{index} must be an object")
    method_alpha = block.get("alpha")
    if method_alpha is not None:
        method_alpha = _number(block, "alpha")
    step = parse_step(block)
    stop = parse_stop(block.get("stop"), alpha if method_alpha is None else method_alpha, lstar_mode)
    name = str(block.get("name") or f"{block.get('kind')}-{index}")
    eta = _number(block, "eta") if "eta" in block else None
    algorithm = block.get("algorithm")
    return MethodSpec(name, step, stop, eta, method_alpha, algorithm)


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate a decoded JSON object into an ExperimentConfig"""
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    experiment = data.get("experiment")
    if experiment not in EXPERIMENT_NAMES:
        raise ConfigError(f"unknown experiment {experiment!r}; choose one of {', '.join(EXPERIMENT_NAMES)}")
    try:
        lstar_mode = LStarMode.parse(data.get("lstar_mode", "zero"))
        alpha = _number(data, "alpha", 0.5)
        if not 0.0 <= alpha < 1.0:
            raise ConfigError(f"alpha must lie in [0,1), got {alpha}")
        blocks = data.get("methods")
        if blocks is None:
            blocks = [data["solver"]] if "solver" in data else []
        if not isinstance(blocks, list):
            raise ConfigError("'methods' must be a list")
        methods = [parse_method(b, i, alpha, lstar_mode) for i, b in enumerate(blocks)]
        names = [m.name for m in methods]
        if len(set(names)) != len(names):
            raise ConfigError(f"method names must be unique, got {names}")
        cfg = ExperimentConfig(
            experiment=experiment,
            seed=_number(data, "seed", 0, kind=int) & ((1 << 64) - 1),
            seeds=_number(data, "seeds", 1, kind=int),
            output_path=str(data.get("output_path", f"results/{experiment}")),
            eta=_number(data, "eta", 0.1),
            alpha=alpha,
            t_outer=_number(data, "t_outer", 100, kind=int),
            lstar_mode=lstar_mode,
            record_timing=bool(data.get("record_timing", False)),
            methods=methods,
            stop_dist_sq=_number(data, "stop_dist_sq") if data.get("stop_dist_sq") is not None else None,
            problem=dict(data.get("problem") or {}),
            raw=data,
        )
    except ConfigError:
        raise
    except (HiddenVIError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    if cfg.seeds < 1:
        raise ConfigError("seeds must be at least 1")
    if cfg.eta <= 0 or any(m.eta is not None and m.eta <= 0 for m in cfg.methods):
        raise ConfigError("every eta must be positive")
    if cfg.t_outer < 1:
        raise ConfigError("t_outer must be at least 1")
    if cfg.stop_dist_sq is not None and cfg.stop_dist_sq <= 0:
        raise ConfigError("stop_dist_sq must be positive")
    needs_methods = ("pennies", "rps", "pbe-nonlinear")
    if cfg.experiment in needs_methods and not cfg.methods:
        raise ConfigError(f"experiment '{cfg.experiment}' needs at least one method")
    if cfg.experiment == "rps" and cfg.lstar_mode is LStarMode.EXACT:
        raise ConfigError("rps models have no computable image; use lstar_mode 'zero'")
    if cfg.experiment == "pbe-nonlinear":
        for m in cfg.methods:
            if m.algorithm not in ("td0", "inner-loop", "double-sampling", "thresholded"):
                raise ConfigError(f"method '{m.name}' needs algorithm td0, inner-loop, double-sampling or thresholded")
            if m.algorithm == "td0" and not isinstance(m.step, GD):
                raise ConfigError(f"method '{m.name}': TD(0) runs plain gd steps")
    if cfg.experiment == "stochastic-audit":
        mu = float(cfg.problem.get("mu", 1.0))
        if cfg.alpha ** 2 >= cfg.eta * mu:
            raise ConfigError(f"alpha^2 = {cfg.alpha ** 2:g} must stay below eta*mu = {cfg.eta * mu:g}")


def _read_json(path: Path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return ujson.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def load_config(path: Union[str, Path], seed: Optional[int] = None, out: Optional[str] = None) -> ExperimentConfig:
    """Read, decode and validate a config file, then apply CLI overrides"""
    path = Path(path)
    data = _read_json(path)
    if isinstance(data, dict):
        if seed is not None:
            data["seed"] = seed
        if out is not None:
            data["output_path"] = out
    cfg = parse_config(data)
    logger.info("loaded %s: experiment=%s seeds=%d methods=%s", path, cfg.experiment, cfg.seeds,
                [m.name for m in cfg.methods])
    return cfg


def load_shipped(name: str, **overrides) -> ExperimentConfig:
    """configs/<name>.json with some top-level keys replaced, for reduced-scale checks"""
    data = _read_json(CONFIG_DIR / f"{name}.json")
    data.update(overrides)
    return parse_config(data)


def resolve_threads(cli_value: Optional[int]) -> int:
    """--threads wins, then HIDDEN_VI_THREADS, then a single thread"""
    if cli_value is not None:
        value = cli_value
    else:
        env = os.environ.get(THREADS_ENV)
        if env is None or env.strip() == "":
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if value < 1:
        raise ConfigError(f"thread count must be at least 1, got {value}")
    return value
