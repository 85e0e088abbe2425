"""Run configuration files.

A config is TOML with three tables besides the top-level keys::

    experiment = "solve"
    output_dir = "out/kerr"
    emit_fields = false
    threads = 1

    [problem]
    potential = "constant"
    potential_params = [1.0]
    nonlinearity = "kerr"
    nonlinearity_params = [1.0]
    epsilon = 1.0
    R_max = 16.0
    S_max = 32.0
    n_r = 128
    n_s = 256

    [solver]
    grad_tol = 1e-9

    [params]
    eps = [0.5, 0.25]

Unknown keys anywhere are errors. ``[params]`` accepts only the keys of the
chosen experiment (see ``EXPERIMENT_PARAMS``).
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import ModelError, ProblemSpec, builtin_nonlinearity, builtin_potential
from .solver import SolverConfig

EXPERIMENTS = ("solve", "limit", "sweep", "decay", "compare", "continuity", "reconstruct", "cutoff")

# allowed [params] keys and their defaults, per experiment
EXPERIMENT_PARAMS: dict = {
    "solve": {},
    "limit": {"k": None},
    "sweep": {"eps": None, "warm_start": True, "decay_window": [8.0, 20.0]},
    "decay": {"window": [8.0, 20.0]},
    "compare": {"other_potential": None, "other_params": [], "tol_rel": 1e-6},
    "continuity": {"h": [0.2, 0.1, 0.05], "tol_rel": 1e-9},
    "reconstruct": {"n": [32, 64], "half_width": 3.0, "energy_half_width": None,
                    "order": 3, "vtk": False},
    "cutoff": {"R": [6.0, 10.0, 14.0], "k": None},
}

_TOP = {"experiment", "output_dir", "emit_fields", "threads", "problem", "solver", "params"}
_PROBLEM = {"potential", "potential_params", "nonlinearity", "nonlinearity_params",
            "epsilon", "R_max", "S_max", "n_r", "n_s"}
_SOLVER = {f.name for f in dataclasses.fields(SolverConfig)}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; the message names the key."""


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    problem: ProblemSpec
    solver: SolverConfig
    params: dict
    output_dir: str = "nehari-out"
    emit_fields: bool = False
    threads: int | None = None
    raw: dict = field(default_factory=dict, repr=False, compare=False)


def _check_keys(table: dict, allowed, where: str):
    for key in table:
        if key not in allowed:
            hint = f" in [{where}]" if where else ""
            raise ConfigError(f"unknown key '{key}'{hint}")


def _number(value, key, *, integer=False, positive=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"'{key}' must be positive, got {value!r}")
    return value


def _number_list(value, key, *, positive=True):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"'{key}' must be a nonempty list of numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"'{key}' must contain numbers, got {v!r}")
        if positive and not v > 0:
            raise ConfigError(f"'{key}' entries must be positive, got {v!r}")
        out.append(v)
    return out


def _problem(table: dict) -> ProblemSpec:
    _check_keys(table, _PROBLEM, "problem")
    for key in ("potential", "nonlinearity"):
        if key not in table:
            raise ConfigError(f"missing key '{key}' in [problem]")
    kw = {}
    for key in ("epsilon", "R_max", "S_max"):
        if key in table:
            kw[key] = float(_number(table[key], key))
    for key in ("n_r", "n_s"):
        if key in table:
            kw[key] = _number(table[key], key, integer=True)
    try:
        pot = builtin_potential(str(table["potential"]), table.get("potential_params", []))
    except ModelError as exc:
        raise ConfigError(f"'potential': {exc}") from exc
    try:
        nl = builtin_nonlinearity(str(table["nonlinearity"]), table.get("nonlinearity_params", []))
    except ModelError as exc:
        raise ConfigError(f"'nonlinearity': {exc}") from exc
    try:
        return ProblemSpec(pot, nl, **kw)
    except (ModelError, ValueError) as exc:
        raise ConfigError(f"[problem]: {exc}") from exc


def _solver(table: dict) -> SolverConfig:
    _check_keys(table, _SOLVER, "solver")
    defaults = SolverConfig()
    kw = {}
    for key, value in table.items():
        ref = getattr(defaults, key)
        if isinstance(ref, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"'{key}' must be true or false")
        elif isinstance(ref, int):
            _number(value, key, integer=True, positive=False)
        elif isinstance(ref, float):
            _number(value, key, positive=False)
            value = float(value)
        elif isinstance(ref, str) and not isinstance(value, str):
            raise ConfigError(f"'{key}' must be a string")
        kw[key] = value
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"[solver]: {exc}") from exc


def _params(experiment: str, table: dict) -> dict:
    allowed = EXPERIMENT_PARAMS[experiment]
    _check_keys(table, allowed, "params")
    p = {**allowed, **table}
    if experiment == "limit" and p["k"] is not None:
        p["k"] = [float(v) for v in _number_list(p["k"], "k")]
    elif experiment == "sweep":
        if p["eps"] is None:
            raise ConfigError("missing key 'eps' in [params] for the sweep experiment")
        p["eps"] = [float(v) for v in _number_list(p["eps"], "eps")]
        if any(b > a for a, b in zip(p["eps"], p["eps"][1:])):
            raise ConfigError("'eps' must be listed in descending order")
        p["decay_window"] = _window(p["decay_window"], "decay_window")
        if not isinstance(p["warm_start"], bool):
            raise ConfigError("'warm_start' must be true or false")
    elif experiment == "decay":
        p["window"] = _window(p["window"], "window")
    elif experiment == "compare":
        if p["other_potential"] is None:
            raise ConfigError("missing key 'other_potential' in [params] for the compare experiment")
        try:
            p["other"] = builtin_potential(str(p["other_potential"]), p["other_params"])
        except ModelError as exc:
            raise ConfigError(f"'other_potential': {exc}") from exc
        _number(p["tol_rel"], "tol_rel")
    elif experiment == "continuity":
        p["h"] = [float(v) for v in _number_list(p["h"], "h", positive=False)]
        _number(p["tol_rel"], "tol_rel")
    elif experiment == "reconstruct":
        p["n"] = [_number(v, "n", integer=True) for v in _number_list(p["n"], "n")]
        _number(p["half_width"], "half_width")
        if p["energy_half_width"] is not None:
            _number(p["energy_half_width"], "energy_half_width")
        if not isinstance(p["vtk"], bool):
            raise ConfigError("'vtk' must be true or false")
        if p["order"] not in (1, 3):
            raise ConfigError("'order' must be 1 or 3")
    elif experiment == "cutoff":
        p["R"] = [float(v) for v in _number_list(p["R"], "R")]
        if p["k"] is not None:
            _number(p["k"], "k")
    return p


def _window(value, key):
    w = [float(v) for v in _number_list(value, key)]
    if len(w) != 2 or not w[0] < w[1]:
        raise ConfigError(f"'{key}' must be [lo, hi] with lo < hi")
    return w


def parse_config(data: dict) -> RunConfig:
    """Validate a decoded config table."""
    _check_keys(data, _TOP, "")
    experiment = data.get("experiment")
    if experiment is None:
        raise ConfigError("missing key 'experiment'")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"'experiment' must be one of {', '.join(EXPERIMENTS)}; got {experiment!r}")
    for key in ("problem", "solver", "params"):
        if key in data and not isinstance(data[key], dict):
            raise ConfigError(f"'{key}' must be a table")
    if "problem" not in data:
        raise ConfigError("missing table [problem]")
    threads = data.get("threads")
    if threads is not None:
        _number(threads, "threads", integer=True)
    emit = data.get("emit_fields", False)
    if not isinstance(emit, bool):
        raise ConfigError("'emit_fields' must be true or false")
    out = data.get("output_dir", "nehari-out")
    if not isinstance(out, str) or not out:
        raise ConfigError("'output_dir' must be a nonempty string")
    return RunConfig(
        experiment=experiment,
        problem=_problem(data["problem"]),
        solver=_solver(data.get("solver", {})),
        params=_params(experiment, data.get("params", {})),
        output_dir=out,
        emit_fields=emit,
        threads=threads,
        raw=data,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)


def config_echo(cfg: RunConfig) -> dict:
    """Fully resolved config, enough to reproduce the run."""
    prob = cfg.problem
    params = {k: v for k, v in cfg.params.items() if k != "other"}
    return {
        "experiment": cfg.experiment,
        "output_dir": cfg.output_dir,
        "emit_fields": cfg.emit_fields,
        "threads": cfg.threads,
        "problem": {
            "potential": prob.potential.name,
            "potential_params": list(prob.potential.params),
            "nonlinearity": prob.nonlinearity.name,
            "nonlinearity_params": list(prob.nonlinearity.params),
            "epsilon": prob.epsilon,
            "R_max": prob.R_max,
            "S_max": prob.S_max,
            "n_r": prob.n_r,
            "n_s": prob.n_s,
        },
        "solver": dataclasses.asdict(cfg.solver),
        "params": params,
    }


def resolve_threads(flag: int | None, cfg: RunConfig, environ) -> int:
    """Thread count: command-line flag, then config, then ``NEHARI_THREADS``, then 1."""
    if flag is not None:
        return max(1, int(flag))
    if cfg.threads is not None:
        return int(cfg.threads)
    env = environ.get("NEHARI_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"NEHARI_THREADS must be an integer, got {env!r}") from None
    return 1
