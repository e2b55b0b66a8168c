"""Experiment configuration: YAML parsing with line-aware validation."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import yaml

from .scenarios import OVERRIDE_KEYS, SCENARIOS, Scenario, get_scenario

EXPERIMENTS = ("policy", "sweep_nmax", "benchmark", "sensitivity_grid", "fading_campaign", "lut_resolution",
               "apc_case", "simulate")

TOP_LEVEL_KEYS = ("experiment", "scenario", "overrides", "seed", "output_path", "workers", "params")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None or line is not None:
            where = f"{source or '<config>'}:{line if line is not None else '?'}: "
        super().__init__(where + message)


# --- YAML with line numbers --------------------------------------------------

def _line_map(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        seen = set()
        for k, v in node.value:
            key = k.value
            if key in seen:
                raise ConfigError(f"duplicate key {'.'.join(map(str, path + (key,)))!r}", k.start_mark.line + 1)
            seen.add(key)
            out[path + (key,)] = k.start_mark.line + 1
            _line_map(v, path + (key,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


def parse_yaml(text: str, source: str | None = None) -> tuple[dict, dict]:
    """Parse a config document; returns (data, {key path: line})."""
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        if node is None:
            return {}, {}
        lines = _line_map(node)
        data = loader.construct_document(node)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None, source) from None
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.line, source) from None
    finally:
        loader.dispose()
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", 1, source)
    return data, lines


# --- value checks --------------------------------------------------------------

Check = Callable[[Any], Any]


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def real(v):
    if not _is_number(v):
        raise ValueError(f"expected a finite number, got {v!r}")
    return float(v)


def positive(v):
    v = real(v)
    if v <= 0:
        raise ValueError(f"must be positive, got {v!r}")
    return v


def nonnegative(v):
    v = real(v)
    if v < 0:
        raise ValueError(f"must be nonnegative, got {v!r}")
    return v


def pos_int(v):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ValueError(f"expected a positive integer, got {v!r}")
    return v


def opt(check: Check) -> Check:
    def inner(v):
        return None if v is None else check(v)
    return inner


def boolean(v):
    if not isinstance(v, bool):
        raise ValueError(f"expected true or false, got {v!r}")
    return v


def text(v):
    if not isinstance(v, str) or not v:
        raise ValueError(f"expected a non-empty string, got {v!r}")
    return v


def list_of(check: Check, nonempty: bool = True) -> Check:
    def inner(v):
        if not isinstance(v, list) or (nonempty and not v):
            raise ValueError(f"expected a {'non-empty ' if nonempty else ''}list, got {v!r}")
        return [check(x) for x in v]
    return inner


def scalar_or_list(check: Check) -> Check:
    def inner(v):
        return list_of(check)(v) if isinstance(v, list) else [check(v)]
    return inner


def choice(*options: str) -> Check:
    def inner(v):
        if v not in options:
            raise ValueError(f"expected one of {list(options)}, got {v!r}")
        return v
    return inner


_FADING = {
    "base_snr_db": (10.0, real),
    "shadow_sigma_db": (3.0, nonnegative),
    "fading_scale_db": (10.0, real),
    "fading": (True, boolean),
    "ul_dl_independent": (True, boolean),
}

PARAM_SCHEMAS: dict[str, dict[str, tuple[Any, Check]]] = {
    "policy": {
        "save_policy": (None, opt(text)),
        "policy_text": (None, opt(text)),
    },
    "sweep_nmax": {
        "n_max_min": (None, opt(pos_int)),
        "n_max_max": (None, opt(pos_int)),
        "n_max_step": (1, pos_int),
    },
    "benchmark": {
        "n_max_min": (None, opt(pos_int)),
        "n_max_max": (None, opt(pos_int)),
        "n_max_step": (10, pos_int),
    },
    "sensitivity_grid": {
        "snr_db_min": (-15.0, real),
        "snr_db_max": (-9.0, real),
        "snr_db_step": (1.0, positive),
        "packet_bits": ([16, 32, 64], list_of(pos_int)),
    },
    "fading_campaign": {
        **_FADING,
        "shadow_sigma_db": (3.0, scalar_or_list(nonnegative)),
        "fading_scale_db": (10.0, scalar_or_list(real)),
        "runs": (5000, pos_int),
        "strategies": (["optimal", "one_shot", "naive"], list_of(choice("optimal", "one_shot", "naive"))),
    },
    "lut_resolution": {
        **_FADING,
        "runs": (5000, pos_int),
        "steps_db": ([16.0, 8.0, 4.0, 2.0, 1.0], list_of(positive)),
        "save_lut": (None, opt(text)),
        "lut_text": (None, opt(text)),
    },
    "apc_case": {
        "n_max_values": ([1200, 1400, 1600, 1800], list_of(pos_int)),
        "power_levels": ([1.0, 1.25], list_of(positive)),
        "budget_kind": ("expected", choice("expected", "worst_case")),
        "energy_per_symbol": (4.0, positive),
        "cap_attempts": (True, boolean),
    },
    "simulate": {
        "frames": (1_000_000, pos_int),
        "source": ("optimal", choice("optimal", "naive", "one_shot")),
        "write_frames": (False, boolean),
    },
}

_OVERRIDE_CHECKS: dict[str, Check] = {
    "ul_snr_linear": positive, "dl_snr_linear": positive, "ul_snr_db": real, "dl_snr_db": real,
    "frame_time": positive, "symbol_time": positive, "feedback_time": nonnegative,
    "packet_bits": pos_int, "eps_max": positive, "n_max": pos_int,
}


@dataclass
class ExperimentConfig:
    experiment: str
    scenario: Scenario
    scenario_spec: Any = "scenario_a"
    overrides: dict = field(default_factory=dict)
    seed: int = 0
    output_path: str = "results"
    workers: int = 1
    params: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Complete config document (defaults filled in) that reproduces this run."""
        return {
            "experiment": self.experiment,
            "scenario": copy.deepcopy(self.scenario_spec),
            "overrides": dict(self.overrides),
            "seed": self.seed,
            "output_path": self.output_path,
            "workers": self.workers,
            "params": copy.deepcopy(self.params),
        }


def _set_path(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted!r}: {k!r} is not a mapping")
    node[keys[-1]] = value


def build_config(data: dict, lines: dict | None = None, source: str | None = None,
                 cli: dict | None = None) -> ExperimentConfig:
    """Validate a parsed document plus command-line overrides (dotted key -> value)."""
    data = copy.deepcopy(data)
    lines = lines or {}
    for key, value in (cli or {}).items():
        _set_path(data, key, value)

    def fail(msg, path=()):
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in lines:
                line = lines[path[:k]]
                break
        raise ConfigError(msg, line, source)

    for key in data:
        if key not in TOP_LEVEL_KEYS:
            fail(f"unknown key {key!r}; allowed: {list(TOP_LEVEL_KEYS)}", (key,))

    experiment = data.get("experiment")
    if experiment not in EXPERIMENTS:
        fail(f"experiment must be one of {list(EXPERIMENTS)}, got {experiment!r}", ("experiment",))

    def checked(path, value, check):
        try:
            return check(value)
        except ValueError as exc:
            fail(f"{'.'.join(map(str, path))}: {exc}", path)

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        fail(f"seed must be an integer in [0, 2^64), got {seed!r}", ("seed",))
    workers = checked(("workers",), data.get("workers", 1), pos_int)
    output_path = checked(("output_path",), data.get("output_path", "results"), text)

    spec = data.get("scenario", "scenario_a")
    if isinstance(spec, str):
        if spec not in SCENARIOS:
            fail(f"unknown scenario {spec!r}; known: {sorted(SCENARIOS)}", ("scenario",))
        base = get_scenario(spec)
    elif isinstance(spec, dict):
        for side in ("ul", "dl"):
            if f"{side}_snr_db" not in spec and f"{side}_snr_linear" not in spec:
                fail(f"explicit scenario needs {side}_snr_db or {side}_snr_linear", ("scenario",))
        base = _apply(get_scenario("scenario_a"), spec, ("scenario",), fail, checked)
        base = replace(base, name="custom")
    else:
        fail("scenario must be a preset name or a mapping of values", ("scenario",))

    overrides = data.get("overrides") or {}
    if not isinstance(overrides, dict):
        fail("overrides must be a mapping", ("overrides",))
    scenario = _apply(base, overrides, ("overrides",), fail, checked)

    raw = data.get("params") or {}
    if not isinstance(raw, dict):
        fail("params must be a mapping", ("params",))
    schema = PARAM_SCHEMAS[experiment]
    params = {}
    for key in raw:
        if key not in schema:
            fail(f"unknown parameter {key!r} for {experiment}; allowed: {sorted(schema)}", ("params", key))
    for key, (default, check) in schema.items():
        value = raw.get(key, default)
        params[key] = checked(("params", key), copy.deepcopy(value), check)
    _cross_checks(experiment, params, scenario, fail)

    return ExperimentConfig(experiment, scenario, copy.deepcopy(spec), dict(overrides), seed, output_path,
                            workers, params)


def _apply(base: Scenario, values: dict, where: tuple, fail, checked) -> Scenario:
    clean = {}
    for key, value in values.items():
        if key not in OVERRIDE_KEYS:
            fail(f"unknown field {key!r}; allowed: {sorted(OVERRIDE_KEYS)}", where + (key,))
        clean[key] = checked(where + (key,), value, _OVERRIDE_CHECKS[key])
    for side in ("ul", "dl"):
        if f"{side}_snr_db" in clean and f"{side}_snr_linear" in clean:
            fail(f"give either {side}_snr_db or {side}_snr_linear, not both", where + (f"{side}_snr_db",))
    try:
        return base.with_overrides(clean)
    except ValueError as exc:
        fail(str(exc), where)


def _cross_checks(experiment: str, params: dict, scenario: Scenario, fail) -> None:
    if experiment in ("sweep_nmax", "benchmark"):
        lo, hi = params["n_max_min"], params["n_max_max"]
        if lo is not None and hi is not None and lo > hi:
            fail("n_max_min must not exceed n_max_max", ("params", "n_max_min"))
    if experiment == "sensitivity_grid" and params["snr_db_min"] > params["snr_db_max"]:
        fail("snr_db_min must not exceed snr_db_max", ("params", "snr_db_min"))
    if experiment == "apc_case":
        levels = params["power_levels"]
        if any(a >= b for a, b in zip(levels, levels[1:])) or len(levels) > 3:
            fail("power_levels must be strictly ascending with at most 3 entries", ("params", "power_levels"))
    if experiment == "lut_resolution" and scenario.n_max > 0xFFFF:
        fail("n_max must fit in 16 bits for LUT storage", ("overrides",))


def load_config(path: str | None, experiment: str, cli: dict | None = None) -> ExperimentConfig:
    """Read ``path`` (optional), force the experiment label, apply CLI overrides."""
    data, lines = {}, {}
    if path is not None:
        try:
            with open(path) as fh:
                body = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
        data, lines = parse_yaml(body, path)
    if "experiment" in data and data["experiment"] != experiment:
        raise ConfigError(f"config is for experiment {data['experiment']!r}, not {experiment!r}",
                          lines.get(("experiment",)), path)
    data["experiment"] = experiment
    return build_config(data, lines, path, cli)
