"""Run configuration: parsing, validation, defaults, and object builders.

Configuration is human-writable YAML with nested sections. Unknown keys are
rejected with their exact path; scenario parameters must specify exactly one
of (epsilon, beta) or an explicit sample count n, which is resolved through
the sample-size bound and echoed in every output header.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from typing import Any

import numpy as np
import yaml

from svfilter.cem import CemConfig
from svfilter.dynamics import (
    IntersectionModel,
    PathGeometry,
    UnicycleModel,
    build_intersection_paths,
)
from svfilter.errors import ConfigError
from svfilter.safety import CostConfig, IntersectionLevel, ObstacleField
from svfilter.scenario import ScenarioParams, implied_epsilon
from svfilter.svgd import SvgdConfig

SCENARIOS = ("single_robot", "intersection", "sweep")

# Cluttered two-gap layout: a wall with two narrow corridors off the direct
# start-goal line, plus flanking clutter. Coordinates are this artifact's
# own; the published environment geometry is not available.
DEFAULT_OBSTACLES = {
    "centers": [
        [1.5, 0.0], [1.5, 0.3], [1.5, 0.6], [1.5, 0.9],
        [1.5, 1.5],
        [1.5, 2.1], [1.5, 2.4], [1.5, 2.7], [1.5, 3.0],
        [0.85, 0.55], [0.85, 2.45], [2.15, 0.55], [2.15, 2.45],
    ],
    "radius": 0.1,
}

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "workers": 1,
    "sampler": {
        "kind": "svgd",
        "svgd": {
            "particles": 12,
            "iters": 5,
            "alpha": 0.1,
            "eta": 0.25,
            "prior_var": [0.5625, 0.25],
            "mixture_var": None,
            "mc_var": None,
            "mc_samples": 16,
        },
        "cem": {
            "population": None,  # defaults to the resolved sample count
            "elite_frac": 0.1,
            "iterations": 5,
            "init_var": None,  # defaults to the svgd prior_var
            "var_floor": 1e-4,
        },
    },
    "cost": {"mode": "plain", "gamma": None},
}

UNICYCLE_MODEL_DEFAULTS = {
    "kind": "unicycle",
    "dt": 0.1,
    "horizon": 20,
    "omega_max": 1.5,
    "accel_min": -1.0,
    "accel_max": 1.0,
    "v_max": 1.0,
}

INTERSECTION_MODEL_DEFAULTS = {
    "kind": "intersection",
    "dt": 0.1,
    "horizon": 67,
    "n_vehicles": 3,
    "accel_bound": 1.5,
    "v_max": 10.0,
    "lane_offset": 2.0,
    "lane_width": 4.0,
    "approach_length": 30.0,
    "exit_length": 12.0,
    "right_turn_radius": 2.0,
    "left_turn_radius": 4.0,
    "path_ds": 0.1,
    "vehicle_length": 4.0,
    "vehicle_width": 2.0,
}

SINGLE_ROBOT_EXPERIMENT_DEFAULTS = {
    "start": [0.4, 1.5, 0.0, 1.0],
    "goal": [2.6, 1.5],
    "goal_radius": 0.15,
    "max_steps": 600,
    "obstacles": DEFAULT_OBSTACLES,
    "robot_radius": 0.1,
    "level_scale": 1000.0,
    "init_attempts": 10,
    "nominal": {"samples": 128, "horizon": 15, "alpha": 2.0, "std": [0.75, 0.5]},
}

SWEEP_EXPERIMENT_DEFAULTS = {
    "grid": {
        "x_min": 0.0,
        "x_max": 3.0,
        "y_min": 0.0,
        "y_max": 3.0,
        "resolution": 0.05,
        "v": 1.0,
        "theta": 0.0,
    },
    "rate_trials": 10000,
    "obstacles": DEFAULT_OBSTACLES,
    "robot_radius": 0.1,
    "level_scale": 1000.0,
}

INTERSECTION_EXPERIMENT_DEFAULTS = {
    "entry_window": 3.0,
    "start_speed": 6.0,
    "target_speed": 10.0,
    "nominal_gain": 1.0,
    "max_steps": 400,
    "init_attempts": 10,
    "min_start_gap": 8.0,
    "layout_attempts": 100,
    "level_scale": 100.0,
    "collision_value": -100.0,
}


def _check_keys(section: dict, allowed, path: str):
    if not isinstance(section, dict):
        raise ConfigError(f"section '{path}' must be a mapping")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}.{key}'" if path else f"unknown key '{key}'")


def _merge(defaults: dict, user: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _require(value, path: str, kind, lo=None, hi=None):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(f"'{path}' must be {kind.__name__}")
    if lo is not None and value < lo:
        raise ConfigError(f"'{path}' must be >= {lo}")
    if hi is not None and value > hi:
        raise ConfigError(f"'{path}' must be <= {hi}")
    return value


def _positive_vector(value, path: str):
    try:
        arr = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"'{path}' must be a list of numbers") from None
    if any(v <= 0 for v in arr):
        raise ConfigError(f"'{path}' entries must be positive")
    return arr


class RunConfig:
    """Validated, fully resolved run configuration.

    ``data`` is the canonical nested dict (defaults merged, n resolved);
    everything downstream is built from it, and its hash identifies the run
    in every output file.
    """

    def __init__(self, data: dict):
        self.data = data

    # -- parsing ---------------------------------------------------------

    @classmethod
    def from_dict(cls, user: dict) -> "RunConfig":
        if not isinstance(user, dict) or not user:
            raise ConfigError(
                "empty configuration; required sections: scenario, scenario_params"
            )
        _check_keys(
            user,
            ("scenario", "seed", "workers", "scenario_params", "sampler", "cost", "model", "experiment"),
            "",
        )
        for req in ("scenario", "scenario_params"):
            if req not in user:
                raise ConfigError(
                    f"missing required section '{req}'; required: scenario, scenario_params"
                )
        scenario = user["scenario"]
        if scenario not in SCENARIOS:
            raise ConfigError(f"'scenario' must be one of {SCENARIOS}")

        defaults = copy.deepcopy(DEFAULTS)
        defaults["scenario"] = scenario
        defaults["scenario_params"] = {}
        if scenario == "intersection":
            defaults["model"] = copy.deepcopy(INTERSECTION_MODEL_DEFAULTS)
            defaults["experiment"] = copy.deepcopy(INTERSECTION_EXPERIMENT_DEFAULTS)
        else:
            defaults["model"] = copy.deepcopy(UNICYCLE_MODEL_DEFAULTS)
            defaults["experiment"] = copy.deepcopy(
                SINGLE_ROBOT_EXPERIMENT_DEFAULTS if scenario == "single_robot" else SWEEP_EXPERIMENT_DEFAULTS
            )

        cls._validate_tree(user, defaults, scenario)
        data = _merge(defaults, user)
        cls._resolve(data)
        cfg = cls(data)
        cfg._validate_semantics()
        return cfg

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            user = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed YAML: {exc}") from exc
        if user is None:
            user = {}
        return cls.from_dict(user)

    @classmethod
    def _validate_tree(cls, user: dict, defaults: dict, scenario: str):
        if "seed" in user:
            _require(user["seed"], "seed", int)
        if "workers" in user:
            _require(user["workers"], "workers", int, lo=1)

        sp = user["scenario_params"]
        _check_keys(sp, ("epsilon", "beta", "n"), "scenario_params")
        has_eps = "epsilon" in sp or "beta" in sp
        has_n = "n" in sp
        if has_eps and has_n:
            raise ConfigError(
                "scenario_params: give either (epsilon, beta) or n, not both"
            )
        if not has_eps and not has_n:
            raise ConfigError("scenario_params: one of (epsilon, beta) or n is required")
        if has_eps:
            if "epsilon" not in sp or "beta" not in sp:
                raise ConfigError("scenario_params: epsilon and beta must be given together")
            eps = _require(sp["epsilon"], "scenario_params.epsilon", float)
            beta = _require(sp["beta"], "scenario_params.beta", float)
            if not 0.0 < eps < 1.0:
                raise ConfigError("'scenario_params.epsilon' must be in (0, 1)")
            if not 0.0 < beta < 1.0:
                raise ConfigError("'scenario_params.beta' must be in (0, 1)")
        else:
            _require(sp["n"], "scenario_params.n", int, lo=1)

        if "sampler" in user:
            _check_keys(user["sampler"], ("kind", "svgd", "cem"), "sampler")
            if "kind" in user["sampler"] and user["sampler"]["kind"] not in ("svgd", "cem"):
                raise ConfigError("'sampler.kind' must be 'svgd' or 'cem'")
            if "svgd" in user["sampler"]:
                _check_keys(
                    user["sampler"]["svgd"],
                    ("particles", "iters", "alpha", "eta", "prior_var", "mixture_var", "mc_var", "mc_samples"),
                    "sampler.svgd",
                )
            if "cem" in user["sampler"]:
                _check_keys(
                    user["sampler"]["cem"],
                    ("population", "elite_frac", "iterations", "init_var", "var_floor"),
                    "sampler.cem",
                )
        if "cost" in user:
            _check_keys(user["cost"], ("mode", "gamma"), "cost")
        if "model" in user:
            _check_keys(user["model"], tuple(defaults["model"].keys()), "model")
            if "kind" in user["model"] and user["model"]["kind"] != defaults["model"]["kind"]:
                raise ConfigError(
                    f"'model.kind' must be '{defaults['model']['kind']}' for scenario '{scenario}'"
                )
        if "experiment" in user:
            _check_keys(user["experiment"], tuple(defaults["experiment"].keys()), "experiment")
            exp = user["experiment"]
            if "grid" in exp and isinstance(defaults["experiment"].get("grid"), dict):
                _check_keys(exp["grid"], tuple(defaults["experiment"]["grid"].keys()), "experiment.grid")
            if "nominal" in exp and isinstance(defaults["experiment"].get("nominal"), dict):
                _check_keys(
                    exp["nominal"], tuple(defaults["experiment"]["nominal"].keys()), "experiment.nominal"
                )
            if "obstacles" in exp:
                _check_keys(exp["obstacles"], ("centers", "radius", "radii"), "experiment.obstacles")

    @classmethod
    def _resolve(cls, data: dict):
        sp = data["scenario_params"]
        if "n" in sp and sp.get("n") is not None:
            sp.setdefault("epsilon", None)
            sp.setdefault("beta", None)
            params = ScenarioParams.from_n(sp["n"])
        else:
            params = ScenarioParams.from_epsilon_beta(sp["epsilon"], sp["beta"])
        data["scenario_params"] = {
            "epsilon": params.epsilon,
            "beta": params.beta,
            "n": params.n,
        }
        if data["sampler"]["cem"]["population"] is None:
            data["sampler"]["cem"]["population"] = params.n
        if data["sampler"]["cem"]["init_var"] is None:
            data["sampler"]["cem"]["init_var"] = list(data["sampler"]["svgd"]["prior_var"])

    def _validate_semantics(self):
        try:
            self.svgd_config()
            self.cem_config()
            self.cost_config()
            self.scenario_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        m = self.data["model"]
        if _require(m["dt"], "model.dt", float) <= 0:
            raise ConfigError("'model.dt' must be positive")
        _require(m["horizon"], "model.horizon", int, lo=1)
        if self.scenario == "intersection":
            _require(m["n_vehicles"], "model.n_vehicles", int, lo=2, hi=5)
        # Stopping-horizon requirement: H * dt * a_brake >= v_max.
        if self.scenario == "intersection":
            rate = m["accel_bound"] * m["dt"]
        else:
            rate = -m["accel_min"] * m["dt"]
        if m["horizon"] * rate < m["v_max"] - 1e-12:
            raise ConfigError(
                "'model.horizon' too short: horizon * dt * max braking must cover "
                f"a stop from v_max ({m['horizon']} * {rate:.3g} < {m['v_max']})"
            )

    # -- accessors -------------------------------------------------------

    @property
    def scenario(self) -> str:
        return self.data["scenario"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def workers(self) -> int:
        return self.data["workers"]

    @property
    def horizon(self) -> int:
        return self.data["model"]["horizon"]

    @property
    def sampler_kind(self) -> str:
        return self.data["sampler"]["kind"]

    def scenario_params(self) -> ScenarioParams:
        sp = self.data["scenario_params"]
        return ScenarioParams(n=sp["n"], epsilon=sp["epsilon"], beta=sp["beta"])

    def svgd_config(self) -> SvgdConfig:
        s = self.data["sampler"]["svgd"]
        return SvgdConfig(
            particles=s["particles"],
            iters=s["iters"],
            alpha=s["alpha"],
            eta=s["eta"],
            prior_var=tuple(s["prior_var"]),
            mixture_var=None if s["mixture_var"] is None else tuple(s["mixture_var"]),
            mc_var=None if s["mc_var"] is None else tuple(s["mc_var"]),
            mc_samples=s["mc_samples"],
        )

    def cem_config(self) -> CemConfig:
        c = self.data["sampler"]["cem"]
        return CemConfig(
            population=c["population"],
            elite_frac=c["elite_frac"],
            iterations=c["iterations"],
            init_var=tuple(c["init_var"]),
            var_floor=c["var_floor"],
        )

    def cost_config(self) -> CostConfig:
        c = self.data["cost"]
        return CostConfig(mode=c["mode"], gamma=c["gamma"])

    def build_unicycle(self) -> UnicycleModel:
        m = self.data["model"]
        return UnicycleModel(
            dt=m["dt"], omega_max=m["omega_max"], accel_min=m["accel_min"],
            accel_max=m["accel_max"], v_max=m["v_max"],
        )

    def build_obstacle_field(self) -> ObstacleField:
        e = self.data["experiment"]
        obs = e["obstacles"]
        radii = obs.get("radii")
        if radii is None:
            radii = [obs["radius"]] * len(obs["centers"])
        return ObstacleField(
            centers=np.asarray(obs["centers"], dtype=float),
            radii=np.asarray(radii, dtype=float),
            robot_radius=e["robot_radius"],
            scale=e["level_scale"],
        )

    def build_intersection(self, arms, movements) -> tuple[IntersectionModel, IntersectionLevel]:
        m = self.data["model"]
        e = self.data["experiment"]
        geometry = build_intersection_paths(
            arms,
            movements,
            lane_offset=m["lane_offset"],
            lane_width=m["lane_width"],
            approach_length=m["approach_length"],
            exit_length=m["exit_length"],
            right_turn_radius=m["right_turn_radius"],
            left_turn_radius=m["left_turn_radius"],
            ds=m["path_ds"],
            vehicle_length=m["vehicle_length"],
            vehicle_width=m["vehicle_width"],
        )
        model = IntersectionModel(
            geometry, dt=m["dt"], accel_bound=m["accel_bound"], v_max=m["v_max"]
        )
        level = IntersectionLevel(
            geometry, scale=e["level_scale"], collision_value=e["collision_value"]
        )
        return model, level

    # -- identity --------------------------------------------------------

    def canonical_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def config_hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def summary_lines(self) -> list[str]:
        sp = self.data["scenario_params"]
        lines = [
            f"scenario: {self.scenario}",
            f"sampler: {self.sampler_kind}",
            f"seed: {self.seed}",
            f"n: {sp['n']}"
            + (
                f" (resolved from epsilon={sp['epsilon']}, beta={sp['beta']})"
                if sp["epsilon"] is not None
                else f" (explicit; implied epsilon at beta=1e-16: {implied_epsilon(sp['n'], 1e-16):.4g})"
            ),
        ]
        m = self.data["model"]
        if self.scenario == "intersection":
            rate = m["accel_bound"] * m["dt"]
        else:
            rate = -m["accel_min"] * m["dt"]
        stop_steps = math.ceil(m["v_max"] / rate)
        lines.append(
            f"horizon: {m['horizon']} steps ({m['horizon'] * m['dt']:.2f} s); "
            f"full stop from v_max needs {stop_steps}"
        )
        return lines


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML configuration string."""
    return RunConfig.from_yaml(text)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return RunConfig.from_yaml(fh.read())
