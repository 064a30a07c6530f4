"""Flat key-value run configuration.

Config files are plain text, one ``section.key = value`` per line, ``#``
comments allowed. Every key is validated against the registry below before
any compute starts; unknown keys are rejected outright so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .algos import ALGORITHMS, AlgoConfig, TrainSetup
from .cmdp import CmdpConfig
from .env import ObservationLayout, RewardWeights, VehicleParams
from .s2c import S2CConfig
from .scenario import DOMAINS


class ConfigError(ValueError):
    """Invalid configuration; maps to CLI exit code 2."""


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_list(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip() != "")


def _parse_float_list(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip() != "")


def _parse_str_list(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip() != "")


def _parse_opt_float(s: str) -> float | None:
    return None if s.strip() == "" else float(s)


_PARSERS = {
    "bool": _parse_bool,
    "int": int,
    "float": float,
    "str": str,
    "int_list": _parse_int_list,
    "float_list": _parse_float_list,
    "str_list": _parse_str_list,
    "opt_float": _parse_opt_float,
}

# key -> (type, default). Defaults are already in parsed form.
REGISTRY: dict[str, tuple[str, object]] = {
    "run.algorithm": ("str", "ppolag"),
    "run.srpl": ("bool", False),
    "run.domain": ("str", "sparse"),
    "run.seeds": ("int_list", (0, 1, 2, 3)),
    "run.budget_steps": ("int", 300_000),
    "run.out": ("str", "runs"),
    "cmdp.gamma": ("float", 0.99),
    "cmdp.kappa": ("float", 1.0),
    "cmdp.max_episode_steps": ("int", 300),
    "env.n_lidar": ("int", 24),
    "env.n_boundary": ("int", 8),
    "env.n_waypoints": ("int", 10),
    "env.range_max": ("float", 50.0),
    "env.waypoint_spacing": ("float", 3.0),
    "env.waypoint_range": ("float", 30.0),
    "env.dt": ("float", 0.1),
    "env.wheelbase": ("float", 2.5),
    "env.accel_max": ("float", 4.0),
    "env.steer_max": ("float", 0.5),
    "env.v_max": ("float", 10.0),
    "env.vehicle_radius": ("float", 1.0),
    "reward.w_drive": ("float", 1.0),
    "reward.w_heading": ("float", 1.0),
    "reward.w_lat": ("float", 1.0),
    "reward.r_success": ("float", 10.0),
    "reward.r_fail": ("float", -5.0),
    "reward.w_crash": ("float", 2.0),
    "reward.w_oor": ("float", 2.0),
    "reward.lateral_cap": ("float", 2.0),
    "algo.clip_eps": ("float", 0.2),
    "algo.gae_lambda": ("float", 0.95),
    "algo.lr_policy": ("float", 3e-4),
    "algo.lr_critic": ("float", 1e-3),
    "algo.lr_lambda": ("float", 0.035),
    "algo.p3o_penalty": ("float", 2.0),
    "algo.oncrpo_eta": ("opt_float", None),
    "algo.batch_steps": ("int", 8192),
    "algo.epochs": ("int", 4),
    "algo.minibatch": ("int", 512),
    "algo.entropy_coef": ("float", 0.0),
    "algo.n_envs": ("int", 8),
    "algo.policy_hidden": ("int_list", (128, 64, 64)),
    "algo.critic_hidden": ("int_list", (128, 64, 64)),
    "algo.log_std_init": ("float", -0.5),
    "s2c.safety_horizon": ("int", 60),
    "s2c.bin_size": ("int", 2),
    "s2c.buffer_capacity": ("int", 200_000),
    "s2c.target_sync_period": ("int", 200),
    "s2c.batch_size": ("int", 256),
    "s2c.updates_per_scenario": ("int", 4),
    "s2c.hidden": ("int_list", (64, 64, 32)),
    "eval.sigma": ("float", 0.0),
    "eval.seed": ("int", 0),
    "sweep.checkpoints": ("str_list", ()),
    "sweep.labels": ("str_list", ()),
    "sweep.scenarios": ("str", ""),
    "sweep.sigmas": ("float_list", (0.0, 0.01, 0.05, 0.1)),
    "sweep.seed": ("int", 0),
    "transfer.checkpoints": ("str_list", ()),
    "transfer.labels": ("str_list", ()),
    "transfer.scenarios_dense": ("str", ""),
    "transfer.scenarios_sparse": ("str", ""),
    "transfer.seed": ("int", 0),
}


def parse_config_text(text: str) -> dict:
    """Parse config lines into the registry's typed values."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in REGISTRY:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        typ, _ = REGISTRY[key]
        try:
            values[key] = _PARSERS[typ](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return values


def load_config(path) -> "RunConfig":
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return RunConfig(parse_config_text(path.read_text(encoding="utf-8")))


def defaults_text() -> str:
    lines = []
    section = None
    for key, (typ, default) in REGISTRY.items():
        sec = key.split(".", 1)[0]
        if sec != section:
            if section is not None:
                lines.append("")
            section = sec
        lines.append(f"{key} = {render_value(default)}  # {typ}")
    return "\n".join(lines)


def render_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


@dataclass
class RunConfig:
    """Registry-validated configuration for one command invocation."""

    overrides: dict

    def __post_init__(self):
        for key in self.overrides:
            if key not in REGISTRY:
                raise ConfigError(f"unknown config key {key!r}")
        self._validate()

    def _validate(self):
        if self["run.algorithm"] not in ALGORITHMS:
            raise ConfigError(f"run.algorithm must be one of {ALGORITHMS}")
        if self["run.domain"] not in DOMAINS:
            raise ConfigError(f"run.domain must be one of {DOMAINS}")
        if self["run.budget_steps"] <= 0:
            raise ConfigError("run.budget_steps must be positive")
        if not self["run.seeds"]:
            raise ConfigError("run.seeds must list at least one seed")
        # constructing the sub-configs runs their own invariant checks
        self.cmdp()
        self.layout()
        self.weights()
        self.vparams()
        self.algo()
        self.s2c()

    def __getitem__(self, key: str):
        if key in self.overrides:
            return self.overrides[key]
        if key not in REGISTRY:
            raise ConfigError(f"unknown config key {key!r}")
        return REGISTRY[key][1]

    def echo(self) -> dict:
        """Full resolved configuration (defaults + overrides) for metadata."""
        return {key: render_value(self[key]) for key in REGISTRY}

    # -- sub-config builders --------------------------------------------

    def cmdp(self) -> CmdpConfig:
        try:
            return CmdpConfig(
                gamma=self["cmdp.gamma"],
                kappa=self["cmdp.kappa"],
                max_episode_steps=self["cmdp.max_episode_steps"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def layout(self) -> ObservationLayout:
        return ObservationLayout(
            n_lidar=self["env.n_lidar"],
            n_boundary=self["env.n_boundary"],
            n_waypoints=self["env.n_waypoints"],
            range_max=self["env.range_max"],
            waypoint_spacing=self["env.waypoint_spacing"],
            waypoint_range=self["env.waypoint_range"],
        )

    def weights(self) -> RewardWeights:
        try:
            return RewardWeights(
                w_drive=self["reward.w_drive"],
                w_heading=self["reward.w_heading"],
                w_lat=self["reward.w_lat"],
                r_success=self["reward.r_success"],
                r_fail=self["reward.r_fail"],
                w_crash=self["reward.w_crash"],
                w_oor=self["reward.w_oor"],
                lateral_cap=self["reward.lateral_cap"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def vparams(self) -> VehicleParams:
        return VehicleParams(
            dt=self["env.dt"],
            wheelbase=self["env.wheelbase"],
            accel_max=self["env.accel_max"],
            steer_max=self["env.steer_max"],
            v_max=self["env.v_max"],
            vehicle_radius=self["env.vehicle_radius"],
        )

    def algo(self) -> AlgoConfig:
        return AlgoConfig(
            clip_eps=self["algo.clip_eps"],
            gae_lambda=self["algo.gae_lambda"],
            lr_policy=self["algo.lr_policy"],
            lr_critic=self["algo.lr_critic"],
            lr_lambda=self["algo.lr_lambda"],
            p3o_penalty=self["algo.p3o_penalty"],
            oncrpo_eta=self["algo.oncrpo_eta"],
            batch_steps=self["algo.batch_steps"],
            epochs=self["algo.epochs"],
            minibatch=self["algo.minibatch"],
            entropy_coef=self["algo.entropy_coef"],
            n_envs=self["algo.n_envs"],
            policy_hidden=tuple(self["algo.policy_hidden"]),
            critic_hidden=tuple(self["algo.critic_hidden"]),
            log_std_init=self["algo.log_std_init"],
        )

    def s2c(self) -> S2CConfig:
        try:
            return S2CConfig(
                safety_horizon=self["s2c.safety_horizon"],
                bin_size=self["s2c.bin_size"],
                buffer_capacity=self["s2c.buffer_capacity"],
                target_sync_period=self["s2c.target_sync_period"],
                batch_size=self["s2c.batch_size"],
                updates_per_scenario=self["s2c.updates_per_scenario"],
                hidden=tuple(self["s2c.hidden"]),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_setup(self) -> TrainSetup:
        return TrainSetup(
            algorithm=self["run.algorithm"],
            srpl=self["run.srpl"],
            domain=self["run.domain"],
            budget_steps=self["run.budget_steps"],
            cmdp=self.cmdp(),
            layout=self.layout(),
            weights=self.weights(),
            vparams=self.vparams(),
            algo=self.algo(),
            s2c=self.s2c(),
        )


def config_from_echo(echo: dict) -> RunConfig:
    """Rebuild a RunConfig from the metadata echo stored in an artifact."""
    values = {}
    for key, raw in echo.items():
        if key not in REGISTRY:
            raise ConfigError(f"artifact metadata carries unknown key {key!r}")
        typ, _ = REGISTRY[key]
        values[key] = _PARSERS[typ](raw)
    return RunConfig(values)
