"""Procedural scenario generation and the fixed-file scenario format.

Two domain presets, ``dense`` and ``sparse``, differ in route length,
curvature and obstacle pressure. Their mean route lengths and obstacle
counts keep the fixed 130.45:90.42 and 85.18:52.18 ratios of the large/small
source-domain statistics, scaled down by a factor of 0.5 (lengths) so that
episodes stay desk-sized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import Polyline

DOMAINS = ("dense", "sparse")

# Desk-scale preset parameters. length_mean ratios and obstacle_mean ratios
# are exact (130.45/90.42 and 85.18/52.18).
_LENGTH_SCALE = 0.5
_PRESETS = {
    "sparse": dict(
        length_mean=90.42 * _LENGTH_SCALE,
        obstacle_mean=4.5,
        curve_std=0.10,
        moving_fraction=0.25,
        clearance=1.6,
    ),
    "dense": dict(
        length_mean=130.45 * _LENGTH_SCALE,
        obstacle_mean=4.5 * 85.18 / 52.18,
        curve_std=0.18,
        moving_fraction=0.5,
        clearance=1.3,
    ),
}

_SEG_LEN = 4.0  # meters per route segment
_MAX_TURN = 0.35  # max heading increment per segment, radians
_MAX_DEV = 1.2  # max heading deviation from initial, keeps routes forward
_GOAL_RADIUS = 2.0
_SPAWN_KEEPOUT = 8.0  # no obstacles within this arc length of the spawn


@dataclass(frozen=True)
class Obstacle:
    """Disc obstacle, optionally drifting at constant velocity."""

    center: tuple[float, float]
    radius: float
    velocity: tuple[float, float] | None = None

    def position_at(self, t: float) -> np.ndarray:
        c = np.array(self.center, dtype=np.float64)
        if self.velocity is None:
            return c
        return c + t * np.array(self.velocity, dtype=np.float64)


@dataclass(frozen=True)
class ScenarioSpec:
    """One CMDP episode: route, drivable corridor, obstacles, spawn, goal."""

    scenario_id: str
    domain_tag: str
    seed: int
    route: np.ndarray
    corridor_halfwidth: float
    obstacles: tuple[Obstacle, ...]
    spawn_pose: tuple[float, float, float]
    goal_radius: float
    route_length: float

    def __post_init__(self):
        if self.domain_tag not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain_tag!r}")
        line = Polyline(self.route)
        if abs(line.length - self.route_length) > 1e-6 * max(1.0, line.length):
            raise ValueError("route_length does not match polyline arc length")
        sx, sy, _ = self.spawn_pose
        if np.hypot(sx - self.route[0, 0], sy - self.route[0, 1]) > 1e-9:
            raise ValueError("spawn pose must lie on the route start")
        for ob in self.obstacles:
            if np.hypot(ob.center[0] - sx, ob.center[1] - sy) <= ob.radius + 1.5:
                raise ValueError("obstacle overlaps the spawn pose")


def generate_scenario(domain: str, rng_seed: int) -> ScenarioSpec:
    """Deterministically generate one scenario for ``domain`` from a seed."""
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    preset = _PRESETS[domain]
    rng = np.random.default_rng(np.random.SeedSequence((_domain_code(domain), rng_seed)))

    target_len = preset["length_mean"] * rng.uniform(0.8, 1.2)
    n_seg = max(6, int(round(target_len / _SEG_LEN)))

    base_heading = rng.uniform(-np.pi, np.pi)
    headings = [base_heading]
    for _ in range(n_seg - 1):
        step = np.clip(rng.normal(0.0, preset["curve_std"]), -_MAX_TURN, _MAX_TURN)
        h = headings[-1] + step
        h = np.clip(h, base_heading - _MAX_DEV, base_heading + _MAX_DEV)
        headings.append(h)

    pts = np.zeros((n_seg + 1, 2))
    for i, h in enumerate(headings):
        pts[i + 1] = pts[i] + _SEG_LEN * np.array([np.cos(h), np.sin(h)])
    line = Polyline(pts)

    halfwidth = rng.uniform(4.0, 5.5)
    n_obs = int(rng.poisson(preset["obstacle_mean"]))
    obstacles = []
    for _ in range(n_obs):
        s = rng.uniform(_SPAWN_KEEPOUT, line.length - 4.0)
        radius = rng.uniform(0.6, 1.2)
        lat_lo = radius + preset["clearance"]
        lat_hi = max(lat_lo + 0.1, halfwidth - 0.2)
        lat = rng.uniform(lat_lo, lat_hi) * rng.choice([-1.0, 1.0])
        heading = line.heading_at(s)
        normal = np.array([-np.sin(heading), np.cos(heading)])
        center = line.point_at(s) + lat * normal
        velocity = None
        if rng.random() < preset["moving_fraction"]:
            speed = rng.uniform(0.3, 1.0) * rng.choice([-1.0, 1.0])
            velocity = (speed * np.cos(heading), speed * np.sin(heading))
        obstacles.append(
            Obstacle(center=(float(center[0]), float(center[1])), radius=float(radius), velocity=velocity)
        )

    spawn = (float(pts[0, 0]), float(pts[0, 1]), float(headings[0]))
    return ScenarioSpec(
        scenario_id=f"{domain}-{rng_seed:08d}",
        domain_tag=domain,
        seed=int(rng_seed),
        route=pts,
        corridor_halfwidth=float(halfwidth),
        obstacles=tuple(obstacles),
        spawn_pose=spawn,
        goal_radius=_GOAL_RADIUS,
        route_length=line.length,
    )


def _domain_code(domain: str) -> int:
    return DOMAINS.index(domain)


# ---------------------------------------------------------------------------
# Line-delimited scenario files (one JSON record per line).
# ---------------------------------------------------------------------------


def scenario_to_record(spec: ScenarioSpec) -> dict:
    return {
        "scenario_id": spec.scenario_id,
        "domain": spec.domain_tag,
        "seed": spec.seed,
        "route": [[float(x), float(y)] for x, y in spec.route],
        "corridor_halfwidth": spec.corridor_halfwidth,
        "obstacles": [
            {
                "center": [ob.center[0], ob.center[1]],
                "radius": ob.radius,
                "velocity": list(ob.velocity) if ob.velocity is not None else None,
            }
            for ob in spec.obstacles
        ],
        "spawn_pose": list(spec.spawn_pose),
        "goal_radius": spec.goal_radius,
        "route_length": spec.route_length,
    }


def scenario_from_record(rec: dict) -> ScenarioSpec:
    return ScenarioSpec(
        scenario_id=rec["scenario_id"],
        domain_tag=rec["domain"],
        seed=int(rec["seed"]),
        route=np.asarray(rec["route"], dtype=np.float64),
        corridor_halfwidth=float(rec["corridor_halfwidth"]),
        obstacles=tuple(
            Obstacle(
                center=(float(o["center"][0]), float(o["center"][1])),
                radius=float(o["radius"]),
                velocity=tuple(o["velocity"]) if o["velocity"] is not None else None,
            )
            for o in rec["obstacles"]
        ),
        spawn_pose=tuple(rec["spawn_pose"]),
        goal_radius=float(rec["goal_radius"]),
        route_length=float(rec["route_length"]),
    )


def save_scenarios(path, specs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for spec in specs:
            fh.write(json.dumps(scenario_to_record(spec), sort_keys=True) + "\n")


def load_scenarios(path) -> list[ScenarioSpec]:
    specs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                specs.append(scenario_from_record(json.loads(line)))
    return specs
