"""Procedural 2D driving CMDP.

Kinematic-bicycle vehicle in a corridor around a reference route, raycast
perception of disc obstacles and the corridor boundary, waypoint navigation,
dense shaping rewards plus a sparse terminal reward, and costs that fire
exclusively on safety-critical events (crash, leaving the drivable area).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cmdp import CmdpConfig, StepRecord, Trajectory
from .geometry import Polyline, ray_disc_distances, ray_segment_distances, wrap_angle
from .scenario import ScenarioSpec


@dataclass(frozen=True)
class ObservationLayout:
    """Observation vector structure; every component is scaled into [0, 1].

    Order: obstacle lidar rays, boundary rays, ego block (steer, heading
    error, speed, lateral offset), then local waypoint coordinates.
    """

    n_lidar: int = 24
    n_boundary: int = 8
    n_ego: int = 4
    n_waypoints: int = 10
    range_max: float = 50.0
    waypoint_spacing: float = 3.0
    waypoint_range: float = 30.0

    @property
    def total_dim(self) -> int:
        return self.n_lidar + self.n_boundary + self.n_ego + 2 * self.n_waypoints

    @property
    def lidar_slice(self) -> slice:
        return slice(0, self.n_lidar)

    @property
    def boundary_slice(self) -> slice:
        return slice(self.n_lidar, self.n_lidar + self.n_boundary)

    @property
    def ego_slice(self) -> slice:
        i = self.n_lidar + self.n_boundary
        return slice(i, i + self.n_ego)

    @property
    def waypoint_slice(self) -> slice:
        i = self.n_lidar + self.n_boundary + self.n_ego
        return slice(i, i + 2 * self.n_waypoints)


@dataclass(frozen=True)
class RewardWeights:
    """Shaping weights, terminal rewards and cost weights."""

    w_drive: float = 1.0
    w_heading: float = 1.0
    w_lat: float = 1.0
    r_success: float = 10.0
    r_fail: float = -5.0
    w_crash: float = 2.0
    w_oor: float = 2.0
    lateral_cap: float = 2.0

    def __post_init__(self):
        for name in ("w_drive", "w_heading", "w_lat", "w_crash", "w_oor"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class VehicleParams:
    dt: float = 0.1
    wheelbase: float = 2.5
    accel_max: float = 4.0
    steer_max: float = 0.5
    v_max: float = 10.0
    vehicle_radius: float = 1.0


@dataclass
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float
    steer: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


def _ray_directions(heading: float, n: int) -> np.ndarray:
    angles = heading + 2.0 * np.pi * np.arange(n) / n
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def boundary_segments(spec: ScenarioSpec) -> np.ndarray:
    """Corridor boundary as (M, 4) segments: both offsets plus end caps."""
    line = Polyline(spec.route)
    left = line.offset_segments(spec.corridor_halfwidth)
    right = line.offset_segments(-spec.corridor_halfwidth)
    cap_start = np.array([[left[0, 0], left[0, 1], right[0, 0], right[0, 1]]])
    cap_end = np.array([[left[-1, 2], left[-1, 3], right[-1, 2], right[-1, 3]]])
    return np.concatenate([left, right, cap_start, cap_end], axis=0)


def lidar_scan(
    vehicle: VehicleState,
    spec: ScenarioSpec,
    layout: ObservationLayout,
    t: float = 0.0,
    _segments: np.ndarray | None = None,
) -> np.ndarray:
    """Normalized ray distances: obstacle rays first, boundary rays after.

    Each component is min(d, range_max) / range_max, so 1.0 means nothing
    within range along that ray.
    """
    origin = vehicle.position
    centers = np.array([ob.position_at(t) for ob in spec.obstacles], dtype=np.float64)
    radii = np.array([ob.radius for ob in spec.obstacles], dtype=np.float64)

    d_obs = ray_disc_distances(origin, _ray_directions(vehicle.heading, layout.n_lidar), centers, radii)
    segs = boundary_segments(spec) if _segments is None else _segments
    d_bnd = ray_segment_distances(origin, _ray_directions(vehicle.heading, layout.n_boundary), segs)

    out = np.concatenate([d_obs, d_bnd])
    return np.minimum(out, layout.range_max) / layout.range_max


@dataclass(frozen=True)
class StepInfo:
    terminal: bool
    truncated: bool
    outcome: str | None
    pose: tuple[float, float]
    progress: float
    crashed: bool
    off_road: bool


class DrivingEnv:
    """Single-threaded, stateful episode runner for one scenario.

    Fully deterministic: replaying an action sequence reproduces the
    trajectory bit-exactly. Run several instances for parallel rollouts.
    """

    def __init__(
        self,
        spec: ScenarioSpec,
        cmdp: CmdpConfig | None = None,
        layout: ObservationLayout | None = None,
        weights: RewardWeights | None = None,
        params: VehicleParams | None = None,
    ):
        self.spec = spec
        self.cmdp = cmdp or CmdpConfig()
        self.layout = layout or ObservationLayout()
        self.weights = weights or RewardWeights()
        self.params = params or VehicleParams()
        self.line = Polyline(spec.route)
        self._segments = boundary_segments(spec)
        self._ob_centers = np.array([ob.center for ob in spec.obstacles], dtype=np.float64).reshape(-1, 2)
        self._ob_radii = np.array([ob.radius for ob in spec.obstacles], dtype=np.float64)
        self._ob_vel = np.array(
            [ob.velocity if ob.velocity is not None else (0.0, 0.0) for ob in spec.obstacles],
            dtype=np.float64,
        ).reshape(-1, 2)
        self.vehicle: VehicleState | None = None
        self._steps = 0
        self._s_prev = 0.0
        self._done = True

    # -- lifecycle -----------------------------------------------------

    def reset(self) -> np.ndarray:
        x, y, heading = self.spec.spawn_pose
        self.vehicle = VehicleState(x=x, y=y, heading=heading, speed=0.0, steer=0.0)
        self._steps = 0
        self._done = False
        s, _, _ = self.line.project(self.vehicle.position)
        self._s_prev = s
        return self._observe()

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, float, StepInfo]:
        if self._done or self.vehicle is None:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        p, v = self.params, self.vehicle

        accel = a[0] * p.accel_max
        v.steer = a[1] * p.steer_max
        v.speed = float(np.clip(v.speed + accel * p.dt, 0.0, p.v_max))
        v.x += v.speed * np.cos(v.heading) * p.dt
        v.y += v.speed * np.sin(v.heading) * p.dt
        v.heading = wrap_angle(v.heading + v.speed / p.wheelbase * np.tan(v.steer) * p.dt)
        self._steps += 1
        t_now = self._steps * p.dt

        s, lateral, _ = self.line.project(v.position)
        progress = s - self._s_prev
        self._s_prev = s
        heading_err = wrap_angle(v.heading - self.line.heading_at(s))

        w = self.weights
        reward = (
            w.w_drive * progress
            - w.w_heading * abs(heading_err)
            - w.w_lat * min(abs(lateral), w.lateral_cap)
        )

        crashed = self._check_crash(v.position, t_now)
        off_road = abs(lateral) > self.spec.corridor_halfwidth
        goal = np.asarray(self.spec.route[-1], dtype=np.float64)
        dist_goal = float(np.hypot(v.x - goal[0], v.y - goal[1]))
        reached = (s >= self.line.length - 1e-9) and (dist_goal <= self.spec.goal_radius)
        timed_out = self._steps >= self.cmdp.max_episode_steps

        outcome = None
        if crashed:
            outcome = "crash"
        elif off_road:
            outcome = "off_road"
        elif reached:
            outcome = "success"
            reward += w.r_success
        elif timed_out:
            outcome = "timeout"
            if dist_goal > 2.0 * self.spec.goal_radius:
                reward += w.r_fail

        cost = w.w_crash * float(crashed) + w.w_oor * float(off_road)
        terminal = outcome in ("crash", "off_road", "success")
        truncated = outcome == "timeout"
        self._done = terminal or truncated

        obs = self._observe()
        info = StepInfo(
            terminal=terminal,
            truncated=truncated,
            outcome=outcome,
            pose=(v.x, v.y),
            progress=progress,
            crashed=crashed,
            off_road=off_road,
        )
        return obs, float(reward), float(cost), info

    @property
    def done(self) -> bool:
        return self._done

    # -- internals -----------------------------------------------------

    def _check_crash(self, pos: np.ndarray, t: float) -> bool:
        if self._ob_centers.shape[0] == 0:
            return False
        centers = self._ob_centers + t * self._ob_vel
        d = np.hypot(centers[:, 0] - pos[0], centers[:, 1] - pos[1])
        return bool(np.any(d <= self._ob_radii + self.params.vehicle_radius))

    def _observe(self) -> np.ndarray:
        v = self.vehicle
        lay = self.layout
        p = self.params
        t_now = self._steps * p.dt

        rays = lidar_scan(v, self.spec, lay, t=t_now, _segments=self._segments)

        s, lateral, _ = self.line.project(v.position)
        heading_err = wrap_angle(v.heading - self.line.heading_at(s))
        ego = np.array(
            [
                (v.steer / p.steer_max + 1.0) / 2.0,
                (heading_err / np.pi + 1.0) / 2.0,
                v.speed / p.v_max,
                (np.clip(lateral / self.spec.corridor_halfwidth, -1.0, 1.0) + 1.0) / 2.0,
            ]
        )

        cos_h, sin_h = np.cos(v.heading), np.sin(v.heading)
        wps = np.empty(2 * lay.n_waypoints)
        for k in range(lay.n_waypoints):
            target = self.line.point_at(s + (k + 1) * lay.waypoint_spacing)
            dx, dy = target[0] - v.x, target[1] - v.y
            local_x = cos_h * dx + sin_h * dy
            local_y = -sin_h * dx + cos_h * dy
            wps[2 * k] = (np.clip(local_x / lay.waypoint_range, -1.0, 1.0) + 1.0) / 2.0
            wps[2 * k + 1] = (np.clip(local_y / lay.waypoint_range, -1.0, 1.0) + 1.0) / 2.0

        obs = np.concatenate([rays, ego, wps])
        return np.clip(obs, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Scripted reference controller (upper-bound policy for reports).
# ---------------------------------------------------------------------------


def expert_controller(
    observation: np.ndarray,
    spec: ScenarioSpec,
    layout: ObservationLayout | None = None,
    params: VehicleParams | None = None,
) -> np.ndarray:
    """Pure-pursuit waypoint follower with a speed governor.

    Operates on the observation vector alone (decodes local waypoints, speed
    and the forward lidar cone), so it plugs in wherever a policy does.
    """
    lay = layout or ObservationLayout()
    p = params or VehicleParams()

    wp = observation[lay.waypoint_slice].reshape(lay.n_waypoints, 2)
    wp = (wp * 2.0 - 1.0) * lay.waypoint_range  # local (x, y) per waypoint
    dists = np.hypot(wp[:, 0], wp[:, 1])
    if np.max(dists) < 0.5:
        return np.zeros(2)  # degenerate: no usable waypoints ahead

    speed = observation[lay.ego_slice][2] * p.v_max

    lookahead = max(4.0, 0.8 * speed)
    ahead = np.where(dists >= lookahead)[0]
    tx, ty = wp[ahead[0]] if ahead.size else wp[-1]

    # forward obstacle cone: ray k points at angle 2*pi*k/n from the heading,
    # so low indices sweep the left side and high indices the right side
    rays = observation[lay.lidar_slice] * lay.range_max
    n = lay.n_lidar
    cone = int(np.ceil(n * 40.0 / 360.0))
    left = float(np.min(rays[0 : cone + 1]))
    right = float(np.min(np.r_[rays[n - cone : n], rays[0:1]]))
    d_fwd = min(left, right)
    if d_fwd < 12.0:
        # shift the pursuit target toward the open side (+y is left)
        shift = 2.8 * (1.0 - d_fwd / 12.0)
        ty += shift if right < left else -shift

    d2 = tx * tx + ty * ty
    curvature = 2.0 * ty / d2 if d2 > 1e-9 else 0.0
    steer_cmd = np.arctan(curvature * p.wheelbase)

    v_cruise = 7.0
    v_curve = np.sqrt(max(0.5, 4.0 / max(abs(curvature), 1e-3)))
    v_target = min(v_cruise, v_curve)
    if d_fwd < 10.0:
        v_target = min(v_target, max(1.2, 0.55 * (d_fwd - 1.5)))
    if d_fwd < 2.0:
        v_target = 0.0

    accel = np.clip((v_target - speed) / (p.accel_max * p.dt), -1.0, 1.0)
    return np.array([accel, np.clip(steer_cmd / p.steer_max, -1.0, 1.0)])


def run_episode(
    spec: ScenarioSpec,
    policy_fn,
    cmdp: CmdpConfig | None = None,
    layout: ObservationLayout | None = None,
    weights: RewardWeights | None = None,
    params: VehicleParams | None = None,
    obs_filter=None,
) -> Trajectory:
    """Roll one full episode and package it as a Trajectory.

    ``policy_fn`` maps an observation to a 2-vector action. ``obs_filter``
    optionally perturbs the observation before the policy sees it (used for
    sensor-noise evaluation); the recorded state is the perturbed one.
    """
    env = DrivingEnv(spec, cmdp=cmdp, layout=layout, weights=weights, params=params)
    obs = env.reset()
    if obs_filter is not None:
        obs = obs_filter(obs)
    steps = []
    outcome = None
    while outcome is None:
        action = np.clip(np.asarray(policy_fn(obs), dtype=np.float64), -1.0, 1.0)
        next_obs, reward, cost, info = env.step(action)
        if obs_filter is not None:
            next_obs = obs_filter(next_obs)
        steps.append(
            StepRecord(
                state=obs,
                action=action,
                reward=reward,
                cost=cost,
                terminal=info.terminal,
                truncated=info.truncated,
                pose=info.pose,
            )
        )
        obs = next_obs
        outcome = info.outcome
    return Trajectory(steps=tuple(steps), outcome=outcome)
