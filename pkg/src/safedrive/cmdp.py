"""Core CMDP types and return/cost accounting.

Everything here is immutable after construction and all operations are pure
functions, so they are safe to share across evaluation workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OUTCOMES = ("success", "crash", "off_road", "timeout")


@dataclass(frozen=True)
class CmdpConfig:
    """Discount factor, safety budget and episode horizon for one task."""

    gamma: float = 0.99
    kappa: float = 1.0
    max_episode_steps: int = 300

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.kappa < 0.0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        if self.max_episode_steps <= 0:
            raise ValueError("max_episode_steps must be positive")


@dataclass(frozen=True)
class StepRecord:
    """One environment transition.

    ``state`` is the normalized observation vector fed to the agent; ``pose``
    optionally carries the world-frame (x, y) of the vehicle so that metrics
    based on driven distance can be recomputed from the trajectory alone.
    """

    state: np.ndarray
    action: np.ndarray
    reward: float
    cost: float
    terminal: bool = False
    truncated: bool = False
    pose: tuple[float, float] | None = None

    def __post_init__(self):
        if self.cost < 0.0:
            raise ValueError(f"cost must be nonnegative, got {self.cost}")
        if self.terminal and self.truncated:
            raise ValueError("terminal and truncated are mutually exclusive")
        a = np.asarray(self.action)
        if a.shape != (2,) or np.any(np.abs(a) > 1.0 + 1e-9):
            raise ValueError("action must be a 2-vector within [-1, 1]")


@dataclass(frozen=True)
class Trajectory:
    """Ordered steps of one episode plus its outcome label."""

    steps: tuple[StepRecord, ...]
    outcome: str

    def __post_init__(self):
        if len(self.steps) == 0:
            raise ValueError("trajectory must contain at least one step")
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        for rec in self.steps[:-1]:
            if rec.terminal or rec.truncated:
                raise ValueError("only the final step may be terminal/truncated")

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([s.reward for s in self.steps], dtype=np.float64)

    @property
    def costs(self) -> np.ndarray:
        return np.array([s.cost for s in self.steps], dtype=np.float64)


@dataclass(frozen=True)
class EpisodeMetrics:
    """Per-episode evaluation row: undiscounted totals plus outcome flags.

    ``route_completion`` is the raw driven-arclength ratio; it is clamped to
    [0, 1] only when aggregating (see :func:`clamped_route_completion`).
    """

    total_reward: float
    total_cost: float
    route_completion: float
    success: int
    out_of_road: int

    def __post_init__(self):
        if self.route_completion < 0.0:
            raise ValueError("route_completion must be nonnegative")
        if self.success not in (0, 1) or self.out_of_road not in (0, 1):
            raise ValueError("success / out_of_road must be 0 or 1")
        if self.success and self.out_of_road:
            raise ValueError("success and out_of_road are mutually exclusive")


def clamped_route_completion(m: EpisodeMetrics) -> float:
    """Route completion as reported in aggregate tables (capped at 1)."""
    return min(m.route_completion, 1.0)


def _discounted_sum(values: np.ndarray, gamma: float) -> float:
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    if values.size == 0:
        raise ValueError("empty trajectory")
    weights = gamma ** np.arange(values.size, dtype=np.float64)
    return float(np.dot(weights, values))


def discounted_return(traj: Trajectory, gamma: float) -> float:
    """Sum of gamma^t * r_t over the trajectory."""
    return _discounted_sum(traj.rewards, gamma)


def discounted_cost(traj: Trajectory, gamma: float) -> float:
    """Sum of gamma^t * c_t over the trajectory."""
    return _discounted_sum(traj.costs, gamma)


def episode_metrics(traj: Trajectory, spec) -> EpisodeMetrics:
    """Undiscounted episode totals plus route completion against ``spec``.

    Route completion is the maximum arc-length reached by projecting the
    recorded poses onto the scenario route, divided by the route length.
    Trajectories without pose information get route_completion 0.
    """
    from .geometry import Polyline  # local import: cmdp stays env-agnostic

    total_reward = float(np.sum(traj.rewards))
    total_cost = float(np.sum(traj.costs))

    rc = 0.0
    poses = [s.pose for s in traj.steps if s.pose is not None]
    if poses and spec is not None:
        line = Polyline(np.asarray(spec.route, dtype=np.float64))
        s_max = max(line.project(np.asarray(p, dtype=np.float64))[0] for p in poses)
        rc = s_max / spec.route_length

    return EpisodeMetrics(
        total_reward=total_reward,
        total_cost=total_cost,
        route_completion=rc,
        success=int(traj.outcome == "success"),
        out_of_road=int(traj.outcome == "off_road"),
    )
