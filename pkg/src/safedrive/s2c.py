"""Steps-to-cost safety representations.

Labels every visited state with the (binned) number of steps until the next
constraint violation, stores the pairs in a persistent safety buffer, trains
a softmax classifier on them by negative log-likelihood, and exposes a
lagged target copy whose predicted distribution is concatenated onto the
state for the policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cmdp import Trajectory
from .nets import AdamState, DenseNet, adam_step, backward, forward, init_dense, softmax_nll_grad


@dataclass(frozen=True)
class S2CConfig:
    safety_horizon: int = 60
    bin_size: int = 2
    buffer_capacity: int = 200_000
    target_sync_period: int = 200
    batch_size: int = 256
    updates_per_scenario: int = 4
    hidden: tuple[int, ...] = (64, 64, 32)

    def __post_init__(self):
        if self.safety_horizon <= 0 or self.bin_size <= 0:
            raise ValueError("safety_horizon and bin_size must be positive")
        if self.bin_size > self.safety_horizon:
            raise ValueError("bin_size must not exceed safety_horizon")
        if self.n_bins < 2:
            raise ValueError("need at least 2 bins")

    @property
    def n_bins(self) -> int:
        return self.safety_horizon // self.bin_size


def label_costs(costs: np.ndarray, cfg: S2CConfig) -> tuple[np.ndarray, np.ndarray]:
    """Backward-scan steps-to-violation and bin labels for a cost sequence.

    A violating step (cost > 0) is its own violation: steps = 0. Otherwise
    steps counts to the next violation, capped at the safety horizon, and
    the bin index is min(steps // bin_size, n_bins - 1).
    """
    costs = np.asarray(costs, dtype=np.float64)
    n = costs.shape[0]
    steps = np.empty(n, dtype=np.int64)
    next_violation = np.inf
    for t in range(n - 1, -1, -1):
        if costs[t] > 0.0:
            steps[t] = 0
            next_violation = t
        else:
            steps[t] = int(min(next_violation - t, cfg.safety_horizon))
    bins = np.minimum(steps // cfg.bin_size, cfg.n_bins - 1)
    return steps, bins


def label_trajectory(traj: Trajectory, cfg: S2CConfig) -> np.ndarray:
    """Bin labels for every state of a trajectory."""
    _, bins = label_costs(traj.costs, cfg)
    return bins


class SafetyBuffer:
    """Bounded FIFO store of (state, bin) training pairs."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity <= 0 or state_dim <= 0:
            raise ValueError("capacity and state_dim must be positive")
        self.capacity = capacity
        self.state_dim = state_dim
        self._states = np.zeros((capacity, state_dim), dtype=np.float32)
        self._bins = np.zeros(capacity, dtype=np.int64)
        self._size = 0
        self._head = 0
        self.total_inserted = 0

    def __len__(self) -> int:
        return self._size

    def add(self, states: np.ndarray, bins: np.ndarray) -> None:
        states = np.atleast_2d(np.asarray(states, dtype=np.float32))
        bins = np.atleast_1d(np.asarray(bins, dtype=np.int64))
        if states.shape[0] != bins.shape[0]:
            raise ValueError("states and bins length mismatch")
        if states.shape[1] != self.state_dim:
            raise ValueError("state dim mismatch")
        for s, b in zip(states, bins):
            self._states[self._head] = s
            self._bins[self._head] = b
            self._head = (self._head + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)
            self.total_inserted += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        if self._size < batch_size:
            raise ValueError("buffer smaller than requested batch")
        idx = rng.integers(0, self._size, size=batch_size)
        return self._states[idx], self._bins[idx]

    @property
    def bins_seen(self) -> np.ndarray:
        return self._bins[: self._size]


class StepsToCostModel:
    """Softmax classifier over violation-proximity bins with a lagged target.

    The online net trains on the safety buffer; the target copy, synced
    every ``target_sync_period`` updates, produces the distributions used
    for state augmentation.
    """

    def __init__(self, state_dim: int, cfg: S2CConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.state_dim = state_dim
        sizes = [state_dim, *cfg.hidden, cfg.n_bins]
        self.net = init_dense(sizes, "softmax", rng)
        self.target = self.net.copy()
        self.updates = 0

    @classmethod
    def from_nets(cls, online: DenseNet, target: DenseNet, cfg: S2CConfig) -> "StepsToCostModel":
        """Reassemble a model from checkpointed networks."""
        if online.out_dim != cfg.n_bins or target.out_dim != cfg.n_bins:
            raise ValueError("network output dim does not match n_bins")
        model = cls.__new__(cls)
        model.cfg = cfg
        model.state_dim = online.in_dim
        model.net = online
        model.target = target
        model.updates = 0
        return model

    def predict(self, states: np.ndarray, use_target: bool = True) -> np.ndarray:
        net = self.target if use_target else self.net
        probs, _ = forward(net, states)
        return probs

    def loss_on(self, states: np.ndarray, bins: np.ndarray) -> float:
        probs, _ = forward(self.net, states)
        loss, _ = softmax_nll_grad(np.atleast_2d(probs), bins)
        return loss


def s2c_loss(
    model: StepsToCostModel, states: np.ndarray, bins: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean NLL over the batch plus parameter gradients of the online net."""
    bins = np.asarray(bins)
    if np.any(bins < 0) or np.any(bins >= model.cfg.n_bins):
        raise ValueError("bin index out of range")
    probs, cache = forward(model.net, states)
    loss, grad_z = softmax_nll_grad(np.atleast_2d(probs), bins)
    grads = backward(model.net, cache, grad_z)
    return loss, grads


def s2c_update(
    model: StepsToCostModel,
    buffer: SafetyBuffer,
    optimizer: AdamState,
    rng: np.random.Generator,
) -> float | None:
    """One mini-batch gradient step; returns the loss, or None if the buffer
    cannot yet fill a batch (no parameters change in that case)."""
    if len(buffer) < model.cfg.batch_size:
        return None
    states, bins = buffer.sample(model.cfg.batch_size, rng)
    loss, grads = s2c_loss(model, states, bins)
    adam_step(optimizer, model.net.params, grads)
    model.updates += 1
    if model.updates % model.cfg.target_sync_period == 0:
        model.target = model.net.copy()
    return loss


def augment_state(state: np.ndarray, model: StepsToCostModel) -> np.ndarray:
    """Concatenate the target model's predicted distribution onto the state.

    Accepts a single state vector or a (B, state_dim) batch; the prefix of
    the result is the input, bit for bit.
    """
    state = np.asarray(state)
    probs = model.predict(state, use_target=True)
    if state.ndim == 1:
        return np.concatenate([state, probs.astype(state.dtype)])
    return np.concatenate([state, probs.astype(state.dtype)], axis=1)


def expected_steps_to_cost(distribution: np.ndarray, cfg: S2CConfig) -> float:
    """Expectation of steps-to-violation under bin midpoints (diagnostic)."""
    p = np.asarray(distribution, dtype=np.float64)
    if p.shape[-1] != cfg.n_bins:
        raise ValueError("distribution length != n_bins")
    mids = np.arange(cfg.n_bins) * cfg.bin_size + cfg.bin_size / 2.0
    return float(np.dot(p, mids))
