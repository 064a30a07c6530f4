"""On-policy constrained policy optimization.

Three optimizers over one shared rollout/GAE/update pipeline:

- ``ppolag``: clipped surrogate on (A_r - lambda * A_c) / (1 + lambda) with a
  projected dual ascent on lambda against the episode-cost budget.
- ``p3o``: clipped reward surrogate minus a fixed-coefficient hinge penalty
  on the constraint, using a pessimistically clipped cost surrogate.
- ``oncrpo``: rectified switching between pure reward ascent and pure cost
  descent based on a constraint-violation test.

Enabling the steps-to-cost augmentation changes only the policy/critic input
dimension (states are concatenated with the target model's prediction) and
adds labeling/update work; rollout, GAE and the optimizer paths are shared.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cmdp import CmdpConfig
from .env import DrivingEnv, ObservationLayout, RewardWeights, VehicleParams
from .nets import AdamState, DenseNet, adam_step, backward, forward, init_dense
from .s2c import S2CConfig, SafetyBuffer, StepsToCostModel, label_costs, s2c_update
from .scenario import generate_scenario

ALGORITHMS = ("ppolag", "p3o", "oncrpo")

LOG2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class AlgoConfig:
    """Optimizer hyperparameters shared by the three algorithms."""

    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    lr_policy: float = 3e-4
    lr_critic: float = 1e-3
    lr_lambda: float = 0.035
    p3o_penalty: float = 2.0
    oncrpo_eta: float | None = None  # None resolves to 0.5 * kappa
    batch_steps: int = 8192
    epochs: int = 4
    minibatch: int = 512
    entropy_coef: float = 0.0
    n_envs: int = 8
    policy_hidden: tuple[int, ...] = (128, 64, 64)
    critic_hidden: tuple[int, ...] = (128, 64, 64)
    log_std_init: float = -0.5

    def eta(self, kappa: float) -> float:
        return 0.5 * kappa if self.oncrpo_eta is None else self.oncrpo_eta


@dataclass
class PolicyBundle:
    """Policy, critics and constraint state for one agent."""

    policy: DenseNet
    reward_critic: DenseNet
    cost_critic: DenseNet
    lagrange_lambda: float = 0.0
    s2c: StepsToCostModel | None = None

    def policy_input(self, raw_obs: np.ndarray) -> np.ndarray:
        if self.s2c is None:
            return raw_obs
        from .s2c import augment_state

        return augment_state(raw_obs, self.s2c)

    def mean_action(self, raw_obs: np.ndarray) -> np.ndarray:
        mean, _ = forward(self.policy, self.policy_input(raw_obs))
        return np.tanh(mean)


def gaussian_logp(u: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Row-wise log density of the pre-squash gaussian."""
    z = (u - mean) / np.exp(log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * u.shape[-1] * LOG2PI


def squashed_logp(u: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Log density of a = tanh(u) including the change-of-variables term."""
    corr = np.sum(np.log(1.0 - np.tanh(u) ** 2 + 1e-6), axis=-1)
    return gaussian_logp(u, mean, log_std) - corr


def sample_actions(
    policy: DenseNet, obs: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample squashed actions; returns (action, pre-squash u, gaussian logp).

    The tanh correction is theta-independent for a stored u, so gaussian
    log-probabilities are sufficient for probability ratios.
    """
    mean, _ = forward(policy, np.atleast_2d(obs))
    std = np.exp(policy.log_std)
    u = mean + std * rng.standard_normal(mean.shape).astype(mean.dtype)
    logp = gaussian_logp(u, mean, policy.log_std)
    return np.tanh(u), u, logp


# ---------------------------------------------------------------------------
# Generalized advantage estimation
# ---------------------------------------------------------------------------


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    next_values: np.ndarray,
    terminals: np.ndarray,
    truncateds: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-step advantages and value targets for one in-order step stream.

    ``next_values[t]`` is the critic value of the state after step t (only
    consumed when step t is not terminal); terminal steps bootstrap with 0,
    truncated steps with their stored next-state value. Episode ends reset
    the recursion so estimates never leak across episodes.
    """
    n = len(rewards)
    adv = np.zeros(n, dtype=np.float64)
    gae = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if terminals[t] else 1.0
        delta = rewards[t] + gamma * next_values[t] * nonterminal - values[t]
        if terminals[t] or truncateds[t]:
            gae = delta
        else:
            gae = delta + gamma * lam * gae
        adv[t] = gae
    return adv, adv + values


# ---------------------------------------------------------------------------
# Rollout collection
# ---------------------------------------------------------------------------


@dataclass
class EpisodeStat:
    total_reward: float
    total_cost: float
    length: int
    outcome: str


@dataclass
class RolloutBatch:
    """Flattened on-policy batch plus everything the updates consume."""

    obs: np.ndarray  # policy/critic input (augmented when enabled)
    raw_obs: np.ndarray
    u: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    terminals: np.ndarray
    truncateds: np.ndarray
    adv_r: np.ndarray = field(default=None)  # type: ignore[assignment]
    adv_c: np.ndarray = field(default=None)  # type: ignore[assignment]
    target_r: np.ndarray = field(default=None)  # type: ignore[assignment]
    target_c: np.ndarray = field(default=None)  # type: ignore[assignment]
    adv_r_norm: np.ndarray = field(default=None)  # type: ignore[assignment]
    adv_c_scaled: np.ndarray = field(default=None)  # type: ignore[assignment]
    mean_episode_cost: float = 0.0
    episode_stats: list[EpisodeStat] = field(default_factory=list)

    def __len__(self) -> int:
        return self.obs.shape[0]


class ScenarioStream:
    """Deterministic endless scenario supply for one training run."""

    def __init__(self, domain: str, run_seed: int):
        self.domain = domain
        self.run_seed = run_seed
        self.counter = 0

    def next(self):
        seed = int(np.random.SeedSequence((self.run_seed, 0x5C, self.counter)).generate_state(1)[0])
        self.counter += 1
        return generate_scenario(self.domain, seed)


class RolloutCollector:
    """Synchronous vectorized rollouts over n parallel env instances.

    Owns the action-noise stream, per-episode steps-to-cost labeling into
    the safety buffer and the interleaved model updates when augmentation
    is enabled.
    """

    def __init__(
        self,
        bundle: PolicyBundle,
        domain: str,
        run_seed: int,
        cmdp: CmdpConfig,
        layout: ObservationLayout,
        weights: RewardWeights,
        vparams: VehicleParams,
        algo_cfg: AlgoConfig,
        s2c_cfg: S2CConfig | None = None,
        s2c_buffer: SafetyBuffer | None = None,
        s2c_optimizer: AdamState | None = None,
    ):
        self.bundle = bundle
        self.cmdp = cmdp
        self.layout = layout
        self.weights = weights
        self.vparams = vparams
        self.cfg = algo_cfg
        self.s2c_cfg = s2c_cfg
        self.s2c_buffer = s2c_buffer
        self.s2c_optimizer = s2c_optimizer

        seq = np.random.SeedSequence((run_seed, 0xA0))
        noise_seq, s2c_seq = seq.spawn(2)
        self.action_rng = np.random.default_rng(noise_seq)
        self.s2c_rng = np.random.default_rng(s2c_seq)

        self.stream = ScenarioStream(domain, run_seed)
        self.envs = [self._fresh_env() for _ in range(algo_cfg.n_envs)]
        self.cur_raw = [env.reset() for env in self.envs]
        # per-env pending episode (raw states + costs) awaiting labeling
        self._pending_states: list[list[np.ndarray]] = [[] for _ in self.envs]
        self._pending_costs: list[list[float]] = [[] for _ in self.envs]
        self._ep_reward = np.zeros(algo_cfg.n_envs)
        self._ep_cost = np.zeros(algo_cfg.n_envs)
        self._ep_len = np.zeros(algo_cfg.n_envs, dtype=np.int64)
        self.total_steps = 0
        self.s2c_losses: list[float] = []

    def _fresh_env(self) -> DrivingEnv:
        return DrivingEnv(
            self.stream.next(),
            cmdp=self.cmdp,
            layout=self.layout,
            weights=self.weights,
            params=self.vparams,
        )

    def collect(self, n_steps: int) -> RolloutBatch:
        cfg = self.cfg
        n_envs = cfg.n_envs
        iters = int(np.ceil(n_steps / n_envs))
        total = iters * n_envs
        d_raw = self.layout.total_dim
        d_in = self.bundle.policy.in_dim

        obs = np.zeros((total, d_in), dtype=np.float32)
        raw = np.zeros((total, d_raw), dtype=np.float32)
        u_arr = np.zeros((total, 2), dtype=np.float32)
        act = np.zeros((total, 2), dtype=np.float32)
        logp = np.zeros(total, dtype=np.float64)
        rew = np.zeros(total, dtype=np.float64)
        cst = np.zeros(total, dtype=np.float64)
        term = np.zeros(total, dtype=bool)
        trunc = np.zeros(total, dtype=bool)
        trunc_next: dict[int, np.ndarray] = {}
        stats: list[EpisodeStat] = []
        self.s2c_losses = []

        k = 0
        for _ in range(iters):
            raw_block = np.stack(self.cur_raw).astype(np.float32)
            in_block = self.bundle.policy_input(raw_block).astype(np.float32)
            a_block, u_block, logp_block = sample_actions(self.bundle.policy, in_block, self.action_rng)

            for e, env in enumerate(self.envs):
                i = k + e
                obs[i] = in_block[e]
                raw[i] = raw_block[e]
                u_arr[i] = u_block[e]
                act[i] = a_block[e]
                logp[i] = logp_block[e]

                next_raw, r, c, info = env.step(a_block[e])
                rew[i], cst[i] = r, c
                term[i], trunc[i] = info.terminal, info.truncated
                self._pending_states[e].append(raw_block[e])
                self._pending_costs[e].append(c)
                self._ep_reward[e] += r
                self._ep_cost[e] += c
                self._ep_len[e] += 1

                if info.terminal or info.truncated:
                    if info.truncated:
                        nxt = next_raw.astype(np.float32)
                        trunc_next[i] = self.bundle.policy_input(nxt).astype(np.float32)
                    stats.append(
                        EpisodeStat(
                            total_reward=float(self._ep_reward[e]),
                            total_cost=float(self._ep_cost[e]),
                            length=int(self._ep_len[e]),
                            outcome=info.outcome,
                        )
                    )
                    self._finish_episode(e)
                    self.envs[e] = self._fresh_env()
                    self.cur_raw[e] = self.envs[e].reset()
                else:
                    self.cur_raw[e] = next_raw
            k += n_envs
        self.total_steps += total

        batch = RolloutBatch(
            obs=obs,
            raw_obs=raw,
            u=u_arr,
            actions=act,
            logp_old=logp,
            rewards=rew,
            costs=cst,
            terminals=term,
            truncateds=trunc,
            episode_stats=stats,
        )
        self._finalize(batch, trunc_next)
        return batch

    def _finish_episode(self, e: int) -> None:
        self._ep_reward[e] = 0.0
        self._ep_cost[e] = 0.0
        self._ep_len[e] = 0
        states = np.stack(self._pending_states[e])
        costs = np.asarray(self._pending_costs[e])
        self._pending_states[e] = []
        self._pending_costs[e] = []
        if self.bundle.s2c is None or self.s2c_cfg is None:
            return
        _, bins = label_costs(costs, self.s2c_cfg)
        self.s2c_buffer.add(states, bins)
        for _ in range(self.s2c_cfg.updates_per_scenario):
            loss = s2c_update(self.bundle.s2c, self.s2c_buffer, self.s2c_optimizer, self.s2c_rng)
            if loss is not None:
                self.s2c_losses.append(loss)

    def _finalize(self, batch: RolloutBatch, trunc_next: dict[int, np.ndarray]) -> None:
        cfg, n_envs = self.cfg, self.cfg.n_envs
        vr, _ = forward(self.bundle.reward_critic, batch.obs)
        vc, _ = forward(self.bundle.cost_critic, batch.obs)
        vr = vr[:, 0].astype(np.float64)
        vc = vc[:, 0].astype(np.float64)

        n = len(batch)
        nvr = np.zeros(n)
        nvc = np.zeros(n)
        # per-env streams are strided slices of the interleaved batch
        tail_in = self.bundle.policy_input(np.stack(self.cur_raw).astype(np.float32)).astype(np.float32)
        tail_vr, _ = forward(self.bundle.reward_critic, tail_in)
        tail_vc, _ = forward(self.bundle.cost_critic, tail_in)
        for e in range(n_envs):
            idx = np.arange(e, n, n_envs)
            nvr[idx[:-1]] = vr[idx[1:]]
            nvc[idx[:-1]] = vc[idx[1:]]
            nvr[idx[-1]] = float(tail_vr[e, 0])
            nvc[idx[-1]] = float(tail_vc[e, 0])
        for i, nxt in trunc_next.items():
            v_r, _ = forward(self.bundle.reward_critic, nxt)
            v_c, _ = forward(self.bundle.cost_critic, nxt)
            nvr[i] = float(v_r[0])
            nvc[i] = float(v_c[0])

        adv_r = np.zeros(n)
        adv_c = np.zeros(n)
        tgt_r = np.zeros(n)
        tgt_c = np.zeros(n)
        for e in range(n_envs):
            idx = np.arange(e, n, n_envs)
            a, t = compute_gae(
                batch.rewards[idx], vr[idx], nvr[idx], batch.terminals[idx], batch.truncateds[idx],
                self.cmdp.gamma, cfg.gae_lambda,
            )
            adv_r[idx], tgt_r[idx] = a, t
            a, t = compute_gae(
                batch.costs[idx], vc[idx], nvc[idx], batch.terminals[idx], batch.truncateds[idx],
                self.cmdp.gamma, cfg.gae_lambda,
            )
            adv_c[idx], tgt_c[idx] = a, t

        batch.adv_r, batch.adv_c = adv_r, adv_c
        batch.target_r, batch.target_c = tgt_r, tgt_c
        batch.adv_r_norm = (adv_r - adv_r.mean()) / (adv_r.std() + 1e-8)
        batch.adv_c_scaled = adv_c / (adv_c.std() + 1e-8)
        if batch.episode_stats:
            batch.mean_episode_cost = float(np.mean([s.total_cost for s in batch.episode_stats]))


# ---------------------------------------------------------------------------
# Policy gradients for the three algorithms
# ---------------------------------------------------------------------------


def _min_clip_coeff(rho: np.ndarray, adv: np.ndarray, eps: float) -> np.ndarray:
    """d/d rho of min(rho*adv, clip(rho)*adv); zero where the clipped branch
    is strictly better (standard clipped-surrogate gradient mask)."""
    clipped = np.clip(rho, 1.0 - eps, 1.0 + eps)
    return np.where(rho * adv <= clipped * adv, adv, 0.0)


def _max_clip_coeff(rho: np.ndarray, adv: np.ndarray, eps: float) -> np.ndarray:
    """Pessimistic mirror used for cost surrogates: d/d rho of max(...)."""
    clipped = np.clip(rho, 1.0 - eps, 1.0 + eps)
    return np.where(rho * adv >= clipped * adv, adv, 0.0)


def policy_gradients(
    algorithm: str,
    bundle: PolicyBundle,
    obs: np.ndarray,
    u: np.ndarray,
    logp_old: np.ndarray,
    adv_r: np.ndarray,
    adv_c: np.ndarray,
    mean_episode_cost: float,
    cmdp: CmdpConfig,
    cfg: AlgoConfig,
) -> tuple[list[np.ndarray], dict]:
    """Parameter gradients of the minibatch policy loss for one algorithm.

    Returns gradients for gradient descent (the loss already carries the
    maximize/minimize sign) plus diagnostics.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    mean, cache = forward(bundle.policy, obs)
    log_std = bundle.policy.log_std.astype(np.float64)
    sigma = np.exp(log_std)
    logp = gaussian_logp(u.astype(np.float64), mean.astype(np.float64), log_std)
    rho = np.exp(logp - logp_old)
    b = obs.shape[0]
    eps = cfg.clip_eps

    diag: dict = {}
    if algorithm == "ppolag":
        lam = bundle.lagrange_lambda
        adv = (adv_r - lam * adv_c) / (1.0 + lam)
        dloss_dlogp = -(_min_clip_coeff(rho, adv, eps) * rho) / b
        diag["lambda"] = lam
    elif algorithm == "p3o":
        dloss_dlogp = -(_min_clip_coeff(rho, adv_r, eps) * rho) / b
        surr_c = float(np.mean(np.maximum(rho * adv_c, np.clip(rho, 1 - eps, 1 + eps) * adv_c)))
        hinge = mean_episode_cost - cmdp.kappa + surr_c
        diag["hinge"] = max(0.0, hinge)
        if hinge > 0.0:
            dloss_dlogp = dloss_dlogp + cfg.p3o_penalty * (_max_clip_coeff(rho, adv_c, eps) * rho) / b
    else:  # oncrpo
        cost_branch = mean_episode_cost > cmdp.kappa + cfg.eta(cmdp.kappa)
        diag["branch"] = "cost" if cost_branch else "reward"
        if cost_branch:
            dloss_dlogp = (_max_clip_coeff(rho, adv_c, eps) * rho) / b
        else:
            dloss_dlogp = -(_min_clip_coeff(rho, adv_r, eps) * rho) / b

    z = (u.astype(np.float64) - mean.astype(np.float64)) / sigma
    grad_mean = dloss_dlogp[:, None] * z / sigma
    grad_log_std = np.sum(dloss_dlogp[:, None] * (z * z - 1.0), axis=0)
    grad_log_std -= cfg.entropy_coef  # d(-coef * H)/dlog_std = -coef per dim

    grads = backward(bundle.policy, cache, grad_mean.astype(mean.dtype), grad_log_std)
    clipped = np.clip(rho, 1 - eps, 1 + eps)
    diag.update(
        ratio_mean=float(np.mean(rho)),
        clip_frac=float(np.mean(np.abs(rho - clipped) > 0)),
    )
    return grads, diag


def _critic_step(critic: DenseNet, opt: AdamState, obs: np.ndarray, target: np.ndarray) -> float:
    v, cache = forward(critic, obs)
    err = v[:, 0].astype(np.float64) - target
    grad_z = (err / len(target))[:, None].astype(v.dtype)
    grads = backward(critic, cache, grad_z)
    adam_step(opt, critic.params, grads)
    return float(0.5 * np.mean(err**2))


@dataclass
class BundleOptimizers:
    policy: AdamState
    reward_critic: AdamState
    cost_critic: AdamState

    @classmethod
    def for_bundle(cls, bundle: PolicyBundle, cfg: AlgoConfig) -> "BundleOptimizers":
        return cls(
            policy=AdamState.for_net(bundle.policy, lr=cfg.lr_policy),
            reward_critic=AdamState.for_net(bundle.reward_critic, lr=cfg.lr_critic),
            cost_critic=AdamState.for_net(bundle.cost_critic, lr=cfg.lr_critic),
        )


def _run_update(
    algorithm: str,
    bundle: PolicyBundle,
    batch: RolloutBatch,
    cmdp: CmdpConfig,
    opts: BundleOptimizers,
    cfg: AlgoConfig,
    rng: np.random.Generator,
) -> dict:
    n = len(batch)
    pi_losses, v_losses, vc_losses = [], [], []
    diag: dict = {}
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            mb = order[start : start + cfg.minibatch]
            grads, d = policy_gradients(
                algorithm,
                bundle,
                batch.obs[mb],
                batch.u[mb],
                batch.logp_old[mb],
                batch.adv_r_norm[mb],
                batch.adv_c_scaled[mb],
                batch.mean_episode_cost,
                cmdp,
                cfg,
            )
            adam_step(opts.policy, bundle.policy.params, grads)
            diag = d
            v_losses.append(_critic_step(bundle.reward_critic, opts.reward_critic, batch.obs[mb], batch.target_r[mb]))
            vc_losses.append(_critic_step(bundle.cost_critic, opts.cost_critic, batch.obs[mb], batch.target_c[mb]))

    out = {
        "value_loss": float(np.mean(v_losses)),
        "cost_value_loss": float(np.mean(vc_losses)),
        "mean_episode_cost": batch.mean_episode_cost,
    }
    out.update(diag)
    return out


def ppolag_update(
    bundle: PolicyBundle,
    batch: RolloutBatch,
    cmdp: CmdpConfig,
    opts: BundleOptimizers,
    cfg: AlgoConfig,
    rng: np.random.Generator,
) -> dict:
    """Clipped-surrogate epochs with the current multiplier, then projected
    dual ascent: lambda <- max(0, lambda + lr * (J_c - kappa))."""
    out = _run_update("ppolag", bundle, batch, cmdp, opts, cfg, rng)
    jc = batch.mean_episode_cost
    bundle.lagrange_lambda = max(0.0, bundle.lagrange_lambda + cfg.lr_lambda * (jc - cmdp.kappa))
    out["lambda"] = bundle.lagrange_lambda
    return out


def p3o_update(
    bundle: PolicyBundle,
    batch: RolloutBatch,
    cmdp: CmdpConfig,
    opts: BundleOptimizers,
    cfg: AlgoConfig,
    rng: np.random.Generator,
) -> dict:
    return _run_update("p3o", bundle, batch, cmdp, opts, cfg, rng)


def oncrpo_update(
    bundle: PolicyBundle,
    batch: RolloutBatch,
    cmdp: CmdpConfig,
    opts: BundleOptimizers,
    cfg: AlgoConfig,
    rng: np.random.Generator,
) -> dict:
    return _run_update("oncrpo", bundle, batch, cmdp, opts, cfg, rng)


_UPDATES = {"ppolag": ppolag_update, "p3o": p3o_update, "oncrpo": oncrpo_update}


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainSetup:
    """Fully resolved inputs for one training run."""

    algorithm: str
    srpl: bool
    domain: str
    budget_steps: int
    cmdp: CmdpConfig
    layout: ObservationLayout
    weights: RewardWeights
    vparams: VehicleParams
    algo: AlgoConfig
    s2c: S2CConfig

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.budget_steps <= 0:
            raise ValueError("budget_steps must be positive")


@dataclass
class TrainResult:
    bundle: PolicyBundle
    log_rows: list[dict]
    total_steps: int


def build_bundle(setup: TrainSetup, seed: int) -> PolicyBundle:
    """Networks + optional steps-to-cost model, deterministically seeded."""
    init_rng = np.random.default_rng(np.random.SeedSequence((seed, 0x11)))
    raw_dim = setup.layout.total_dim
    s2c_model = None
    in_dim = raw_dim
    if setup.srpl:
        s2c_model = StepsToCostModel(raw_dim, setup.s2c, init_rng)
        in_dim = raw_dim + setup.s2c.n_bins
    policy = init_dense(
        [in_dim, *setup.algo.policy_hidden, 2],
        "gaussian",
        init_rng,
        final_scale=0.01,
        log_std_init=setup.algo.log_std_init,
    )
    v_r = init_dense([in_dim, *setup.algo.critic_hidden, 1], "linear", init_rng)
    v_c = init_dense([in_dim, *setup.algo.critic_hidden, 1], "linear", init_rng)
    return PolicyBundle(policy=policy, reward_critic=v_r, cost_critic=v_c, s2c=s2c_model)


def train(setup: TrainSetup, seed: int, log_cb=None) -> TrainResult:
    """Run one seeded training run; deterministic given (setup, seed)."""
    bundle = build_bundle(setup, seed)
    opts = BundleOptimizers.for_bundle(bundle, setup.algo)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((seed, 0x22)))

    s2c_buffer = s2c_opt = None
    if setup.srpl:
        s2c_buffer = SafetyBuffer(setup.s2c.buffer_capacity, setup.layout.total_dim)
        s2c_opt = AdamState.for_net(bundle.s2c.net, lr=setup.algo.lr_critic)

    collector = RolloutCollector(
        bundle,
        setup.domain,
        seed,
        setup.cmdp,
        setup.layout,
        setup.weights,
        setup.vparams,
        setup.algo,
        s2c_cfg=setup.s2c if setup.srpl else None,
        s2c_buffer=s2c_buffer,
        s2c_optimizer=s2c_opt,
    )
    update_fn = _UPDATES[setup.algorithm]

    rows: list[dict] = []
    iteration = 0
    while collector.total_steps < setup.budget_steps:
        batch = collector.collect(setup.algo.batch_steps)
        diag = update_fn(bundle, batch, setup.cmdp, opts, setup.algo, shuffle_rng)
        iteration += 1
        stats = batch.episode_stats
        row = {
            "iteration": iteration,
            "env_steps": collector.total_steps,
            "episodes": len(stats),
            "mean_return": float(np.mean([s.total_reward for s in stats])) if stats else 0.0,
            "mean_cost": batch.mean_episode_cost,
            "success_rate": float(np.mean([s.outcome == "success" for s in stats])) if stats else 0.0,
            "s2c_loss": float(np.mean(collector.s2c_losses)) if collector.s2c_losses else None,
        }
        row.update({k: v for k, v in diag.items() if np.isscalar(v) or isinstance(v, str)})
        rows.append(row)
        if log_cb is not None:
            log_cb(row)
    return TrainResult(bundle=bundle, log_rows=rows, total_steps=collector.total_steps)
