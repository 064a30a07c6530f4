"""Evaluation protocol: fixed-set per-scenario metrics, paired comparisons,
noise-robustness sweeps, zero-shot cross-domain evaluation and the
action-output stabilization analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cmdp import CmdpConfig, clamped_route_completion, episode_metrics
from .env import ObservationLayout, RewardWeights, VehicleParams, expert_controller, run_episode
from .scenario import ScenarioSpec
from .stats import TestResult, wilcoxon_signed_rank

METRIC_COLUMNS = ("reward", "cost", "rc", "sr", "oor")

_METRIC_KEYS = {
    "reward": "total_reward",
    "cost": "total_cost",
    "rc": "route_completion_clamped",
    "sr": "success",
    "oor": "out_of_road",
}


class DataMismatchError(ValueError):
    """Raised when two reports do not cover the same scenario set."""


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean gaussian perturbation of the obstacle-lidar observation slice."""

    sigma: float = 0.0
    clip_to_unit: bool = True

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")


def make_noise_filter(noise: NoiseSpec, layout: ObservationLayout, rng: np.random.Generator):
    """Observation filter applying the declared perturbation; identity off-slice."""
    if noise.sigma == 0.0:
        return None
    sl = layout.lidar_slice

    def _filter(obs: np.ndarray) -> np.ndarray:
        out = obs.copy()
        out[sl] = out[sl] + noise.sigma * rng.standard_normal(sl.stop - sl.start)
        if noise.clip_to_unit:
            out[sl] = np.clip(out[sl], 0.0, 1.0)
        return out

    return _filter


@dataclass
class EvaluationReport:
    """Per-scenario metric rows plus recomputable aggregates."""

    rows: list[dict]
    fingerprint: dict = field(default_factory=dict)

    @property
    def scenario_ids(self) -> list[str]:
        return [r["scenario_id"] for r in self.rows]

    def column(self, metric: str) -> np.ndarray:
        key = _METRIC_KEYS[metric]
        return np.array([r[key] for r in self.rows], dtype=np.float64)

    def aggregates(self) -> dict[str, tuple[float, float]]:
        out = {}
        for metric in METRIC_COLUMNS:
            col = self.column(metric)
            out[metric] = (float(col.mean()), float(col.std()))
        return out


def _resolve_policy(policy, layout: ObservationLayout, vparams: VehicleParams):
    """Accept a PolicyBundle or a raw callable(raw_obs, spec) / callable(raw_obs)."""
    from .algos import PolicyBundle

    if isinstance(policy, PolicyBundle):
        return lambda obs, spec: policy.mean_action(obs)
    if policy == "expert":
        return lambda obs, spec: expert_controller(obs, spec, layout=layout, params=vparams)
    return lambda obs, spec: policy(obs)


def evaluate(
    policy,
    scenarios: list[ScenarioSpec],
    noise: NoiseSpec | None = None,
    cmdp: CmdpConfig | None = None,
    layout: ObservationLayout | None = None,
    weights: RewardWeights | None = None,
    vparams: VehicleParams | None = None,
    eval_seed: int = 0,
    fingerprint: dict | None = None,
) -> EvaluationReport:
    """Deterministic evaluation of one policy snapshot on a fixed scenario set.

    The policy acts through its distribution mean; observation noise, when
    requested, is drawn from an independent per-scenario stream keyed by
    (eval_seed, scenario index).
    """
    noise = noise or NoiseSpec()
    layout = layout or ObservationLayout()
    vparams = vparams or VehicleParams()
    act = _resolve_policy(policy, layout, vparams)

    rows = []
    for idx, spec in enumerate(scenarios):
        rng = np.random.default_rng(np.random.SeedSequence((eval_seed, idx)))
        obs_filter = make_noise_filter(noise, layout, rng)
        traj = run_episode(
            spec,
            lambda obs: act(obs, spec),
            cmdp=cmdp,
            layout=layout,
            weights=weights,
            params=vparams,
            obs_filter=obs_filter,
        )
        m = episode_metrics(traj, spec)
        rows.append(
            {
                "scenario_id": spec.scenario_id,
                "total_reward": m.total_reward,
                "total_cost": m.total_cost,
                "route_completion": m.route_completion,
                "route_completion_clamped": clamped_route_completion(m),
                "success": m.success,
                "out_of_road": m.out_of_road,
                "outcome": traj.outcome,
                "length": len(traj),
            }
        )
    fp = dict(fingerprint or {})
    fp.setdefault("sigma", noise.sigma)
    fp.setdefault("eval_seed", eval_seed)
    fp.setdefault("n_scenarios", len(scenarios))
    if scenarios:
        fp.setdefault("domain", scenarios[0].domain_tag)
    return EvaluationReport(rows=rows, fingerprint=fp)


def compare(report_a: EvaluationReport, report_b: EvaluationReport, metric: str) -> TestResult:
    """Paired signed-rank test of metric(A) - metric(B) over shared scenarios.

    No multiple-comparison correction is applied; each comparison stands on
    its own.
    """
    if metric not in _METRIC_KEYS:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(_METRIC_KEYS)}")
    if report_a.scenario_ids != report_b.scenario_ids:
        raise DataMismatchError("reports cover different scenario sets; pairing is undefined")
    diffs = report_a.column(metric) - report_b.column(metric)
    return wilcoxon_signed_rank(diffs)


def transfer_eval(
    policy,
    scenarios: list[ScenarioSpec],
    train_domain: str,
    **eval_kwargs,
) -> EvaluationReport:
    """Zero-shot evaluation of a policy on another domain's scenario set."""
    report = evaluate(policy, scenarios, **eval_kwargs)
    report.fingerprint["train_domain"] = train_domain
    report.fingerprint["eval_domain"] = scenarios[0].domain_tag if scenarios else None
    return report


def robustness_sweep(
    policies: dict[str, object],
    scenarios: list[ScenarioSpec],
    sigmas: list[float],
    eval_seed: int = 0,
    **eval_kwargs,
) -> tuple[list[dict], dict[tuple[str, float], EvaluationReport]]:
    """Mean reward/cost per (policy, sigma) over a fixed scenario subset.

    ``sigmas`` must be sorted ascending and include 0 so the clean baseline
    row is part of every sweep.
    """
    if list(sigmas) != sorted(sigmas) or (sigmas and sigmas[0] != 0.0):
        raise ValueError("sigma list must be ascending and start at 0")
    rows = []
    reports: dict[tuple[str, float], EvaluationReport] = {}
    for label, policy in policies.items():
        for sigma in sigmas:
            rep = evaluate(
                policy,
                scenarios,
                noise=NoiseSpec(sigma=sigma),
                eval_seed=eval_seed,
                **eval_kwargs,
            )
            reports[(label, sigma)] = rep
            agg = rep.aggregates()
            rows.append(
                {
                    "sigma": sigma,
                    "policy": label,
                    "mean_reward": agg["reward"][0],
                    "mean_cost": agg["cost"][0],
                }
            )
    return rows, reports


# ---------------------------------------------------------------------------
# Policy-output stabilization analysis
# ---------------------------------------------------------------------------


def collect_observation_fixture(
    scenarios: list[ScenarioSpec],
    n_obs: int = 100,
    stride: int = 10,
    layout: ObservationLayout | None = None,
    cmdp: CmdpConfig | None = None,
    weights: RewardWeights | None = None,
    vparams: VehicleParams | None = None,
) -> np.ndarray:
    """Fixed raw-observation sample gathered along reference-controller runs.

    Policy-independent so the same fixture can feed every compared policy.
    """
    layout = layout or ObservationLayout()
    vparams = vparams or VehicleParams()
    out: list[np.ndarray] = []
    for spec in scenarios:
        traj = run_episode(
            spec,
            lambda obs: expert_controller(obs, spec, layout=layout, params=vparams),
            cmdp=cmdp,
            layout=layout,
            weights=weights,
            params=vparams,
        )
        for rec in traj.steps[::stride]:
            out.append(rec.state)
            if len(out) >= n_obs:
                return np.stack(out)
    if len(out) < n_obs:
        raise ValueError(f"collected only {len(out)} observations; supply more scenarios")
    return np.stack(out)


def action_variance_analysis(
    policies: dict[str, object],
    observations: np.ndarray,
    sigma: float,
    layout: ObservationLayout | None = None,
    noise_seed: int = 0,
) -> dict[str, dict]:
    """Mean-action output variance under clean vs noisy inputs per policy.

    Every policy sees the identical noisy copies (one fixed draw per
    observation). Reports per-dimension output variances, their noisy-clean
    increase, and the raw action sets for plotting.
    """
    layout = layout or ObservationLayout()
    obs = np.asarray(observations, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence((noise_seed, 0x7A)))
    noisy = obs.copy()
    sl = layout.lidar_slice
    noisy[:, sl] = noisy[:, sl] + sigma * rng.standard_normal(noisy[:, sl].shape)
    noisy[:, sl] = np.clip(noisy[:, sl], 0.0, 1.0)

    results: dict[str, dict] = {}
    for label, policy in policies.items():
        act = _resolve_policy(policy, layout, VehicleParams())
        a_clean = np.stack([np.asarray(act(o, None), dtype=np.float64).ravel() for o in obs])
        a_noisy = np.stack([np.asarray(act(o, None), dtype=np.float64).ravel() for o in noisy])
        var_clean = a_clean.var(axis=0)
        var_noisy = a_noisy.var(axis=0)
        results[label] = {
            "var_clean": var_clean,
            "var_noisy": var_noisy,
            "variance_increase": float(np.sum(var_noisy - var_clean)),
            "mean_action_shift": float(np.mean(np.linalg.norm(a_noisy - a_clean, axis=1))),
            "actions_clean": a_clean,
            "actions_noisy": a_noisy,
        }
    return results
