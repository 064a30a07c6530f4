"""Saving and re-loading run artifacts (checkpoints + logs + figures).

Every artifact embeds the fully resolved configuration and the seed, so a
checkpoint alone is enough to rebuild the bundle, the environment settings
it was trained under, and the evaluation defaults.
"""

from __future__ import annotations

from pathlib import Path

from .algos import PolicyBundle, TrainResult, TrainSetup
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_from_echo
from .figures import training_curves
from .reports import write_training_log
from .s2c import StepsToCostModel


def run_name(algorithm: str, srpl: bool, domain: str, seed: int) -> str:
    return f"{algorithm}_{'srpl' if srpl else 'nosrpl'}_{domain}_{seed}"


def save_run(outdir, run_cfg: RunConfig, seed: int, result: TrainResult) -> dict[str, Path]:
    """Write checkpoint, training log and training-curve figure for one run."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    name = run_name(run_cfg["run.algorithm"], run_cfg["run.srpl"], run_cfg["run.domain"], seed)

    nets = {
        "policy": result.bundle.policy,
        "reward_critic": result.bundle.reward_critic,
        "cost_critic": result.bundle.cost_critic,
    }
    if result.bundle.s2c is not None:
        nets["s2c_online"] = result.bundle.s2c.net
        nets["s2c_target"] = result.bundle.s2c.target
    metadata = {
        "config": run_cfg.echo(),
        "seed": seed,
        "steps": result.total_steps,
        "lambda": result.bundle.lagrange_lambda,
        "algorithm": run_cfg["run.algorithm"],
        "srpl": run_cfg["run.srpl"],
        "domain": run_cfg["run.domain"],
    }
    ckpt = outdir / f"{name}.ckpt"
    save_checkpoint(ckpt, nets, metadata)
    log = write_training_log(result.log_rows, outdir / f"{name}.train.jsonl")
    fig = training_curves(result.log_rows, outdir / f"{name}_curves.png", title=name)
    return {"checkpoint": ckpt, "log": log, "figure": fig}


def load_bundle(path) -> tuple[PolicyBundle, RunConfig, dict]:
    """Rebuild a policy bundle (with its augmentation hook) from a checkpoint."""
    nets, metadata = load_checkpoint(path)
    run_cfg = config_from_echo(metadata["config"])
    s2c_model = None
    if "s2c_target" in nets:
        s2c_model = StepsToCostModel.from_nets(
            nets["s2c_online"], nets["s2c_target"], run_cfg.s2c()
        )
    bundle = PolicyBundle(
        policy=nets["policy"],
        reward_critic=nets["reward_critic"],
        cost_critic=nets["cost_critic"],
        lagrange_lambda=float(metadata.get("lambda", 0.0)),
        s2c=s2c_model,
    )
    return bundle, run_cfg, metadata
