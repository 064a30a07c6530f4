"""Command-line surface: train, eval, stats, sweep, transfer, gen-scenarios,
defaults.

Exit codes are a stable scripting contract: 0 success, 2 configuration
error, 3 missing artifact, 4 data mismatch. Grid commands are idempotent:
completed cells are fingerprinted and skipped on re-runs. The environment
variable SAFEDRIVE_WORKERS overrides the grid worker count (default 1).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import artifacts, figures, reports
from .checkpoint import CheckpointError, checkpoint_hash
from .config import ConfigError, RunConfig, defaults_text, load_config
from .evaluation import DataMismatchError, NoiseSpec, compare, evaluate
from .scenario import DOMAINS, generate_scenario, load_scenarios, save_scenarios

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_MISMATCH = 4


class MissingArtifactError(FileNotFoundError):
    """Required input artifact does not exist; maps to exit code 3."""


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingArtifactError(f"{what} not found: {p}")
    return p


def _file_hash(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("SAFEDRIVE_WORKERS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    run_cfg = load_config(_maybe_config(args, required=True))
    seeds = (args.seed,) if args.seed is not None else tuple(run_cfg["run.seeds"])
    outdir = Path(args.out) if args.out else Path(run_cfg["run.out"])
    setup = run_cfg.train_setup()

    from .algos import train

    for seed in seeds:
        name = artifacts.run_name(
            run_cfg["run.algorithm"], run_cfg["run.srpl"], run_cfg["run.domain"], seed
        )
        print(f"[train] {name}: {setup.budget_steps} steps on {setup.domain}", flush=True)
        result = train(setup, seed, log_cb=lambda row: _progress(name, row))
        paths = artifacts.save_run(outdir, run_cfg, seed, result)
        print(f"[train] wrote {paths['checkpoint']}", flush=True)
    return EXIT_OK


def _progress(name: str, row: dict) -> None:
    print(
        f"[train] {name} it={row['iteration']} steps={row['env_steps']} "
        f"ret={row['mean_return']:.1f} cost={row['mean_cost']:.2f} sr={row['success_rate']:.2f}",
        flush=True,
    )


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _eval_policy_and_cfg(checkpoint: str, config_path):
    """Resolve the policy plus the env/cmdp settings it must be run under."""
    if checkpoint == "expert":
        run_cfg = load_config(config_path) if config_path else RunConfig({})
        return "expert", run_cfg, {"policy": "expert"}
    path = _require(checkpoint, "checkpoint")
    bundle, run_cfg, meta = artifacts.load_bundle(path)
    fp = {
        "checkpoint": str(path),
        "checkpoint_hash": checkpoint_hash(path),
        "algorithm": meta.get("algorithm"),
        "srpl": meta.get("srpl"),
        "train_domain": meta.get("domain"),
        "train_seed": meta.get("seed"),
    }
    return bundle, run_cfg, fp


def _run_eval(checkpoint: str, scenarios_path, sigma: float, eval_seed: int, config_path=None):
    policy, run_cfg, fp = _eval_policy_and_cfg(checkpoint, config_path)
    specs = load_scenarios(_require(scenarios_path, "scenario file"))
    fp["scenario_file"] = str(scenarios_path)
    fp["scenario_hash"] = _file_hash(scenarios_path)
    report = evaluate(
        policy,
        specs,
        noise=NoiseSpec(sigma=sigma),
        cmdp=run_cfg.cmdp(),
        layout=run_cfg.layout(),
        weights=run_cfg.weights(),
        vparams=run_cfg.vparams(),
        eval_seed=eval_seed,
        fingerprint=fp,
    )
    return report


def cmd_eval(args) -> int:
    if not args.scenarios:
        raise ConfigError("--scenarios is required for eval")
    sigma = args.sigma if args.sigma is not None else 0.0
    eval_seed = args.seed if args.seed is not None else 0
    report = _run_eval(args.checkpoint, args.scenarios, sigma, eval_seed, args.config)

    outdir = Path(args.out) if args.out else Path(".")
    stem = "expert" if args.checkpoint == "expert" else Path(args.checkpoint).stem
    prefix = outdir / f"eval_{stem}_sigma{sigma:g}"
    rows_path, summary_path = reports.write_report(report, prefix)
    figures.eval_histograms(report, prefix.parent / f"{prefix.name}_metrics.png", title=prefix.name)
    agg = report.aggregates()
    print(
        f"[eval] {stem} sigma={sigma:g}: "
        + " ".join(f"{m}={agg[m][0]:.3f}" for m in ("reward", "cost", "rc", "sr", "oor"))
    )
    print(f"[eval] wrote {rows_path} and {summary_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------


def cmd_stats(args) -> int:
    rep_a = reports.load_report(_require(args.report_a, "report"))
    rep_b = reports.load_report(_require(args.report_b, "report"))
    result = compare(rep_a, rep_b, args.metric)
    line = reports.test_result_line(
        result,
        args.metric,
        extra={"report_a": str(args.report_a), "report_b": str(args.report_b)},
    )
    print(line)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(line + "\n", encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep / transfer grids
# ---------------------------------------------------------------------------


def _cell_fingerprint(**kwargs) -> dict:
    return {k: v for k, v in sorted(kwargs.items())}


def _cell_done(cell_dir: Path, fingerprint: dict) -> bool:
    fp_path = cell_dir / "fingerprint.json"
    rows_path = cell_dir / "report.rows.jsonl"
    if not fp_path.exists() or not rows_path.exists():
        return False
    try:
        stored = json.loads(fp_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, OSError):
        return False  # corrupt cell: recompute
    return stored == fingerprint


def _sweep_cell(task: dict) -> dict:
    cell_dir = Path(task["cell_dir"])
    fingerprint = task["fingerprint"]
    if not _cell_done(cell_dir, fingerprint):
        report = _run_eval(
            task["checkpoint"], task["scenarios"], task["sigma"], task["eval_seed"], task.get("config")
        )
        cell_dir.mkdir(parents=True, exist_ok=True)
        reports.write_report(report, cell_dir / "report")
        (cell_dir / "fingerprint.json").write_text(
            json.dumps(fingerprint, sort_keys=True), encoding="utf-8"
        )
    report = reports.load_report(cell_dir / "report.rows.jsonl")
    agg = report.aggregates()
    return {
        "sigma": task["sigma"],
        "policy": task["label"],
        "mean_reward": agg["reward"][0],
        "mean_cost": agg["cost"][0],
        "sr": agg["sr"][0],
        "oor": agg["oor"][0],
        "train_domain": report.fingerprint.get("train_domain"),
        "eval_domain": report.fingerprint.get("domain"),
    }


def _run_cells(tasks: list[dict]) -> list[dict]:
    workers = _workers()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, tasks))
    return [_sweep_cell(t) for t in tasks]


def _labelled_checkpoints(run_cfg: RunConfig, section: str) -> list[tuple[str, str]]:
    ckpts = run_cfg[f"{section}.checkpoints"]
    labels = run_cfg[f"{section}.labels"]
    if not ckpts:
        raise ConfigError(f"{section}.checkpoints must list at least one checkpoint")
    if labels and len(labels) != len(ckpts):
        raise ConfigError(f"{section}.labels must match {section}.checkpoints in length")
    if not labels:
        labels = tuple(Path(c).stem if c != "expert" else "expert" for c in ckpts)
    return list(zip(labels, ckpts))


def cmd_sweep(args) -> int:
    run_cfg = load_config(_maybe_config(args, required=True))
    pairs = _labelled_checkpoints(run_cfg, "sweep")
    scenarios_path = _require(run_cfg["sweep.scenarios"], "sweep.scenarios file")
    sigmas = list(run_cfg["sweep.sigmas"])
    if sigmas != sorted(sigmas) or not sigmas or sigmas[0] != 0.0:
        raise ConfigError("sweep.sigmas must be ascending and include 0")
    eval_seed = run_cfg["sweep.seed"]
    outdir = Path(args.out) if args.out else Path("sweep_out")

    scen_hash = _file_hash(scenarios_path)
    tasks = []
    for label, ckpt in pairs:
        ckpt_hash = "expert" if ckpt == "expert" else checkpoint_hash(_require(ckpt, "checkpoint"))
        for sigma in sigmas:
            cell = outdir / "cells" / f"{label}_sigma{sigma:g}"
            tasks.append(
                {
                    "label": label,
                    "checkpoint": ckpt,
                    "sigma": sigma,
                    "scenarios": str(scenarios_path),
                    "eval_seed": eval_seed,
                    "cell_dir": str(cell),
                    "fingerprint": _cell_fingerprint(
                        checkpoint=ckpt_hash, sigma=sigma, scenarios=scen_hash, eval_seed=eval_seed
                    ),
                }
            )
    rows = _run_cells(tasks)
    csv_path = reports.write_sweep_csv(rows, outdir / "sweep.csv")
    figures.sweep_curves(rows, outdir / "sweep.png")
    print(f"[sweep] wrote {csv_path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_transfer(args) -> int:
    run_cfg = load_config(_maybe_config(args, required=True))
    pairs = _labelled_checkpoints(run_cfg, "transfer")
    scen_files = {
        "dense": _require(run_cfg["transfer.scenarios_dense"], "transfer.scenarios_dense file"),
        "sparse": _require(run_cfg["transfer.scenarios_sparse"], "transfer.scenarios_sparse file"),
    }
    eval_seed = run_cfg["transfer.seed"]
    outdir = Path(args.out) if args.out else Path("transfer_out")

    tasks = []
    for label, ckpt in pairs:
        ckpt_hash = "expert" if ckpt == "expert" else checkpoint_hash(_require(ckpt, "checkpoint"))
        for domain, path in scen_files.items():
            cell = outdir / "cells" / f"{label}_on_{domain}"
            tasks.append(
                {
                    "label": label,
                    "checkpoint": ckpt,
                    "sigma": 0.0,
                    "scenarios": str(path),
                    "eval_seed": eval_seed,
                    "cell_dir": str(cell),
                    "fingerprint": _cell_fingerprint(
                        checkpoint=ckpt_hash,
                        scenarios=_file_hash(path),
                        eval_seed=eval_seed,
                        eval_domain=domain,
                    ),
                }
            )
    rows = _run_cells(tasks)
    cells = [
        {
            "policy": r["policy"],
            "train_domain": r["train_domain"] or "?",
            "eval_domain": r["eval_domain"] or "?",
            "sr": r["sr"],
            "oor": r["oor"],
            "mean_reward": r["mean_reward"],
            "mean_cost": r["mean_cost"],
        }
        for r in rows
    ]
    csv_lines = ["policy,train_domain,eval_domain,mean_reward,mean_cost,sr,oor"]
    for c in cells:
        csv_lines.append(
            f"{c['policy']},{c['train_domain']},{c['eval_domain']},"
            f"{c['mean_reward']},{c['mean_cost']},{c['sr']},{c['oor']}"
        )
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "transfer.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    figures.transfer_bars(cells, outdir / "transfer.png")
    print(f"[transfer] wrote {outdir / 'transfer.csv'} ({len(cells)} cells)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen-scenarios / defaults
# ---------------------------------------------------------------------------


def cmd_gen_scenarios(args) -> int:
    if args.domain not in DOMAINS:
        raise ConfigError(f"domain must be one of {DOMAINS}")
    if args.count <= 0:
        raise ConfigError("count must be positive")
    if not args.out:
        raise ConfigError("--out is required for gen-scenarios")
    import numpy as np

    base = args.seed if args.seed is not None else 0
    specs = []
    for i in range(args.count):
        seed = int(np.random.SeedSequence((base, i)).generate_state(1)[0])
        specs.append(generate_scenario(args.domain, seed))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scenarios(out, specs)
    print(f"[gen-scenarios] wrote {len(specs)} {args.domain} scenarios to {out}")
    return EXIT_OK


def cmd_defaults(_args) -> int:
    print(defaults_text())
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------


def _maybe_config(args, required: bool = False):
    cfg = getattr(args, "config", None)
    if cfg is None and required:
        raise ConfigError("--config is required for this command")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safedrive", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one run per seed from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="train only this seed")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a frozen scenario file")
    p.add_argument("checkpoint", help="checkpoint path, or 'expert' for the reference controller")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--seed", type=int, default=None, help="evaluation noise seed")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="env config when evaluating 'expert'")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="paired signed-rank comparison of two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--metric", choices=("cost", "sr"), required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sweep", help="noise-robustness sweep over a sigma grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("transfer", help="zero-shot cross-domain evaluation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("gen-scenarios", help="materialize a frozen scenario file")
    p.add_argument("domain", choices=DOMAINS)
    p.add_argument("count", type=int)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scenarios)

    p = sub.add_parser("defaults", help="print every config key with its default")
    p.set_defaults(func=cmd_defaults)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifactError, CheckpointError) as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except DataMismatchError as exc:
        print(f"data mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
