"""Artifact serialization: line-delimited records and summary tables.

Evaluation reports persist as one JSON record per scenario (preceded by a
fingerprint record) plus a comma-separated summary mirroring the standard
column order: Reward, Cost, RC, SR, OOR as "mean (std)".
"""

from __future__ import annotations

import json
from pathlib import Path

from .evaluation import METRIC_COLUMNS, EvaluationReport


def write_report(report: EvaluationReport, prefix: Path) -> tuple[Path, Path]:
    """Write ``<prefix>.rows.jsonl`` and ``<prefix>.summary.csv``."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    rows_path = prefix.with_suffix(".rows.jsonl")
    with open(rows_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"fingerprint": report.fingerprint}, sort_keys=True) + "\n")
        for row in report.rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    summary_path = prefix.with_suffix(".summary.csv")
    write_summary_csv({prefix.name: report}, summary_path)
    return rows_path, summary_path


def load_report(path) -> EvaluationReport:
    path = Path(path)
    rows = []
    fingerprint = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "fingerprint" in rec and "scenario_id" not in rec:
                fingerprint = rec["fingerprint"]
            else:
                rows.append(rec)
    return EvaluationReport(rows=rows, fingerprint=fingerprint)


def summary_line(report: EvaluationReport) -> dict[str, str]:
    agg = report.aggregates()
    return {m: f"{agg[m][0]:.4f} ({agg[m][1]:.4f})" for m in METRIC_COLUMNS}


def write_summary_csv(reports: dict[str, EvaluationReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["policy", *METRIC_COLUMNS]
    lines = [",".join(header)]
    for name, report in reports.items():
        cells = summary_line(report)
        lines.append(",".join([name] + [f'"{cells[m]}"' for m in METRIC_COLUMNS]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_training_log(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def load_training_log(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_sweep_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["sigma,policy,mean_reward,mean_cost"]
    for r in rows:
        lines.append(f"{r['sigma']},{r['policy']},{r['mean_reward']},{r['mean_cost']}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_sweep_csv(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != len(header):
                continue
            rec = dict(zip(header, parts))
            rec["sigma"] = float(rec["sigma"])
            rec["mean_reward"] = float(rec["mean_reward"])
            rec["mean_cost"] = float(rec["mean_cost"])
            rows.append(rec)
    return rows


def test_result_line(result, metric: str, extra: dict | None = None) -> str:
    """Machine-parseable single-line record for one statistical comparison."""
    rec = {"metric": metric}
    rec.update(result.as_dict())
    if extra:
        rec.update(extra)
    return json.dumps(rec, sort_keys=True)
