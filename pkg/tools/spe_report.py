#!/usr/bin/env python3

"""
Report assembly and emission.

Reports are plain nested dicts. JSON output maps NaN and infinities to null;
CSV output writes flat tables through pandas with an explicit "null" marker.
"""

import json
import logging
import math
import os
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from tools.mixture_model import UNLABELED, ScoreDataset
from tools.performance_estimation import (
    CurveBand,
    DensityBand,
    PerformanceCurve,
    ThresholdBand,
    ThresholdRecommendation,
)
from tools.spe_errors import ReportError

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = "1.0"
NULL_MARKER = "null"

# table written to the main --out path in csv format, per command
PRIMARY_TABLES = {
    "rank-dists": "rankings",
    "fit": "pairs",
    "evaluate": "band",
    "recalibrate": "conditions",
    "experiment": "trials",
}


def new_report(command: str, config: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "command": command,
        "config": config,
    }


def sanitize(value: Any) -> Any:
    """Convert numpy containers and scalars to JSON types; non-finite floats become None"""
    if isinstance(value, dict):
        return {str(k): sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return [sanitize(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def band_table(band: CurveBand, expected: PerformanceCurve) -> List[Dict[str, Any]]:
    """One row per recall grid point"""
    rows = []
    for g, recall in enumerate(band.recall_grid):
        row = {"recall": float(recall), "expected_precision": float(expected.precision[g])}
        for level, values in zip(band.levels, band.quantiles):
            row[f"q{level:g}"] = float(values[g])
        row["excluded"] = int(band.excluded[g])
        rows.append(row)
    return rows


def density_table(band: DensityBand) -> List[Dict[str, Any]]:
    """One row per score grid point"""
    rows = []
    for g, score in enumerate(band.score_grid):
        row = {"score": float(score), "negative_mean": float(band.negative_mean[g])}
        for level, values in zip(band.levels, band.negative_quantiles):
            row[f"negative_q{level:g}"] = float(values[g])
        row["positive_mean"] = float(band.positive_mean[g])
        for level, values in zip(band.levels, band.positive_quantiles):
            row[f"positive_q{level:g}"] = float(values[g])
        rows.append(row)
    return rows


def threshold_band_table(band: ThresholdBand, raw_taus: Sequence[float]) -> List[Dict[str, Any]]:
    """One row per threshold, on both score scales"""
    rows = []
    for t, (tau, raw_tau) in enumerate(zip(band.tau_grid, raw_taus)):
        row = {"tau": float(tau), "raw_tau": float(raw_tau), "recall_mean": float(band.recall_mean[t])}
        for level, values in zip(band.levels, band.recall_quantiles):
            row[f"recall_q{level:g}"] = float(values[t])
        row["precision_mean"] = float(band.precision_mean[t])
        for level, values in zip(band.levels, band.precision_quantiles):
            row[f"precision_q{level:g}"] = float(values[t])
        rows.append(row)
    return rows


def items_table(raw: ScoreDataset, normalized: ScoreDataset, probability: np.ndarray) -> List[Dict[str, Any]]:
    ids = raw.ids or [str(i) for i in range(raw.n_items)]
    return [
        {
            "id": ids[i],
            "score": float(raw.scores[i]),
            "normalized_score": float(normalized.scores[i]),
            "label": None if raw.labels[i] == UNLABELED else int(raw.labels[i]),
            "p_positive": float(probability[i]),
        }
        for i in range(raw.n_items)
    ]


def condition_entry(condition: Dict[str, float], tau_grid: np.ndarray, raw_taus: Sequence[float],
                    probabilities: np.ndarray, recommendation: ThresholdRecommendation,
                    raw_tau: float, confidence: float) -> Dict[str, Any]:
    return {
        "condition": condition,
        "confidence": confidence,
        "recommended": {**recommendation.to_dict(), "raw_tau": raw_tau},
        "table": [
            {"tau": float(t), "raw_tau": float(r), "probability": float(p)}
            for t, r, p in zip(tau_grid, raw_taus, probabilities)
        ],
    }


def _ranking_row(label: str, row: Dict[str, Any]) -> Dict[str, Any]:
    """Ranking entry with its params dict spread into param_<name> columns"""
    flat = {"class": label, **{k: v for k, v in row.items() if k != "params"}}
    for name, value in (row.get("params") or {}).items():
        flat[f"param_{name}"] = value
    return flat

def report_tables(report: Dict[str, Any]) -> Dict[str, pd.DataFrame]:
    """Flat tables extractable from a report, keyed by name"""
    tables: Dict[str, pd.DataFrame] = {}
    if "band" in report:
        tables["band"] = pd.DataFrame(report["band"]["rows"])
    if "population_band" in report:
        tables["population_band"] = pd.DataFrame(report["population_band"]["rows"])
    if "density_band" in report:
        tables["density_band"] = pd.DataFrame(report["density_band"]["rows"])
    if "items" in report:
        tables["items"] = pd.DataFrame(report["items"])
    if "conditions" in report:
        rows = []
        for index, entry in enumerate(report["conditions"]):
            for row in entry["table"]:
                rows.append({"condition": index, "min_recall": entry["condition"]["min_recall"],
                             "min_precision": entry["condition"]["min_precision"], **row})
        tables["conditions"] = pd.DataFrame(rows)
    if "threshold_band" in report:
        tables["threshold_band"] = pd.DataFrame(report["threshold_band"]["rows"])
    if "rankings" in report:
        rows = [_ranking_row(label, row) for label, ranked in report["rankings"].items() for row in ranked]
        tables["rankings"] = pd.DataFrame(rows)
    if "model" in report and "pairs" in report["model"]:
        tables["pairs"] = pd.DataFrame(report["model"]["pairs"])
    if "experiment" in report:
        tables["trials"] = pd.DataFrame(report["experiment"]["trials"])
        tables["aggregates"] = pd.DataFrame(report["experiment"]["aggregates"])
    return tables


def emit_report(report: Dict[str, Any], fmt: str, path: Optional[str]) -> List[str]:
    """
    Write the report and return the paths written.

    json: the whole report. csv: the command's primary table at `path` and
    every other table next to it as <stem>.<table>.csv. path=None prints JSON
    to stdout.
    """
    clean = sanitize(report)
    if fmt not in ("json", "csv"):
        raise ReportError(f"unknown report format '{fmt}' (json, csv)")
    if path is None:
        if fmt != "json":
            raise ReportError("csv output needs an output path")
        print(json.dumps(clean, indent=2))
        return []

    written = []
    try:
        if fmt == "json":
            with open(path, "w") as f:
                json.dump(clean, f, indent=2)
            written.append(path)
        else:
            tables = report_tables(clean)
            primary = PRIMARY_TABLES.get(clean.get("command"))
            if primary not in tables:
                raise ReportError(f"report for '{clean.get('command')}' has no tabular export")
            stem, _ = os.path.splitext(path)
            for name, table in tables.items():
                target = path if name == primary else f"{stem}.{name}.csv"
                table.to_csv(target, index=False, na_rep=NULL_MARKER)
                written.append(target)
    except OSError as e:
        raise ReportError(f"cannot write report to {path}: {e}")
    logger.info("report written: %s", ", ".join(written))
    return written


def load_report(path: str) -> Dict[str, Any]:
    try:
        with open(path) as f:
            report = json.load(f)
    except OSError as e:
        raise ReportError(f"cannot read report {path}: {e}")
    except json.JSONDecodeError as e:
        raise ReportError(f"report {path} is not valid JSON: {e}")
    if not isinstance(report, dict) or "schema_version" not in report:
        raise ReportError(f"report {path} has no schema_version")
    return report
