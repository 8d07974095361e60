#!/usr/bin/env python3

"""
Score file ingestion, score normalization and label-budget sampling.

Score files are delimited text with a header `id,score[,label]`; labels are
0/1 and a blank label means the item is unlabeled.
"""

import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

from tools.mixture_model import UNLABELED, ScoreDataset
from tools.spe_errors import ContractViolationError, DomainError, NormalizationError, ParseError, SPEError, ValidationError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("id", "score")
LABEL_COLUMN = "label"
NORMALIZATION_DELTA_FRACTION = 1e-3


def load_scores(path: str) -> ScoreDataset:
    """
    Read a score file into a ScoreDataset holding raw (unnormalized) scores.

    Row order is preserved. Raises ParseError (with a line number) for
    malformed rows and ValidationError for empty files, duplicate ids and
    labels other than 0/1.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False,
                            skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise ValidationError(f"score file {path} is empty")
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError(f"malformed row in {path}: {e}", int(match.group(1)) if match else None)

    frame = frame.fillna("")
    columns = [str(c).strip().lower() for c in frame.columns]
    frame.columns = columns
    missing = [c for c in REQUIRED_COLUMNS if c not in columns]
    if missing:
        raise ParseError(f"header must contain id,score[,label]; missing {', '.join(missing)}", 1)
    has_labels = LABEL_COLUMN in columns

    ids, scores, labels = [], [], []
    seen: Dict[str, int] = {}
    for offset, record in enumerate(frame.to_dict("records")):
        line = offset + 2
        if all(not str(v).strip() for v in record.values()):
            continue
        item_id = str(record["id"]).strip()
        if not item_id:
            raise ParseError("missing id", line)
        try:
            score = float(record["score"])
        except ValueError:
            raise ParseError(f"score '{record['score']}' is not a number", line)
        if not math.isfinite(score):
            raise ParseError(f"score '{record['score']}' is not finite", line)
        if item_id in seen:
            raise ValidationError(f"duplicate id '{item_id}' on lines {seen[item_id]} and {line}")
        seen[item_id] = line

        label = UNLABELED
        if has_labels:
            text = str(record[LABEL_COLUMN]).strip()
            if text in ("0", "1"):
                label = int(text)
            elif text:
                raise ValidationError(f"line {line}: label '{text}' is not 0, 1 or blank")
        ids.append(item_id)
        scores.append(score)
        labels.append(label)

    if not ids:
        raise ValidationError(f"score file {path} has no score rows")
    data = ScoreDataset(np.array(scores), np.array(labels, dtype=np.int8), ids)
    logger.info("loaded %d items (%d labeled) from %s", data.n_items, data.labeled_idx.size, path)
    return data


@dataclass(frozen=True)
class ScoreNormalization:
    """Affine map s' = (s - minimum + delta) / (maximum - minimum + delta)"""
    minimum: float
    maximum: float
    delta: float

    @property
    def span(self) -> float:
        return self.maximum - self.minimum + self.delta

    def apply(self, scores):
        return (np.asarray(scores, dtype=float) - self.minimum + self.delta) / self.span

    def invert(self, normalized):
        return np.asarray(normalized, dtype=float) * self.span + self.minimum - self.delta

    def raw_thresholds(self, taus: Sequence[float], raw_scores: Sequence[float],
                       normalized: Sequence[float]) -> np.ndarray:
        """
        Raw-scale thresholds inducing the same item partitions as taus on the
        normalized scale; exact whenever a tau is one of the normalized scores.
        """
        lookup = dict(zip(np.asarray(normalized, dtype=float).tolist(),
                          np.asarray(raw_scores, dtype=float).tolist()))
        return np.array([lookup.get(t, float(self.invert(t))) for t in np.asarray(taus, dtype=float).tolist()])

    def to_dict(self) -> Dict[str, Any]:
        return {"minimum": self.minimum, "maximum": self.maximum, "delta": self.delta}


def normalize_scores(raw_scores: Sequence[float]) -> Tuple[np.ndarray, ScoreNormalization]:
    raw = np.asarray(raw_scores, dtype=float)
    if raw.size == 0:
        raise NormalizationError("no scores to normalize")
    low, high = float(np.min(raw)), float(np.max(raw))
    if not high > low:
        raise NormalizationError(f"all {raw.size} scores equal {low}; need at least two distinct values")
    mapping = ScoreNormalization(low, high, (high - low) * NORMALIZATION_DELTA_FRACTION)
    normalized = mapping.apply(raw)
    normalized[raw == high] = 1.0
    return normalized, mapping


def normalize_dataset(data: ScoreDataset) -> Tuple[ScoreDataset, ScoreNormalization]:
    normalized, mapping = normalize_scores(data.scores)
    return ScoreDataset(normalized, data.labels.copy(), data.ids), mapping


def sample_label_budget(data: ScoreDataset, budget: int, rng: np.random.Generator) -> ScoreDataset:
    """Reveal the labels of `budget` items chosen uniformly at random; hide the rest"""
    if not data.is_fully_labeled:
        raise ContractViolationError("label budgets are drawn from a fully labeled dataset")
    if budget < 0 or budget > data.n_items:
        raise DomainError(f"label budget {budget} outside [0, {data.n_items}]")
    revealed = rng.choice(data.n_items, size=budget, replace=False)
    labels = np.full(data.n_items, UNLABELED, dtype=np.int8)
    labels[revealed] = data.labels[revealed]
    return data.with_labels(labels)


def subsample_dataset(data: ScoreDataset, size: Optional[int], rng: np.random.Generator) -> ScoreDataset:
    """Uniform subsample without replacement, original order kept"""
    if size is None or size >= data.n_items:
        return data
    if size < 1:
        raise DomainError(f"subsample size must be >= 1, got {size}")
    keep = np.sort(rng.choice(data.n_items, size=size, replace=False))
    ids = [data.ids[i] for i in keep] if data.ids is not None else None
    return ScoreDataset(data.scores[keep], data.labels[keep], ids)


def summarize_dataset(data: ScoreDataset) -> Dict[str, Any]:
    labeled = data.labels[data.labeled_idx]
    return {
        "items": data.n_items,
        "labeled": int(labeled.size),
        "positives": int(np.sum(labeled == 1)),
        "negatives": int(np.sum(labeled == 0)),
        "min_score": float(np.min(data.scores)),
        "max_score": float(np.max(data.scores)),
    }


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) < 2:
        print("Usage: python score_io.py <action> <scores_file>")
        print("Actions: summary, normalize")
        return 1

    action, path = argv[0], argv[1]
    try:
        data = load_scores(path)
        if action == "summary":
            print(json.dumps(summarize_dataset(data), indent=2))
        elif action == "normalize":
            _, mapping = normalize_dataset(data)
            print(json.dumps(mapping.to_dict(), indent=2))
        else:
            print(f"Unknown action: {action}")
            return 1
    except SPEError as e:
        print(json.dumps(e.to_dict()))
        return 1
    except OSError as e:
        print(f"Error: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
