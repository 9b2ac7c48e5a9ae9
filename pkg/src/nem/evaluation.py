"""Metrics over ranked (bag, relation) predictions.

NA is excluded from ranking and from the positive set everywhere: the point
of evaluation is detecting real relations, and the NA bit is derived from
the others. Ground truth is the annotated label vector y when the dataset
carries one, otherwise the observed labels.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset

SCORE_BIN_EDGES = np.array([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])


class EvalError(ValueError):
    """Evaluation preconditions violated (e.g. missing ground truth)."""


@dataclass(frozen=True)
class RankedPrediction:
    bag_id: str
    relation: int
    score: float
    is_correct: bool


def build_ranked_predictions(
    probs: np.ndarray, dataset: Dataset
) -> tuple[list[RankedPrediction], int]:
    """All non-NA (bag, relation) scores plus the number of true positives."""
    truth = dataset.truth_matrix()
    if truth is None:
        truth = dataset.observed_matrix()
    na = dataset.catalog.na_index
    preds = []
    total_positives = 0
    for i, bag in enumerate(dataset.bags):
        for r in range(len(dataset.catalog)):
            if r == na:
                continue
            correct = bool(truth[i, r])
            total_positives += int(correct)
            preds.append(RankedPrediction(bag.id, r, float(probs[i, r]), correct))
    return preds, total_positives


def _ranked(preds) -> list[RankedPrediction]:
    # descending score; ties broken by bag id then relation for determinism
    return sorted(preds, key=lambda p: (-p.score, p.bag_id, p.relation))


def pr_curve(preds, total_positives: int) -> np.ndarray:
    """(recall, precision) at every prefix of the ranked prediction list."""
    if total_positives < 1:
        raise EvalError("pr_curve needs at least one positive")
    points = np.empty((len(preds), 2))
    tp = 0
    for k, p in enumerate(_ranked(preds), start=1):
        tp += int(p.is_correct)
        points[k - 1] = (tp / total_positives, tp / k)
    return points


def prf1(preds, threshold: float, total_positives: int) -> tuple[float, float, float]:
    """Precision/recall/F1 in percent at a score threshold."""
    predicted = [p for p in preds if p.score >= threshold]
    tp = sum(int(p.is_correct) for p in predicted)
    precision = 100.0 * tp / len(predicted) if predicted else 0.0
    recall = 100.0 * tp / total_positives if total_positives else 0.0
    f1 = f1_score(precision, recall)
    return precision, recall, f1


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def score_histogram(scores) -> np.ndarray:
    """Counts over the 5 bins [0,.2), [.2,.4), [.4,.6), [.6,.8), [.8,1]."""
    scores = np.asarray(list(scores), dtype=np.float64)
    if scores.size == 0:
        return np.zeros(5, dtype=np.int64)
    counts, _ = np.histogram(scores, bins=SCORE_BIN_EDGES)
    return counts.astype(np.int64)


def label_probability_curves(probs: np.ndarray, dataset: Dataset) -> tuple[float, float]:
    """(mean score on injected-noise labels, mean score on original labels).

    Injected-noise positions are those observed but not true (z=1, y=0);
    original positions are the true labels (y=1). NA is excluded from both.
    """
    y = dataset.truth_matrix()
    if y is None:
        raise EvalError("dataset carries no ground-truth labels")
    z = dataset.observed_matrix()
    real = np.ones(len(dataset.catalog), dtype=bool)
    real[dataset.catalog.na_index] = False
    noisy = (z == 1) & (y == 0) & real
    original = (y == 1) & real
    noisy_mean = float(probs[noisy].mean()) if noisy.any() else float("nan")
    orig_mean = float(probs[original].mean()) if original.any() else float("nan")
    return noisy_mean, orig_mean


def per_relation_mean_score(probs: np.ndarray, dataset: Dataset) -> dict[str, float]:
    """Mean predicted probability per relation over bags whose truth includes it."""
    y = dataset.truth_matrix()
    if y is None:
        y = dataset.observed_matrix()
    out = {}
    for r, name in enumerate(dataset.catalog.names):
        rows = y[:, r] == 1
        out[name] = float(probs[rows, r].mean()) if rows.any() else float("nan")
    return out


def q_trajectory(trace_path) -> np.ndarray:
    """mean_q_noisy series, one value per recorded EM iteration."""
    values = []
    with open(trace_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "mean_q_noisy" not in rec:
                raise EvalError(f"{trace_path}: line {line_no} lacks mean_q_noisy")
            v = rec["mean_q_noisy"]
            values.append(float("nan") if v is None else float(v))
    return np.asarray(values, dtype=np.float64)


# ---------------------------------------------------------------------------
# report files


def write_reports(
    report_dir,
    probs: np.ndarray,
    dataset: Dataset,
    threshold: float = 0.5,
) -> dict:
    """Write pr_curve.csv, metrics.csv, bins.csv and report.json; return the report."""
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    preds, total_positives = build_ranked_predictions(probs, dataset)

    curve = pr_curve(preds, total_positives) if total_positives else np.zeros((0, 2))
    with open(report_dir / "pr_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["recall", "precision"])
        for rec, prec in curve:
            w.writerow([repr(float(rec)), repr(float(prec))])

    precision, recall, f1 = prf1(preds, threshold, total_positives)
    with open(report_dir / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall", "f1"])
        w.writerow([repr(float(threshold)), repr(precision), repr(recall), repr(f1)])

    truth = dataset.truth_matrix()
    scored_truth = truth if truth is not None else dataset.observed_matrix()
    na = dataset.catalog.na_index
    real = np.ones(len(dataset.catalog), dtype=bool)
    real[na] = False
    gt_scores = probs[(scored_truth == 1) & real]
    bins = score_histogram(gt_scores)
    with open(report_dir / "bins.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_low", "bin_high", "count"])
        for i in range(5):
            w.writerow([SCORE_BIN_EDGES[i], SCORE_BIN_EDGES[i + 1], int(bins[i])])

    report = {
        "threshold": threshold,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "total_positives": total_positives,
        "n_predictions": len(preds),
        "score_bins": bins.tolist(),
        "per_relation_mean_score": per_relation_mean_score(probs, dataset),
    }
    if dataset.has_truth:
        noisy_mean, orig_mean = label_probability_curves(probs, dataset)
        report["mean_prob_noisy_labels"] = noisy_mean if np.isfinite(noisy_mean) else None
        report["mean_prob_original_labels"] = orig_mean if np.isfinite(orig_mean) else None
    report["per_relation_mean_score"] = {
        k: (v if np.isfinite(v) else None) for k, v in report["per_relation_mean_score"].items()
    }
    with open(report_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return report
