"""Threshold-based object recognition evaluation.

Predictions are the (image, class) cells of a score table strictly above a
threshold (cosine x 100 scale). The operating threshold is chosen on a
validation table by sweeping 10..50 in steps of 5 and maximizing micro-F1;
test performance is reported per COCO supercategory next to train-set
mention counts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, CaptionSource
from .errors import ValidationError
from .vocab import ObjectVocabulary, detect_mentions

THRESHOLD_GRID = tuple(range(10, 51, 5))


@dataclass
class LabelScoreTable:
    image_ids: list[str]
    class_names: list[str]
    scores: np.ndarray  # N images x C classes, cosine x 100 scale

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(self.image_ids), len(self.class_names)):
            raise ValidationError(
                f"score matrix shape {self.scores.shape} does not match "
                f"{len(self.image_ids)} images x {len(self.class_names)} classes"
            )
        if not np.all(np.isfinite(self.scores)):
            raise ValidationError("score matrix contains non-finite values")


def save_score_table(table: LabelScoreTable, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", *table.class_names])
        for image_id, row in zip(table.image_ids, table.scores):
            writer.writerow([image_id, *(repr(float(v)) for v in row)])


def load_score_table(path: str | Path) -> LabelScoreTable:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty score table") from None
        class_names = header[1:]
        image_ids, rows = [], []
        for row in reader:
            if not row:
                continue
            image_ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return LabelScoreTable(image_ids, class_names, np.array(rows, dtype=np.float64))


def predict_objects(scores: LabelScoreTable, threshold: float) -> dict[str, set[str]]:
    """Classes whose score strictly exceeds the threshold, per image."""
    mask = scores.scores > threshold
    names = np.array(scores.class_names)
    return {
        image_id: set(names[mask[i]]) for i, image_id in enumerate(scores.image_ids)
    }


def _micro_counts(
    predictions: dict[str, set[str]], truth: dict[str, set[str]]
) -> tuple[int, int, int]:
    tp = fp = fn = 0
    for image_id, predicted in predictions.items():
        actual = truth[image_id]
        tp += len(predicted & actual)
        fp += len(predicted - actual)
        fn += len(actual - predicted)
    return tp, fp, fn


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class SweepResult:
    threshold: float
    f1_by_threshold: dict[float, float]
    warning: bool = False  # set when no threshold produced a true positive


def sweep_threshold(
    scores_val: LabelScoreTable,
    truth_val: dict[str, set[str]],
    grid: tuple[int, ...] = THRESHOLD_GRID,
) -> SweepResult:
    """Micro-F1 maximizer over the threshold grid; ties go to the smaller
    threshold. Degenerate truth (no true positive anywhere) returns the
    lowest grid value with ``warning`` set."""
    missing = [i for i in scores_val.image_ids if i not in truth_val]
    if missing:
        raise ValidationError(f"truth missing for images: {missing[:5]}")
    f1s: dict[float, float] = {}
    any_tp = False
    for t in grid:
        predictions = predict_objects(scores_val, t)
        tp, fp, fn = _micro_counts(predictions, truth_val)
        any_tp = any_tp or tp > 0
        f1s[float(t)] = _prf(tp, fp, fn)[2]
    best = min(grid, key=lambda t: (-f1s[float(t)], t))
    if not any_tp:
        return SweepResult(float(grid[0]), f1s, warning=True)
    return SweepResult(float(best), f1s)


@dataclass(frozen=True)
class SupercategoryStats:
    mentions: int
    precision: float
    recall: float
    zero_prediction_flag: bool = False  # no predictions fell in this supercategory

    def to_dict(self) -> dict:
        return {
            "mentions": self.mentions,
            "precision": self.precision,
            "recall": self.recall,
            "zero_prediction_flag": self.zero_prediction_flag,
        }


@dataclass(frozen=True)
class RecognitionReport:
    threshold: float
    per_supercategory: dict[str, SupercategoryStats]
    micro: dict[str, float]
    top_recall_supercategories: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "per_supercategory": {
                name: stats.to_dict() for name, stats in self.per_supercategory.items()
            },
            "micro": dict(self.micro),
            "top_recall_supercategories": list(self.top_recall_supercategories),
        }


def mention_truth(
    corpus: Corpus,
    vocab: ObjectVocabulary,
    language: str,
    set_index: int | None = None,
    image_ids: set[str] | None = None,
) -> dict[str, set[str]]:
    """Ground-truth classes per image: a class counts when any of the image's
    native captions in the given language (optionally one set) mentions it."""
    truth: dict[str, set[str]] = {
        img_id: set()
        for img_id in (image_ids if image_ids is not None else corpus.image_ids)
    }
    captions = corpus.captions_for(
        language=language, source=CaptionSource.NATIVE, set_index=set_index, image_ids=image_ids
    )
    for cap in captions:
        if cap.image_id not in truth:
            continue
        for span in detect_mentions(cap.text, vocab, caption_id=cap.caption_id):
            truth[cap.image_id].add(span.class_name)
    return truth


def evaluate_recognition(
    scores_test: LabelScoreTable,
    truth_test: dict[str, set[str]],
    threshold: float,
    vocab: ObjectVocabulary,
    train_mentions: dict[str, int],
) -> RecognitionReport:
    """Per-supercategory precision/recall at the given threshold, with
    train-set mention counts, plus overall micro metrics."""
    unknown = [c for c in scores_test.class_names if c not in set(vocab.class_names())]
    if unknown:
        raise ValidationError(f"score table classes not in vocabulary: {unknown[:5]}")
    missing = [i for i in scores_test.image_ids if i not in truth_test]
    if missing:
        raise ValidationError(f"truth missing for images: {missing[:5]}")
    predictions = predict_objects(scores_test, threshold)
    scored_classes = set(scores_test.class_names)

    per_super: dict[str, SupercategoryStats] = {}
    for supercategory in vocab.supercategories():
        classes = {
            c.name for c in vocab.classes_in_supercategory(supercategory)
        } & scored_classes
        if not classes:
            continue
        tp = fp = fn = 0
        for image_id in scores_test.image_ids:
            predicted = predictions[image_id] & classes
            actual = truth_test[image_id] & classes
            tp += len(predicted & actual)
            fp += len(predicted - actual)
            fn += len(actual - predicted)
        precision, recall, _ = _prf(tp, fp, fn)
        per_super[supercategory] = SupercategoryStats(
            mentions=sum(train_mentions.get(c, 0) for c in classes),
            precision=precision,
            recall=recall,
            zero_prediction_flag=(tp + fp) == 0,
        )

    tp, fp, fn = _micro_counts(
        {i: predictions[i] & scored_classes for i in scores_test.image_ids},
        {i: truth_test[i] & scored_classes for i in scores_test.image_ids},
    )
    precision, recall, f1 = _prf(tp, fp, fn)
    ranked = sorted(per_super.items(), key=lambda kv: (-kv[1].recall, kv[0]))
    return RecognitionReport(
        threshold=threshold,
        per_supercategory=per_super,
        micro={"precision": precision, "recall": recall, "f1": f1},
        top_recall_supercategories=tuple(name for name, _ in ranked[:5]),
    )


def render_recognition_table(
    report: RecognitionReport, supercategories: list[str] | None = None, label: str = ""
) -> str:
    """Text table in the mentions/precision/recall row layout."""
    names = supercategories or list(report.per_supercategory)
    for name in names:
        if name not in report.per_supercategory:
            raise ValidationError(f"supercategory {name!r} not in report")
    width = max(12, *(len(n) + 2 for n in names))
    prefix = f"{label} " if label else ""
    head = f"{'':<18}" + "".join(f"{n.capitalize():>{width}}" for n in names)
    men = f"{prefix + '(#men)':<18}" + "".join(
        f"{report.per_supercategory[n].mentions:>{width}d}" for n in names
    )
    prec = f"{prefix + '(prec)':<18}" + "".join(
        f"{report.per_supercategory[n].precision:>{width}.2f}" for n in names
    )
    rec = f"{prefix + '(rec)':<18}" + "".join(
        f"{report.per_supercategory[n].recall:>{width}.2f}" for n in names
    )
    return "\n".join([head, men, prec, rec])


def save_recognition_report(report: RecognitionReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
