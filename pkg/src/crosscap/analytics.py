"""Cross-corpus statistics: mention ratios, language-group concept stats,
and human-evaluation score aggregation.

Counts are compared after routing every language through translation to
English, so the numbers here are vocabulary-based (not open noun
extraction) and labeled as such in reports.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError


@dataclass(frozen=True)
class ConceptCountRow:
    concept: str
    per_language: dict[str, float]

    def __post_init__(self):
        for lang, count in self.per_language.items():
            if count < 0 or not math.isfinite(count):
                raise ValidationError(
                    f"concept {self.concept!r}: bad count {count} for language {lang!r}"
                )


@dataclass(frozen=True)
class GroupStats:
    mean: float
    stdev: float

    def __post_init__(self):
        if self.stdev < 0:
            raise ValidationError("stdev must be non-negative")


@dataclass(frozen=True)
class GroupStatsRow:
    concept: str
    per_group: dict[str, GroupStats]
    max_group: str
    min_group: str


@dataclass(frozen=True)
class HumanEvalSheet:
    set_label: str
    scores: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "scores", tuple(self.scores))
        bad = [s for s in self.scores if s not in (1, 2, 3)]
        if bad:
            raise ValidationError(f"scores outside {{1,2,3}}: {bad[:5]}")


def mention_ratio(
    counts_a: dict[str, float], counts_b: dict[str, float]
) -> dict:
    """Overall and per-class count ratios a/b. Classes counted in a but not
    in b get an infinite-flag entry and stay out of the finite summary."""
    total_a = sum(counts_a.values())
    total_b = sum(counts_b.values())
    if total_a <= 0 or total_b <= 0:
        raise ValidationError("both count maps must have positive totals")
    per_class: dict[str, float] = {}
    infinite: list[str] = []
    for cls in sorted(set(counts_a) | set(counts_b)):
        a = counts_a.get(cls, 0)
        b = counts_b.get(cls, 0)
        if a == 0 and b == 0:
            continue
        if b == 0:
            per_class[cls] = math.inf
            infinite.append(cls)
        else:
            per_class[cls] = a / b
    return {"overall": total_a / total_b, "per_class": per_class, "infinite_classes": infinite}


def _sample_stdev(values: list[float]) -> float:
    n = len(values)
    if n <= 1:
        return 0.0
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


def group_stats(
    rows: list[ConceptCountRow], groups: dict[str, list[str]]
) -> list[GroupStatsRow]:
    """Per-group mean and sample standard deviation (n-1; zero for singleton
    groups) for each concept, with max/min groups by mean (lexicographic
    tie-break)."""
    out = []
    for row in rows:
        per_group: dict[str, GroupStats] = {}
        for group_name, languages in groups.items():
            values = []
            for lang in languages:
                if lang not in row.per_language:
                    raise ValidationError(
                        f"group {group_name!r} references language {lang!r} absent "
                        f"from concept {row.concept!r}"
                    )
                values.append(row.per_language[lang])
            per_group[group_name] = GroupStats(sum(values) / len(values), _sample_stdev(values))
        max_group = min(per_group, key=lambda g: (-per_group[g].mean, g))
        min_group = min(per_group, key=lambda g: (per_group[g].mean, g))
        out.append(GroupStatsRow(row.concept, per_group, max_group, min_group))
    return out


def cross_group_gap_report(stats: list[GroupStatsRow]) -> list[dict]:
    """Max-group minus min-group mean per concept, next to the max-mean
    group's own stdev (flag compares against that) and the largest stdev
    across groups for reference."""
    out = []
    for row in stats:
        gap = row.per_group[row.max_group].mean - row.per_group[row.min_group].mean
        max_group_stdev = row.per_group[row.max_group].stdev
        max_within_stdev = max(g.stdev for g in row.per_group.values())
        out.append(
            {
                "concept": row.concept,
                "max_group": row.max_group,
                "min_group": row.min_group,
                "gap": gap,
                "max_group_stdev": max_group_stdev,
                "max_within_stdev": max_within_stdev,
                "gap_exceeds_stdev": gap > max_group_stdev,
            }
        )
    return out


def human_eval_aggregate(sheet: HumanEvalSheet) -> dict[str, float]:
    """Mean ternary score and mean binary score (2 or 3 counts as 1)."""
    if not sheet.scores:
        raise ValidationError(f"human-eval sheet {sheet.set_label!r} is empty")
    n = len(sheet.scores)
    return {
        "ternary_mean": sum(sheet.scores) / n,
        "binary_mean": sum(1 for s in sheet.scores if s >= 2) / n,
    }


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def load_concept_counts(path: str | Path) -> list[ConceptCountRow]:
    """CSV with header ``concept,lang1,lang2,...`` and one row per concept."""
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty concept-count file") from None
        languages = header[1:]
        rows = []
        for row in reader:
            if not row:
                continue
            rows.append(
                ConceptCountRow(row[0], {lang: float(v) for lang, v in zip(languages, row[1:])})
            )
    return rows


def load_human_eval_sheets(path: str | Path) -> dict[str, HumanEvalSheet]:
    """CSV ``set_label,caption_id,rater,score`` grouped into one sheet per set."""
    grouped: dict[str, list[int]] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip().lower() for h in header[:1]] != ["set_label"]:
            raise ValidationError(f"{path}: expected header starting with 'set_label'")
        for row in reader:
            if not row:
                continue
            grouped.setdefault(row[0], []).append(int(row[3]))
    return {label: HumanEvalSheet(label, tuple(scores)) for label, scores in grouped.items()}


def builtin_table_path(name: str) -> Path:
    return Path(__file__).parent / "data" / name
