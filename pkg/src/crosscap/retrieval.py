"""Recall@K retrieval evaluation over image/caption embedding tables.

Scores are cosine similarities; ranking breaks score ties toward the lower
candidate index so reports are reproducible across platforms. A report keeps
all six recall values (R@1/5/10 in both directions) so the mean is always
re-derivable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

RECALL_KS = (1, 5, 10)


@dataclass
class EmbeddingTable:
    ids: list[str]
    rows: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise ValidationError(f"rows must be a 2-D matrix, got shape {self.rows.shape}")
        if len(self.ids) != self.rows.shape[0]:
            raise ValidationError(
                f"{len(self.ids)} ids but {self.rows.shape[0]} embedding rows"
            )
        if self.normalized:
            norms = np.linalg.norm(self.rows, axis=1)
            if not np.all(np.abs(norms - 1.0) <= 1e-6):
                bad = self.ids[int(np.argmax(np.abs(norms - 1.0)))]
                raise ValidationError(f"table marked normalized but row {bad!r} is not unit norm")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def unit_rows(self) -> np.ndarray:
        if self.normalized:
            return self.rows
        norms = np.linalg.norm(self.rows, axis=1)
        if np.any(norms == 0.0):
            bad = self.ids[int(np.argmin(norms))]
            raise ValidationError(f"zero-norm embedding row for id {bad!r}")
        return self.rows / norms[:, None]

    def subset(self, wanted_ids: list[str]) -> "EmbeddingTable":
        index = {i: n for n, i in enumerate(self.ids)}
        missing = [i for i in wanted_ids if i not in index]
        if missing:
            raise ValidationError(f"ids missing from embedding table: {missing[:5]}")
        sel = [index[i] for i in wanted_ids]
        return EmbeddingTable(list(wanted_ids), self.rows[sel], self.normalized)


def similarity_matrix(images: EmbeddingTable, captions: EmbeddingTable) -> np.ndarray:
    """Cosine similarity, images on rows and captions on columns."""
    if images.dim != captions.dim:
        raise ValidationError(
            f"dimension mismatch: images dim {images.dim} vs captions dim {captions.dim}"
        )
    return images.unit_rows() @ captions.unit_rows().T


@dataclass(frozen=True)
class RetrievalReport:
    r_i2t: dict[int, float]
    r_t2i: dict[int, float]
    mean_recall: float
    n_images: int
    n_captions: int
    set_label: str

    def __post_init__(self):
        six = [*self.r_i2t.values(), *self.r_t2i.values()]
        if len(six) != 6:
            raise ValidationError("report must carry recall at k=1,5,10 in both directions")
        for v in six:
            if not 0.0 <= v <= 100.0:
                raise ValidationError(f"recall value {v} outside [0, 100]")
        if abs(self.mean_recall - sum(six) / 6.0) > 1e-9:
            raise ValidationError("mean_recall does not re-derive from the six stored recalls")

    def to_dict(self) -> dict:
        return {
            "set_label": self.set_label,
            "r_i2t": {str(k): v for k, v in sorted(self.r_i2t.items())},
            "r_t2i": {str(k): v for k, v in sorted(self.r_t2i.items())},
            "mean_recall": self.mean_recall,
            "n_images": self.n_images,
            "n_captions": self.n_captions,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RetrievalReport":
        return cls(
            r_i2t={int(k): v for k, v in data["r_i2t"].items()},
            r_t2i={int(k): v for k, v in data["r_t2i"].items()},
            mean_recall=data["mean_recall"],
            n_images=data["n_images"],
            n_captions=data["n_captions"],
            set_label=data["set_label"],
        )


def recall_at_k(
    sim: np.ndarray,
    truth: dict[int, set[int]],
    k: int,
    direction: str,
) -> float:
    """Percentage of queries whose top-k candidates contain a relevant index.

    ``direction`` is ``"i2t"`` (queries are rows) or ``"t2i"`` (queries are
    columns). Ties in score are broken toward the smaller candidate index.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if direction not in ("i2t", "t2i"):
        raise ValidationError(f"unknown direction {direction!r}")
    scores = np.asarray(sim, dtype=np.float64)
    if direction == "t2i":
        scores = scores.T
    n_queries, n_candidates = scores.shape
    if set(truth) != set(range(n_queries)):
        raise ValidationError("truth must map every query index")
    relevant = np.zeros((n_queries, n_candidates), dtype=bool)
    for q in range(n_queries):
        if not truth[q]:
            raise ValidationError(f"query {q} has an empty relevant set")
        relevant[q, sorted(truth[q])] = True
    # stable sort of negated scores = score descending with ties broken
    # toward the smaller candidate index
    order = np.argsort(-scores, axis=1, kind="stable")
    ranked_relevance = np.take_along_axis(relevant, order, axis=1)
    hits = int(ranked_relevance[:, : min(k, n_candidates)].any(axis=1).sum())
    return 100.0 * hits / n_queries


def evaluate_set(
    images: EmbeddingTable,
    captions: EmbeddingTable,
    pairing: dict[str, str],
    set_label: str,
) -> RetrievalReport:
    """Six recalls plus their mean for one caption set against the images."""
    image_index = {img_id: i for i, img_id in enumerate(images.ids)}
    for cap_id in captions.ids:
        if cap_id not in pairing:
            raise ValidationError(f"caption {cap_id!r} missing from pairing")
        if pairing[cap_id] not in image_index:
            raise ValidationError(
                f"caption {cap_id!r} pairs to unknown image {pairing[cap_id]!r}"
            )
    truth_i2t: dict[int, set[int]] = {i: set() for i in range(len(images))}
    truth_t2i: dict[int, set[int]] = {}
    for j, cap_id in enumerate(captions.ids):
        i = image_index[pairing[cap_id]]
        truth_i2t[i].add(j)
        truth_t2i[j] = {i}
    sim = similarity_matrix(images, captions)
    r_i2t = {k: recall_at_k(sim, truth_i2t, k, "i2t") for k in RECALL_KS}
    r_t2i = {k: recall_at_k(sim, truth_t2i, k, "t2i") for k in RECALL_KS}
    six = [*r_i2t.values(), *r_t2i.values()]
    return RetrievalReport(
        r_i2t=r_i2t,
        r_t2i=r_t2i,
        mean_recall=sum(six) / 6.0,
        n_images=len(images),
        n_captions=len(captions),
        set_label=set_label,
    )


def aggregate_reports(reports: list[RetrievalReport]) -> RetrievalReport:
    """Field-wise arithmetic mean over per-set reports."""
    if not reports:
        raise ValidationError("cannot aggregate zero reports")
    r_i2t = {k: sum(r.r_i2t[k] for r in reports) / len(reports) for k in RECALL_KS}
    r_t2i = {k: sum(r.r_t2i[k] for r in reports) / len(reports) for k in RECALL_KS}
    six = [*r_i2t.values(), *r_t2i.values()]
    return RetrievalReport(
        r_i2t=r_i2t,
        r_t2i=r_t2i,
        mean_recall=sum(six) / 6.0,
        n_images=round(sum(r.n_images for r in reports) / len(reports)),
        n_captions=round(sum(r.n_captions for r in reports) / len(reports)),
        set_label="aggregate",
    )


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def save_embedding_table(table: EmbeddingTable, path: str | Path) -> None:
    """Text format: header ``{n}<TAB>{dim}``, then ``id<TAB>v1,v2,...`` rows
    at full round-trip precision."""
    lines = [f"{len(table)}\t{table.dim}"]
    for row_id, row in zip(table.ids, table.rows):
        lines.append(row_id + "\t" + ",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embedding_table(path: str | Path) -> EmbeddingTable:
    """Read either the tabbed text format or JSONL ``{"id", "vector"}`` lines."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise ValidationError(f"{path}: empty embedding table")
    if lines[0].lstrip().startswith("{"):
        ids, rows = [], []
        for line in lines:
            obj = json.loads(line)
            ids.append(obj["id"])
            rows.append([float(v) for v in obj["vector"]])
        return EmbeddingTable(ids, np.array(rows, dtype=np.float64))
    header = lines[0].split("\t")
    if len(header) != 2:
        raise ValidationError(f"{path}: bad header {lines[0]!r}")
    n, dim = int(header[0]), int(header[1])
    if len(lines) - 1 != n:
        raise ValidationError(f"{path}: header claims {n} rows, found {len(lines) - 1}")
    ids, rows = [], []
    for line in lines[1:]:
        row_id, _, vec = line.partition("\t")
        values = [float(v) for v in vec.split(",")]
        if len(values) != dim:
            raise ValidationError(f"{path}: row {row_id!r} has {len(values)} values, expected {dim}")
        ids.append(row_id)
        rows.append(values)
    return EmbeddingTable(ids, np.array(rows, dtype=np.float64))


def render_recall_table(
    entries: list[tuple[str, float]],
    baseline: str | None = None,
) -> str:
    """Plain-text method/mean-recall table with a delta column against the
    named baseline method."""
    base_value: float | None = None
    if baseline is not None:
        for name, value in entries:
            if name == baseline:
                base_value = value
                break
        if base_value is None:
            raise ValidationError(f"baseline {baseline!r} not among entries")
    header = f"{'Method':<20} {'Mean Recall':>12}"
    if base_value is not None:
        header += f" {'Vs. ' + baseline:>16}"
    rows = [header, "-" * len(header)]
    for name, value in entries:
        line = f"{name:<20} {value:>12.1f}"
        if base_value is not None:
            delta = value - base_value
            line += f" {delta:>+16.1f}" if name != baseline else f" {'0.0':>16}"
        rows.append(line)
    return "\n".join(rows)
