"""Corpus ingestion, caption provenance, and deterministic splits.

A Corpus holds images plus caption records from any mix of provenances
(native sets 0..4, human translations, machine translations, augmented
captions). Splitting shuffles image ids with a seeded generator and cuts
reference/train/val/test in that order, reproducing the 9666/9666/1014/10668
partition for a 31,014-image corpus and a proportional partition otherwise.
"""

from __future__ import annotations

import hashlib
import json
import random
import unicodedata
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import IntegrityError, ParseError, ValidationError

# reference : train : val : test proportions of the full corpus
_SPLIT_WEIGHTS = (9666, 9666, 1014, 10668)
_FULL_CORPUS_SIZE = sum(_SPLIT_WEIGHTS)


class CaptionSource(str, Enum):
    NATIVE = "native"
    HUMAN_TRANSLATED = "human_translated"
    MACHINE_TRANSLATED = "machine_translated"
    AUGMENTED = "augmented"


@dataclass(frozen=True)
class ImageRef:
    """A corpus image, identified by a stable id. ``uri`` is informational."""

    image_id: str
    uri: str | None = None

    def __post_init__(self):
        if not self.image_id:
            raise ValidationError("image_id must be non-empty")
        if ":" in self.image_id:
            # caption ids embed the image id with ':' separators
            raise ValidationError(f"image_id may not contain ':': {self.image_id!r}")


@dataclass(frozen=True)
class CaptionRecord:
    caption_id: str
    image_id: str
    language: str
    text: str
    source: CaptionSource
    set_index: int | None = None
    derivation: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "source", CaptionSource(self.source))
        object.__setattr__(self, "text", unicodedata.normalize("NFC", self.text))
        if not self.text.strip():
            raise ValidationError(f"caption {self.caption_id!r} has empty text")
        if (self.set_index is not None) != (self.source is CaptionSource.NATIVE):
            raise ValidationError(
                f"caption {self.caption_id!r}: set_index is required for native "
                f"captions and forbidden otherwise (source={self.source.value})"
            )
        if (self.derivation is not None) != (self.source is CaptionSource.AUGMENTED):
            raise ValidationError(
                f"caption {self.caption_id!r}: derivation is required for augmented "
                f"captions and forbidden otherwise (source={self.source.value})"
            )


def make_caption_id(
    image_id: str,
    language: str,
    source: CaptionSource | str,
    set_index: int | None = None,
    derivation: str | None = None,
) -> str:
    """Stable, human-debuggable caption id."""
    source = CaptionSource(source)
    if source is CaptionSource.AUGMENTED:
        tail = hashlib.sha1((derivation or "").encode("utf-8")).hexdigest()[:10]
    elif set_index is not None:
        tail = str(set_index)
    else:
        tail = "0"
    return f"{image_id}:{language}:{source.value}:{tail}"


@dataclass(frozen=True)
class Corpus:
    name: str
    images: tuple[ImageRef, ...]
    captions: tuple[CaptionRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "captions", tuple(self.captions))
        seen_images: set[str] = set()
        for img in self.images:
            if img.image_id in seen_images:
                raise IntegrityError(f"duplicate image_id {img.image_id!r}")
            seen_images.add(img.image_id)
        seen_slots: set[tuple[str, str, int]] = set()
        seen_caption_ids: set[str] = set()
        for cap in self.captions:
            if cap.image_id not in seen_images:
                raise IntegrityError(
                    f"caption {cap.caption_id!r} references unknown image {cap.image_id!r}"
                )
            if cap.caption_id in seen_caption_ids:
                raise IntegrityError(f"duplicate caption_id {cap.caption_id!r}")
            seen_caption_ids.add(cap.caption_id)
            if cap.set_index is not None:
                slot = (cap.image_id, cap.language, cap.set_index)
                if slot in seen_slots:
                    raise IntegrityError(
                        f"image {cap.image_id!r} has two captions for "
                        f"(language={cap.language!r}, set_index={cap.set_index})"
                    )
                seen_slots.add(slot)

    @property
    def image_ids(self) -> list[str]:
        return [img.image_id for img in self.images]

    def captions_for(
        self,
        *,
        language: str | None = None,
        source: CaptionSource | str | None = None,
        set_index: int | None = None,
        image_ids: set[str] | None = None,
    ) -> list[CaptionRecord]:
        """Captions matching all given filters (None = no constraint)."""
        if source is not None:
            source = CaptionSource(source)
        out = []
        for cap in self.captions:
            if language is not None and cap.language != language:
                continue
            if source is not None and cap.source is not source:
                continue
            if set_index is not None and cap.set_index != set_index:
                continue
            if image_ids is not None and cap.image_id not in image_ids:
                continue
            out.append(cap)
        return out

    def with_captions(self, extra: list[CaptionRecord], name: str | None = None) -> "Corpus":
        return Corpus(name or self.name, self.images, self.captions + tuple(extra))


@dataclass(frozen=True)
class SplitAssignment:
    reference: frozenset[str]
    train: frozenset[str]
    val: frozenset[str]
    test: frozenset[str]
    seed: int

    def __post_init__(self):
        for attr in ("reference", "train", "val", "test"):
            object.__setattr__(self, attr, frozenset(getattr(self, attr)))
        parts = [self.reference, self.train, self.val, self.test]
        total = sum(len(p) for p in parts)
        if len(self.reference | self.train | self.val | self.test) != total:
            raise IntegrityError("split sets are not pairwise disjoint")

    def split_of(self, image_id: str) -> str:
        for name in ("reference", "train", "val", "test"):
            if image_id in getattr(self, name):
                return name
        raise KeyError(image_id)


def _parse_flickr_line(line: str, lineno: int, path: str) -> tuple[str, int, str]:
    if "\t" not in line:
        raise ParseError("missing tab separator", path=path, line=lineno)
    head, text = line.split("\t", 1)
    if "#" not in head:
        raise ParseError(f"missing '#n' suffix in {head!r}", path=path, line=lineno)
    image_id, _, idx_str = head.rpartition("#")
    try:
        set_index = int(idx_str)
    except ValueError:
        raise ParseError(f"non-integer set index {idx_str!r}", path=path, line=lineno) from None
    if not 0 <= set_index <= 4:
        raise ParseError(f"set index {set_index} out of range 0..4", path=path, line=lineno)
    return image_id, set_index, text


def load_flickr_tokens(path: str | Path, language: str, name: str | None = None) -> Corpus:
    """Load a Flickr30K-style tokens file: ``imageid#n<TAB>caption`` per line.

    Captions are stored as native with the set index from the line; line order
    is preserved in the caption list.
    """
    path = Path(path)
    images: list[ImageRef] = []
    seen_images: set[str] = set()
    captions: list[CaptionRecord] = []
    seen_slots: set[tuple[str, int]] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            image_id, set_index, text = _parse_flickr_line(line, lineno, str(path))
            if (image_id, set_index) in seen_slots:
                raise IntegrityError(
                    f"{path}:{lineno}: duplicate caption for ({image_id!r}, set {set_index})"
                )
            seen_slots.add((image_id, set_index))
            if image_id not in seen_images:
                seen_images.add(image_id)
                images.append(ImageRef(image_id))
            captions.append(
                CaptionRecord(
                    caption_id=make_caption_id(image_id, language, CaptionSource.NATIVE, set_index),
                    image_id=image_id,
                    language=language,
                    text=text,
                    source=CaptionSource.NATIVE,
                    set_index=set_index,
                )
            )
    return Corpus(name or path.stem, tuple(images), tuple(captions))


def attach_caption_set(
    corpus: Corpus,
    path: str | Path,
    language: str,
    source: CaptionSource | str,
    set_index: int | None = None,
    ids_path: str | Path | None = None,
) -> Corpus:
    """Attach one caption per image from a sidecar-aligned or tabbed file.

    With ``ids_path`` the caption file is one caption per line, aligned with
    the image-id list in the sidecar file; otherwise lines must be
    ``imageid<TAB>caption``. Every corpus image must receive exactly one
    caption.
    """
    source = CaptionSource(source)
    if set_index is not None and source is not CaptionSource.NATIVE:
        raise ValidationError("set_index is only valid for native caption sets")
    path = Path(path)
    pairs: list[tuple[str, str]] = []
    if ids_path is not None:
        ids = [l.strip() for l in Path(ids_path).read_text(encoding="utf-8").splitlines() if l.strip()]
        texts = path.read_text(encoding="utf-8").splitlines()
        texts = [t for t in texts if t.strip()]
        if len(ids) != len(texts):
            raise IntegrityError(
                f"{path}: {len(texts)} captions but {len(ids)} ids in sidecar {ids_path}"
            )
        pairs = list(zip(ids, texts))
    else:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n").rstrip("\r")
                if not line:
                    continue
                if "\t" not in line:
                    raise ParseError("missing tab separator", path=str(path), line=lineno)
                image_id, text = line.split("\t", 1)
                pairs.append((image_id, text))

    known = set(corpus.image_ids)
    unknown = sorted({iid for iid, _ in pairs if iid not in known})
    if unknown:
        raise IntegrityError(f"{path}: unknown image ids {unknown}")
    covered = {iid for iid, _ in pairs}
    missing = sorted(known - covered)
    if missing:
        raise IntegrityError(f"{path}: images missing a caption: {missing}")
    dupes = len(pairs) - len(covered)
    if dupes:
        raise IntegrityError(f"{path}: {dupes} image(s) appear more than once")

    extra = [
        CaptionRecord(
            caption_id=make_caption_id(iid, language, source, set_index),
            image_id=iid,
            language=language,
            text=text,
            source=source,
            set_index=set_index,
        )
        for iid, text in pairs
    ]
    return corpus.with_captions(extra)


def split_sizes(n: int) -> tuple[int, int, int, int]:
    """Reference/train/val/test sizes for an ``n``-image corpus.

    Exact paper sizes at the full corpus size; otherwise proportional floors
    with the remainder assigned to test, then any empty split is topped up
    from test so all four splits are populated.
    """
    if n == _FULL_CORPUS_SIZE:
        return _SPLIT_WEIGHTS
    sizes = [n * w // _FULL_CORPUS_SIZE for w in _SPLIT_WEIGHTS[:3]]
    sizes.append(n - sum(sizes))
    for i in range(3):
        if sizes[i] == 0 and sizes[3] > 1:
            sizes[i] += 1
            sizes[3] -= 1
    return tuple(sizes)  # type: ignore[return-value]


def make_splits(corpus: Corpus, seed: int) -> SplitAssignment:
    """Deterministic reference/train/val/test partition of the corpus images.

    Image ids are sorted, shuffled with a generator seeded by ``seed``, and
    cut in order; the result is independent of corpus construction order.
    """
    ids = sorted(corpus.image_ids)
    if len(ids) < 4:
        raise ValidationError(f"corpus has {len(ids)} images; need at least 4 to populate all splits")
    rng = random.Random(seed)
    rng.shuffle(ids)
    n_ref, n_train, n_val, n_test = split_sizes(len(ids))
    cuts = [n_ref, n_ref + n_train, n_ref + n_train + n_val]
    return SplitAssignment(
        reference=frozenset(ids[: cuts[0]]),
        train=frozenset(ids[cuts[0] : cuts[1]]),
        val=frozenset(ids[cuts[1] : cuts[2]]),
        test=frozenset(ids[cuts[2] :]),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# canonical JSON formats
# ---------------------------------------------------------------------------

def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "name": corpus.name,
        "images": [
            {"image_id": img.image_id, **({"uri": img.uri} if img.uri else {})}
            for img in corpus.images
        ],
        "captions": [
            {
                "caption_id": cap.caption_id,
                "image_id": cap.image_id,
                "language": cap.language,
                "text": cap.text,
                "source": cap.source.value,
                "set_index": cap.set_index,
                "derivation": cap.derivation,
            }
            for cap in corpus.captions
        ],
    }


def corpus_from_dict(data: dict) -> Corpus:
    images = tuple(ImageRef(d["image_id"], d.get("uri")) for d in data["images"])
    captions = tuple(
        CaptionRecord(
            caption_id=d["caption_id"],
            image_id=d["image_id"],
            language=d["language"],
            text=d["text"],
            source=CaptionSource(d["source"]),
            set_index=d.get("set_index"),
            derivation=d.get("derivation"),
        )
        for d in data["captions"]
    )
    return Corpus(data["name"], images, captions)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(corpus_to_dict(corpus), ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )


def load_corpus(path: str | Path) -> Corpus:
    return corpus_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def splits_to_dict(splits: SplitAssignment) -> dict:
    return {
        "seed": splits.seed,
        "reference": sorted(splits.reference),
        "train": sorted(splits.train),
        "val": sorted(splits.val),
        "test": sorted(splits.test),
    }


def splits_from_dict(data: dict) -> SplitAssignment:
    return SplitAssignment(
        reference=frozenset(data["reference"]),
        train=frozenset(data["train"]),
        val=frozenset(data["val"]),
        test=frozenset(data["test"]),
        seed=data["seed"],
    )


def save_splits(splits: SplitAssignment, path: str | Path) -> None:
    Path(path).write_text(json.dumps(splits_to_dict(splits), indent=1) + "\n", encoding="utf-8")


def load_splits(path: str | Path) -> SplitAssignment:
    return splits_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
