"""Object vocabulary and mention detection.

The vocabulary holds object classes (canonical term, synonyms, plurals,
supercategory, optional synset id) and an index from token sequences to
classes. Mention detection is longest-match, left-to-right, non-overlapping
over lowercased punctuation-stripped tokens, with per-class sense blocklists
cancelling matches when a blocked word appears within three tokens on either
side.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, CaptionSource
from .errors import ValidationError

_PUNCT_STRIP = "".join(
    chr(c) for c in range(0x21, 0x30)
) + ":;<=>?@[\\]^_`{|}~‘’“”«»–—"

_BLOCK_WINDOW = 3  # tokens on either side of a match checked against the blocklist


def normalize_term(term: str) -> str:
    return unicodedata.normalize("NFC", term).lower().strip()


def tokenize(text: str) -> list[str]:
    """Lowercased tokens: split on whitespace, strip edge punctuation."""
    return [tok for tok, _ in tokenize_with_alignment(text)]


def tokenize_with_alignment(text: str) -> list[tuple[str, int]]:
    """Tokens plus the index of the raw whitespace-split token each came from.

    Raw tokens that are pure punctuation produce no token. Needed by callers
    that rewrite the original string (mention replacement).
    """
    text = unicodedata.normalize("NFC", text)
    out: list[tuple[str, int]] = []
    for raw_index, raw in enumerate(text.split()):
        core = raw.strip(_PUNCT_STRIP)
        if core:
            out.append((core.lower(), raw_index))
    return out


def pluralize(term: str) -> str:
    """Rule-based English plural of the last word of ``term``."""
    head, _, last = term.rpartition(" ")
    if last.endswith(("s", "x", "z", "ch", "sh")):
        plural = last + "es"
    elif last.endswith("y") and len(last) > 1 and last[-2] not in "aeiou":
        plural = last[:-1] + "ies"
    else:
        plural = last + "s"
    return f"{head} {plural}" if head else plural


@dataclass(frozen=True)
class ObjectClass:
    name: str
    supercategory: str
    synonyms: tuple[str, ...] = ()
    plurals: tuple[str, ...] = ()  # explicit irregulars; regulars are generated
    synset_id: str | None = None
    is_person: bool = False
    sense_blocklist: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "name", normalize_term(self.name))
        object.__setattr__(self, "synonyms", tuple(normalize_term(s) for s in self.synonyms))
        object.__setattr__(self, "plurals", tuple(normalize_term(p) for p in self.plurals))
        object.__setattr__(
            self, "sense_blocklist", tuple(normalize_term(b) for b in self.sense_blocklist)
        )
        if not self.name:
            raise ValidationError("object class name must be non-empty")
        if not self.supercategory:
            raise ValidationError(f"class {self.name!r} is missing a supercategory")

    def singular_surfaces(self) -> list[str]:
        return [self.name, *self.synonyms]

    def plural_surfaces(self) -> list[str]:
        generated = [pluralize(s) for s in self.singular_surfaces()]
        seen: set[str] = set()
        out: list[str] = []
        for surface in [*self.plurals, *generated]:
            if surface not in seen:
                seen.add(surface)
                out.append(surface)
        return out


@dataclass(frozen=True)
class MentionSpan:
    caption_id: str
    class_name: str
    token_start: int
    token_end: int
    surface: str

    def __post_init__(self):
        if not self.token_start < self.token_end:
            raise ValidationError("token_start must be < token_end")


@dataclass
class ObjectVocabulary:
    classes: list[ObjectClass]
    # token sequence -> (class name, surface was a plural form)
    _index: dict[tuple[str, ...], tuple[str, bool]] = field(init=False, repr=False)
    _by_name: dict[str, ObjectClass] = field(init=False, repr=False)
    _max_span: int = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {}
        self._by_name = {}
        surface_owner: dict[tuple[str, ...], str] = {}
        for cls in self.classes:
            if cls.name in self._by_name:
                raise ValidationError(f"duplicate class name {cls.name!r}")
            self._by_name[cls.name] = cls
        for cls in self.classes:
            for surface, is_plural in [
                *((s, False) for s in cls.singular_surfaces()),
                *((p, True) for p in cls.plural_surfaces()),
            ]:
                key = tuple(surface.split())
                owner = surface_owner.get(key)
                if owner is not None and owner != cls.name:
                    raise ValidationError(
                        f"surface {surface!r} is ambiguous between classes "
                        f"{owner!r} and {cls.name!r}"
                    )
                if owner is None:
                    surface_owner[key] = cls.name
                    self._index[key] = (cls.name, is_plural)
        self._max_span = max((len(k) for k in self._index), default=1)

    def __iter__(self):
        return iter(self.classes)

    def __len__(self) -> int:
        return len(self.classes)

    def get(self, class_name: str) -> ObjectClass:
        return self._by_name[class_name]

    def class_names(self) -> list[str]:
        return [c.name for c in self.classes]

    def supercategories(self) -> list[str]:
        seen: list[str] = []
        for c in self.classes:
            if c.supercategory not in seen:
                seen.append(c.supercategory)
        return seen

    def classes_in_supercategory(self, supercategory: str) -> list[ObjectClass]:
        return [c for c in self.classes if c.supercategory == supercategory]

    def lookup(self, tokens: tuple[str, ...]) -> tuple[str, bool] | None:
        return self._index.get(tokens)

    @property
    def max_span_tokens(self) -> int:
        return self._max_span


def load_vocabulary(path: str | Path) -> ObjectVocabulary:
    """Load the vocabulary JSON: a list of class entries (see data file)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValidationError(f"{path}: expected a top-level JSON list of classes")
    classes = []
    for entry in data:
        if "supercategory" not in entry or not entry["supercategory"]:
            raise ValidationError(f"{path}: class {entry.get('name')!r} is missing a supercategory")
        classes.append(
            ObjectClass(
                name=entry["name"],
                supercategory=entry["supercategory"],
                synonyms=tuple(entry.get("synonyms", ())),
                plurals=tuple(entry.get("plurals", ())),
                synset_id=entry.get("synset_id"),
                is_person=bool(entry.get("is_person", False)),
                sense_blocklist=tuple(entry.get("sense_blocklist", ())),
            )
        )
    return ObjectVocabulary(classes)


def builtin_vocabulary_path() -> Path:
    return Path(__file__).parent / "data" / "coco_vocabulary.json"


def load_builtin_vocabulary() -> ObjectVocabulary:
    return load_vocabulary(builtin_vocabulary_path())


def _blocked(cls: ObjectClass, tokens: list[str], start: int, end: int) -> bool:
    if not cls.sense_blocklist:
        return False
    window = tokens[max(0, start - _BLOCK_WINDOW) : start] + tokens[end : end + _BLOCK_WINDOW]
    for pattern in cls.sense_blocklist:
        parts = tuple(pattern.split())
        if len(parts) == 1:
            if parts[0] in window:
                return True
        else:
            for i in range(len(window) - len(parts) + 1):
                if tuple(window[i : i + len(parts)]) == parts:
                    return True
    return False


def detect_mentions(
    text: str, vocab: ObjectVocabulary, caption_id: str = ""
) -> list[MentionSpan]:
    """Longest-match, left-to-right, non-overlapping object mentions in ``text``."""
    tokens = tokenize(text)
    spans: list[MentionSpan] = []
    i = 0
    n = len(tokens)
    while i < n:
        advanced = False
        for width in range(min(vocab.max_span_tokens, n - i), 0, -1):
            window = tuple(tokens[i : i + width])
            hit = vocab.lookup(window)
            if hit is None:
                continue
            class_name, _ = hit
            if _blocked(vocab.get(class_name), tokens, i, i + width):
                continue
            spans.append(
                MentionSpan(
                    caption_id=caption_id,
                    class_name=class_name,
                    token_start=i,
                    token_end=i + width,
                    surface=" ".join(window),
                )
            )
            i += width
            advanced = True
            break
        if not advanced:
            i += 1
    return spans


@dataclass(frozen=True)
class CaptionFilter:
    """Selects a subset of corpus captions for counting."""

    language: str | None = None
    source: CaptionSource | str | None = None
    set_index: int | None = None
    image_ids: frozenset[str] | None = None

    def select(self, corpus: Corpus):
        return corpus.captions_for(
            language=self.language,
            source=self.source,
            set_index=self.set_index,
            image_ids=set(self.image_ids) if self.image_ids is not None else None,
        )


def mention_profile(
    corpus: Corpus, vocab: ObjectVocabulary, caption_filter: CaptionFilter | None = None
) -> dict[str, int]:
    """Mention counts per class over the filtered captions."""
    caption_filter = caption_filter or CaptionFilter()
    counts: dict[str, int] = {}
    for cap in caption_filter.select(corpus):
        for span in detect_mentions(cap.text, vocab, caption_id=cap.caption_id):
            counts[span.class_name] = counts.get(span.class_name, 0) + 1
    return counts
