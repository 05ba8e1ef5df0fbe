"""Caption augmentation strategies.

Hypernymization rewrites detected object mentions into sampled ancestor
terms. The two paraphrase strategies build LLM prompt bundles from the
versioned templates under ``data/prompts`` and parse the model output back
into a single caption. Combining merges strategy outputs into one training
caption list with de-duplication.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .corpus import CaptionRecord, CaptionSource, make_caption_id
from .errors import NoHypernymError, ParseError, ValidationError
from .taxonomy import Taxonomy, ancestor_set, sample_hypernym_lemma
from .vocab import ObjectVocabulary, detect_mentions, pluralize, tokenize_with_alignment

_PROMPT_DIR = Path(__file__).parent / "data" / "prompts"


class AugmentStrategy(str, Enum):
    HYPER = "hyper"
    PARA_RND = "para_rnd"
    PARA_TGT = "para_tgt"


@dataclass(frozen=True)
class AugmentedCaption:
    parent_caption_id: str
    strategy: AugmentStrategy
    text_en: str
    text_target: str | None = None
    trace: tuple[dict, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "strategy", AugmentStrategy(self.strategy))
        object.__setattr__(self, "trace", tuple(self.trace))
        if not self.text_en.strip():
            raise ValidationError("augmented caption has empty text_en")
        if self.strategy is AugmentStrategy.HYPER and not self.trace:
            raise ValidationError("hyper captions must carry a non-empty edit trace")

    @property
    def image_id(self) -> str:
        # caption ids are "{image_id}:{language}:{source}:{tail}" and image
        # ids may not contain ':'
        return self.parent_caption_id.split(":", 1)[0]

    def with_target(self, text_target: str, extra_trace: dict | None = None) -> "AugmentedCaption":
        trace = self.trace + ((extra_trace,) if extra_trace else ())
        return AugmentedCaption(self.parent_caption_id, self.strategy, self.text_en, text_target, trace)

    def to_dict(self) -> dict:
        return {
            "parent_caption_id": self.parent_caption_id,
            "strategy": self.strategy.value,
            "text_en": self.text_en,
            "text_target": self.text_target,
            "trace": list(self.trace),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentedCaption":
        return cls(
            parent_caption_id=data["parent_caption_id"],
            strategy=AugmentStrategy(data["strategy"]),
            text_en=data["text_en"],
            text_target=data.get("text_target"),
            trace=tuple(data.get("trace", ())),
        )


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    template_id: AugmentStrategy
    ref_caption_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.template_id is AugmentStrategy.PARA_RND and self.ref_caption_ids:
            raise ValidationError("para_rnd prompts carry no reference captions")


def load_template(name: str) -> str:
    return (_PROMPT_DIR / f"{name}.txt").read_text(encoding="utf-8").rstrip("\n")


def derive_rng(seed: int, *parts: str) -> random.Random:
    """Per-item generator from (global seed, labels); stable across runs and
    unaffected by work ordering."""
    digest = hashlib.sha256(("|".join([str(seed), *parts])).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _strip_edge_punct(raw: str) -> tuple[str, str, str]:
    """Split a raw token into (leading punctuation, core, trailing punctuation)."""
    start = 0
    end = len(raw)
    while start < end and not raw[start].isalnum():
        start += 1
    while end > start and not raw[end - 1].isalnum():
        end -= 1
    return raw[:start], raw[start:end], raw[end:]


def _match_case(replacement: str, original_core: str) -> str:
    if original_core[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


def hypernymize_caption(
    caption: CaptionRecord,
    vocab: ObjectVocabulary,
    tax: Taxonomy,
    rng: random.Random,
    max_replacements: int | None = None,
    max_height: int | None = None,
) -> AugmentedCaption | None:
    """Replace object mentions with sampled hypernym lemmas.

    Every eligible mention is replaced left to right (bounded by
    ``max_replacements``); a surface detected through a plural form gets a
    pluralized replacement. Returns None when nothing was replaced.
    """
    if caption.language != "en":
        raise ValidationError(f"hypernymization expects English captions, got {caption.language!r}")
    aligned = tokenize_with_alignment(caption.text)
    raw_tokens = caption.text.split()
    spans = detect_mentions(caption.text, vocab, caption_id=caption.caption_id)
    trace: list[dict] = []
    for span in spans:
        if max_replacements is not None and len(trace) >= max_replacements:
            break
        cls = vocab.get(span.class_name)
        if cls.synset_id is None or cls.synset_id not in tax:
            continue
        try:
            lemma = sample_hypernym_lemma(tax, cls.synset_id, rng, max_height=max_height)
        except NoHypernymError:
            continue
        was_plural = vocab.lookup(tuple(span.surface.split()))
        replacement = pluralize(lemma) if (was_plural and was_plural[1]) else lemma
        if replacement.lower() == span.surface.lower():
            continue  # would leave the text unchanged
        first_raw = aligned[span.token_start][1]
        last_raw = aligned[span.token_end - 1][1]
        lead, core, _ = _strip_edge_punct(raw_tokens[first_raw])
        _, _, tail = _strip_edge_punct(raw_tokens[last_raw])
        raw_tokens[first_raw : last_raw + 1] = [lead + _match_case(replacement, core) + tail]
        # re-align remaining raw indices after splicing
        delta = (last_raw - first_raw)
        aligned = [(tok, idx - delta if idx > last_raw else idx) for tok, idx in aligned]
        trace.append(
            {
                "kind": "replace",
                "class": span.class_name,
                "surface": span.surface,
                "replacement": replacement,
                "token_start": span.token_start,
                "token_end": span.token_end,
            }
        )
    if not trace:
        return None
    return AugmentedCaption(
        parent_caption_id=caption.caption_id,
        strategy=AugmentStrategy.HYPER,
        text_en=" ".join(raw_tokens),
        trace=tuple(trace),
    )


def build_para_rnd_prompt(caption: CaptionRecord) -> PromptBundle:
    """Bundle the structural-rewrite template with the caption appended."""
    if caption.language != "en":
        raise ValidationError(f"paraphrase prompts expect English captions, got {caption.language!r}")
    return PromptBundle(
        system=load_template("system"),
        user=load_template("para_rnd") + "\n\n" + caption.text,
        template_id=AugmentStrategy.PARA_RND,
    )


def sample_references(
    caption: CaptionRecord,
    reference_pool: list[CaptionRecord],
    vocab: ObjectVocabulary,
    rng: random.Random,
    k: int = 100,
) -> list[CaptionRecord]:
    """Pick ``k`` style references, preferring captions that share a
    non-person object class with the input; the shortfall is filled uniformly
    from the rest of the pool."""
    if not reference_pool:
        raise ValidationError("reference pool is empty")
    if k < 1:
        raise ValidationError("k must be >= 1")
    own_classes = {
        s.class_name
        for s in detect_mentions(caption.text, vocab, caption_id=caption.caption_id)
        if not vocab.get(s.class_name).is_person
    }

    def shares(candidate: CaptionRecord) -> bool:
        if not own_classes:
            return False
        for span in detect_mentions(candidate.text, vocab, caption_id=candidate.caption_id):
            if span.class_name in own_classes:
                return True
        return False

    sharers = [c for c in reference_pool if shares(c)]
    rest = [c for c in reference_pool if not shares(c)]
    picked = rng.sample(sharers, min(k, len(sharers)))
    if len(picked) < k:
        picked += rng.sample(rest, min(k - len(picked), len(rest)))
    return picked


def build_para_tgt_prompt(caption: CaptionRecord, refs_en: list[str],
                          ref_caption_ids: list[str] | None = None) -> PromptBundle:
    """Bundle the 3-step targeted template with references and the caption
    interpolated; refs are already English renderings of the sampled pool."""
    if caption.language != "en":
        raise ValidationError(f"paraphrase prompts expect English captions, got {caption.language!r}")
    if not refs_en:
        raise ValidationError("targeted paraphrase requires at least one reference caption")
    ref_list = "[" + ", ".join(f'"{r}"' for r in refs_en) + "]"
    user = load_template("para_tgt").replace("{ref_caps}", ref_list).replace("{example}", caption.text)
    return PromptBundle(
        system=load_template("system"),
        user=user,
        template_id=AugmentStrategy.PARA_TGT,
        ref_caption_ids=tuple(ref_caption_ids or ()),
    )


_FINAL_RE = re.compile(r"<final>(.*?)</final>", re.DOTALL)


def parse_final(llm_output: str) -> str:
    """Content of the first ``<final>...</final>`` pair, trimmed."""
    match = _FINAL_RE.search(llm_output)
    if match is None:
        detail = "unclosed <final> tag" if "<final>" in llm_output else "no <final></final> pair"
        raise ParseError(f"{detail} in model output")
    return match.group(1).strip()


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n(.*?)\n?```$", re.DOTALL)


def parse_plain(llm_output: str) -> str:
    """Single-line caption from a bare model reply: strips code fences,
    surrounding quotes, and whitespace; multi-line residue is rejected."""
    text = llm_output.strip()
    fenced = _FENCE_RE.match(text)
    if fenced:
        text = fenced.group(1).strip()
    for quote in ('"""', "'''", '"', "'"):
        if len(text) >= 2 * len(quote) and text.startswith(quote) and text.endswith(quote):
            text = text[len(quote) : -len(quote)].strip()
            break
    if not text:
        raise ParseError("model output is empty after stripping")
    if "\n" in text:
        raise ParseError("model output has multi-line residue after stripping")
    return text


def combine_datasets(
    base: list[CaptionRecord],
    extras: list[list[AugmentedCaption]],
    target_language: str = "de",
) -> list[CaptionRecord]:
    """Base captions plus all augmented captions as CaptionRecords, dropping
    duplicate (image_id, target text) pairs, first occurrence kept."""
    out: list[CaptionRecord] = []
    seen: set[tuple[str, str]] = set()
    for cap in base:
        key = (cap.image_id, cap.text)
        if key in seen:
            continue
        seen.add(key)
        out.append(cap)
    for group in extras:
        for aug in group:
            if aug.text_target is None:
                raise ValidationError(
                    f"augmented caption from {aug.parent_caption_id!r} lacks text_target"
                )
            key = (aug.image_id, aug.text_target)
            if key in seen:
                continue
            seen.add(key)
            derivation = f"{aug.strategy.value}:{aug.parent_caption_id}"
            out.append(
                CaptionRecord(
                    caption_id=make_caption_id(
                        aug.image_id,
                        target_language,
                        CaptionSource.AUGMENTED,
                        derivation=f"{derivation}:{aug.text_target}",
                    ),
                    image_id=aug.image_id,
                    language=target_language,
                    text=aug.text_target,
                    source=CaptionSource.AUGMENTED,
                    derivation=derivation,
                )
            )
    return out


def verify_hyper_trace(
    aug: AugmentedCaption, vocab: ObjectVocabulary, tax: Taxonomy
) -> bool:
    """Re-derivation check: every edit replaced a class surface with a lemma
    of a strict non-root ancestor of that class's synset."""
    if aug.strategy is not AugmentStrategy.HYPER:
        raise ValidationError("trace verification applies to hyper captions")
    for edit in aug.trace:
        if edit.get("kind") != "replace":
            continue
        cls = vocab.get(edit["class"])
        if cls.synset_id is None:
            return False
        replacement = edit["replacement"]
        candidates = {replacement, replacement.lower()}
        # undo plural preservation when the surface was plural
        hit = vocab.lookup(tuple(edit["surface"].split()))
        lemma_ok = False
        for ancestor_id in ancestor_set(tax, cls.synset_id, exclude_roots=True):
            for lemma in tax.get(ancestor_id).lemmas:
                lemma_text = lemma.replace("_", " ")
                if lemma_text in candidates or (
                    hit is not None and hit[1] and pluralize(lemma_text) in candidates
                ):
                    lemma_ok = True
        if not lemma_ok:
            return False
    return True
