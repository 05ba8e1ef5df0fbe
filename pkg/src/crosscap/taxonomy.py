"""WordNet-style hypernym graph: loading, ancestor closure, lemma sampling.

The graph is ingested from a simplified TSV so the core carries no NLP
runtime; a small fixture taxonomy ships with the package and
``tools/extract_taxonomy.py`` regenerates a full one from WordNet.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .errors import NoHypernymError, NotFoundError, ParseError, ValidationError


@dataclass(frozen=True)
class Synset:
    synset_id: str
    lemmas: tuple[str, ...]
    hypernym_ids: tuple[str, ...]

    def __post_init__(self):
        if not self.lemmas:
            raise ValidationError(f"synset {self.synset_id!r} has no lemmas")


@dataclass(frozen=True)
class Taxonomy:
    synsets: dict[str, Synset]
    root_ids: frozenset[str]

    def __contains__(self, synset_id: str) -> bool:
        return synset_id in self.synsets

    def get(self, synset_id: str) -> Synset:
        try:
            return self.synsets[synset_id]
        except KeyError:
            raise NotFoundError(f"unknown synset {synset_id!r}") from None


def build_taxonomy(synsets: list[Synset]) -> Taxonomy:
    """Validate references and acyclicity, then assemble the graph."""
    by_id = {}
    for s in synsets:
        if s.synset_id in by_id:
            raise ValidationError(f"duplicate synset id {s.synset_id!r}")
        by_id[s.synset_id] = s
    for s in synsets:
        for hid in s.hypernym_ids:
            if hid not in by_id:
                raise ValidationError(
                    f"synset {s.synset_id!r} references missing hypernym {hid!r}"
                )
    # iterative DFS cycle check, reporting one cycle on failure
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {sid: WHITE for sid in by_id}
    for start in by_id:
        if color[start] != WHITE:
            continue
        stack: list[tuple[str, int]] = [(start, 0)]
        path = [start]
        color[start] = GRAY
        while stack:
            node, edge_idx = stack[-1]
            hypernyms = by_id[node].hypernym_ids
            if edge_idx < len(hypernyms):
                stack[-1] = (node, edge_idx + 1)
                nxt = hypernyms[edge_idx]
                if color[nxt] == GRAY:
                    cycle = path[path.index(nxt) :] + [nxt]
                    raise ValidationError("hypernym cycle: " + " -> ".join(cycle))
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    stack.append((nxt, 0))
                    path.append(nxt)
            else:
                color[node] = BLACK
                stack.pop()
                path.pop()
    roots = frozenset(sid for sid, s in by_id.items() if not s.hypernym_ids)
    return Taxonomy(by_id, roots)


def load_taxonomy(path: str | Path) -> Taxonomy:
    """Load ``synset_id<TAB>lemma1|lemma2<TAB>hyp1,hyp2`` lines (third field
    empty for roots); ``#`` lines are comments."""
    path = Path(path)
    synsets = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ParseError(
                    f"expected 2 or 3 tab-separated fields, got {len(parts)}",
                    path=str(path),
                    line=lineno,
                )
            synset_id = parts[0].strip()
            lemmas = tuple(l.strip() for l in parts[1].split("|") if l.strip())
            hypernyms = ()
            if len(parts) == 3 and parts[2].strip():
                hypernyms = tuple(h.strip() for h in parts[2].split(",") if h.strip())
            synsets.append(Synset(synset_id, lemmas, hypernyms))
    return build_taxonomy(synsets)


def builtin_taxonomy_path() -> Path:
    return Path(__file__).parent / "data" / "taxonomy_small.tsv"


def load_builtin_taxonomy() -> Taxonomy:
    return load_taxonomy(builtin_taxonomy_path())


def ancestor_set(
    tax: Taxonomy,
    synset_id: str,
    exclude_roots: bool = False,
    max_height: int | None = None,
) -> set[str]:
    """All strict ancestors of ``synset_id`` via any hypernym path.

    ``max_height`` caps how many levels above the synset are collected;
    ``exclude_roots`` drops root synsets from the result.
    """
    tax.get(synset_id)  # raises NotFoundError for unknown ids
    out: set[str] = set()
    frontier = [synset_id]
    height = 0
    while frontier and (max_height is None or height < max_height):
        nxt = []
        for sid in frontier:
            for hid in tax.get(sid).hypernym_ids:
                if hid not in out:
                    out.add(hid)
                    nxt.append(hid)
        frontier = nxt
        height += 1
    if exclude_roots:
        out -= tax.root_ids
    return out


def sample_hypernym_lemma(
    tax: Taxonomy,
    synset_id: str,
    rng: random.Random,
    max_height: int | None = None,
) -> str:
    """Uniformly pick a non-root ancestor, then one of its lemmas.

    Multi-word lemmas come back with spaces instead of underscores. Raises
    NoHypernymError when the synset has no non-root ancestors.
    """
    candidates = sorted(ancestor_set(tax, synset_id, exclude_roots=True, max_height=max_height))
    if not candidates:
        raise NoHypernymError(f"synset {synset_id!r} has no non-root ancestors")
    ancestor = tax.get(rng.choice(candidates))
    lemma = rng.choice(list(ancestor.lemmas))
    return lemma.replace("_", " ")
