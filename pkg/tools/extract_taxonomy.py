#!/usr/bin/env python3
"""Regenerate a taxonomy TSV from WordNet (repo tooling, not part of the
package; needs nltk with the wordnet corpus downloaded).

Usage:
    python tools/extract_taxonomy.py --roots dog.n.01 car.n.01 > taxonomy.tsv
    python tools/extract_taxonomy.py --from-vocabulary src/crosscap/data/coco_vocabulary.json

Walks every hypernym path from the given synsets upward and emits
``synset_id<TAB>lemma1|lemma2<TAB>hyp1,hyp2`` lines, the format read by the
taxonomy loader.
"""

from __future__ import annotations

import argparse
import json
import sys


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--roots", nargs="*", default=[], help="Synset ids to start from.")
    parser.add_argument("--from-vocabulary", help="Pull synset ids from a vocabulary JSON file.")
    args = parser.parse_args()

    try:
        from nltk.corpus import wordnet as wn
    except ImportError:
        print("nltk is required: pip install nltk && python -m nltk.downloader wordnet", file=sys.stderr)
        return 1

    wanted = list(args.roots)
    if args.from_vocabulary:
        entries = json.loads(open(args.from_vocabulary, encoding="utf-8").read())
        wanted += [e["synset_id"] for e in entries if e.get("synset_id")]
    if not wanted:
        parser.error("give --roots and/or --from-vocabulary")

    emitted: dict[str, tuple[list[str], list[str]]] = {}
    frontier = []
    for sid in wanted:
        try:
            frontier.append(wn.synset(sid))
        except Exception as exc:
            print(f"skipping {sid}: {exc}", file=sys.stderr)
    while frontier:
        synset = frontier.pop()
        sid = synset.name()
        if sid in emitted:
            continue
        hypernyms = synset.hypernyms() + synset.instance_hypernyms()
        emitted[sid] = ([l.name() for l in synset.lemmas()], [h.name() for h in hypernyms])
        frontier.extend(hypernyms)

    for sid in sorted(emitted):
        lemmas, hypernyms = emitted[sid]
        print(f"{sid}\t{'|'.join(lemmas)}\t{','.join(hypernyms)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
