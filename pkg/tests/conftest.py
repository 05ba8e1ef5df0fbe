from __future__ import annotations

from pathlib import Path

import pytest

from crosscap.corpus import attach_caption_set, load_flickr_tokens
from crosscap.taxonomy import build_taxonomy, Synset, load_builtin_taxonomy
from crosscap.vocab import ObjectClass, ObjectVocabulary, load_builtin_vocabulary

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\n[acceptance] {'PASS' if report.passed else 'FAIL'}: {name}")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def coco_vocab() -> ObjectVocabulary:
    return load_builtin_vocabulary()


@pytest.fixture(scope="session")
def small_taxonomy():
    return load_builtin_taxonomy()


@pytest.fixture()
def tiny_vocab() -> ObjectVocabulary:
    """Four-class vocabulary used by the hand-traced matcher tests."""
    return ObjectVocabulary(
        [
            ObjectClass(name="dog", supercategory="animal", synonyms=("puppy",),
                        synset_id="dog.n.01"),
            ObjectClass(name="fire hydrant", supercategory="outdoor", synset_id=None),
            ObjectClass(name="mouse", supercategory="electronic",
                        sense_blocklist=("computer",), synset_id=None),
            ObjectClass(name="person", supercategory="person", is_person=True,
                        synonyms=("man", "woman"), plurals=("people", "men", "women")),
        ]
    )


@pytest.fixture()
def chain_taxonomy():
    """dog.n.01 -> canine.n.02 -> animal.n.01 (root)."""
    return build_taxonomy(
        [
            Synset("animal.n.01", ("animal",), ()),
            Synset("canine.n.02", ("canine",), ("animal.n.01",)),
            Synset("dog.n.01", ("dog",), ("canine.n.02",)),
        ]
    )


@pytest.fixture(scope="session")
def demo_corpus():
    """The shipped 8-image bilingual fixture corpus with HT pairs."""
    corpus = load_flickr_tokens(FIXTURES / "en.tokens", "en", name="demo")
    corpus = corpus.with_captions(
        list(load_flickr_tokens(FIXTURES / "de.tokens", "de", name="demo").captions)
    )
    corpus = attach_caption_set(corpus, FIXTURES / "en_ht.tsv", "en", "human_translated")
    corpus = attach_caption_set(corpus, FIXTURES / "de_ht.tsv", "de", "human_translated")
    return corpus
