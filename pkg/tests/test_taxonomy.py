from __future__ import annotations

import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from crosscap.errors import NoHypernymError, NotFoundError, ValidationError
from crosscap.taxonomy import (
    Synset,
    ancestor_set,
    build_taxonomy,
    load_taxonomy,
    sample_hypernym_lemma,
)


def write_tsv(tmp_path, text):
    path = tmp_path / "tax.tsv"
    path.write_text(text, encoding="utf-8")
    return path


CHAIN = "animal.n.01\tanimal\t\ncanine.n.02\tcanine\tanimal.n.01\ndog.n.01\tdog\tcanine.n.02\n"


class TestLoadTaxonomy:
    def test_three_node_chain(self, tmp_path):
        tax = load_taxonomy(write_tsv(tmp_path, CHAIN))
        assert set(tax.synsets) == {"animal.n.01", "canine.n.02", "dog.n.01"}
        assert tax.root_ids == {"animal.n.01"}

    def test_cycle_detected(self, tmp_path):
        text = "a.n.01\ta\tb.n.01\nb.n.01\tb\ta.n.01\n"
        with pytest.raises(ValidationError, match="cycle"):
            load_taxonomy(write_tsv(tmp_path, text))

    def test_dangling_reference(self, tmp_path):
        text = "a.n.01\ta\tghost.n.01\n"
        with pytest.raises(ValidationError, match="ghost.n.01"):
            load_taxonomy(write_tsv(tmp_path, text))

    def test_duplicate_id(self, tmp_path):
        text = "a.n.01\ta\t\na.n.01\tagain\t\n"
        with pytest.raises(ValidationError, match="duplicate"):
            load_taxonomy(write_tsv(tmp_path, text))

    def test_comments_and_blank_lines_skipped(self, tmp_path):
        tax = load_taxonomy(write_tsv(tmp_path, "# header\n\n" + CHAIN))
        assert len(tax.synsets) == 3

    def test_builtin_fixture_valid(self, small_taxonomy):
        assert small_taxonomy.root_ids == {"entity.n.01"}
        # every non-root reaches the root
        for sid in small_taxonomy.synsets:
            if sid not in small_taxonomy.root_ids:
                assert "entity.n.01" in ancestor_set(small_taxonomy, sid)


class TestAncestorSet:
    def test_chain_with_roots(self, chain_taxonomy):
        assert ancestor_set(chain_taxonomy, "dog.n.01") == {"canine.n.02", "animal.n.01"}

    def test_chain_excluding_roots(self, chain_taxonomy):
        assert ancestor_set(chain_taxonomy, "dog.n.01", exclude_roots=True) == {"canine.n.02"}

    def test_diamond(self):
        tax = build_taxonomy(
            [
                Synset("d.n.01", ("d",), ()),
                Synset("b.n.01", ("b",), ("d.n.01",)),
                Synset("c.n.01", ("c",), ("d.n.01",)),
                Synset("a.n.01", ("a",), ("b.n.01", "c.n.01")),
            ]
        )
        assert ancestor_set(tax, "a.n.01") == {"b.n.01", "c.n.01", "d.n.01"}

    def test_unknown_synset(self, chain_taxonomy):
        with pytest.raises(NotFoundError):
            ancestor_set(chain_taxonomy, "ghost.n.01")

    def test_max_height_caps_walk(self, small_taxonomy):
        one_up = ancestor_set(small_taxonomy, "dog.n.01", max_height=1)
        assert one_up == {"canine.n.02", "domestic_animal.n.01"}

    def test_parent_ancestors_are_child_ancestors(self, small_taxonomy):
        for sid, synset in small_taxonomy.synsets.items():
            child_anc = ancestor_set(small_taxonomy, sid)
            for hid in synset.hypernym_ids:
                assert ancestor_set(small_taxonomy, hid) <= child_anc


class TestSampleHypernymLemma:
    def test_singleton_candidate(self, chain_taxonomy):
        rng = random.Random(0)
        assert sample_hypernym_lemma(chain_taxonomy, "dog.n.01", rng) == "canine"

    def test_root_has_no_hypernyms(self, chain_taxonomy):
        with pytest.raises(NoHypernymError):
            sample_hypernym_lemma(chain_taxonomy, "animal.n.01", random.Random(0))

    def test_underscores_become_spaces(self):
        tax = build_taxonomy(
            [
                Synset("top.n.01", ("top",), ()),
                Synset("mid.n.01", ("motor_vehicle",), ("top.n.01",)),
                Synset("leaf.n.01", ("leaf",), ("mid.n.01",)),
            ]
        )
        assert sample_hypernym_lemma(tax, "leaf.n.01", random.Random(1)) == "motor vehicle"

    def test_two_ancestor_balance(self):
        # binomial check: 10,000 draws over two equal-depth ancestors
        tax = build_taxonomy(
            [
                Synset("root.n.01", ("root",), ()),
                Synset("left.n.01", ("left",), ("root.n.01",)),
                Synset("right.n.01", ("right",), ("root.n.01",)),
                Synset("leaf.n.01", ("leaf",), ("left.n.01", "right.n.01")),
            ]
        )
        rng = random.Random(1234)
        counts = Counter(sample_hypernym_lemma(tax, "leaf.n.01", rng) for _ in range(10_000))
        assert abs(counts["left"] - 5000) <= 300
        assert abs(counts["right"] - 5000) <= 300

    def test_determinism(self, small_taxonomy):
        a = [sample_hypernym_lemma(small_taxonomy, "dog.n.01", random.Random(7)) for _ in range(20)]
        b = [sample_hypernym_lemma(small_taxonomy, "dog.n.01", random.Random(7)) for _ in range(20)]
        assert a == b

    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_sample_is_always_an_ancestor_lemma(self, seed):
        tax = build_taxonomy(
            [
                Synset("r.n.01", ("r",), ()),
                Synset("m.n.01", ("m1", "m2"), ("r.n.01",)),
                Synset("n.n.01", ("n1",), ("r.n.01",)),
                Synset("x.n.01", ("x",), ("m.n.01", "n.n.01")),
            ]
        )
        lemma = sample_hypernym_lemma(tax, "x.n.01", random.Random(seed))
        allowed = {
            l.replace("_", " ")
            for sid in ancestor_set(tax, "x.n.01", exclude_roots=True)
            for l in tax.get(sid).lemmas
        }
        assert lemma in allowed
