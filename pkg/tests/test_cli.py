from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from crosscap.augment import AugmentedCaption, verify_hyper_trace
from crosscap.cli import load_config, main
from crosscap.errors import ValidationError
from crosscap.taxonomy import load_builtin_taxonomy
from crosscap.vocab import load_builtin_vocabulary


def write_config(tmp_path: Path, fixtures: Path, *, fmt="toml", seed=17, k=6) -> Path:
    if fmt == "toml":
        text = f"""\
seed = {seed}
out_dir = "out"

[corpus]
name = "demo"

[[corpus.caption_sets]]
path = "{fixtures}/en.tokens"
language = "en"
format = "flickr_tokens"

[[corpus.caption_sets]]
path = "{fixtures}/de.tokens"
language = "de"
format = "flickr_tokens"

[[corpus.caption_sets]]
path = "{fixtures}/en_ht.tsv"
language = "en"
format = "tabbed"
source = "human_translated"

[[corpus.caption_sets]]
path = "{fixtures}/de_ht.tsv"
language = "de"
format = "tabbed"
source = "human_translated"

[augment]
k = {k}

[providers]
backend = "fixture"
cache_root = "cache"
target_language = "de"
embed_dim = 8
"""
        path = tmp_path / "run.toml"
    else:
        payload = {
            "seed": seed,
            "out_dir": "out",
            "corpus": {
                "name": "demo",
                "caption_sets": [
                    {"path": str(fixtures / "en.tokens"), "language": "en", "format": "flickr_tokens"},
                    {"path": str(fixtures / "de.tokens"), "language": "de", "format": "flickr_tokens"},
                ],
            },
            "providers": {"backend": "fixture", "cache_root": "cache", "embed_dim": 8},
        }
        path = tmp_path / "run.json"
        path.write_text(json.dumps(payload))
        return path
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture()
def runner():
    return CliRunner()


def invoke(runner, config, *args):
    result = runner.invoke(main, ["--config", str(config), *args], catch_exceptions=False)
    return result


class TestConfig:
    def test_seed_mandatory(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('out_dir = "out"\n')
        with pytest.raises(ValidationError, match="seed"):
            load_config(path)

    def test_missing_caption_file_caught_at_validation(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text(
            'seed = 1\n[[corpus.caption_sets]]\npath = "ghost.tokens"\nlanguage = "en"\n'
        )
        with pytest.raises(ValidationError, match="ghost.tokens"):
            load_config(path)

    def test_json_config_accepted(self, tmp_path, fixtures_dir):
        cfg = load_config(write_config(tmp_path, fixtures_dir, fmt="json"))
        assert cfg.seed == 17

    def test_threshold_grid_string(self, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        text = config.read_text() + '\n[eval]\nthreshold_grid = "10:10:40"\n'
        config.write_text(text)
        assert load_config(config).threshold_grid == (10, 20, 30, 40)


class TestIngest:
    def test_creates_artifacts(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        result = invoke(runner, config, "ingest")
        assert result.exit_code == 0, result.output
        assert (tmp_path / "out" / "corpus.json").exists()
        assert (tmp_path / "out" / "split.json").exists()
        assert (tmp_path / "out" / "run_config.toml").read_bytes() == config.read_bytes()

    def test_missing_file_nonzero_exit(self, runner, tmp_path):
        config = tmp_path / "bad.toml"
        config.write_text('seed = 1\n[[corpus.caption_sets]]\npath = "nope.tokens"\nlanguage = "en"\n')
        result = runner.invoke(main, ["--config", str(config), "ingest"])
        assert result.exit_code != 0
        assert "nope.tokens" in result.output

    def test_rerun_same_seed_identical_split_bytes(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        first = (tmp_path / "out" / "split.json").read_bytes()
        invoke(runner, config, "split")
        assert (tmp_path / "out" / "split.json").read_bytes() == first


class TestMentions:
    def test_profile_written(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        result = invoke(runner, config, "mentions", "--language", "en", "--source", "native")
        assert result.exit_code == 0
        data = json.loads((tmp_path / "out" / "mentions_en_native.json").read_text())
        assert data["dog"] > 0


class TestAugment:
    def test_hyper_lines_verify(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        result = invoke(runner, config, "augment", "--strategy", "hyper")
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "out" / "augmented_hyper.jsonl").read_text().splitlines()
        vocab = load_builtin_vocabulary()
        tax = load_builtin_taxonomy()
        assert lines
        for line in lines:
            aug = AugmentedCaption.from_dict(json.loads(line))
            assert aug.text_target
            assert verify_hyper_trace(aug, vocab, tax)

    def test_cmb_counts(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        result = invoke(runner, config, "augment", "--strategy", "cmb")
        assert result.exit_code == 0, result.output
        out = tmp_path / "out"
        sizes = {
            name: len((out / f"augmented_{name}.jsonl").read_text().splitlines())
            for name in ("hyper", "para_rnd", "para_tgt", "cmb")
        }
        summary = json.loads((out / "augment_summary_cmb.json").read_text())
        assert sizes["cmb"] == sizes["hyper"] + sizes["para_rnd"] + sizes["para_tgt"] - summary["dropped_duplicates"]

    def test_para_rnd_replay_with_warm_cache_identical(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        invoke(runner, config, "augment", "--strategy", "para-rnd")
        first = (tmp_path / "out" / "augmented_para_rnd.jsonl").read_bytes()
        replay_config = tmp_path / "replay.toml"
        replay_config.write_text(config.read_text().replace('backend = "fixture"', 'backend = "replay"'))
        result = invoke(runner, replay_config, "augment", "--strategy", "para-rnd")
        assert result.exit_code == 0, result.output
        assert (tmp_path / "out" / "augmented_para_rnd.jsonl").read_bytes() == first


class TestTranslateAndEmbed:
    def test_translate_ht_set(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        result = invoke(runner, config, "translate", "--language", "en", "--source", "human_translated")
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "out" / "translated_en_de.jsonl").read_text().splitlines()
        assert len(lines) == 8
        first = json.loads(lines[0])
        assert first["source"] == "machine_translated"
        assert first["language"] == "de"

    def test_embed_captions(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        result = invoke(
            runner, config, "embed", "--what", "captions",
            "--language", "de", "--source", "native", "--set-index", "0", "--name", "de0",
        )
        assert result.exit_code == 0, result.output
        table = (tmp_path / "out" / "embeddings" / "de0.tsv").read_text().splitlines()
        assert table[0] == "8\t8"


class TestEval:
    def test_retrieval_report(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        result = invoke(runner, config, "eval", "--kind", "retrieval")
        assert result.exit_code == 0, result.output
        data = json.loads((tmp_path / "out" / "reports" / "retrieval_report.json").read_text())
        assert len(data["sets"]) == 5
        six = [*data["aggregate"]["r_i2t"].values(), *data["aggregate"]["r_t2i"].values()]
        assert data["aggregate"]["mean_recall"] == pytest.approx(sum(six) / 6)

    def test_retrieval_identity_tables_give_perfect_recall(self, runner, tmp_path, fixtures_dir):
        import numpy as np
        from crosscap.corpus import load_corpus
        from crosscap.retrieval import EmbeddingTable, save_embedding_table

        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        corpus = load_corpus(tmp_path / "out" / "corpus.json")
        image_ids = corpus.image_ids
        rows = np.eye(len(image_ids))
        save_embedding_table(EmbeddingTable(image_ids, rows), tmp_path / "images.tsv")
        caps = corpus.captions_for(language="de", source="native", set_index=0)
        cap_rows = np.array([rows[image_ids.index(c.image_id)] for c in caps])
        save_embedding_table(
            EmbeddingTable([c.caption_id for c in caps], cap_rows), tmp_path / "caps0.tsv"
        )
        result = invoke(
            runner, config, "eval", "--kind", "retrieval",
            "--image-table", str(tmp_path / "images.tsv"),
            "--caption-table", str(tmp_path / "caps0.tsv"),
        )
        assert result.exit_code == 0, result.output
        data = json.loads((tmp_path / "out" / "reports" / "retrieval_report.json").read_text())
        assert data["aggregate"]["mean_recall"] == 100.0

    def test_recognition_report(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        result = invoke(runner, config, "eval", "--kind", "recognition")
        assert result.exit_code == 0, result.output
        data = json.loads((tmp_path / "out" / "reports" / "recognition_report.json").read_text())
        assert data["threshold"] in [float(t) for t in range(10, 51, 5)]
        assert (tmp_path / "out" / "reports" / "recognition_report.txt").exists()

    def test_stats_report_builtin_table(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        result = invoke(
            runner, config, "eval", "--kind", "stats",
            "--human-eval", str(fixtures_dir / "human_eval.csv"),
        )
        assert result.exit_code == 0, result.output
        data = json.loads((tmp_path / "out" / "reports" / "stats_report.json").read_text())
        assert len(data["gap_report"]) == 12
        assert all(g["gap_exceeds_stdev"] for g in data["gap_report"])
        assert data["human_eval"]["eng2ger_ht"]["ternary_mean"] == pytest.approx(2.73, abs=0.005)

    def test_stats_mention_ratio(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        invoke(runner, config, "mentions", "--language", "en", "--source", "native")
        invoke(runner, config, "mentions", "--language", "en", "--source", "human_translated")
        out = tmp_path / "out"
        result = invoke(
            runner, config, "eval", "--kind", "stats",
            "--ratio-a", str(out / "mentions_en_native.json"),
            "--ratio-b", str(out / "mentions_en_human_translated.json"),
        )
        assert result.exit_code == 0, result.output
        data = json.loads((out / "reports" / "stats_report.json").read_text())
        assert data["mention_ratio"]["overall"] > 1.0  # five native sets vs one HT set

    def test_report_rendering(self, runner, tmp_path, fixtures_dir):
        config = write_config(tmp_path, fixtures_dir)
        invoke(runner, config, "ingest")
        invoke(runner, config, "eval", "--kind", "retrieval")
        result = invoke(runner, config, "report", "--kind", "retrieval", "--baseline", "set0")
        assert result.exit_code == 0, result.output
        assert "Mean Recall" in result.output and "Vs. set0" in result.output
