"""Command-line entry point.

One declarative run configuration (TOML or JSON) drives every subcommand;
the config is copied into the output directory so a run can be archived and
replayed. All model access goes through the provider gateway, so a warm
cache reproduces every artifact byte-for-byte with no backend.
"""

from __future__ import annotations

import json
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click

from . import analytics, augment, corpus as corpus_mod, recognition, retrieval, vocab as vocab_mod
from .augment import AugmentStrategy, AugmentedCaption, derive_rng
from .corpus import CaptionSource, Corpus
from .errors import CrosscapError, ParseError, ValidationError
from .providers import (
    CacheStore,
    Capability,
    EmbedItem,
    FixtureBackend,
    Gateway,
    GatewayConfig,
    HTTPBackend,
    ProviderRequest,
)
from .recognition import THRESHOLD_GRID
from .taxonomy import load_taxonomy, builtin_taxonomy_path
from .vocab import CaptionFilter, load_vocabulary, builtin_vocabulary_path

STRATEGY_ALIASES = {
    "hyper": "hyper",
    "para-rnd": "para_rnd",
    "para_rnd": "para_rnd",
    "para-tgt": "para_tgt",
    "para_tgt": "para_tgt",
    "cmb": "cmb",
}


@dataclass
class CaptionSetConfig:
    path: Path
    language: str
    format: str  # flickr_tokens | tabbed | aligned
    source: str = "native"
    set_index: int | None = None
    ids_path: Path | None = None


@dataclass
class RunConfig:
    seed: int
    out_dir: Path
    corpus_name: str
    caption_sets: list[CaptionSetConfig]
    vocabulary_path: Path
    taxonomy_path: Path
    k: int = 100
    max_replacements: int | None = None
    max_height: int | None = None
    augment_input: dict = field(default_factory=lambda: {"language": "en", "source": "human_translated"})
    reference_set: dict = field(default_factory=lambda: {"language": "de", "set_index": 0})
    target_language: str = "de"
    backend: str = "fixture"  # fixture | http | replay
    endpoint: str | None = None
    cache_root: Path = Path("cache")
    embed_dim: int = 16
    concurrency: int = 1
    threshold_grid: tuple[int, ...] = THRESHOLD_GRID
    baseline: str | None = None
    eval_language: str = "de"
    eval_sets: tuple[int, ...] = (0, 1, 2, 3, 4)
    source_path: Path | None = None  # config file this was loaded from

    def gateway(self) -> Gateway:
        cache = CacheStore(self.cache_root)
        cfg = GatewayConfig(concurrency=self.concurrency)
        if self.backend == "fixture":
            return Gateway(cache, FixtureBackend(embed_dim=self.embed_dim), cfg)
        if self.backend == "http":
            if not self.endpoint:
                raise ValidationError("backend 'http' requires providers.endpoint")
            return Gateway(cache, HTTPBackend(self.endpoint), cfg)
        if self.backend == "replay":
            return Gateway(cache, None, cfg)
        raise ValidationError(f"unknown backend {self.backend!r}")


def _parse_grid(spec) -> tuple[int, ...]:
    if isinstance(spec, (list, tuple)):
        return tuple(int(v) for v in spec)
    start, step, stop = (int(v) for v in str(spec).split(":"))
    return tuple(range(start, stop + 1, step))


def load_config(path: str | Path) -> RunConfig:
    """Read TOML or JSON config and validate paths and mandatory fields."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        raw = json.loads(text)
    else:
        try:
            import tomllib  # Python >= 3.11
        except ImportError:
            import tomli as tomllib
        raw = tomllib.loads(text)

    if "seed" not in raw:
        raise ValidationError(f"{path}: 'seed' is mandatory")
    base = path.parent

    def respath(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    corpus_cfg = raw.get("corpus", {})
    sets = []
    for entry in corpus_cfg.get("caption_sets", []):
        sets.append(
            CaptionSetConfig(
                path=respath(entry["path"]),
                language=entry["language"],
                format=entry.get("format", "flickr_tokens"),
                source=entry.get("source", "native"),
                set_index=entry.get("set_index"),
                ids_path=respath(entry["ids_path"]) if entry.get("ids_path") else None,
            )
        )
    vocab_path = respath(raw["vocab"]["path"]) if raw.get("vocab", {}).get("path") else builtin_vocabulary_path()
    tax_path = respath(raw["taxonomy"]["path"]) if raw.get("taxonomy", {}).get("path") else builtin_taxonomy_path()
    providers_cfg = raw.get("providers", {})
    augment_cfg = raw.get("augment", {})
    eval_cfg = raw.get("eval", {})

    cfg = RunConfig(
        seed=int(raw["seed"]),
        out_dir=respath(raw.get("out_dir", "out")),
        corpus_name=corpus_cfg.get("name", path.stem),
        caption_sets=sets,
        vocabulary_path=vocab_path,
        taxonomy_path=tax_path,
        k=int(augment_cfg.get("k", 100)),
        max_replacements=augment_cfg.get("max_replacements"),
        max_height=augment_cfg.get("max_height"),
        augment_input=augment_cfg.get("input", {"language": "en", "source": "human_translated"}),
        reference_set=augment_cfg.get("reference", {"language": "de", "set_index": 0}),
        target_language=providers_cfg.get("target_language", "de"),
        backend=providers_cfg.get("backend", "fixture"),
        endpoint=providers_cfg.get("endpoint"),
        cache_root=respath(providers_cfg.get("cache_root", "cache")),
        embed_dim=int(providers_cfg.get("embed_dim", 16)),
        concurrency=int(providers_cfg.get("concurrency", 1)),
        threshold_grid=_parse_grid(eval_cfg.get("threshold_grid", "10:5:50")),
        baseline=eval_cfg.get("baseline"),
        eval_language=eval_cfg.get("language", providers_cfg.get("target_language", "de")),
        eval_sets=tuple(eval_cfg.get("sets", (0, 1, 2, 3, 4))),
        source_path=path,
    )
    for cs in cfg.caption_sets:
        if not cs.path.exists():
            raise ValidationError(f"{path}: caption set file not found: {cs.path}")
        if cs.ids_path is not None and not cs.ids_path.exists():
            raise ValidationError(f"{path}: sidecar id file not found: {cs.ids_path}")
    for p in (cfg.vocabulary_path, cfg.taxonomy_path):
        if not p.exists():
            raise ValidationError(f"{path}: data file not found: {p}")
    return cfg


def _prepare_out(cfg: RunConfig) -> Path:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    if cfg.source_path is not None:
        copied = out / f"run_config{cfg.source_path.suffix}"
        if not copied.exists() or copied.read_bytes() != cfg.source_path.read_bytes():
            shutil.copyfile(cfg.source_path, copied)
    return out


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _build_corpus(cfg: RunConfig) -> Corpus:
    built: Corpus | None = None
    for cs in cfg.caption_sets:
        if cs.format == "flickr_tokens":
            loaded = corpus_mod.load_flickr_tokens(cs.path, cs.language, name=cfg.corpus_name)
            if built is None:
                built = loaded
            else:
                known = set(built.image_ids)
                new_images = tuple(i for i in loaded.images if i.image_id not in known)
                built = Corpus(built.name, built.images + new_images, built.captions + loaded.captions)
        elif cs.format in ("tabbed", "aligned"):
            if built is None:
                raise ValidationError(
                    "the first caption set must be a flickr_tokens file that defines the images"
                )
            built = corpus_mod.attach_caption_set(
                built,
                cs.path,
                cs.language,
                cs.source,
                set_index=cs.set_index,
                ids_path=cs.ids_path if cs.format == "aligned" else None,
            )
        else:
            raise ValidationError(f"unknown caption set format {cs.format!r}")
    if built is None:
        raise ValidationError("config lists no caption sets")
    return built


def _load_artifacts(cfg: RunConfig) -> tuple[Corpus, corpus_mod.SplitAssignment]:
    corpus_path = cfg.out_dir / "corpus.json"
    split_path = cfg.out_dir / "split.json"
    if not corpus_path.exists() or not split_path.exists():
        raise ValidationError("run `ingest` first: corpus.json / split.json missing")
    return corpus_mod.load_corpus(corpus_path), corpus_mod.load_splits(split_path)


pass_config = click.make_pass_decorator(RunConfig)


@click.group()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run configuration (TOML or JSON).")
@click.option("--out", "out_override", type=click.Path(), default=None, help="Output directory override.")
@click.pass_context
def main(ctx, config_path, out_override):
    """Caption augmentation and retrieval-evaluation pipelines."""
    try:
        cfg = load_config(config_path)
    except CrosscapError as exc:
        raise click.ClickException(str(exc)) from exc
    if out_override:
        cfg.out_dir = Path(out_override)
    ctx.obj = cfg


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except CrosscapError as exc:
        raise click.ClickException(str(exc)) from exc


@main.command()
@pass_config
def ingest(cfg: RunConfig):
    """Build the corpus from configured caption sets; write corpus + split JSON."""

    def run():
        out = _prepare_out(cfg)
        built = _build_corpus(cfg)
        corpus_mod.save_corpus(built, out / "corpus.json")
        splits = corpus_mod.make_splits(built, cfg.seed)
        corpus_mod.save_splits(splits, out / "split.json")
        click.echo(
            f"corpus '{built.name}': {len(built.images)} images, {len(built.captions)} captions; "
            f"splits {len(splits.reference)}/{len(splits.train)}/{len(splits.val)}/{len(splits.test)}"
        )

    _guard(run)


@main.command()
@pass_config
def split(cfg: RunConfig):
    """Recompute the split assignment for the ingested corpus."""

    def run():
        out = _prepare_out(cfg)
        corpus_path = out / "corpus.json"
        if not corpus_path.exists():
            raise ValidationError("run `ingest` first: corpus.json missing")
        built = corpus_mod.load_corpus(corpus_path)
        splits = corpus_mod.make_splits(built, cfg.seed)
        corpus_mod.save_splits(splits, out / "split.json")
        click.echo(
            f"splits {len(splits.reference)}/{len(splits.train)}/{len(splits.val)}/{len(splits.test)}"
        )

    _guard(run)


@main.command()
@click.option("--language", default=None)
@click.option("--source", default=None)
@click.option("--set-index", type=int, default=None)
@click.option("--split", "split_name", default=None, type=click.Choice(["reference", "train", "val", "test"]))
@pass_config
def mentions(cfg: RunConfig, language, source, set_index, split_name):
    """Count object mentions per class over a caption subset."""

    def run():
        out = _prepare_out(cfg)
        built, splits = _load_artifacts(cfg)
        vocabulary = load_vocabulary(cfg.vocabulary_path)
        image_ids = frozenset(getattr(splits, split_name)) if split_name else None
        flt = CaptionFilter(language=language, source=source, set_index=set_index, image_ids=image_ids)
        profile = vocab_mod.mention_profile(built, vocabulary, flt)
        tag = "_".join(
            str(v) for v in (language, source, set_index, split_name) if v is not None
        ) or "all"
        _write_json(out / f"mentions_{tag}.json", profile)
        click.echo(f"{sum(profile.values())} mentions across {len(profile)} classes -> mentions_{tag}.json")

    _guard(run)


def _augment_inputs(cfg: RunConfig, built: Corpus, splits) -> list:
    flt = CaptionFilter(
        language=cfg.augment_input.get("language", "en"),
        source=cfg.augment_input.get("source", "human_translated"),
        set_index=cfg.augment_input.get("set_index"),
        image_ids=frozenset(splits.train),
    )
    return flt.select(built)


def _reference_pool(cfg: RunConfig, built: Corpus, splits) -> list:
    return built.captions_for(
        language=cfg.reference_set.get("language", "de"),
        source=CaptionSource.NATIVE,
        set_index=cfg.reference_set.get("set_index", 0),
        image_ids=set(splits.reference),
    )


def _run_hyper(cfg: RunConfig, built, splits, vocabulary, taxonomy) -> tuple[list[AugmentedCaption], dict]:
    inputs = _augment_inputs(cfg, built, splits)
    produced = []
    for cap in inputs:
        rng = derive_rng(cfg.seed, "hyper", cap.caption_id)
        aug = augment.hypernymize_caption(
            cap, vocabulary, taxonomy, rng,
            max_replacements=cfg.max_replacements, max_height=cfg.max_height,
        )
        if aug is not None:
            produced.append(aug)
    stats = {"strategy": "hyper", "inputs": len(inputs), "emitted": len(produced),
             "skipped_no_edit": len(inputs) - len(produced)}
    return produced, stats


def _chat_and_parse(gateway: Gateway, bundle, parser) -> tuple[str | None, dict | None]:
    """One call plus one retry on parse failure (the retry is a distinct,
    cacheable request); returns (text, trace) or (None, None) when dropped."""
    for attempt in (0, 1):
        payload = {"system": bundle.system, "user": bundle.user}
        if attempt:
            payload["retry"] = attempt
        response = gateway.call(ProviderRequest(Capability.CHAT, payload))
        try:
            text = parser(response.body["text"])
        except ParseError:
            continue
        trace = {
            "kind": "llm",
            "template": bundle.template_id.value,
            "request_key": response.request_key,
            "model_name": response.provider_meta.get("model_name"),
            "settings": response.provider_meta.get("settings"),
        }
        return text, trace
    return None, None


def _run_para(
    cfg: RunConfig, built, splits, vocabulary, gateway: Gateway, targeted: bool
) -> tuple[list[AugmentedCaption], dict]:
    inputs = _augment_inputs(cfg, built, splits)
    strategy = AugmentStrategy.PARA_TGT if targeted else AugmentStrategy.PARA_RND
    produced: list[AugmentedCaption] = []
    dropped = 0
    refs_en_by_id: dict[str, str] = {}
    pool = []
    if targeted:
        pool = _reference_pool(cfg, built, splits)
        if not pool:
            raise ValidationError("reference split holds no captions for the configured reference set")
        ref_lang = cfg.reference_set.get("language", "de")
        translations = gateway.translate_batch([c.text for c in pool], ref_lang, "en")
        refs_en_by_id = {c.caption_id: t for c, t in zip(pool, translations)}
        pool_en = [
            corpus_mod.CaptionRecord(
                caption_id=c.caption_id, image_id=c.image_id, language="en",
                text=refs_en_by_id[c.caption_id], source=CaptionSource.NATIVE,
                set_index=c.set_index,
            )
            for c in pool
        ]
    for cap in inputs:
        if targeted:
            rng = derive_rng(cfg.seed, "para_tgt", cap.caption_id)
            refs = augment.sample_references(cap, pool_en, vocabulary, rng, k=cfg.k)
            bundle = augment.build_para_tgt_prompt(
                cap, [r.text for r in refs], ref_caption_ids=[r.caption_id for r in refs]
            )
            text, trace = _chat_and_parse(gateway, bundle, augment.parse_final)
        else:
            bundle = augment.build_para_rnd_prompt(cap)
            text, trace = _chat_and_parse(gateway, bundle, augment.parse_plain)
        if text is None:
            dropped += 1
            continue
        produced.append(
            AugmentedCaption(
                parent_caption_id=cap.caption_id,
                strategy=strategy,
                text_en=text,
                trace=(trace,),
            )
        )
    stats = {"strategy": strategy.value, "inputs": len(inputs), "emitted": len(produced),
             "dropped_parse": dropped}
    return produced, stats


def _translate_augmented(cfg: RunConfig, gateway: Gateway, items: list[AugmentedCaption]) -> list[AugmentedCaption]:
    src = cfg.augment_input.get("language", "en")
    texts = [a.text_en for a in items]
    translated = gateway.translate_batch(texts, src, cfg.target_language)
    return [
        a.with_target(t, {"kind": "translate", "tgt_lang": cfg.target_language})
        for a, t in zip(items, translated)
    ]


def _write_jsonl(path: Path, items: list[AugmentedCaption]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_dict(), ensure_ascii=False) + "\n")


def _read_jsonl(path: Path) -> list[AugmentedCaption]:
    return [
        AugmentedCaption.from_dict(json.loads(line))
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def _run_strategy(cfg, built, splits, vocabulary, taxonomy, gateway, strategy: str):
    if strategy == "hyper":
        produced, stats = _run_hyper(cfg, built, splits, vocabulary, taxonomy)
    elif strategy == "para_rnd":
        produced, stats = _run_para(cfg, built, splits, vocabulary, gateway, targeted=False)
    elif strategy == "para_tgt":
        produced, stats = _run_para(cfg, built, splits, vocabulary, gateway, targeted=True)
    else:
        raise ValidationError(f"unknown strategy {strategy!r}")
    produced = _translate_augmented(cfg, gateway, produced)
    return produced, stats


@main.command("augment")
@click.option("--strategy", "strategy_opt", required=True,
              type=click.Choice(sorted(STRATEGY_ALIASES)), help="Augmentation strategy.")
@pass_config
def augment_cmd(cfg: RunConfig, strategy_opt):
    """Produce the augmented caption JSONL for one strategy (or cmb)."""

    def run():
        out = _prepare_out(cfg)
        built, splits = _load_artifacts(cfg)
        vocabulary = load_vocabulary(cfg.vocabulary_path)
        taxonomy = load_taxonomy(cfg.taxonomy_path)
        gateway = cfg.gateway()
        strategy = STRATEGY_ALIASES[strategy_opt]
        if strategy == "cmb":
            groups = []
            for name in ("hyper", "para_rnd", "para_tgt"):
                path = out / f"augmented_{name}.jsonl"
                if path.exists():
                    groups.append(_read_jsonl(path))
                else:
                    produced, stats = _run_strategy(cfg, built, splits, vocabulary, taxonomy, gateway, name)
                    _write_jsonl(path, produced)
                    _write_json(out / f"augment_summary_{name}.json", stats)
                    groups.append(produced)
            combined: list[AugmentedCaption] = []
            seen: set[tuple[str, str]] = set()
            dropped_dupes = 0
            for group in groups:
                for aug in group:
                    if aug.text_target is None:
                        raise ValidationError(
                            f"augmented caption from {aug.parent_caption_id!r} lacks text_target"
                        )
                    key = (aug.image_id, aug.text_target)
                    if key in seen:
                        dropped_dupes += 1
                        continue
                    seen.add(key)
                    combined.append(aug)
            _write_jsonl(out / "augmented_cmb.jsonl", combined)
            _write_json(
                out / "augment_summary_cmb.json",
                {"strategy": "cmb", "emitted": len(combined), "dropped_duplicates": dropped_dupes},
            )
            click.echo(f"cmb: {len(combined)} captions ({dropped_dupes} duplicates dropped)")
        else:
            produced, stats = _run_strategy(cfg, built, splits, vocabulary, taxonomy, gateway, strategy)
            _write_jsonl(out / f"augmented_{strategy}.jsonl", produced)
            _write_json(out / f"augment_summary_{strategy}.json", stats)
            click.echo(
                f"{strategy}: {stats['emitted']} of {stats['inputs']} captions augmented "
                f"(backend calls: {gateway.backend_calls}, cache hits: {gateway.cache_hits})"
            )

    _guard(run)


@main.command()
@click.option("--language", default="en", help="Source caption language.")
@click.option("--source", "source_opt", default="human_translated")
@click.option("--set-index", type=int, default=None)
@click.option("--to", "tgt", default=None, help="Target language (default from config).")
@pass_config
def translate(cfg: RunConfig, language, source_opt, set_index, tgt):
    """Machine-translate a caption set; write a machine_translated caption JSONL."""

    def run():
        out = _prepare_out(cfg)
        built, _ = _load_artifacts(cfg)
        gateway = cfg.gateway()
        target = tgt or cfg.target_language
        caps = built.captions_for(language=language, source=source_opt, set_index=set_index)
        if not caps:
            raise ValidationError("no captions match the requested set")
        translations = gateway.translate_batch([c.text for c in caps], language, target)
        path = out / f"translated_{language}_{target}.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for cap, text in zip(caps, translations):
                record = corpus_mod.CaptionRecord(
                    caption_id=corpus_mod.make_caption_id(cap.image_id, target, "machine_translated"),
                    image_id=cap.image_id,
                    language=target,
                    text=text,
                    source=CaptionSource.MACHINE_TRANSLATED,
                )
                fh.write(json.dumps({
                    "caption_id": record.caption_id, "image_id": record.image_id,
                    "language": record.language, "text": record.text,
                    "source": record.source.value, "parent_caption_id": cap.caption_id,
                }, ensure_ascii=False) + "\n")
        click.echo(f"{len(caps)} captions translated {language}->{target} -> {path.name}")

    _guard(run)


@main.command()
@click.option("--what", type=click.Choice(["images", "captions"]), required=True)
@click.option("--language", default=None)
@click.option("--source", "source_opt", default=None)
@click.option("--set-index", type=int, default=None)
@click.option("--split", "split_name", default=None, type=click.Choice(["reference", "train", "val", "test"]))
@click.option("--name", "table_name", default=None, help="Output table name.")
@pass_config
def embed(cfg: RunConfig, what, language, source_opt, set_index, split_name, table_name):
    """Embed images or captions through the gateway into a table file."""

    def run():
        out = _prepare_out(cfg)
        built, splits = _load_artifacts(cfg)
        gateway = cfg.gateway()
        image_ids = frozenset(getattr(splits, split_name)) if split_name else None
        if what == "images":
            wanted = [i for i in built.image_ids if image_ids is None or i in image_ids]
            items = [EmbedItem(i, "image", i) for i in wanted]
        else:
            caps = CaptionFilter(language, source_opt, set_index, image_ids).select(built)
            items = [EmbedItem(c.caption_id, "text", c.text) for c in caps]
        if not items:
            raise ValidationError("nothing to embed for the requested subset")
        table = gateway.embed_batch(items)
        name = table_name or "_".join(
            str(v) for v in (what, language, source_opt, set_index, split_name) if v is not None
        )
        path = out / "embeddings" / f"{name}.tsv"
        path.parent.mkdir(parents=True, exist_ok=True)
        retrieval.save_embedding_table(table, path)
        click.echo(f"{len(items)} x {table.dim} embeddings -> {path.relative_to(out)}")

    _guard(run)


def _eval_retrieval(cfg: RunConfig, out: Path, image_table_path=None, caption_table_paths=()) -> None:
    built, splits = _load_artifacts(cfg)
    pairing_all = {c.caption_id: c.image_id for c in built.captions}
    reports = []
    if image_table_path:
        # precomputed tables: evaluate each caption table against the images
        images = retrieval.load_embedding_table(image_table_path)
        if not caption_table_paths:
            raise ValidationError("--image-table requires at least one --caption-table")
        for cpath in caption_table_paths:
            captions = retrieval.load_embedding_table(cpath)
            unknown = [c for c in captions.ids if c not in pairing_all]
            if unknown:
                raise ValidationError(f"caption ids not in corpus: {unknown[:5]}")
            pairing = {c: pairing_all[c] for c in captions.ids}
            reports.append(retrieval.evaluate_set(images, captions, pairing, Path(cpath).stem))
    else:
        gateway = cfg.gateway()
        test_ids = sorted(splits.test)
        image_table = gateway.embed_batch([EmbedItem(i, "image", i) for i in test_ids])
        for set_index in cfg.eval_sets:
            caps = built.captions_for(
                language=cfg.eval_language, source=CaptionSource.NATIVE,
                set_index=set_index, image_ids=set(test_ids),
            )
            if not caps:
                continue
            covered = {c.image_id for c in caps}
            images = image_table.subset([i for i in test_ids if i in covered])
            captions = gateway.embed_batch([EmbedItem(c.caption_id, "text", c.text) for c in caps])
            pairing = {c.caption_id: c.image_id for c in caps}
            reports.append(retrieval.evaluate_set(images, captions, pairing, f"set{set_index}"))
    if not reports:
        raise ValidationError(f"no native {cfg.eval_language!r} captions found in the test split")
    aggregate = retrieval.aggregate_reports(reports)
    payload = {"sets": [r.to_dict() for r in reports], "aggregate": aggregate.to_dict()}
    _write_json(out / "reports" / "retrieval_report.json", payload)
    entries = [(r.set_label, r.mean_recall) for r in reports] + [("aggregate", aggregate.mean_recall)]
    (out / "reports" / "retrieval_report.txt").write_text(
        retrieval.render_recall_table(entries) + "\n", encoding="utf-8"
    )
    click.echo(f"mean recall (aggregate over {len(reports)} sets): {aggregate.mean_recall:.1f}")


def _class_score_table(gateway, vocabulary, image_ids) -> recognition.LabelScoreTable:
    names = vocabulary.class_names()
    image_table = gateway.embed_batch([EmbedItem(i, "image", i) for i in sorted(image_ids)])
    text_table = gateway.embed_batch([EmbedItem(n, "text", n) for n in names])
    sims = retrieval.similarity_matrix(image_table, text_table) * 100.0
    return recognition.LabelScoreTable(list(image_table.ids), names, sims)


def _translated_truth(cfg: RunConfig, built, gateway, vocabulary, image_ids) -> dict[str, set[str]]:
    """Ground truth from native captions, routed through translation to
    English first so the English vocabulary applies."""
    truth: dict[str, set[str]] = {i: set() for i in image_ids}
    caps = built.captions_for(
        language=cfg.eval_language, source=CaptionSource.NATIVE, image_ids=set(image_ids)
    )
    texts = [c.text for c in caps]
    if cfg.eval_language != "en":
        texts = gateway.translate_batch(texts, cfg.eval_language, "en")
    for cap, text in zip(caps, texts):
        for span in vocab_mod.detect_mentions(text, vocabulary, caption_id=cap.caption_id):
            truth[cap.image_id].add(span.class_name)
    return truth


def _translated_mention_counts(cfg: RunConfig, built, gateway, vocabulary, image_ids) -> dict[str, int]:
    counts: dict[str, int] = {}
    caps = built.captions_for(
        language=cfg.eval_language, source=CaptionSource.NATIVE, image_ids=set(image_ids)
    )
    texts = [c.text for c in caps]
    if cfg.eval_language != "en":
        texts = gateway.translate_batch(texts, cfg.eval_language, "en")
    for text in texts:
        for span in vocab_mod.detect_mentions(text, vocabulary):
            counts[span.class_name] = counts.get(span.class_name, 0) + 1
    return counts


def _eval_recognition(cfg: RunConfig, out: Path) -> None:
    built, splits = _load_artifacts(cfg)
    vocabulary = load_vocabulary(cfg.vocabulary_path)
    gateway = cfg.gateway()
    scores_val = _class_score_table(gateway, vocabulary, splits.val)
    scores_test = _class_score_table(gateway, vocabulary, splits.test)
    truth_val = _translated_truth(cfg, built, gateway, vocabulary, sorted(splits.val))
    truth_test = _translated_truth(cfg, built, gateway, vocabulary, sorted(splits.test))
    train_mentions = _translated_mention_counts(cfg, built, gateway, vocabulary, sorted(splits.train))
    sweep = recognition.sweep_threshold(scores_val, truth_val, cfg.threshold_grid)
    report = recognition.evaluate_recognition(
        scores_test, truth_test, sweep.threshold, vocabulary, train_mentions
    )
    payload = report.to_dict()
    payload["sweep"] = {"f1_by_threshold": {str(k): v for k, v in sweep.f1_by_threshold.items()},
                        "warning": sweep.warning}
    _write_json(out / "reports" / "recognition_report.json", payload)
    shown = list(report.top_recall_supercategories)
    (out / "reports" / "recognition_report.txt").write_text(
        recognition.render_recognition_table(report, shown) + "\n", encoding="utf-8"
    )
    click.echo(f"threshold {sweep.threshold:g}; micro F1 {report.micro['f1']:.3f}")


def _eval_stats(cfg: RunConfig, out: Path, counts_path, groups_path, human_eval_path,
                ratio_a, ratio_b) -> None:
    counts_file = Path(counts_path) if counts_path else analytics.builtin_table_path("table2_counts.csv")
    groups_file = Path(groups_path) if groups_path else analytics.builtin_table_path("language_groups.json")
    rows = analytics.load_concept_counts(counts_file)
    groups = json.loads(Path(groups_file).read_text(encoding="utf-8"))
    stats = analytics.group_stats(rows, groups)
    gaps = analytics.cross_group_gap_report(stats)
    payload = {
        "counting": "fixed object vocabulary over translated captions",
        "group_stats": [
            {
                "concept": s.concept,
                "per_group": {g: {"mean": v.mean, "stdev": v.stdev} for g, v in s.per_group.items()},
                "max_group": s.max_group,
                "min_group": s.min_group,
            }
            for s in stats
        ],
        "gap_report": gaps,
    }
    if (ratio_a is None) != (ratio_b is None):
        raise ValidationError("--ratio-a and --ratio-b must be given together")
    if ratio_a and ratio_b:
        counts_a = json.loads(Path(ratio_a).read_text(encoding="utf-8"))
        counts_b = json.loads(Path(ratio_b).read_text(encoding="utf-8"))
        ratio = analytics.mention_ratio(counts_a, counts_b)
        ratio["per_class"] = {
            k: (v if v != float("inf") else "inf") for k, v in ratio["per_class"].items()
        }
        payload["mention_ratio"] = ratio
    if human_eval_path:
        sheets = analytics.load_human_eval_sheets(human_eval_path)
        payload["human_eval"] = {
            label: analytics.human_eval_aggregate(sheet) for label, sheet in sorted(sheets.items())
        }
    _write_json(out / "reports" / "stats_report.json", payload)
    flags = sum(1 for g in gaps if g["gap_exceeds_stdev"])
    click.echo(f"{len(gaps)} concepts; gap > stdev for {flags}")


@main.command("eval")
@click.option("--kind", type=click.Choice(["retrieval", "recognition", "stats"]), required=True)
@click.option("--image-table", "image_table_path", default=None, type=click.Path(exists=True),
              help="Precomputed image embedding table (skips the gateway).")
@click.option("--caption-table", "caption_table_paths", multiple=True, type=click.Path(exists=True),
              help="Precomputed caption embedding table; repeatable, one per set.")
@click.option("--counts", "counts_path", default=None, type=click.Path(exists=True))
@click.option("--groups", "groups_path", default=None, type=click.Path(exists=True))
@click.option("--human-eval", "human_eval_path", default=None, type=click.Path(exists=True))
@click.option("--ratio-a", default=None, type=click.Path(exists=True),
              help="Mention-count JSON for the ratio numerator.")
@click.option("--ratio-b", default=None, type=click.Path(exists=True),
              help="Mention-count JSON for the ratio denominator.")
@pass_config
def eval_cmd(cfg: RunConfig, kind, image_table_path, caption_table_paths,
             counts_path, groups_path, human_eval_path, ratio_a, ratio_b):
    """Run an evaluation and write its JSON + text reports."""

    def run():
        out = _prepare_out(cfg)
        if kind == "retrieval":
            _eval_retrieval(cfg, out, image_table_path, caption_table_paths)
        elif kind == "recognition":
            _eval_recognition(cfg, out)
        else:
            _eval_stats(cfg, out, counts_path, groups_path, human_eval_path, ratio_a, ratio_b)

    _guard(run)


@main.command()
@click.option("--kind", type=click.Choice(["retrieval", "recognition"]), default="retrieval")
@click.option("--baseline", default=None, help="Method label used as the delta baseline.")
@click.option("--labels", default=None, help="Comma-separated mapping label=report.json entries.")
@pass_config
def report(cfg: RunConfig, kind, baseline, labels):
    """Render text tables from stored report JSON files."""

    def run():
        nonlocal baseline
        baseline = baseline or cfg.baseline
        out = _prepare_out(cfg)
        if kind == "recognition":
            path = out / "reports" / "recognition_report.json"
            if not path.exists():
                raise ValidationError("run `eval --kind recognition` first")
            data = json.loads(path.read_text(encoding="utf-8"))
            stats = {
                name: recognition.SupercategoryStats(
                    mentions=v["mentions"], precision=v["precision"], recall=v["recall"],
                    zero_prediction_flag=v.get("zero_prediction_flag", False),
                )
                for name, v in data["per_supercategory"].items()
            }
            rec_report = recognition.RecognitionReport(
                threshold=data["threshold"], per_supercategory=stats, micro=data["micro"],
                top_recall_supercategories=tuple(data.get("top_recall_supercategories", ())),
            )
            click.echo(recognition.render_recognition_table(
                rec_report, list(rec_report.top_recall_supercategories)))
            return
        entries: list[tuple[str, float]] = []
        if labels:
            for item in labels.split(","):
                label, _, rel = item.partition("=")
                data = json.loads((out / rel).read_text(encoding="utf-8"))
                entries.append((label, data["aggregate"]["mean_recall"]))
        else:
            path = out / "reports" / "retrieval_report.json"
            if not path.exists():
                raise ValidationError("run `eval --kind retrieval` first")
            data = json.loads(path.read_text(encoding="utf-8"))
            entries = [(s["set_label"], s["mean_recall"]) for s in data["sets"]]
            entries.append(("aggregate", data["aggregate"]["mean_recall"]))
        click.echo(retrieval.render_recall_table(entries, baseline=baseline))

    _guard(run)


if __name__ == "__main__":
    main(sys.argv[1:])
