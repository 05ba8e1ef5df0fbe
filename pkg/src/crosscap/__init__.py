"""Cross-lingual caption augmentation and retrieval-evaluation toolkit."""

from .corpus import (
    CaptionRecord,
    CaptionSource,
    Corpus,
    ImageRef,
    SplitAssignment,
    attach_caption_set,
    load_flickr_tokens,
    make_splits,
)
from .vocab import (
    CaptionFilter,
    MentionSpan,
    ObjectClass,
    ObjectVocabulary,
    detect_mentions,
    load_builtin_vocabulary,
    load_vocabulary,
    mention_profile,
)
from .taxonomy import Synset, Taxonomy, ancestor_set, load_taxonomy, sample_hypernym_lemma
from .augment import (
    AugmentedCaption,
    AugmentStrategy,
    PromptBundle,
    build_para_rnd_prompt,
    build_para_tgt_prompt,
    combine_datasets,
    hypernymize_caption,
    parse_final,
    parse_plain,
    sample_references,
)
from .providers import (
    CacheStore,
    Capability,
    EmbedItem,
    FixtureBackend,
    Gateway,
    GatewayConfig,
    HTTPBackend,
    ProviderRequest,
    ProviderResponse,
    RecordedBackend,
)
from .retrieval import (
    EmbeddingTable,
    RetrievalReport,
    aggregate_reports,
    evaluate_set,
    recall_at_k,
    similarity_matrix,
)
from .recognition import (
    LabelScoreTable,
    RecognitionReport,
    evaluate_recognition,
    predict_objects,
    sweep_threshold,
)
from .analytics import (
    ConceptCountRow,
    GroupStatsRow,
    HumanEvalSheet,
    cross_group_gap_report,
    group_stats,
    human_eval_aggregate,
    mention_ratio,
)

__version__ = "0.1.0"
