"""ohmpipe: streaming hard-negative batch construction and evaluation.

A numpy/scipy toolkit for building contrastive-friendly batches from a
sample stream: an incremental cluster model labels samples online,
per-cluster reservoirs emit fixed-size batches, and the surrounding
machinery covers dialogue-window mining, reformulation detection,
up-sampling, weighted stream mixing, contrastive hardness measurement,
and ASR error metrics.
"""

__version__ = "0.1.0"

from .clustering import ClusterFeature, ClusterModel, adjusted_rand_index, model_quality, partial_fit
from .contrastive import (
    ComparisonReport,
    ContrastiveConfig,
    ContrastiveItem,
    HardnessReport,
    batch_hardness,
    compare_batching,
    pfclc_loss,
)
from .ingest import (
    Dialogue,
    ParseStats,
    RecordParseError,
    Sample,
    SyntheticSpec,
    dialogue_to_record,
    generate_synthetic,
    l2_normalize,
    parse_sample_stream,
    sample_from_record,
    sample_to_record,
)
from .metrics import (
    AlignmentStep,
    DomainComparison,
    ErrorCounts,
    ErrorTypeRates,
    MetricReport,
    align,
    domain_normalized,
    error_type_rates,
    score_pairs,
    ser,
    serr,
    tokenize,
    wer,
    werr,
)
from .mining import (
    MixSpec,
    MixStats,
    SimilarityConfig,
    UpsampleStats,
    WindowConfig,
    build_dialogue,
    detect_reformulations,
    mix_streams,
    text_similarity,
    upsample_reformulations,
)
from .pipeline import Batch, OhmConfig, OhmPipeline, PipelineReport, Reservoir, run_pipeline

__all__ = [
    "__version__",
    "Sample",
    "Dialogue",
    "SyntheticSpec",
    "ParseStats",
    "RecordParseError",
    "parse_sample_stream",
    "generate_synthetic",
    "l2_normalize",
    "sample_from_record",
    "sample_to_record",
    "dialogue_to_record",
    "ClusterFeature",
    "ClusterModel",
    "partial_fit",
    "model_quality",
    "adjusted_rand_index",
    "OhmConfig",
    "OhmPipeline",
    "PipelineReport",
    "Reservoir",
    "Batch",
    "run_pipeline",
    "WindowConfig",
    "SimilarityConfig",
    "MixSpec",
    "MixStats",
    "UpsampleStats",
    "build_dialogue",
    "text_similarity",
    "detect_reformulations",
    "upsample_reformulations",
    "mix_streams",
    "ContrastiveItem",
    "ContrastiveConfig",
    "HardnessReport",
    "ComparisonReport",
    "pfclc_loss",
    "batch_hardness",
    "compare_batching",
    "ErrorCounts",
    "AlignmentStep",
    "MetricReport",
    "ErrorTypeRates",
    "DomainComparison",
    "tokenize",
    "align",
    "wer",
    "werr",
    "ser",
    "serr",
    "score_pairs",
    "domain_normalized",
    "error_type_rates",
]
