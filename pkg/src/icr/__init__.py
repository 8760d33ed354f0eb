"""In-context re-ranking: score retrieval candidates from the attention a
query pays to each document inside a causal transformer prompt, with no
text generation. The package also ships the supporting pieces: prompt
layout construction, a deterministic toy transformer, a binary attention
dump format, ranking metrics, and a forward-pass cost model.
"""
from .attention_core import (
    AttentionSlice,
    DocumentScore,
    MODES,
    RankedDoc,
    Ranking,
    ScoredQuery,
    TokenScoreTable,
    aggregate_query_attention,
    aggregate_rows,
    calibrate,
    filter_and_sum,
    rank,
    score_documents,
    score_documents_detailed,
)
from .attention_io import (
    decode_dump,
    dump_paths,
    encode_dump,
    read_dump,
    validate_dump,
    write_dump,
)
from .backends import (
    AttentionBackend,
    DumpAttentionBackend,
    LayoutView,
    PlantedAttentionBackend,
    ToyAttentionBackend,
    mix_seed,
)
from .complexity_bench import (
    FpCount,
    WindowSchedule,
    bench_pipeline,
    count_forward_passes,
    sliding_window_schedule,
)
from .errors import IcrError
from .eval_metrics import (
    MetricReport,
    all_recall_at_k,
    evaluate,
    ndcg_at_k,
    parse_listwise_ranking,
    recall_at_k,
    success_rate,
    try_parse_listwise,
)
from .prompt_layout import (
    CALIBRATION_QUERY,
    Document,
    ModelProfile,
    PromptLayout,
    Query,
    build_calibration_layout,
    build_prompt,
    layout_to_dict,
)
from .tokenizers import WhitespaceTokenizer, fnv1a64
from .toy_backend import ToyConfig, ToyTransformer, synth_attention, uniform_attention

__version__ = "0.1.0"

__all__ = [
    "AttentionBackend",
    "AttentionSlice",
    "CALIBRATION_QUERY",
    "Document",
    "DocumentScore",
    "DumpAttentionBackend",
    "FpCount",
    "IcrError",
    "LayoutView",
    "MODES",
    "MetricReport",
    "ModelProfile",
    "PlantedAttentionBackend",
    "PromptLayout",
    "Query",
    "RankedDoc",
    "Ranking",
    "ScoredQuery",
    "TokenScoreTable",
    "ToyAttentionBackend",
    "ToyConfig",
    "ToyTransformer",
    "WhitespaceTokenizer",
    "WindowSchedule",
    "aggregate_query_attention",
    "aggregate_rows",
    "all_recall_at_k",
    "bench_pipeline",
    "build_calibration_layout",
    "build_prompt",
    "calibrate",
    "count_forward_passes",
    "decode_dump",
    "dump_paths",
    "encode_dump",
    "evaluate",
    "filter_and_sum",
    "fnv1a64",
    "layout_to_dict",
    "mix_seed",
    "ndcg_at_k",
    "parse_listwise_ranking",
    "rank",
    "read_dump",
    "recall_at_k",
    "score_documents",
    "score_documents_detailed",
    "sliding_window_schedule",
    "success_rate",
    "synth_attention",
    "try_parse_listwise",
    "uniform_attention",
    "validate_dump",
    "write_dump",
    "__version__",
]
