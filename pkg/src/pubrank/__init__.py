"""pubrank: dense retrieval, two-stage re-ranking, fusion and evaluation for
PubMed-style biomedical QA."""

__version__ = "0.1.0"

from .corpus import Document, IngestReport, ingest_xml, read_corpus
from .embedding import MockEmbeddingProvider, embed_batch, mock_embed, truncate_text
from .fusion import FusionConfig, fuse_nominate, fuse_weighted, grid_search_weights
from .index import build_index, load_index, save_index
from .metrics import (
    average_precision_at10,
    evaluate_phase_a,
    evaluate_phase_b,
    macro_f1_yesno,
    map_at10,
    mean_list_f1,
    mean_reciprocal_rank,
    recall_at_n,
    rouge_2,
    rouge_su4,
)
from .runs import RankedRun, read_run_file, write_run_file

__all__ = [
    "Document",
    "IngestReport",
    "ingest_xml",
    "read_corpus",
    "MockEmbeddingProvider",
    "embed_batch",
    "mock_embed",
    "truncate_text",
    "FusionConfig",
    "fuse_nominate",
    "fuse_weighted",
    "grid_search_weights",
    "build_index",
    "load_index",
    "save_index",
    "average_precision_at10",
    "evaluate_phase_a",
    "evaluate_phase_b",
    "macro_f1_yesno",
    "map_at10",
    "mean_list_f1",
    "mean_reciprocal_rank",
    "recall_at_n",
    "rouge_2",
    "rouge_su4",
    "RankedRun",
    "read_run_file",
    "write_run_file",
]
