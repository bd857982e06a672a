"""Hierarchical context pruning engine: block-sparse attention masks,
stage-cached decoding and a simulated two-tier paged KV cache."""

from _hipprune import (
    SparseBlockMask,
    Workload,
    attention_recall,
    block_sparse_attention,
    build_mask,
    config_hash,
    dense_attention,
    dump_checksum,
    exact_topk,
    generate,
    load_dump,
    run_report,
    save_dump,
    selected_indices,
)

__all__ = [
    "SparseBlockMask",
    "Workload",
    "attention_recall",
    "block_sparse_attention",
    "build_mask",
    "config_hash",
    "dense_attention",
    "dump_checksum",
    "exact_topk",
    "generate",
    "load_dump",
    "run_report",
    "save_dump",
    "selected_indices",
]
