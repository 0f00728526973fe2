"""Desk-scale lab for block-sparse document attention in RAG under corpus poisoning."""

__version__ = "0.1.0"

from .masks import AttentionMask, BlockLayout, build_causal_mask, build_sdag_mask  # noqa: F401
