"""Block layouts over prompt tokens and the attention masks built from them.

A prompt is tiled into a task-instruction span, one span per retrieved
document, and a context span that ends with the question. The block-sparse
mask keeps task tokens globally visible and context rows fully causal while
forbidding attention between different document spans.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

CAUSAL = "causal"
SDAG = "sdag"


@dataclass(frozen=True)
class BlockLayout:
    """Half-open token spans tiling [0, total_len): task, documents, context."""

    task_span: tuple[int, int]
    doc_spans: tuple[tuple[int, int], ...]
    context_span: tuple[int, int]
    total_len: int

    def __post_init__(self):
        spans = [self.task_span, *self.doc_spans, self.context_span]
        for start, end in spans:
            if not 0 <= start < end <= self.total_len:
                raise ValueError(f"span [{start}, {end}) is empty or out of range")
        if self.task_span[0] != 0:
            raise ValueError("task span must start at position 0")
        for (_, prev_end), (next_start, _) in zip(spans, spans[1:]):
            if next_start != prev_end:
                raise ValueError(
                    f"spans must tile the prompt contiguously; gap at {prev_end}..{next_start}"
                )
        if self.context_span[1] != self.total_len:
            raise ValueError("context span must end at total_len")

    @property
    def k(self) -> int:
        return len(self.doc_spans)

    def doc_index_of(self, position: int) -> int | None:
        for i, (start, end) in enumerate(self.doc_spans):
            if start <= position < end:
                return i
        return None

    def to_dict(self) -> dict:
        return {
            "task_span": list(self.task_span),
            "doc_spans": [list(span) for span in self.doc_spans],
            "context_span": list(self.context_span),
            "total_len": self.total_len,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BlockLayout":
        return cls(
            task_span=tuple(obj["task_span"]),
            doc_spans=tuple(tuple(span) for span in obj["doc_spans"]),
            context_span=tuple(obj["context_span"]),
            total_len=int(obj["total_len"]),
        )


@dataclass(frozen=True)
class AttentionMask:
    """Boolean allow-matrix over token positions; row attends to column."""

    allowed: np.ndarray
    kind: str

    def __post_init__(self):
        if self.allowed.ndim != 2 or self.allowed.shape[0] != self.allowed.shape[1]:
            raise ValueError(f"mask must be square, got shape {self.allowed.shape}")
        if self.allowed.dtype != np.bool_:
            raise ValueError("mask must be boolean")
        if np.any(np.triu(self.allowed, k=1)):
            raise ValueError("mask violates causality: attention above the diagonal")
        self.allowed.setflags(write=False)

    @property
    def size(self) -> int:
        return self.allowed.shape[0]


def build_causal_mask(total_len: int) -> AttentionMask:
    """Lower-triangular mask (diagonal included): attend to self and the past."""
    if total_len < 1:
        raise ValueError("total_len must be >= 1")
    return AttentionMask(allowed=np.tril(np.ones((total_len, total_len), dtype=bool)), kind=CAUSAL)


def build_sdag_mask(layout: BlockLayout) -> AttentionMask:
    """Block-sparse mask: a row attends to a past column when the column is a
    task token, the row is a context token, or both sit in the same document span."""
    n = layout.total_len
    pos = np.arange(n)
    causal = pos[:, None] >= pos[None, :]

    in_task = np.zeros(n, dtype=bool)
    in_task[layout.task_span[0] : layout.task_span[1]] = True
    in_context = np.zeros(n, dtype=bool)
    in_context[layout.context_span[0] : layout.context_span[1]] = True

    allowed = (in_task[None, :] | in_context[:, None]) & causal
    for start, end in layout.doc_spans:
        in_doc = np.zeros(n, dtype=bool)
        in_doc[start:end] = True
        allowed |= (in_doc[:, None] & in_doc[None, :]) & causal
    return AttentionMask(allowed=allowed, kind=SDAG)


def extend_for_generation(mask: AttentionMask, new_total: int) -> AttentionMask:
    """Grow a prompt mask so appended rows (generated tokens) are fully causal."""
    n = mask.size
    if new_total < n:
        raise ValueError(f"new_total {new_total} smaller than current size {n}")
    if new_total == n:
        return mask
    allowed = np.zeros((new_total, new_total), dtype=bool)
    allowed[:n, :n] = mask.allowed
    pos = np.arange(new_total)
    allowed[n:, :] = pos[n:, None] >= pos[None, :]
    return AttentionMask(allowed=allowed, kind=mask.kind)


def _boundaries(layout: BlockLayout | None, n: int) -> list[int]:
    if layout is None:
        return []
    cuts = {layout.task_span[1], layout.context_span[0]}
    for start, end in layout.doc_spans:
        cuts.add(start)
        cuts.add(end)
    return sorted(c for c in cuts if 0 < c < n)


def render_mask_text(mask: AttentionMask, layout: BlockLayout | None = None) -> str:
    """Text grid of the mask: '#' allowed, '.' disallowed, block boundaries ruled."""
    n = mask.size
    if layout is not None and layout.total_len > n:
        raise ValueError("layout does not fit the mask")
    cuts = _boundaries(layout, n)
    lines = []
    for r in range(n):
        if r in cuts:
            segments = []
            prev = 0
            for c in cuts + [n]:
                segments.append("-" * (c - prev))
                prev = c
            lines.append("+".join(segments))
        cells = []
        prev = 0
        for c in cuts + [n]:
            cells.append("".join("#" if mask.allowed[r, j] else "." for j in range(prev, c)))
            prev = c
        lines.append("|".join(cells))
    return "\n".join(lines) + "\n"


def render_mask_pgm(mask: AttentionMask) -> bytes:
    """ASCII PGM bitmap: allowed cells black (0), disallowed white (255)."""
    n = mask.size
    rows = [" ".join("0" if mask.allowed[r, c] else "255" for c in range(n)) for r in range(n)]
    return (f"P2\n{n} {n}\n255\n" + "\n".join(rows) + "\n").encode("ascii")


def render_mask_figure(
    mask: AttentionMask, layout: BlockLayout | None, path: str | Path
) -> None:
    """Write a byte-deterministic mask figure; '.pgm' paths get a PGM bitmap,
    anything else the text grid."""
    path = Path(path)
    if path.suffix == ".pgm":
        path.write_bytes(render_mask_pgm(mask))
    else:
        path.write_bytes(render_mask_text(mask, layout).encode("utf-8"))
