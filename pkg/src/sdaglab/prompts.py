"""Word-level tokenization and prompt assembly with a block layout.

The prompt carries the instruction text first, then one block per retrieved
document, then the question section; the question is always last so the final
block can condition on everything while document blocks stay separable.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

from .masks import BlockLayout

if TYPE_CHECKING:
    from .corpus import Document, QAItem

UNK = "<unk>"
EOS = "<eos>"


class PromptTooLongError(ValueError):
    def __init__(self, length: int, max_len: int):
        self.overflow = length - max_len
        super().__init__(f"prompt has {length} tokens, {self.overflow} over the limit {max_len}")


@dataclass(frozen=True)
class WordTokenizer:
    """Lowercased whitespace-word vocabulary with <unk>/<eos> specials."""

    vocab: tuple[str, ...]
    _index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_index", {word: i for i, word in enumerate(self.vocab)})
        if self.vocab[:2] != (UNK, EOS):
            raise ValueError("vocab must start with the <unk> and <eos> specials")

    @classmethod
    def build(cls, texts: Iterable[str]) -> "WordTokenizer":
        words = sorted({w for text in texts for w in text.lower().split()})
        return cls(vocab=(UNK, EOS, *words))

    @property
    def size(self) -> int:
        return len(self.vocab)

    @property
    def unk_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return 1

    def encode(self, text: str) -> list[int]:
        return [self._index.get(w, self.unk_id) for w in text.lower().split()]

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self.vocab[i] for i in ids if i != self.eos_id)


@dataclass(frozen=True)
class PromptTemplate:
    """Wording of the fixed prompt sections around the documents."""

    task_text: str = (
        "answer the question using only the following passages give a short answer passages"
    )
    question_prefix: str = "question"
    answer_cue: str = "answer"

    def context_text(self, question: str) -> str:
        return f"{self.question_prefix} {question} {self.answer_cue}"

    def all_text(self) -> str:
        return f"{self.task_text} {self.question_prefix} {self.answer_cue}"


@dataclass(frozen=True)
class PromptBuild:
    """Token ids plus the block layout that tiles them."""

    token_ids: tuple[int, ...]
    layout: BlockLayout
    question_id: str

    def __post_init__(self):
        if self.layout.total_len != len(self.token_ids):
            raise ValueError("layout length does not match token count")

    def sha256(self) -> str:
        payload = " ".join(str(t) for t in self.token_ids).encode("ascii")
        return hashlib.sha256(payload).hexdigest()


def build_prompt(
    qa: "QAItem",
    docs: Sequence["Document"],
    tokenizer: WordTokenizer,
    template: PromptTemplate | None = None,
    *,
    max_len: int | None = None,
) -> PromptBuild:
    """Assemble token ids and spans for instruction text, documents, question.

    The given document order is used as-is; any placement policy must run
    before this call.
    """
    template = template or PromptTemplate()
    ids: list[int] = []

    task_ids = tokenizer.encode(template.task_text)
    if not task_ids:
        raise ValueError("template task text tokenized to nothing")
    ids.extend(task_ids)
    task_span = (0, len(ids))

    doc_spans: list[tuple[int, int]] = []
    for doc in docs:
        doc_ids = tokenizer.encode(doc.text)
        if not doc_ids:
            raise ValueError(f"document {doc.id!r} tokenized to nothing")
        start = len(ids)
        ids.extend(doc_ids)
        doc_spans.append((start, len(ids)))

    context_ids = tokenizer.encode(template.context_text(qa.question))
    start = len(ids)
    ids.extend(context_ids)
    context_span = (start, len(ids))

    if max_len is not None and len(ids) > max_len:
        raise PromptTooLongError(len(ids), max_len)

    layout = BlockLayout(
        task_span=task_span,
        doc_spans=tuple(doc_spans),
        context_span=context_span,
        total_len=len(ids),
    )
    return PromptBuild(token_ids=tuple(ids), layout=layout, question_id=qa.question_id)
