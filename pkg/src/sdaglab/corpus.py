"""Documents, QA items, passage segmentation, and JSON-lines persistence."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .evaluation import normalize_answer

ORIGINS = ("benign", "adversarial")


class CorpusFormatError(ValueError):
    """A corpus or QA file violates the expected JSON-lines schema."""

    def __init__(self, message: str, *, path: str | Path | None = None, line: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        prefix = f"{self.path or '<data>'}:{line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Document:
    """One retrievable passage; adversarial documents carry their pool's question id."""

    id: str
    text: str
    origin: str = "benign"
    pool_question_id: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"document {self.id!r} has empty text")
        if self.origin not in ORIGINS:
            raise ValueError(f"document {self.id!r} has unknown origin {self.origin!r}")
        if self.origin == "adversarial" and not self.pool_question_id:
            raise ValueError(f"adversarial document {self.id!r} must carry pool_question_id")

    def to_dict(self) -> dict:
        out = {"id": self.id, "text": self.text, "origin": self.origin}
        if self.pool_question_id is not None:
            out["pool_question_id"] = self.pool_question_id
        return out


@dataclass(frozen=True)
class Corpus:
    """Ordered, id-unique collection of documents."""

    documents: tuple[Document, ...]
    name: str = "corpus"

    def __post_init__(self):
        seen: set[str] = set()
        for doc in self.documents:
            if doc.id in seen:
                raise ValueError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def get(self, doc_id: str) -> Document:
        doc = self.by_id().get(doc_id)
        if doc is None:
            raise KeyError(f"unknown document id {doc_id!r}")
        return doc

    def by_id(self) -> dict[str, Document]:
        return {doc.id: doc for doc in self.documents}

    def ids(self) -> list[str]:
        return [doc.id for doc in self.documents]


@dataclass(frozen=True)
class QAItem:
    """A question with its reference answers and the attacker-chosen target."""

    question_id: str
    question: str
    correct_answers: tuple[str, ...]
    target_answer: str

    def __post_init__(self):
        if not self.correct_answers:
            raise ValueError(f"question {self.question_id!r} has no correct answers")
        if not self.target_answer.strip():
            raise ValueError(f"question {self.question_id!r} has empty target answer")
        target_norm = normalize_answer(self.target_answer)
        for answer in self.correct_answers:
            if normalize_answer(answer) == target_norm:
                raise ValueError(
                    f"question {self.question_id!r}: target answer equals correct answer "
                    f"{answer!r} after normalization"
                )


def segment_passages(raw_text: str, window_words: int, *, source_id: str = "doc") -> list[Document]:
    """Cut a text into consecutive windows of ``window_words`` whitespace words.

    The final passage keeps whatever remains (1..window_words words); ids are
    ``<source_id>#<index>`` with a 0-based index.
    """
    if window_words < 1:
        raise ValueError("window_words must be >= 1")
    words = raw_text.split()
    passages = []
    for index, start in enumerate(range(0, len(words), window_words)):
        chunk = words[start : start + window_words]
        passages.append(Document(id=f"{source_id}#{index}", text=" ".join(chunk)))
    return passages


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"malformed JSON ({exc.msg})", path=path, line=line_no) from exc
            if not isinstance(obj, dict):
                raise CorpusFormatError("line is not a JSON object", path=path, line=line_no)
            yield line_no, obj


def load_corpus(path: str | Path, *, name: str | None = None) -> Corpus:
    """Load a JSON-lines corpus file; line order becomes document order."""
    documents: list[Document] = []
    seen: dict[str, int] = {}
    for line_no, obj in _iter_jsonl(path):
        try:
            doc = Document(
                id=str(obj["id"]),
                text=str(obj["text"]),
                origin=obj.get("origin", "benign"),
                pool_question_id=obj.get("pool_question_id"),
            )
        except KeyError as exc:
            raise CorpusFormatError(f"missing key {exc.args[0]!r}", path=path, line=line_no) from exc
        except ValueError as exc:
            raise CorpusFormatError(str(exc), path=path, line=line_no) from exc
        if doc.id in seen:
            raise CorpusFormatError(
                f"duplicate document id {doc.id!r} (first seen on line {seen[doc.id]})",
                path=path,
                line=line_no,
            )
        seen[doc.id] = line_no
        documents.append(doc)
    return Corpus(documents=tuple(documents), name=name or Path(path).stem)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus:
            fh.write(json.dumps(doc.to_dict(), sort_keys=True) + "\n")


def load_qa(path: str | Path) -> list[QAItem]:
    """Load a JSON-lines QA file, validating every item."""
    items: list[QAItem] = []
    seen: dict[str, int] = {}
    for line_no, obj in _iter_jsonl(path):
        try:
            item = QAItem(
                question_id=str(obj["question_id"]),
                question=str(obj["question"]),
                correct_answers=tuple(str(a) for a in obj["correct_answers"]),
                target_answer=str(obj["target_answer"]),
            )
        except KeyError as exc:
            raise CorpusFormatError(f"missing key {exc.args[0]!r}", path=path, line=line_no) from exc
        except ValueError as exc:
            raise CorpusFormatError(str(exc), path=path, line=line_no) from exc
        if item.question_id in seen:
            raise CorpusFormatError(
                f"duplicate question_id {item.question_id!r} (first seen on line {seen[item.question_id]})",
                path=path,
                line=line_no,
            )
        seen[item.question_id] = line_no
        items.append(item)
    return items


def save_qa(items: list[QAItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(
                json.dumps(
                    {
                        "question_id": item.question_id,
                        "question": item.question,
                        "correct_answers": list(item.correct_answers),
                        "target_answer": item.target_answer,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
