"""Rule-based generators that make end-to-end metrics exactly computable.

The synthetic passages used in tests and demos plant their answer as the final
word, so the rules read answers straight off the document blocks.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .prompts import PromptBuild, WordTokenizer
from .toy_model import GenerationRecord

RULE_KINDS = ("majority", "last_document", "fixed")


@dataclass(frozen=True)
class AnswerRule:
    kind: str
    text: str = ""

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}; expected one of {RULE_KINDS}")
        if self.kind == "fixed" and not self.text:
            raise ValueError("fixed rule needs a text")


def _doc_answer_words(prompt: PromptBuild, tokenizer: WordTokenizer) -> list[str]:
    words = []
    for start, end in prompt.layout.doc_spans:
        words.append(tokenizer.decode(prompt.token_ids[start:end]).split()[-1])
    return words


def scripted_generate(
    prompt: PromptBuild,
    rule: AnswerRule,
    tokenizer: WordTokenizer,
    *,
    mode: str = "scripted",
) -> GenerationRecord:
    """Emit the answer the rule dictates from the prompt's document blocks."""
    if rule.kind == "fixed":
        output = rule.text
    else:
        if not prompt.layout.doc_spans:
            raise ValueError(f"rule {rule.kind!r} needs at least one document block")
        answers = _doc_answer_words(prompt, tokenizer)
        if rule.kind == "last_document":
            output = answers[-1]
        else:
            counts = Counter(answers)
            top = max(counts.values())
            output = min(word for word, count in counts.items() if count == top)
    return GenerationRecord(
        question_id=prompt.question_id,
        mode=mode,
        output_text=output,
        prompt_sha256=prompt.sha256(),
        seed=None,
        generator="scripted",
    )
