import json

import pytest
from hypothesis import given, strategies as st

from sdaglab.corpus import (
    Corpus,
    CorpusFormatError,
    Document,
    QAItem,
    load_corpus,
    load_qa,
    save_corpus,
    save_qa,
    segment_passages,
)

WORD = st.text(alphabet="abcdefgh", min_size=1, max_size=6)


def make_words(n):
    return " ".join(f"w{i}" for i in range(n))


class TestSegmentPassages:
    def test_250_words_window_100(self):
        passages = segment_passages(make_words(250), 100)
        assert [len(p.text.split()) for p in passages] == [100, 100, 50]

    def test_exact_fit(self):
        passages = segment_passages(make_words(100), 100)
        assert len(passages) == 1
        assert len(passages[0].text.split()) == 100

    def test_empty_text(self):
        assert segment_passages("", 100) == []

    def test_ids_carry_source_and_index(self):
        passages = segment_passages(make_words(5), 2, source_id="src")
        assert [p.id for p in passages] == ["src#0", "src#1", "src#2"]

    def test_rejects_zero_window(self):
        with pytest.raises(ValueError):
            segment_passages("a b", 0)

    @given(st.lists(WORD, min_size=1, max_size=120), st.integers(min_value=1, max_value=20))
    def test_partition_property(self, words, window):
        text = " ".join(words)
        passages = segment_passages(text, window)
        rebuilt = [w for p in passages for w in p.text.split()]
        assert rebuilt == text.split()
        assert all(len(p.text.split()) == window for p in passages[:-1])
        assert 1 <= len(passages[-1].text.split()) <= window


class TestDocumentInvariants:
    def test_adversarial_requires_pool_question(self):
        with pytest.raises(ValueError):
            Document(id="d1", text="x", origin="adversarial")
        doc = Document(id="d1", text="x", origin="adversarial", pool_question_id="q1")
        assert doc.pool_question_id == "q1"

    def test_blank_text_rejected(self):
        with pytest.raises(ValueError):
            Document(id="d1", text="   ")

    def test_corpus_rejects_duplicate_ids(self):
        docs = (Document(id="d", text="a"), Document(id="d", text="b"))
        with pytest.raises(ValueError, match="duplicate"):
            Corpus(documents=docs)


class TestCorpusIO:
    def test_loads_in_file_order(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        rows = [{"id": f"d{i}", "text": f"text {i}"} for i in range(3)]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        corpus = load_corpus(path)
        assert corpus.ids() == ["d0", "d1", "d2"]
        assert all(doc.origin == "benign" for doc in corpus)

    def test_duplicate_id_names_the_id(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        rows = [
            {"id": "a", "text": "x"},
            {"id": "dup", "text": "x"},
            {"id": "b", "text": "x"},
            {"id": "c", "text": "x"},
            {"id": "dup", "text": "x"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        with pytest.raises(CorpusFormatError, match="'dup'") as err:
            load_corpus(path)
        assert err.value.line == 5

    def test_malformed_line_carries_line_number(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "text": "x"}\nnot-json\n')
        with pytest.raises(CorpusFormatError) as err:
            load_corpus(path)
        assert err.value.line == 2

    def test_empty_file(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text("")
        assert len(load_corpus(path)) == 0

    def test_round_trip(self, tmp_path):
        corpus = Corpus(
            documents=(
                Document(id="a", text="alpha beta"),
                Document(id="b", text="gamma", origin="adversarial", pool_question_id="q7"),
            ),
            name="corpus",
        )
        path = tmp_path / "corpus.jsonl"
        save_corpus(corpus, path)
        assert load_corpus(path) == corpus


class TestQA:
    def test_accepts_distinct_target(self):
        item = QAItem("q1", "capital of france", ("Paris",), "Lyon")
        assert item.target_answer == "Lyon"

    def test_rejects_target_equal_to_correct_after_normalization(self):
        with pytest.raises(ValueError):
            QAItem("q1", "capital of france", ("Paris",), "paris")

    def test_rejects_empty_correct_answers(self):
        with pytest.raises(ValueError):
            QAItem("q1", "capital of france", (), "Lyon")

    def test_load_validates_and_round_trips(self, tmp_path):
        items = [
            QAItem("q1", "capital of france", ("Paris",), "Lyon"),
            QAItem("q2", "largest ocean", ("Pacific", "the pacific ocean"), "Atlantic"),
        ]
        path = tmp_path / "qa.jsonl"
        save_qa(items, path)
        assert load_qa(path) == items

    def test_load_rejects_invalid_item_with_line(self, tmp_path):
        path = tmp_path / "qa.jsonl"
        rows = [
            {"question_id": "q1", "question": "x", "correct_answers": ["a"], "target_answer": "b"},
            {"question_id": "q2", "question": "x", "correct_answers": [], "target_answer": "b"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        with pytest.raises(CorpusFormatError) as err:
            load_qa(path)
        assert err.value.line == 2
