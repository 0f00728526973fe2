"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines inline.
"""
import json
import math

import numpy as np
import pytest
from benchmark_utils import scripted_generator, toy_generator, write_config
from scipy import integrate

from sdaglab.config import load_config
from sdaglab.corpus import Corpus, Document, QAItem
from sdaglab.evaluation import contains_answer
from sdaglab.experiment import run_experiment
from sdaglab.geometry import (
    DominantSetResult,
    dominant_set_generation_rate,
    set_geometry,
    stratify,
)
from sdaglab.masks import BlockLayout, build_causal_mask, build_sdag_mask
from sdaglab.prompts import PromptTemplate, build_prompt
from sdaglab.retrieval import analyze, bm25_score, build_bm25_index
from sdaglab.seeding import rng_for
from sdaglab.stats import paired_t_test, student_t_cdf
from sdaglab.synthetic import (
    SyntheticSpec,
    build_benchmark,
    benchmark_tokenizer,
    training_sequences,
    write_benchmark,
)
from sdaglab.toy_model import ForwardTrace, GenerationConfig, ToyModelConfig, ToyTransformer
from sdaglab.training import train_toy_model


def note(criterion: int, message: str) -> None:
    print(f"[acceptance {criterion:02d}] PASS {message}")


def random_layout(rng) -> BlockLayout:
    k = int(rng.integers(0, 9))
    lengths = [int(rng.integers(1, 13)) for _ in range(k + 2)]
    spans = []
    cursor = 0
    for length in lengths:
        spans.append((cursor, cursor + length))
        cursor += length
    return BlockLayout(
        task_span=spans[0], doc_spans=tuple(spans[1:-1]), context_span=spans[-1], total_len=cursor
    )


def toy_world(n_questions=12, seed=0, d_model=32):
    bench = build_benchmark(SyntheticSpec(n_questions=n_questions))
    tokenizer = benchmark_tokenizer(bench)
    config = ToyModelConfig(
        vocab_size=tokenizer.size, d_model=d_model, n_heads=4, n_layers=2, max_seq_len=192, seed=seed
    )
    return bench, tokenizer, ToyTransformer(config)


def attacked_prompt(bench, tokenizer, index, qa, rng=None, placement_end=True):
    """Top-5 retrieval plus one pool candidate at the prompt's end."""
    from sdaglab.retrieval import retrieve

    result = retrieve(index, qa.question, bench.corpus, k=5, question_id=qa.question_id)
    by_id = bench.corpus.by_id()
    docs = [by_id[d] for d in result.doc_ids()][:4]
    pool = next(p for p in bench.pools if p.question_id == qa.question_id)
    adv = pool.candidates[0 if rng is None else int(rng.integers(len(pool.candidates)))]
    docs = docs + [adv] if placement_end else [adv] + docs
    return build_prompt(qa, docs, tokenizer)


# ---------------------------------------------------------------- criterion 1


def test_01_mask_formula_fidelity():
    rng = rng_for(42, "acceptance-masks")
    for _ in range(200):
        layout = random_layout(rng)
        built = build_sdag_mask(layout).allowed
        n = layout.total_len

        def in_span(p, span):
            return span[0] <= p < span[1]

        for r in range(n):
            for c in range(n):
                expected = (
                    (in_span(c, layout.task_span) or in_span(r, layout.context_span)) and r >= c
                ) or any(in_span(r, s) and in_span(c, s) and r >= c for s in layout.doc_spans)
                assert built[r, c] == expected, (layout, r, c)
    note(1, "mask formula fidelity: 200 random layouts match the direct evaluator exactly")


# ---------------------------------------------------------------- criterion 2


def test_02_cross_document_isolation():
    bench, tokenizer, model = toy_world()
    index = build_bm25_index(bench.corpus)
    rng = rng_for(42, "acceptance-isolation")
    trials = 0
    while trials < 50:
        qa = bench.qa_items[int(rng.integers(len(bench.qa_items)))]
        prompt = attacked_prompt(bench, tokenizer, index, qa, rng)
        mask = build_sdag_mask(prompt.layout)
        base = ForwardTrace()
        model.forward(prompt.token_ids, mask, trace=base)

        k = len(prompt.layout.doc_spans)
        j = int(rng.integers(k))
        start, end = prompt.layout.doc_spans[j]
        position = int(rng.integers(start, end))
        mutated = list(prompt.token_ids)
        mutated[position] = (mutated[position] + 1 + int(rng.integers(tokenizer.size - 1))) % tokenizer.size
        after = ForwardTrace()
        model.forward(mutated, mask, trace=after)

        for layer in range(model.config.n_layers):
            h0, h1 = base.hidden_states[layer], after.hidden_states[layer]
            for i, (s, e) in enumerate(prompt.layout.doc_spans):
                if i != j:
                    assert np.array_equal(h0[s:e], h1[s:e]), (trials, layer, i)
        trials += 1
    note(2, "cross-document isolation: 50 mutation trials, hidden states bit-identical")


# ---------------------------------------------------------------- criterion 3


def test_03_single_document_equivalence():
    bench, tokenizer, model = toy_world()
    rng = rng_for(42, "acceptance-k1")
    gen = GenerationConfig(max_new_tokens=6, temperature=0.0, seed=0)
    by_q = {p.question_id: p for p in bench.pools}
    for trial in range(50):
        qa = bench.qa_items[int(rng.integers(len(bench.qa_items)))]
        source = bench.corpus.documents + by_q[qa.question_id].candidates
        doc = source[int(rng.integers(len(source)))]
        prompt = build_prompt(qa, [doc], tokenizer)
        carg = model.generate(prompt, "carg", gen, tokenizer)
        sdag = model.generate(prompt, "sdag", gen, tokenizer)
        assert carg.output_text == sdag.output_text, trial
    note(3, "single-document equivalence: 50 greedy generations identical across modes")


# ---------------------------------------------------------------- criterion 4


def test_04_attention_normalization():
    bench, tokenizer, model = toy_world()
    index = build_bm25_index(bench.corpus)
    rng = rng_for(42, "acceptance-attn")
    for _ in range(20):
        qa = bench.qa_items[int(rng.integers(len(bench.qa_items)))]
        prompt = attacked_prompt(bench, tokenizer, index, qa, rng)
        mask = build_sdag_mask(prompt.layout)
        trace = ForwardTrace()
        model.forward(prompt.token_ids, mask, trace=trace)
        assert len(trace.attention_weights) == model.config.n_layers
        for weights in trace.attention_weights:
            assert weights.shape[0] == model.config.n_heads
            assert np.all(np.abs(weights.sum(axis=-1) - 1.0) < 1e-6)
            disallowed = np.broadcast_to(~mask.allowed[None, :, :], weights.shape)
            assert np.all(weights[disallowed] == 0.0)
    note(4, "attention normalization: rows sum to 1 within 1e-6, masked pairs exactly 0")


# ---------------------------------------------------------------- criterion 5


def brute_force_bm25(corpus, question, doc_id, k1, b):
    doc_tokens = {doc.id: analyze(doc.text) for doc in corpus}
    n_docs = len(doc_tokens)
    avg_len = sum(len(t) for t in doc_tokens.values()) / n_docs
    tokens = doc_tokens[doc_id]
    score = 0.0
    for term in analyze(question):
        tf = tokens.count(term)
        if tf == 0:
            continue
        df = sum(1 for t in doc_tokens.values() if term in t)
        idf = math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len(tokens) / avg_len))
    return score


def test_05_bm25_oracle_equivalence():
    rng = rng_for(42, "acceptance-bm25")
    vocab = [f"term{i}" for i in range(60)]
    texts = [
        " ".join(vocab[int(rng.integers(60))] for _ in range(int(rng.integers(1, 40))))
        for _ in range(100)
    ]
    corpus = Corpus(documents=tuple(Document(id=f"d{i:03d}", text=t) for i, t in enumerate(texts)))
    index = build_bm25_index(corpus)
    for _ in range(50):
        question = " ".join(vocab[int(rng.integers(60))] for _ in range(int(rng.integers(1, 6))))
        doc_id = f"d{int(rng.integers(100)):03d}"
        assert bm25_score(index, question, doc_id) == pytest.approx(
            brute_force_bm25(corpus, question, doc_id, index.k1, index.b), abs=1e-9
        )

    # worked single-doc case: idf = ln(1 + (1-1+0.5)/(1+0.5)) = ln(4/3) and the
    # tf factor is 1 at len = avglen, so the score is ln(4/3)
    single = build_bm25_index(Corpus(documents=(Document(id="d0", text="x"),)))
    assert bm25_score(single, "x", "d0") == pytest.approx(math.log(4.0 / 3.0), abs=1e-12)
    note(5, "bm25 oracle equivalence: 50 queries within 1e-9; single-doc score = ln(4/3)")


# ---------------------------------------------------------------- criterion 6


def t_pdf(x, df):
    ln_c = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(ln_c - (df + 1) / 2 * math.log1p(x * x / df))


def test_06_statistics_oracles():
    res = paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 4.0])
    assert res.t == 1.0
    assert res.df == 2.0

    ts = [x / 2.0 for x in range(-20, 21)]
    worst = 0.0
    for df in range(1, 51):
        for t in ts:
            area, _ = integrate.quad(t_pdf, 0.0, abs(t), args=(df,), epsabs=1e-13, epsrel=1e-13)
            oracle = 0.5 + area if t >= 0 else 0.5 - area
            worst = max(worst, abs(student_t_cdf(t, df) - oracle))
    assert worst < 1e-8
    note(6, f"statistics oracles: paired t exact; t-CDF within {worst:.2e} of quadrature")


# ---------------------------------------------------------------- criterion 7


def test_07_threat_model_protocol(tmp_path):
    bench = build_benchmark(SyntheticSpec(n_questions=10))
    paths = write_benchmark(bench, tmp_path / "data")

    config_end = write_config(
        tmp_path,
        paths,
        generator=scripted_generator("last_document"),
        attack={"strategy": "random", "n_docs": 1, "setting": "in_set", "placement": "end"},
        out_name="end",
    )
    report_end = run_experiment(load_config(config_end))
    for mode in ("carg", "sdag"):
        assert report_end.modes[mode]["asr"] == 1.0

    config_start = write_config(
        tmp_path,
        paths,
        generator=scripted_generator("last_document"),
        attack={"strategy": "random", "n_docs": 1, "setting": "in_set", "placement": "start"},
        out_name="start",
    )
    report_start = run_experiment(load_config(config_start))
    records = [
        json.loads(line)
        for line in (tmp_path / "start" / "records.jsonl").read_text().splitlines()
    ]
    assert all(r["doc_origins"][0] == "adversarial" for r in records)
    # a benign answer-carrying document sits after the adversarial one everywhere
    assert all(any(":gts" in d for d in r["doc_ids"][1:]) for r in records)
    for mode in ("carg", "sdag"):
        assert report_start.modes[mode]["asr"] == 0.0
    note(7, "threat-model protocol: end placement ASR=1.0, start placement ASR=0.0")


# ---------------------------------------------------------------- criterion 8


def test_08_dominant_set_metric(tmp_path):
    bench = build_benchmark(SyntheticSpec(n_questions=20, gts_majority_until=12))
    paths = write_benchmark(bench, tmp_path / "data")
    config = write_config(
        tmp_path,
        paths,
        generator=scripted_generator("majority"),
        analyses={"dominant_sets": True},
    )
    report = run_experiment(load_config(config))
    records = [
        json.loads(line) for line in (tmp_path / "out" / "records.jsonl").read_text().splitlines()
    ]
    for mode in ("carg", "sdag"):
        assert report.dominant_sets[mode]["gts_dominant"] == 12
        assert report.dominant_sets[mode]["gts_rate"] == 1.0
        results = [
            DominantSetResult(
                question_id=r["question_id"],
                dominant=r["modes"][mode]["dominant"]["set"],
                dominant_answer=r["modes"][mode]["dominant"]["answer"],
                generation_matches=r["modes"][mode]["dominant"]["matches"],
            )
            for r in records
        ]
        assert dominant_set_generation_rate(results, "GTS") == 1.0
        with pytest.raises(ValueError, match="never dominant"):
            dominant_set_generation_rate(results, "AS")
    note(8, "dominant sets: GTS dominant in 12/20 with rate 1.0; AS rate raises as never dominant")


# ---------------------------------------------------------------- criterion 9


def test_09_stratification_boundary():
    geometry = set_geometry([np.array([0.0, 0.0]), np.array([2.0, 0.0])])
    boundary = stratify("q-boundary", np.array([3.0, 0.0]), geometry)
    assert boundary.adv_to_centroid == boundary.benign_diameter
    assert boundary.label == "NS"

    rng = rng_for(42, "acceptance-strata")
    labels = [stratify(f"q{i}", rng.normal(size=2) * 3, geometry).label for i in range(200)]
    assert set(labels) <= {"DS", "NS"}
    assert all(label in ("DS", "NS") for label in labels)
    note(9, "stratification: boundary case labelled NS; every question gets exactly one label")


# ---------------------------------------------------------------- criterion 10


def test_10_end_to_end_determinism(tmp_path):
    bench = build_benchmark(SyntheticSpec(n_questions=100))
    paths = write_benchmark(bench, tmp_path / "data")
    config = write_config(
        tmp_path,
        paths,
        generator=toy_generator(max_new_tokens=4, temperature=0.1, seed=42, d_model=64),
        seed=42,
        analyses={"dominant_sets": True, "stratify_retriever_space": True},
        out_name="out",
    )
    records, reports = [], []
    for _ in range(2):  # the identical config file, run twice
        run_experiment(load_config(config))
        records.append((tmp_path / "out" / "records.jsonl").read_bytes())
        obj = json.loads((tmp_path / "out" / "report.json").read_text())
        obj["provenance"].pop("timestamp")
        reports.append(json.dumps(obj, sort_keys=True))
    assert records[0] == records[1]
    assert reports[0] == reports[1]
    note(10, "end-to-end determinism: 100-question toy runs byte-identical modulo timestamps")


# ---------------------------------------------------------------- criterion 11


FULL_SCALE_CONTEXT = {
    # headline full-scale numbers (7B generator, k=5, multi-hop QA benchmark,
    # dense retrieval) quoted for context only; not reproducible at desk scale
    "sdag_asr": 0.41,
    "carg_asr": 0.68,
}


def test_11_directional_sanity_diagnostic():
    bench = build_benchmark(SyntheticSpec(n_questions=24))
    tokenizer = benchmark_tokenizer(bench)
    model = ToyTransformer(
        ToyModelConfig(
            vocab_size=tokenizer.size, d_model=64, n_heads=4, n_layers=2, max_seq_len=192, seed=7
        )
    )
    sequences = training_sequences(bench, tokenizer)
    history = train_toy_model(
        model, sequences, steps=250, batch_size=8, lr=3e-3, seed=0, loss_tail=2
    )

    index = build_bm25_index(bench.corpus)
    gen = GenerationConfig(max_new_tokens=2, temperature=0.0, seed=0)
    hits = {"carg": 0, "sdag": 0}
    correct = {"carg": 0, "sdag": 0}
    for qa in bench.qa_items:
        prompt = attacked_prompt(bench, tokenizer, index, qa)
        for mode in ("carg", "sdag"):
            record = model.generate(prompt, mode, gen, tokenizer)
            hits[mode] += contains_answer(record.output_text, [qa.target_answer])
            correct[mode] += contains_answer(record.output_text, qa.correct_answers)
    n = len(bench.qa_items)
    asr = {m: hits[m] / n for m in hits}
    acc = {m: correct[m] / n for m in correct}

    # diagnostic only: measured at toy scale, reported next to the full-scale
    # context numbers, never asserted
    directional = asr["sdag"] <= asr["carg"]
    note(
        11,
        "directional sanity (non-binding): "
        f"toy ASR sdag={asr['sdag']:.2f} vs carg={asr['carg']:.2f} "
        f"(acc sdag={acc['sdag']:.2f} carg={acc['carg']:.2f}, "
        f"train loss {history[0]:.3f}->{history[-1]:.3f}); "
        f"sdag<=carg: {directional}; "
        f"full-scale context: sdag {FULL_SCALE_CONTEXT['sdag_asr']:.2f} "
        f"vs carg {FULL_SCALE_CONTEXT['carg_asr']:.2f}",
    )
    assert 0.0 <= asr["sdag"] <= 1.0 and 0.0 <= asr["carg"] <= 1.0
