"""The retrieve -> attack -> filter -> prompt -> generate -> evaluate pipeline.

Both attention modes share one prompt build per question so metric differences
are attributable to the mask alone. Every per-question artifact is persisted
as a JSON line; the report only aggregates what the records already contain.
"""
from __future__ import annotations

import json
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .attack import (
    AdversarialPool,
    inject_in_corpus,
    inject_in_set,
    load_pools,
    pre_generation_filter,
    select_adversarial,
)
from .config import ExperimentConfig, LoadedConfig, ProviderSpec
from .corpus import Corpus, Document, QAItem, load_corpus, load_qa
from .embeddings import (
    HashEmbeddingProvider,
    MemoProvider,
    RemoteEmbeddingProvider,
    embed_text,
)
from .evaluation import evaluate_output
from .geometry import classify_dominant_set, set_geometry, stratify
from .masks import build_causal_mask, build_sdag_mask, render_mask_figure
from .prompts import PromptTemplate, WordTokenizer, build_prompt
from .report import RunReport, emit_tables, ttest_dict
from .retrieval import RetrievedSet, build_bm25_index, retrieve
from .scripted import scripted_generate
from .stats import paired_t_test, unpaired_t_test
from .toy_model import GenerationRecord, ToyModelConfig, ToyTransformer


class StageError(RuntimeError):
    """A pipeline stage failed for one question; aborts the run."""

    def __init__(self, question_id: str, stage: str, cause: Exception):
        self.question_id = question_id
        self.stage = stage
        super().__init__(f"stage {stage!r} failed for question {question_id!r}: {cause}")


def build_provider(spec: ProviderSpec, name: str):
    if spec.kind == "hash":
        inner = HashEmbeddingProvider(dim=spec.dim, seed=spec.seed, name=name)
    else:
        inner = RemoteEmbeddingProvider(
            spec.url,
            dim=spec.dim,
            timeout=spec.timeout,
            auth_env=spec.auth_env,
            max_in_flight=spec.max_in_flight,
            name=name,
        )
    return MemoProvider(inner)


@dataclass
class _Runtime:
    """Everything the per-question worker needs, immutable during the run."""

    cfg: ExperimentConfig
    corpus: Corpus
    retrieval_corpus: Corpus
    ranker: object
    pools: dict[str, AdversarialPool]
    providers: dict[str, object]
    tokenizer: WordTokenizer
    template: PromptTemplate
    model: ToyTransformer | None
    benign_sets: dict[str, "RetrievedSet"]

    def benign_docs(self, question_id: str) -> list[Document]:
        by_id = self.corpus.by_id()
        return [by_id[d] for d in self.benign_sets[question_id].doc_ids()]


def _build_tokenizer(
    corpus: Corpus, qa_items: Sequence[QAItem], pools: Sequence[AdversarialPool], template: PromptTemplate
) -> WordTokenizer:
    texts = [template.all_text()]
    texts.extend(doc.text for doc in corpus)
    texts.extend(qa.question for qa in qa_items)
    for pool in pools:
        texts.extend(doc.text for doc in pool.candidates)
        texts.append(pool.target_answer)
    texts.extend(answer for qa in qa_items for answer in qa.correct_answers)
    return WordTokenizer.build(texts)


def _build_model(cfg: ExperimentConfig, tokenizer: WordTokenizer) -> ToyTransformer | None:
    if cfg.generator.kind != "toy":
        return None
    toy = cfg.generator.toy
    if toy.checkpoint:
        model = ToyTransformer.load(toy.checkpoint)
        if model.config.vocab_size != tokenizer.size:
            raise ValueError(
                f"checkpoint vocab size {model.config.vocab_size} does not match "
                f"the benchmark vocabulary ({tokenizer.size})"
            )
        return model
    config = ToyModelConfig(
        vocab_size=tokenizer.size,
        d_model=toy.d_model,
        n_heads=toy.n_heads,
        n_layers=toy.n_layers,
        max_seq_len=toy.max_seq_len,
        seed=toy.seed,
    )
    return ToyTransformer(config)


def _generate(rt: _Runtime, prompt, mode: str) -> GenerationRecord:
    if rt.cfg.generator.kind == "toy":
        assert rt.model is not None
        return rt.model.generate(prompt, mode, rt.cfg.generator.generation, rt.tokenizer)
    assert rt.cfg.generator.rule is not None
    return scripted_generate(prompt, rt.cfg.generator.rule, rt.tokenizer, mode=mode)


def _doc_embedding_fn(rt: _Runtime, space: str):
    if space == "generator_space":
        assert rt.model is not None
        return lambda text: rt.model.embed_text(text, rt.tokenizer)
    name = rt.cfg.analyses.retriever_space_provider or rt.cfg.attack.embedding_provider
    provider = rt.providers[name]
    return lambda text: embed_text(provider, text)


def _strata_for(rt: _Runtime, docs: Sequence[Document], question_id: str) -> dict:
    spaces = []
    if rt.cfg.analyses.stratify_generator_space:
        spaces.append("generator_space")
    if rt.cfg.analyses.stratify_retriever_space:
        spaces.append("retriever_space")
    out: dict[str, dict | None] = {}
    adversarial = [d for d in docs if d.origin == "adversarial"]
    benign = [d for d in docs if d.origin == "benign"]
    for space in spaces:
        # the geometry is defined for the single-adversarial-document case
        if len(adversarial) != 1 or not benign:
            out[space] = None
            continue
        embed = _doc_embedding_fn(rt, space)
        geometry = set_geometry([embed(d.text) for d in benign], [d.id for d in benign])
        label = stratify(question_id, embed(adversarial[0].text), geometry)
        out[space] = {
            "label": label.label,
            "adv_to_centroid": label.adv_to_centroid,
            "benign_diameter": label.benign_diameter,
        }
    return out


def _process_question(rt: _Runtime, qa: QAItem) -> dict:
    cfg = rt.cfg
    stage = "retrieve"
    try:
        if cfg.attack.setting == "in_set":
            retrieved_set = rt.benign_sets[qa.question_id]
            stage = "attack"
            pool = rt.pools[qa.question_id]
            provider = rt.providers.get(cfg.attack.embedding_provider)
            selected = select_adversarial(
                pool, rt.benign_docs(qa.question_id), cfg.attack, provider
            )
            docs = inject_in_set(
                retrieved_set, rt.corpus, selected, cfg.attack.placement, cfg.attack.seed
            )
            short = retrieved_set.short
        else:
            retrieved_set = retrieve(
                rt.ranker, qa.question, rt.retrieval_corpus, cfg.k, question_id=qa.question_id
            )
            by_id = rt.retrieval_corpus.by_id()
            docs = [by_id[doc_id] for doc_id in retrieved_set.doc_ids()]
            short = retrieved_set.short

        stage = "filter"
        for name in cfg.filters:
            docs = pre_generation_filter(docs, name)

        stage = "prompt"
        max_len = None
        if cfg.generator.kind == "toy":
            assert rt.model is not None
            max_len = rt.model.config.max_seq_len - cfg.generator.generation.max_new_tokens
        prompt = build_prompt(qa, docs, rt.tokenizer, rt.template, max_len=max_len)

        stage = "generate"
        mode_entries: dict[str, dict] = {}
        for mode in cfg.modes:
            record = _generate(rt, prompt, mode)
            stage = "evaluate"
            outcome = evaluate_output(record.output_text, qa)
            entry = {
                "output_text": record.output_text,
                "contains_correct": outcome.contains_correct,
                "contains_target": outcome.contains_target,
                "generator": record.generator,
                "seed": record.seed,
            }
            if cfg.analyses.dominant_sets:
                stage = "analyze"
                dom = classify_dominant_set(docs, qa, record.output_text)
                entry["dominant"] = {
                    "set": dom.dominant,
                    "answer": dom.dominant_answer,
                    "matches": dom.generation_matches,
                }
            mode_entries[mode] = entry
            stage = "generate"

        stage = "analyze"
        strata = _strata_for(rt, docs, qa.question_id)

        return {
            "question_id": qa.question_id,
            "doc_ids": [d.id for d in docs],
            "doc_origins": [d.origin for d in docs],
            "short": short,
            "prompt_sha256": prompt.sha256(),
            "modes": mode_entries,
            "strata": strata,
        }
    except Exception as exc:
        raise StageError(qa.question_id, stage, exc) from exc


def _significance(records: list[dict], modes: Sequence[str]) -> dict | None:
    if len(modes) != 2:
        return None
    a, b = modes
    out = {}
    for metric, key in (("acc", "contains_correct"), ("asr", "contains_target")):
        va = [float(r["modes"][a][key]) for r in records]
        vb = [float(r["modes"][b][key]) for r in records]
        try:
            out[metric] = ttest_dict(paired_t_test(va, vb))
        except ValueError:
            out[metric] = None
    out["modes_compared"] = [a, b]
    return out


def _mode_metrics(records: list[dict], modes: Sequence[str]) -> dict[str, dict]:
    out = {}
    n = len(records)
    for mode in modes:
        correct = sum(r["modes"][mode]["contains_correct"] for r in records)
        target = sum(r["modes"][mode]["contains_target"] for r in records)
        out[mode] = {"acc": correct / n, "asr": target / n, "n": n}
    return out


def _strata_section(records: list[dict], modes: Sequence[str], space: str) -> dict:
    labelled = [r for r in records if r["strata"].get(space)]
    section: dict = {"skipped": len(records) - len(labelled)}
    by_label = {
        "DS": [r for r in labelled if r["strata"][space]["label"] == "DS"],
        "NS": [r for r in labelled if r["strata"][space]["label"] == "NS"],
    }
    for label, rows in by_label.items():
        per_mode = {}
        for mode in modes:
            if rows:
                per_mode[mode] = {
                    "acc": sum(r["modes"][mode]["contains_correct"] for r in rows) / len(rows),
                    "asr": sum(r["modes"][mode]["contains_target"] for r in rows) / len(rows),
                }
            else:
                per_mode[mode] = None
        section[label] = {"n": len(rows), "per_mode": per_mode}
    significance = {}
    for mode in modes:
        per_metric = {}
        for metric, key in (("acc", "contains_correct"), ("asr", "contains_target")):
            ds = [float(r["modes"][mode][key]) for r in by_label["DS"]]
            ns = [float(r["modes"][mode][key]) for r in by_label["NS"]]
            if len(ds) >= 2 and len(ns) >= 2:
                try:
                    per_metric[metric] = ttest_dict(unpaired_t_test(ds, ns))
                except ValueError:
                    per_metric[metric] = None
            else:
                per_metric[metric] = None
        significance[mode] = per_metric
    section["significance"] = significance
    return section


def _dominant_section(records: list[dict], modes: Sequence[str]) -> dict:
    out = {}
    for mode in modes:
        rows = [r["modes"][mode]["dominant"] for r in records if "dominant" in r["modes"][mode]]
        counts = {"GTS": 0, "AS": 0, "none": 0}
        matches = {"GTS": 0, "AS": 0}
        for row in rows:
            counts[row["set"]] += 1
            if row["set"] in matches and row["matches"]:
                matches[row["set"]] += 1
        out[mode] = {
            "gts_dominant": counts["GTS"],
            "gts_rate": matches["GTS"] / counts["GTS"] if counts["GTS"] else None,
            "as_dominant": counts["AS"],
            "as_rate": matches["AS"] / counts["AS"] if counts["AS"] else None,
            "none": counts["none"],
        }
    return out


def _git_hash() -> str | None:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5
        )
    except Exception:
        return None
    return out.stdout.strip() if out.returncode == 0 else None


def _write_atomic(path: Path, payload: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def run_experiment(loaded: LoadedConfig, *, write_outputs: bool = True) -> RunReport:
    """Execute the full pipeline over the QA set and assemble the report.

    A stage failure aborts the run; records collected so far are written to
    ``records.partial.jsonl`` so partial output is never mistaken for a result.
    """
    cfg = loaded.experiment
    cfg.validate_files()
    corpus = load_corpus(cfg.corpus_path)
    qa_items = load_qa(cfg.qa_path)
    if not qa_items:
        raise ValueError("QA set is empty; nothing to run")
    pools = load_pools(cfg.pool_path)
    pools_by_qid = {pool.question_id: pool for pool in pools}
    missing = [qa.question_id for qa in qa_items if qa.question_id not in pools_by_qid]
    if missing:
        raise ValueError(f"no adversarial pool for questions: {missing[:5]}")

    providers = {name: build_provider(spec, name) for name, spec in loaded.providers.items()}
    template = PromptTemplate()
    tokenizer = _build_tokenizer(corpus, qa_items, pools, template)
    model = _build_model(cfg, tokenizer)

    def make_ranker(target: Corpus):
        if cfg.ranker.kind == "bm25":
            return build_bm25_index(target, k1=cfg.ranker.k1, b=cfg.ranker.b)
        return providers[cfg.ranker.provider]

    clean_ranker = make_ranker(corpus)
    by_id = corpus.by_id()
    benign_sets = {
        qa.question_id: retrieve(clean_ranker, qa.question, corpus, cfg.k, question_id=qa.question_id)
        for qa in qa_items
    }

    if cfg.attack.setting == "in_corpus":
        provider = providers.get(cfg.attack.embedding_provider)
        benign_docs_by_question = {
            qid: [by_id[d] for d in result.doc_ids()] for qid, result in benign_sets.items()
        }
        retrieval_corpus = inject_in_corpus(
            corpus,
            [pools_by_qid[qa.question_id] for qa in qa_items],
            cfg.attack,
            provider,
            benign_docs_by_question,
        )
        ranker = make_ranker(retrieval_corpus)
    else:
        retrieval_corpus = corpus
        ranker = clean_ranker

    rt = _Runtime(
        cfg=cfg,
        corpus=corpus,
        retrieval_corpus=retrieval_corpus,
        ranker=ranker,
        pools=pools_by_qid,
        providers=providers,
        tokenizer=tokenizer,
        template=template,
        model=model,
        benign_sets=benign_sets,
    )

    out_dir = Path(cfg.output_dir)
    if write_outputs:
        out_dir.mkdir(parents=True, exist_ok=True)

    records: list[dict] = []
    try:
        if cfg.workers == 1:
            for qa in qa_items:
                records.append(_process_question(rt, qa))
        else:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                for record in pool.map(lambda qa: _process_question(rt, qa), qa_items):
                    records.append(record)
    except StageError:
        if write_outputs and records:
            partial = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
            _write_atomic(out_dir / "records.partial.jsonl", partial.encode("utf-8"))
        raise

    modes = list(cfg.modes)
    strata = {}
    if cfg.analyses.stratify_generator_space:
        strata["generator_space"] = _strata_section(records, modes, "generator_space")
    if cfg.analyses.stratify_retriever_space:
        strata["retriever_space"] = _strata_section(records, modes, "retriever_space")

    report = RunReport(
        config=cfg.to_dict(),
        n_questions=len(records),
        modes=_mode_metrics(records, modes),
        significance=_significance(records, modes),
        strata=strata,
        dominant_sets=_dominant_section(records, modes) if cfg.analyses.dominant_sets else {},
        provenance={
            "package_version": __version__,
            "git_hash": _git_hash(),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "seed": cfg.seed,
        },
    )

    if write_outputs:
        lines = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
        _write_atomic(out_dir / "records.jsonl", lines.encode("utf-8"))
        _write_atomic(out_dir / "report.json", report.to_json().encode("utf-8"))
        emit_tables(report, "markdown", out_dir)
        emit_tables(report, "csv", out_dir)
        _emit_mask_figures(rt, qa_items[0], out_dir)
    return report


def _emit_mask_figures(rt: _Runtime, qa: QAItem, out_dir: Path) -> None:
    """Render the first question's prompt masks as audit artifacts."""
    prompt = build_prompt(qa, rt.benign_docs(qa.question_id), rt.tokenizer, rt.template)
    for mode in rt.cfg.modes:
        if mode == "sdag":
            mask = build_sdag_mask(prompt.layout)
        else:
            mask = build_causal_mask(prompt.layout.total_len)
        render_mask_figure(mask, prompt.layout, out_dir / f"mask_{mode}.txt")
