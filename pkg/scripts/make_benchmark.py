#!/usr/bin/env python3
"""Generate a synthetic benchmark (corpus, QA set, adversarial pools) plus a
ready-to-run experiment config.

    python scripts/make_benchmark.py --questions 50 --out bench/
    sdaglab run bench/config.json
"""
import argparse
import json
from pathlib import Path

from sdaglab.synthetic import SyntheticSpec, build_benchmark, write_benchmark


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("bench"))
    parser.add_argument("--questions", type=int, default=50)
    parser.add_argument("--gts-docs", type=int, default=3)
    parser.add_argument("--filler-docs", type=int, default=2)
    parser.add_argument("--pool-size", type=int, default=5)
    parser.add_argument(
        "--gts-majority-until",
        type=int,
        default=None,
        help="questions from this index on lose their ground-truth majority",
    )
    parser.add_argument("--k", type=int, default=5)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument(
        "--generator", choices=["scripted", "toy"], default="toy", help="generator for the config"
    )
    args = parser.parse_args()

    spec = SyntheticSpec(
        n_questions=args.questions,
        gts_docs=args.gts_docs,
        filler_docs=args.filler_docs,
        pool_size=args.pool_size,
        gts_majority_until=args.gts_majority_until,
    )
    bench = build_benchmark(spec)
    paths = write_benchmark(bench, args.out)

    if args.generator == "toy":
        generator = {
            "kind": "toy",
            "toy": {"d_model": 64, "n_heads": 4, "n_layers": 2, "max_seq_len": 256},
            "generation": {"max_new_tokens": 4, "temperature": 0.1},
        }
    else:
        generator = {"kind": "scripted", "rule": {"kind": "majority"}}

    config = {
        "schema_version": 1,
        "corpus": paths["corpus"].name,
        "qa": paths["qa"].name,
        "pools": paths["pools"].name,
        "ranker": {"kind": "bm25", "k1": 0.9, "b": 0.4},
        "k": args.k,
        "attack": {"strategy": "random", "n_docs": 1, "setting": "in_set", "placement": "end"},
        "providers": {"hash": {"kind": "hash", "dim": 32, "seed": 0}},
        "generator": generator,
        "modes": ["carg", "sdag"],
        "filters": [],
        "analyses": {
            "stratify_retriever_space": True,
            "stratify_generator_space": args.generator == "toy",
            "dominant_sets": True,
        },
        "output_dir": "out",
        "seed": args.seed,
        "workers": 1,
    }
    config_path = args.out / "config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n")

    print(f"corpus:  {paths['corpus']}  ({len(bench.corpus)} passages)")
    print(f"qa:      {paths['qa']}  ({len(bench.qa_items)} questions)")
    print(f"pools:   {paths['pools']}  ({len(bench.pools)} pools)")
    print(f"config:  {config_path}")
    print(f"run it:  sdaglab run {config_path}")


if __name__ == "__main__":
    main()
