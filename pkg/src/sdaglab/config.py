"""Declarative experiment configuration: JSON file -> validated dataclasses."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .attack import AttackSpec, filter_names
from .scripted import AnswerRule
from .toy_model import GenerationConfig

MODES = ("carg", "sdag")
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """The experiment configuration is malformed or references missing pieces."""


@dataclass(frozen=True)
class ProviderSpec:
    kind: str  # "hash" or "remote"
    dim: int = 32
    seed: int = 0
    url: str = ""
    timeout: float = 10.0
    auth_env: str | None = None
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind not in ("hash", "remote"):
            raise ConfigError(f"unknown provider kind {self.kind!r}")
        if self.kind == "remote" and not self.url:
            raise ConfigError("remote provider needs a url")
        if self.dim < 1:
            raise ConfigError("provider dim must be positive")


@dataclass(frozen=True)
class RankerSpec:
    kind: str  # "bm25" or "dense"
    k1: float = 0.9
    b: float = 0.4
    provider: str = "hash"

    def __post_init__(self):
        if self.kind not in ("bm25", "dense"):
            raise ConfigError(f"unknown ranker kind {self.kind!r}")


@dataclass(frozen=True)
class ToyGeneratorSpec:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    max_seq_len: int = 256
    seed: int = 0
    checkpoint: str | None = None


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str  # "toy" or "scripted"
    toy: ToyGeneratorSpec = ToyGeneratorSpec()
    generation: GenerationConfig = GenerationConfig()
    rule: AnswerRule | None = None

    def __post_init__(self):
        if self.kind not in ("toy", "scripted"):
            raise ConfigError(f"unknown generator kind {self.kind!r}")
        if self.kind == "scripted" and self.rule is None:
            raise ConfigError("scripted generator needs a rule")


@dataclass(frozen=True)
class AnalysesSpec:
    stratify_generator_space: bool = False
    stratify_retriever_space: bool = False
    dominant_sets: bool = False
    retriever_space_provider: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    corpus_path: Path
    qa_path: Path
    pool_path: Path
    ranker: RankerSpec
    k: int
    attack: AttackSpec
    generator: GeneratorSpec
    modes: tuple[str, ...]
    output_dir: Path
    seed: int = 42
    filters: tuple[str, ...] = ()
    analyses: AnalysesSpec = AnalysesSpec()
    workers: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not self.modes or any(m not in MODES for m in self.modes):
            raise ConfigError(f"modes must be a non-empty subset of {MODES}")
        if len(set(self.modes)) != len(self.modes):
            raise ConfigError("modes must not repeat")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def validate_files(self) -> None:
        for label, path in (
            ("corpus", self.corpus_path),
            ("qa", self.qa_path),
            ("pools", self.pool_path),
        ):
            if not Path(path).is_file():
                raise ConfigError(f"{label} file does not exist: {path}")

    def to_dict(self) -> dict:
        """Config echo for reports; never includes credentials."""
        return {
            "corpus_path": str(self.corpus_path),
            "qa_path": str(self.qa_path),
            "pool_path": str(self.pool_path),
            "ranker": {
                "kind": self.ranker.kind,
                "k1": self.ranker.k1,
                "b": self.ranker.b,
                "provider": self.ranker.provider,
            },
            "k": self.k,
            "attack": {
                "strategy": self.attack.strategy,
                "n_docs": self.attack.n_docs,
                "setting": self.attack.setting,
                "placement": self.attack.placement,
                "seed": self.attack.seed,
                "embedding_provider": self.attack.embedding_provider,
            },
            "generator": {
                "kind": self.generator.kind,
                "toy": {
                    "d_model": self.generator.toy.d_model,
                    "n_heads": self.generator.toy.n_heads,
                    "n_layers": self.generator.toy.n_layers,
                    "max_seq_len": self.generator.toy.max_seq_len,
                    "seed": self.generator.toy.seed,
                    "checkpoint": self.generator.toy.checkpoint,
                },
                "generation": {
                    "max_new_tokens": self.generator.generation.max_new_tokens,
                    "temperature": self.generator.generation.temperature,
                    "seed": self.generator.generation.seed,
                },
                "rule": (
                    {"kind": self.generator.rule.kind, "text": self.generator.rule.text}
                    if self.generator.rule
                    else None
                ),
            },
            "modes": list(self.modes),
            "filters": list(self.filters),
            "analyses": {
                "stratify_generator_space": self.analyses.stratify_generator_space,
                "stratify_retriever_space": self.analyses.stratify_retriever_space,
                "dominant_sets": self.analyses.dominant_sets,
                "retriever_space_provider": self.analyses.retriever_space_provider,
            },
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "workers": self.workers,
        }


def _parse_providers(obj: dict) -> dict[str, ProviderSpec]:
    providers = {}
    for name, spec in obj.items():
        providers[name] = ProviderSpec(
            kind=spec.get("kind", "hash"),
            dim=spec.get("dim", 32),
            seed=spec.get("seed", 0),
            url=spec.get("url", ""),
            timeout=spec.get("timeout", 10.0),
            auth_env=spec.get("auth_env"),
            max_in_flight=spec.get("max_in_flight", 4),
        )
    return providers


@dataclass(frozen=True)
class LoadedConfig:
    experiment: ExperimentConfig
    providers: dict[str, ProviderSpec] = field(default_factory=dict)


def parse_config(obj: dict, *, base_dir: Path | None = None) -> LoadedConfig:
    """Build and cross-validate the config tree from a parsed JSON object."""
    base = base_dir or Path(".")
    version = obj.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}; this build reads {SCHEMA_VERSION}")

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    try:
        seed = int(obj.get("seed", 42))
        attack_obj = obj.get("attack", {})
        attack = AttackSpec(
            strategy=attack_obj.get("strategy", "random"),
            n_docs=attack_obj.get("n_docs", 1),
            setting=attack_obj.get("setting", "in_set"),
            placement=attack_obj.get(
                "placement", "end" if attack_obj.get("setting", "in_set") == "in_set" else None
            ),
            seed=attack_obj.get("seed", seed),
            embedding_provider=attack_obj.get("embedding_provider", "hash"),
        )

        gen_obj = obj.get("generator", {})
        generation_obj = gen_obj.get("generation", {})
        generation = GenerationConfig(
            max_new_tokens=generation_obj.get("max_new_tokens", 8),
            temperature=generation_obj.get("temperature", 0.1),
            seed=generation_obj.get("seed", seed),
        )
        toy_obj = gen_obj.get("toy", {})
        toy = ToyGeneratorSpec(
            d_model=toy_obj.get("d_model", 64),
            n_heads=toy_obj.get("n_heads", 4),
            n_layers=toy_obj.get("n_layers", 2),
            max_seq_len=toy_obj.get("max_seq_len", 256),
            seed=toy_obj.get("seed", seed),
            checkpoint=toy_obj.get("checkpoint"),
        )
        rule_obj = gen_obj.get("rule")
        rule = AnswerRule(rule_obj["kind"], rule_obj.get("text", "")) if rule_obj else None
        generator = GeneratorSpec(
            kind=gen_obj.get("kind", "scripted"), toy=toy, generation=generation, rule=rule
        )

        ranker_obj = obj.get("ranker", {})
        ranker = RankerSpec(
            kind=ranker_obj.get("kind", "bm25"),
            k1=ranker_obj.get("k1", 0.9),
            b=ranker_obj.get("b", 0.4),
            provider=ranker_obj.get("provider", "hash"),
        )

        analyses_obj = obj.get("analyses", {})
        analyses = AnalysesSpec(
            stratify_generator_space=analyses_obj.get("stratify_generator_space", False),
            stratify_retriever_space=analyses_obj.get("stratify_retriever_space", False),
            dominant_sets=analyses_obj.get("dominant_sets", False),
            retriever_space_provider=analyses_obj.get("retriever_space_provider"),
        )

        experiment = ExperimentConfig(
            corpus_path=resolve(obj["corpus"]),
            qa_path=resolve(obj["qa"]),
            pool_path=resolve(obj["pools"]),
            ranker=ranker,
            k=int(obj.get("k", 5)),
            attack=attack,
            generator=generator,
            modes=tuple(obj.get("modes", ["carg", "sdag"])),
            output_dir=resolve(obj.get("output_dir", "out")),
            seed=seed,
            filters=tuple(obj.get("filters", [])),
            analyses=analyses,
            workers=int(obj.get("workers", 1)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    providers = _parse_providers(obj.get("providers", {"hash": {"kind": "hash"}}))
    _cross_validate(experiment, providers)
    return LoadedConfig(experiment=experiment, providers=providers)


def _cross_validate(experiment: ExperimentConfig, providers: dict[str, ProviderSpec]) -> None:
    known = set(filter_names())
    for name in experiment.filters:
        if name not in known:
            raise ConfigError(f"filter {name!r} is not registered (known: {sorted(known)})")
    if experiment.ranker.kind == "dense" and experiment.ranker.provider not in providers:
        raise ConfigError(f"dense ranker provider {experiment.ranker.provider!r} is not defined")
    if experiment.attack.strategy in ("near", "far"):
        if experiment.attack.embedding_provider not in providers:
            raise ConfigError(
                f"attack provider {experiment.attack.embedding_provider!r} is not defined"
            )
    analyses = experiment.analyses
    if analyses.stratify_retriever_space:
        name = analyses.retriever_space_provider or experiment.attack.embedding_provider
        if name not in providers:
            raise ConfigError(f"retriever-space provider {name!r} is not defined")
    if analyses.stratify_generator_space and experiment.generator.kind != "toy":
        raise ConfigError("generator-space stratification needs the toy generator")


def load_config(path: str | Path) -> LoadedConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file does not exist: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(obj, base_dir=path.parent)
