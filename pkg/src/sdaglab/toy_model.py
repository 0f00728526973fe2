"""A small decoder-only transformer whose attention takes an arbitrary mask.

Everything runs in float64 numpy so masked positions receive exactly zero
attention weight and repeated runs are bit-reproducible. Scale is deliberately
tiny; the model exists to make mask mechanics observable, not to be good.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .masks import AttentionMask, build_causal_mask, build_sdag_mask, extend_for_generation
from .prompts import PromptBuild, WordTokenizer
from .seeding import rng_for

MASKED_SCORE = -1e30  # exp(x - rowmax) underflows to exactly 0.0 in float64
LN_EPS = 1e-5

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ToyModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    max_seq_len: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if min(self.d_model, self.n_heads, self.n_layers, self.max_seq_len) < 1:
            raise ValueError("model dimensions must be positive")


@dataclass(frozen=True)
class GenerationConfig:
    max_new_tokens: int = 8
    temperature: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationRecord:
    """One generation outcome with enough metadata to reproduce it."""

    question_id: str
    mode: str
    output_text: str
    prompt_sha256: str
    seed: int | None = None
    generator: str = "toy"


@dataclass
class ForwardTrace:
    """Per-layer internals: hidden states after each block, attention weights."""

    hidden_states: list[np.ndarray] = field(default_factory=list)
    attention_weights: list[np.ndarray] = field(default_factory=list)


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return gain * xhat + bias, (xhat, inv)


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def init_params(config: ToyModelConfig) -> dict[str, np.ndarray]:
    rng = rng_for(config.seed, "toy-model-init")
    d, v = config.d_model, config.vocab_size
    scale = 0.02

    def normal(*shape):
        return rng.normal(0.0, scale, size=shape)

    params: dict[str, np.ndarray] = {
        "tok_emb": normal(v, d),
        "pos_emb": normal(config.max_seq_len, d),
        "ln_f.g": np.ones(d),
        "ln_f.b": np.zeros(d),
        "head.w": normal(d, v),
        "head.b": np.zeros(v),
    }
    for i in range(config.n_layers):
        p = f"layer{i}."
        params[p + "ln1.g"] = np.ones(d)
        params[p + "ln1.b"] = np.zeros(d)
        params[p + "attn.wq"] = normal(d, d)
        params[p + "attn.bq"] = np.zeros(d)
        params[p + "attn.wk"] = normal(d, d)
        params[p + "attn.bk"] = np.zeros(d)
        params[p + "attn.wv"] = normal(d, d)
        params[p + "attn.bv"] = np.zeros(d)
        params[p + "attn.wo"] = normal(d, d)
        params[p + "attn.bo"] = np.zeros(d)
        params[p + "ln2.g"] = np.ones(d)
        params[p + "ln2.b"] = np.zeros(d)
        params[p + "mlp.w1"] = normal(d, 4 * d)
        params[p + "mlp.b1"] = np.zeros(4 * d)
        params[p + "mlp.w2"] = normal(4 * d, d)
        params[p + "mlp.b2"] = np.zeros(d)
    return params


class ToyTransformer:
    """Pre-norm decoder stack; weights live in a flat name->array dict."""

    def __init__(self, config: ToyModelConfig, params: dict[str, np.ndarray] | None = None):
        self.config = config
        self.params = params if params is not None else init_params(config)

    # ------------------------------------------------------------------ forward

    def forward(
        self,
        token_ids: Sequence[int],
        mask: AttentionMask,
        *,
        trace: ForwardTrace | None = None,
        cache: list | None = None,
    ) -> np.ndarray:
        """Return logits of shape (len(token_ids), vocab_size).

        ``trace`` collects hidden states and attention weights for analysis;
        ``cache`` collects the intermediates the training backward pass needs.
        """
        ids = np.asarray(token_ids, dtype=np.int64)
        n = ids.size
        cfg = self.config
        if n == 0:
            raise ValueError("token_ids must be non-empty")
        if n > cfg.max_seq_len:
            raise ValueError(f"sequence of {n} tokens exceeds max_seq_len {cfg.max_seq_len}")
        if np.any(ids < 0) or np.any(ids >= cfg.vocab_size):
            raise ValueError("token id out of vocabulary range")
        if mask.size < n:
            raise ValueError(f"mask of size {mask.size} smaller than sequence length {n}")
        allowed = mask.allowed[:n, :n]

        p = self.params
        x = p["tok_emb"][ids] + p["pos_emb"][:n]
        d_head = cfg.d_model // cfg.n_heads

        for layer in range(cfg.n_layers):
            pre = f"layer{layer}."
            h, ln1_cache = _layer_norm(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
            q = h @ p[pre + "attn.wq"] + p[pre + "attn.bq"]
            k = h @ p[pre + "attn.wk"] + p[pre + "attn.bk"]
            v = h @ p[pre + "attn.wv"] + p[pre + "attn.bv"]
            q_h = q.reshape(n, cfg.n_heads, d_head).transpose(1, 0, 2)
            k_h = k.reshape(n, cfg.n_heads, d_head).transpose(1, 0, 2)
            v_h = v.reshape(n, cfg.n_heads, d_head).transpose(1, 0, 2)

            scores = q_h @ k_h.transpose(0, 2, 1) / np.sqrt(d_head)
            scores = np.where(allowed[None, :, :], scores, MASKED_SCORE)
            weights = _softmax_rows(scores)
            weights = np.where(allowed[None, :, :], weights, 0.0)

            attn = weights @ v_h
            merged = attn.transpose(1, 0, 2).reshape(n, cfg.d_model)
            attn_out = merged @ p[pre + "attn.wo"] + p[pre + "attn.bo"]
            x_mid = x + attn_out

            h2, ln2_cache = _layer_norm(x_mid, p[pre + "ln2.g"], p[pre + "ln2.b"])
            z = h2 @ p[pre + "mlp.w1"] + p[pre + "mlp.b1"]
            r = np.maximum(z, 0.0)
            mlp_out = r @ p[pre + "mlp.w2"] + p[pre + "mlp.b2"]
            x_next = x_mid + mlp_out

            if trace is not None:
                trace.attention_weights.append(weights)
                trace.hidden_states.append(x_next.copy())
            if cache is not None:
                cache.append(
                    {
                        "x": x,
                        "h": h,
                        "ln1": ln1_cache,
                        "q_h": q_h,
                        "k_h": k_h,
                        "v_h": v_h,
                        "weights": weights,
                        "merged": merged,
                        "x_mid": x_mid,
                        "h2": h2,
                        "ln2": ln2_cache,
                        "z": z,
                        "r": r,
                    }
                )
            x = x_next

        x_final, ln_f_cache = _layer_norm(x, p["ln_f.g"], p["ln_f.b"])
        logits = x_final @ p["head.w"] + p["head.b"]
        if cache is not None:
            cache.append({"ids": ids, "allowed": allowed, "x_last": x, "ln_f": ln_f_cache, "x_final": x_final})
        return logits

    # ------------------------------------------------------------- embeddings

    def token_embeddings(self, token_ids: Sequence[int]) -> list[np.ndarray]:
        """Input-embedding table rows for each id, before positions are added."""
        ids = np.asarray(token_ids, dtype=np.int64)
        if np.any(ids < 0) or np.any(ids >= self.config.vocab_size):
            raise ValueError("token id out of vocabulary range")
        table = self.params["tok_emb"]
        return [table[i].copy() for i in ids]

    def embed_text(self, text: str, tokenizer: WordTokenizer) -> np.ndarray:
        """Mean-pooled token embeddings of a text, the generator-space vector."""
        from .embeddings import mean_pool

        ids = tokenizer.encode(text)
        if not ids:
            raise ValueError("text tokenized to nothing")
        return mean_pool(self.token_embeddings(ids))

    # ------------------------------------------------------------- generation

    def _mask_for(self, prompt: PromptBuild, mode: str, total_len: int) -> AttentionMask:
        if mode == "carg":
            return build_causal_mask(total_len)
        if mode == "sdag":
            return extend_for_generation(build_sdag_mask(prompt.layout), total_len)
        raise ValueError(f"unknown mode {mode!r}; expected 'carg' or 'sdag'")

    def generate(
        self,
        prompt: PromptBuild,
        mode: str,
        gen: GenerationConfig,
        tokenizer: WordTokenizer,
    ) -> GenerationRecord:
        """Decode up to max_new_tokens under the mode's mask.

        Temperature 0 is greedy argmax with ties broken by lowest token id;
        positive temperatures sample from the seeded generator.
        """
        total_budget = len(prompt.token_ids) + gen.max_new_tokens
        if total_budget > self.config.max_seq_len:
            raise ValueError(
                f"prompt ({len(prompt.token_ids)}) plus budget ({gen.max_new_tokens}) "
                f"exceeds max_seq_len {self.config.max_seq_len}"
            )
        mask = self._mask_for(prompt, mode, total_budget)
        rng = rng_for(gen.seed, "toy-sample", prompt.question_id)

        ids = list(prompt.token_ids)
        new_ids: list[int] = []
        for _ in range(gen.max_new_tokens):
            logits = self.forward(ids, mask)[-1]
            if gen.temperature == 0.0:
                next_id = int(np.argmax(logits))
            else:
                probs = _softmax_rows(logits[None, :] / gen.temperature)[0]
                next_id = int(rng.choice(len(probs), p=probs))
            if next_id == tokenizer.eos_id:
                break
            ids.append(next_id)
            new_ids.append(next_id)
        return GenerationRecord(
            question_id=prompt.question_id,
            mode=mode,
            output_text=tokenizer.decode(new_ids),
            prompt_sha256=prompt.sha256(),
            seed=gen.seed,
            generator="toy",
        )

    # ------------------------------------------------------------- checkpoint

    def save(self, path: str | Path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": {
                "vocab_size": self.config.vocab_size,
                "d_model": self.config.d_model,
                "n_heads": self.config.n_heads,
                "n_layers": self.config.n_layers,
                "max_seq_len": self.config.max_seq_len,
                "seed": self.config.seed,
            },
        }
        np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **self.params)

    @classmethod
    def load(cls, path: str | Path) -> "ToyTransformer":
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            params = {k: data[k] for k in data.files if k != "__meta__"}
        return cls(ToyModelConfig(**meta["config"]), params=params)
