"""Next-token cross-entropy training for the toy transformer.

Gradients are derived by hand against the forward pass in ``toy_model`` and
checked against finite differences in the test suite. Training is optional:
mask correctness never depends on trained weights.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .masks import AttentionMask, build_causal_mask
from .seeding import rng_for
from .toy_model import ToyTransformer, _softmax_rows


def _layer_norm_backward(dy, xhat, inv, gain):
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * gain
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def loss_and_grads(
    model: ToyTransformer,
    token_ids: Sequence[int],
    mask: AttentionMask,
    *,
    loss_positions: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Cross-entropy of next-token prediction plus gradients for every weight.

    ``loss_positions`` restricts which target positions contribute (boolean
    over positions 1..n-1 shifted to the predicting position).
    """
    cache: list = []
    logits = model.forward(token_ids, mask, cache=cache)
    tail = cache.pop()
    ids = tail["ids"]
    n = ids.size
    if n < 2:
        raise ValueError("need at least 2 tokens for next-token training")

    targets = ids[1:]
    predict_rows = np.arange(n - 1)
    if loss_positions is not None:
        keep = np.asarray(loss_positions, dtype=bool)
        if keep.shape != (n - 1,):
            raise ValueError("loss_positions must cover positions 1..n-1")
        predict_rows = predict_rows[keep]
        targets = targets[keep]
        if targets.size == 0:
            raise ValueError("loss_positions selected nothing")

    probs = _softmax_rows(logits[predict_rows])
    count = targets.size
    loss = float(-np.log(probs[np.arange(count), targets]).mean())

    dlogits = np.zeros_like(logits)
    dprobs = probs.copy()
    dprobs[np.arange(count), targets] -= 1.0
    dlogits[predict_rows] = dprobs / count

    p = model.params
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}
    cfg = model.config
    d_head = cfg.d_model // cfg.n_heads

    x_final = tail["x_final"]
    grads["head.w"] += x_final.T @ dlogits
    grads["head.b"] += dlogits.sum(axis=0)
    dx_final = dlogits @ p["head.w"].T
    xhat_f, inv_f = tail["ln_f"]
    dx, dg, db = _layer_norm_backward(dx_final, xhat_f, inv_f, p["ln_f.g"])
    grads["ln_f.g"] += dg
    grads["ln_f.b"] += db

    allowed = tail["allowed"]
    for layer in reversed(range(cfg.n_layers)):
        pre = f"layer{layer}."
        c = cache[layer]

        # MLP branch
        dmlp = dx
        grads[pre + "mlp.w2"] += c["r"].T @ dmlp
        grads[pre + "mlp.b2"] += dmlp.sum(axis=0)
        dr = dmlp @ p[pre + "mlp.w2"].T
        dz = dr * (c["z"] > 0)
        grads[pre + "mlp.w1"] += c["h2"].T @ dz
        grads[pre + "mlp.b1"] += dz.sum(axis=0)
        dh2 = dz @ p[pre + "mlp.w1"].T
        xhat2, inv2 = c["ln2"]
        dx_mid_ln, dg2, db2 = _layer_norm_backward(dh2, xhat2, inv2, p[pre + "ln2.g"])
        grads[pre + "ln2.g"] += dg2
        grads[pre + "ln2.b"] += db2
        dx_mid = dx + dx_mid_ln

        # attention branch
        dattn_out = dx_mid
        grads[pre + "attn.wo"] += c["merged"].T @ dattn_out
        grads[pre + "attn.bo"] += dattn_out.sum(axis=0)
        dmerged = dattn_out @ p[pre + "attn.wo"].T
        dattn = dmerged.reshape(-1, cfg.n_heads, d_head).transpose(1, 0, 2)

        weights = c["weights"]
        dweights = dattn @ c["v_h"].transpose(0, 2, 1)
        dv_h = weights.transpose(0, 2, 1) @ dattn
        dscores = weights * (dweights - (dweights * weights).sum(axis=-1, keepdims=True))
        dscores = np.where(allowed[None, :, :], dscores, 0.0) / np.sqrt(d_head)

        dq_h = dscores @ c["k_h"]
        dk_h = dscores.transpose(0, 2, 1) @ c["q_h"]
        dq = dq_h.transpose(1, 0, 2).reshape(-1, cfg.d_model)
        dk = dk_h.transpose(1, 0, 2).reshape(-1, cfg.d_model)
        dv = dv_h.transpose(1, 0, 2).reshape(-1, cfg.d_model)

        h = c["h"]
        grads[pre + "attn.wq"] += h.T @ dq
        grads[pre + "attn.bq"] += dq.sum(axis=0)
        grads[pre + "attn.wk"] += h.T @ dk
        grads[pre + "attn.bk"] += dk.sum(axis=0)
        grads[pre + "attn.wv"] += h.T @ dv
        grads[pre + "attn.bv"] += dv.sum(axis=0)
        dh = dq @ p[pre + "attn.wq"].T + dk @ p[pre + "attn.wk"].T + dv @ p[pre + "attn.wv"].T
        xhat1, inv1 = c["ln1"]
        dx_ln, dg1, db1 = _layer_norm_backward(dh, xhat1, inv1, p[pre + "ln1.g"])
        grads[pre + "ln1.g"] += dg1
        grads[pre + "ln1.b"] += db1
        dx = dx_mid + dx_ln

    # embeddings
    np.add.at(grads["tok_emb"], ids, dx)
    grads["pos_emb"][:n] += dx
    return loss, grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 3e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    state.step += 1
    t = state.step
    for name, g in grads.items():
        m = state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def train_toy_model(
    model: ToyTransformer,
    sequences: Sequence[Sequence[int]],
    *,
    steps: int = 300,
    batch_size: int = 8,
    lr: float = 3e-3,
    seed: int = 0,
    loss_tail: int | None = None,
) -> list[float]:
    """Train in place on next-token prediction with a causal mask.

    ``loss_tail`` restricts the loss to the last that many target positions of
    each sequence (the answer region), which speeds up small-scale learning.
    Returns the per-step mean batch loss.
    """
    if not sequences:
        raise ValueError("no training sequences")
    rng = rng_for(seed, "toy-train")
    state = AdamState.init(model.params)
    max_len = max(len(s) for s in sequences)
    mask = build_causal_mask(max_len)
    history: list[float] = []
    for _ in range(steps):
        picks = rng.integers(0, len(sequences), size=batch_size)
        batch_loss = 0.0
        summed: dict[str, np.ndarray] | None = None
        for idx in picks:
            seq = sequences[int(idx)]
            positions = None
            if loss_tail is not None:
                positions = np.zeros(len(seq) - 1, dtype=bool)
                positions[-loss_tail:] = True
            loss, grads = loss_and_grads(model, seq, mask, loss_positions=positions)
            batch_loss += loss
            if summed is None:
                summed = grads
            else:
                for name in summed:
                    summed[name] += grads[name]
        assert summed is not None
        for name in summed:
            summed[name] /= batch_size
        adam_step(model.params, summed, state, lr=lr)
        history.append(batch_loss / batch_size)
    return history
