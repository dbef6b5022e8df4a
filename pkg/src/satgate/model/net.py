"""The satisfaction predictor: per-turn transformer encoding, cross-turn
attention, and a max-pooled head, in float64 numpy with exact analytic
gradients.

Per turn, a text stack attends over the query and voice-response tokens (an
aggregate slot ahead of the text collects the summary) and a structured stack
attends over {domain-intent, slots, result item, text summary}. Turn
embeddings, offset-tagged by distance from the current turn, feed a scaled
dot-product attention of the current turn over its predecessors; each turn's
embedding concatenated with that attention output passes through a shared
fully-connected layer, an elementwise max over real turns, and a sigmoid
unit. Turns are encoded once per pool row and gathered into windows, so
overlapping windows share the heavy per-turn work.
"""

from __future__ import annotations

import math

import numpy as np

from ..dialog import DialogueTurn
from .config import PredictorConfig
from .data import Batch, encode_window
from .vocab import Vocabulary

__all__ = [
    "init_params",
    "zeros_grads",
    "attend_turns",
    "encode_turn",
    "forward",
    "loss",
    "backward",
    "forward_batch",
    "loss_and_grad_batch",
    "predict_scores",
]

_MASK_OFF = 1e30  # additive logit penalty; exp underflows to exactly 0
_LOGIT_CLIP = 36.0  # keeps sigmoid strictly inside (0, 1) in float64
_LN_EPS = 1e-6


# --- primitives -----------------------------------------------------------


# tanh keeps every path smooth (finite-difference checks stay tight) and its
# derivative falls out of the cached activation.
def _act(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def _act_grad_from_out(out: np.ndarray) -> np.ndarray:
    return 1.0 - out * out


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax_last(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def _ln_forward(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return xhat * gain + bias, (xhat, inv)


def _ln_backward(dy, gain, cache):
    xhat, inv = cache
    axes = tuple(range(dy.ndim - 1))
    d_gain = (dy * xhat).sum(axis=axes)
    d_bias = dy.sum(axis=axes)
    dxhat = dy * gain
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, d_gain, d_bias


def attend_turns(query_vec, keys, values, d: float) -> np.ndarray:
    """Scaled dot-product attention of one query over previous-turn rows:
    softmax(q K^T / sqrt(d)) V."""
    q = np.asarray(query_vec, dtype=np.float64).reshape(-1)
    K = np.atleast_2d(np.asarray(keys, dtype=np.float64))
    V = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if d <= 0:
        raise ValueError(f"attention scale d must be positive, got {d!r}")
    if K.shape != V.shape or K.shape[1] != q.shape[0] or K.shape[0] < 1:
        raise ValueError(
            f"shape mismatch: query {q.shape}, keys {K.shape}, values {V.shape}"
        )
    weights = _softmax_last(K @ q / math.sqrt(d))
    return weights @ V


# --- parameters -----------------------------------------------------------


def _block_prefixes(config: PredictorConfig) -> list[str]:
    return [f"text{b}." for b in range(config.text_blocks)] + [
        f"struct{b}." for b in range(config.struct_blocks)
    ]


def init_params(config: PredictorConfig, vocab: Vocabulary, seed: int = 0) -> dict:
    """Fresh parameter dictionary; every array is float64."""
    rng = np.random.default_rng(seed)
    D, F, T = config.embed_dim, config.ffn_dim, config.num_turns
    L = config.max_text_len + 1

    def normal(shape, scale):
        return rng.normal(0.0, scale, shape)

    def linear(p, name, nin, nout):
        p[name + "_W"] = normal((nin, nout), math.sqrt(2.0 / (nin + nout)))
        p[name + "_b"] = np.zeros(nout)

    p: dict[str, np.ndarray] = {}
    p["tok_emb"] = normal((vocab.n_tokens, D), 0.1)
    p["pos_emb"] = normal((L, D), 0.1)
    p["dom_emb"] = normal((vocab.n_domains, D), 0.1)
    p["slotkey_emb"] = normal((vocab.n_slot_keys, D), 0.1)
    p["item_emb"] = normal((vocab.n_items, D), 0.1)
    p["turn_offset_emb"] = normal((T, D), 0.1)
    p["null_turn"] = normal((D,), 0.1)

    for prefix in _block_prefixes(config):
        for name in ("Wq", "Wk", "Wv", "Wo"):
            p[prefix + name] = normal((D, D), math.sqrt(1.0 / D))
            p[prefix + name.replace("W", "b")] = np.zeros(D)
        p[prefix + "ln1_g"] = np.ones(D)
        p[prefix + "ln1_b"] = np.zeros(D)
        linear(p, prefix + "ffn1", D, F)
        linear(p, prefix + "ffn2", F, D)
        p[prefix + "ln2_g"] = np.ones(D)
        p[prefix + "ln2_b"] = np.zeros(D)

    linear(p, "cross_q", D, D)
    linear(p, "cross_k", D, D)
    linear(p, "cross_v", D, D)
    linear(p, "head", 2 * D, D)
    p["out_w"] = normal((D,), math.sqrt(1.0 / D))
    p["out_b"] = np.zeros(())
    return p


def zeros_grads(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


# --- transformer block ----------------------------------------------------


def _block_forward(params, prefix, x, key_mask, num_heads):
    """Post-norm block: x -> LN(x + MHA(x)) -> LN(. + FFN(.)).

    ``key_mask`` of shape (N, L) removes padded positions from every
    attention softmax; None means all positions are real.
    """
    N, L, D = x.shape
    H = num_heads
    hd = D // H

    Wqkv = np.concatenate(
        [params[prefix + "Wq"], params[prefix + "Wk"], params[prefix + "Wv"]], axis=1
    )
    bqkv = np.concatenate(
        [params[prefix + "bq"], params[prefix + "bk"], params[prefix + "bv"]]
    )
    qkv = x @ Wqkv + bqkv  # (N, L, 3D)

    def heads(m):
        return m.reshape(N, L, H, hd).transpose(0, 2, 1, 3)

    q = heads(qkv[..., :D])
    k = heads(qkv[..., D : 2 * D])
    v = heads(qkv[..., 2 * D :])
    logits = q @ k.swapaxes(-1, -2) / math.sqrt(hd)
    if key_mask is not None:
        logits = logits + (key_mask[:, None, None, :] - 1.0) * _MASK_OFF
    A = _softmax_last(logits)
    ctx = (A @ v).transpose(0, 2, 1, 3).reshape(N, L, D)
    attn = ctx @ params[prefix + "Wo"] + params[prefix + "bo"]

    x1, ln1 = _ln_forward(x + attn, params[prefix + "ln1_g"], params[prefix + "ln1_b"])
    gu = _act(x1 @ params[prefix + "ffn1_W"] + params[prefix + "ffn1_b"])
    f = gu @ params[prefix + "ffn2_W"] + params[prefix + "ffn2_b"]
    x2, ln2 = _ln_forward(x1 + f, params[prefix + "ln2_g"], params[prefix + "ln2_b"])

    cache = {"x": x, "q": q, "k": k, "v": v, "A": A, "ctx": ctx, "Wqkv": Wqkv,
             "ln1": ln1, "x1": x1, "gu": gu, "ln2": ln2}
    return x2, cache


def _block_backward(params, grads, prefix, dy, cache, num_heads):
    x, q, k, v, A, ctx = (cache[n] for n in ("x", "q", "k", "v", "A", "ctx"))
    x1, gu = cache["x1"], cache["gu"]
    N, L, D = x.shape
    H = num_heads
    hd = D // H

    dres2, dg, db = _ln_backward(dy, params[prefix + "ln2_g"], cache["ln2"])
    grads[prefix + "ln2_g"] += dg
    grads[prefix + "ln2_b"] += db

    d_f = dres2
    grads[prefix + "ffn2_W"] += gu.reshape(-1, gu.shape[-1]).T @ d_f.reshape(-1, D)
    grads[prefix + "ffn2_b"] += d_f.sum(axis=(0, 1))
    d_u = (d_f @ params[prefix + "ffn2_W"].T) * _act_grad_from_out(gu)
    grads[prefix + "ffn1_W"] += x1.reshape(-1, D).T @ d_u.reshape(-1, d_u.shape[-1])
    grads[prefix + "ffn1_b"] += d_u.sum(axis=(0, 1))
    d_x1 = dres2 + d_u @ params[prefix + "ffn1_W"].T

    dres1, dg, db = _ln_backward(d_x1, params[prefix + "ln1_g"], cache["ln1"])
    grads[prefix + "ln1_g"] += dg
    grads[prefix + "ln1_b"] += db

    d_attn = dres1
    grads[prefix + "Wo"] += ctx.reshape(-1, D).T @ d_attn.reshape(-1, D)
    grads[prefix + "bo"] += d_attn.sum(axis=(0, 1))
    d_ctx = (d_attn @ params[prefix + "Wo"].T).reshape(N, L, H, hd).transpose(0, 2, 1, 3)

    d_A = d_ctx @ v.swapaxes(-1, -2)
    d_v = A.swapaxes(-1, -2) @ d_ctx
    d_logits = A * (d_A - (d_A * A).sum(axis=-1, keepdims=True))
    d_q = d_logits @ k / math.sqrt(hd)
    d_k = d_logits.swapaxes(-1, -2) @ q / math.sqrt(hd)

    def unheads(m):
        return m.transpose(0, 2, 1, 3).reshape(N, L, D)

    d_qkv = np.concatenate([unheads(d_q), unheads(d_k), unheads(d_v)], axis=-1)
    gW = x.reshape(-1, D).T @ d_qkv.reshape(-1, 3 * D)
    grads[prefix + "Wq"] += gW[:, :D]
    grads[prefix + "Wk"] += gW[:, D : 2 * D]
    grads[prefix + "Wv"] += gW[:, 2 * D :]
    gb = d_qkv.sum(axis=(0, 1))
    grads[prefix + "bq"] += gb[:D]
    grads[prefix + "bk"] += gb[D : 2 * D]
    grads[prefix + "bv"] += gb[2 * D :]
    return dres1 + d_qkv @ cache["Wqkv"].T


# --- per-turn encoding over the pool ---------------------------------------


def _encode_pool(params, config: PredictorConfig, batch: Batch, want_cache: bool):
    """Turn embeddings E (pool rows), running both per-turn stacks once per
    pool row."""
    M, L = batch.text_ids.shape
    D = config.embed_dim
    tok = params["tok_emb"]

    x = tok[batch.text_ids] + params["pos_emb"][None, :, :]
    tmask = batch.text_mask
    text_caches = []
    for b in range(config.text_blocks):
        x, c = _block_forward(params, f"text{b}.", x, tmask, config.num_heads)
        if want_cache:
            text_caches.append(c)
    summary = x[:, 0, :]

    key_mask = batch.slot_key_mask
    val_mask = batch.slot_val_mask
    val_cnt = np.maximum(val_mask.sum(axis=-1), 1.0)
    val_mean = (tok[batch.slot_val_ids] * val_mask[..., None]).sum(axis=2) / val_cnt[..., None]
    slot_tok = params["slotkey_emb"][batch.slot_key_ids] + val_mean
    key_cnt = np.maximum(key_mask.sum(axis=-1), 1.0)
    slot_vec = (slot_tok * key_mask[..., None]).sum(axis=1) / key_cnt[..., None]

    y = np.stack(
        [params["dom_emb"][batch.dom_ids], slot_vec, params["item_emb"][batch.item_ids], summary],
        axis=1,
    )
    struct_caches = []
    for b in range(config.struct_blocks):
        y, c = _block_forward(params, f"struct{b}.", y, None, config.num_heads)
        if want_cache:
            struct_caches.append(c)
    E = y.mean(axis=1)
    cache = {
        "text_caches": text_caches,
        "struct_caches": struct_caches,
        "val_cnt": val_cnt,
        "key_cnt": key_cnt,
    } if want_cache else None
    return E, cache


def _encode_pool_backward(params, grads, config, batch: Batch, cache, d_E):
    M, L = batch.text_ids.shape
    D = config.embed_dim
    d_y = np.broadcast_to(d_E[:, None, :] / 4.0, (M, 4, D)).copy()
    for b in range(config.struct_blocks - 1, -1, -1):
        d_y = _block_backward(
            params, grads, f"struct{b}.", d_y, cache["struct_caches"][b], config.num_heads
        )
    np.add.at(grads["dom_emb"], batch.dom_ids, d_y[:, 0, :])
    d_slot_vec = d_y[:, 1, :]
    np.add.at(grads["item_emb"], batch.item_ids, d_y[:, 2, :])
    d_summary = d_y[:, 3, :]

    key_mask, val_mask = batch.slot_key_mask, batch.slot_val_mask
    d_slot_tok = d_slot_vec[:, None, :] * key_mask[..., None] / cache["key_cnt"][:, None, None]
    np.add.at(grads["slotkey_emb"], batch.slot_key_ids.ravel(), d_slot_tok.reshape(-1, D))
    d_val_emb = (
        d_slot_tok[:, :, None, :] * val_mask[..., None] / cache["val_cnt"][..., None, None]
    )
    np.add.at(grads["tok_emb"], batch.slot_val_ids.ravel(), d_val_emb.reshape(-1, D))

    d_x = np.zeros((M, L, D))
    d_x[:, 0, :] = d_summary
    for b in range(config.text_blocks - 1, -1, -1):
        d_x = _block_backward(
            params, grads, f"text{b}.", d_x, cache["text_caches"][b], config.num_heads
        )
    np.add.at(grads["tok_emb"], batch.text_ids.ravel(), d_x.reshape(-1, D))
    grads["pos_emb"] += d_x.sum(axis=0)


# --- full model -----------------------------------------------------------


def forward_batch(params: dict, config: PredictorConfig, batch: Batch, want_cache: bool = False):
    """Probabilities for a batch of windows; optionally keep the activation
    cache for the matching backward pass."""
    B, T = batch.window_rows.shape
    D = config.embed_dim

    E, pool_cache = _encode_pool(params, config, batch, want_cache)

    # Turn-order information by distance from the current turn, so that front
    # padding never shifts a real turn's offset.
    offsets = np.arange(T - 1, -1, -1)
    tm = batch.turn_mask
    e_real = E[batch.window_rows] + params["turn_offset_emb"][offsets][None, :, :]
    e = np.where(tm[..., None] > 0, e_real, params["null_turn"][None, None, :])

    q_cur = e[:, T - 1, :]
    Q = q_cur @ params["cross_q_W"] + params["cross_q_b"]
    K = e @ params["cross_k_W"] + params["cross_k_b"]
    V = e @ params["cross_v_W"] + params["cross_v_b"]
    pmask = tm.copy()
    pmask[:, T - 1] = 0.0
    no_prev = pmask.sum(axis=1) == 0
    pmask[no_prev, T - 1] = 1.0  # a session's first turn attends to itself
    logits = (Q[:, None, :] * K).sum(axis=-1) / math.sqrt(config.attention_scale)
    A = _softmax_last(logits + (pmask - 1.0) * _MASK_OFF)
    O = (A[..., None] * V).sum(axis=1)

    z = np.concatenate([e, np.broadcast_to(O[:, None, :], (B, T, D))], axis=-1)
    a = _act(z @ params["head_W"] + params["head_b"])
    a_masked = np.where(tm[..., None] > 0, a, -np.inf)
    arg = a_masked.argmax(axis=1)
    mvec = np.take_along_axis(a_masked, arg[:, None, :], axis=1)[:, 0, :]
    logit = mvec @ params["out_w"] + params["out_b"]
    clip_ok = np.abs(logit) < _LOGIT_CLIP
    p = _sigmoid(np.clip(logit, -_LOGIT_CLIP, _LOGIT_CLIP))

    if not want_cache:
        return p, None
    cache = {
        "pool": pool_cache, "tm": tm, "e": e, "q_cur": q_cur,
        "Q": Q, "K": K, "V": V, "A": A, "z": z, "a": a, "arg": arg,
        "mvec": mvec, "clip_ok": clip_ok, "p": p,
    }
    return p, cache


def _backward_batch(params, config, batch, cache, d_logit):
    """Gradients of sum_i d_logit[i] * logit_i with respect to every parameter."""
    B, T = batch.window_rows.shape
    D = config.embed_dim
    grads = zeros_grads(params)
    tm = cache["tm"]

    d_logit = d_logit * cache["clip_ok"]
    grads["out_w"] += cache["mvec"].T @ d_logit
    grads["out_b"] += d_logit.sum()
    d_m = d_logit[:, None] * params["out_w"][None, :]

    d_a = np.zeros((B, T, D))
    b_idx = np.arange(B)[:, None]
    d_idx = np.arange(D)[None, :]
    d_a[b_idx, cache["arg"], d_idx] = d_m
    d_uh = d_a * _act_grad_from_out(cache["a"])
    grads["head_W"] += cache["z"].reshape(-1, 2 * D).T @ d_uh.reshape(-1, D)
    grads["head_b"] += d_uh.sum(axis=(0, 1))
    d_z = d_uh @ params["head_W"].T
    d_e = d_z[..., :D].copy()
    d_O = d_z[..., D:].sum(axis=1)

    A, V, K, Q = cache["A"], cache["V"], cache["K"], cache["Q"]
    d_A = (d_O[:, None, :] * V).sum(axis=-1)
    d_V = A[..., None] * d_O[:, None, :]
    d_lg = A * (d_A - (d_A * A).sum(axis=1, keepdims=True))
    scale = 1.0 / math.sqrt(config.attention_scale)
    d_Q = (d_lg[..., None] * K).sum(axis=1) * scale
    d_K = d_lg[..., None] * Q[:, None, :] * scale

    grads["cross_q_W"] += cache["q_cur"].T @ d_Q
    grads["cross_q_b"] += d_Q.sum(axis=0)
    d_e[:, T - 1, :] += d_Q @ params["cross_q_W"].T
    e_flat = cache["e"].reshape(B * T, D)
    for name, dm in (("cross_k", d_K), ("cross_v", d_V)):
        grads[name + "_W"] += e_flat.T @ dm.reshape(B * T, D)
        grads[name + "_b"] += dm.sum(axis=(0, 1))
        d_e += dm @ params[name + "_W"].T

    # Padded slots were replaced by the null embedding; nothing downstream
    # reads them, so their gradient, and the null embedding's, stays zero.
    d_e_real = d_e * tm[..., None]
    grads["null_turn"] += (d_e * (1.0 - tm[..., None])).sum(axis=(0, 1))
    offsets = np.arange(T - 1, -1, -1)
    np.add.at(grads["turn_offset_emb"], offsets, d_e_real.sum(axis=0))

    d_E = np.zeros((batch.pool_size, D))
    np.add.at(d_E, batch.window_rows.ravel(), d_e_real.reshape(B * T, D))
    _encode_pool_backward(params, grads, config, batch, cache["pool"], d_E)
    return grads


def loss(p: float, label: float) -> float:
    """Cross entropy between a predicted probability and a (possibly soft)
    satisfaction label."""
    p = float(p)
    y = float(label)
    if not (0.0 < p < 1.0):
        raise ValueError(f"prediction must lie strictly in (0, 1), got {p!r}")
    if not (0.0 <= y <= 1.0):
        raise ValueError(f"label must lie in [0, 1], got {y!r}")
    return -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))


def loss_and_grad_batch(params, config, batch: Batch, microbatch: int = 256):
    """Mean cross-entropy over the batch and its exact gradient.

    Windows are processed in fixed index order, in chunks, and per-window
    gradients are summed before the final division, so the result does not
    depend on the chunk size.
    """
    n = len(batch)
    total = zeros_grads(params)
    loss_sum = 0.0
    p_all = np.zeros(n)
    for start in range(0, n, microbatch):
        idx = np.arange(start, min(start + microbatch, n))
        sub = batch.subset(idx)
        p, cache = forward_batch(params, config, sub, want_cache=True)
        y = sub.labels
        loss_sum += float(-np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))
        g = _backward_batch(params, config, sub, cache, p - y)
        for key in total:
            total[key] += g[key]
        p_all[idx] = p
    for key in total:
        total[key] /= n
    return loss_sum / n, total, p_all


def predict_scores(params, config, batch: Batch, microbatch: int = 1024) -> np.ndarray:
    """Forward-only probabilities for every window in the batch."""
    n = len(batch)
    out = np.zeros(n)
    for start in range(0, n, microbatch):
        idx = np.arange(start, min(start + microbatch, n))
        p, _ = forward_batch(params, config, batch.subset(idx), want_cache=False)
        out[idx] = p
    return out


# --- single-window public operations --------------------------------------


def encode_turn(params, config, vocab: Vocabulary, turn: DialogueTurn) -> np.ndarray:
    """Embedding vector of one turn (both per-turn stacks, before turn-order
    tagging and cross-turn attention)."""
    batch = encode_window([turn], vocab, config)
    E, _ = _encode_pool(params, config, batch, want_cache=False)
    return E[0]


def forward(params, config, vocab: Vocabulary, window: list[DialogueTurn]) -> float:
    """Satisfaction probability for the last turn of the window."""
    batch = encode_window(list(window), vocab, config)
    p, _ = forward_batch(params, config, batch, want_cache=False)
    return float(p[0])


def backward(params, config, vocab: Vocabulary, window: list[DialogueTurn], label: float) -> dict:
    """Exact gradient of loss(forward(window), label) for every parameter."""
    batch = encode_window(list(window), vocab, config, label=float(label))
    p, cache = forward_batch(params, config, batch, want_cache=True)
    return _backward_batch(params, config, batch, cache, p - batch.labels)
