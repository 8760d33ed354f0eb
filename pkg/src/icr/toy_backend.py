"""Deterministic attention sources that need no GPU and no checkpoint.

Two generators live here:

* ``ToyTransformer``: a small pre-norm transformer implemented directly in
  numpy. Every reduction is routed through ``np.einsum(optimize=False)``
  and the attention softmax is computed one row at a time over the slice
  ``[: k + 1]``, so the arithmetic for position ``k`` depends only on
  positions ``<= k``. Two prompts sharing a token prefix therefore produce
  bitwise-identical attention rows inside that prefix, which is the
  property the calibration pass relies on.

* ``synth_attention``: draws row-stochastic causal attention directly,
  with optional planted structure (a boosted target document and a
  position-biased distractor document). Useful for exercising the scoring
  pipeline with known ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention_core import AttentionSlice
from .errors import ContextOverflow, InvalidConfig, UnknownTargetDoc


@dataclass(frozen=True)
class ToyConfig:
    layers: int = 2
    heads: int = 2
    d_model: int = 32
    d_ff: int = 64
    vocab_size: int = 4096
    max_len: int = 2048
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1:
            raise InvalidConfig("layers and heads must be >= 1")
        if self.d_model < 1 or self.d_model % self.heads != 0:
            raise InvalidConfig("d_model must be a positive multiple of heads")
        if self.d_ff < 1 or self.vocab_size < 1 or self.max_len < 1:
            raise InvalidConfig("d_ff, vocab_size and max_len must be >= 1")


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mu = np.einsum("td->t", x, optimize=False)[:, None] / x.shape[1]
    d = x - mu
    var = np.einsum("td,td->t", d, d, optimize=False)[:, None] / x.shape[1]
    return d / np.sqrt(var + np.float32(1e-5)) * gain + bias


class ToyTransformer:
    """Pre-norm causal transformer; forward() returns all attention maps."""

    def __init__(self, config: ToyConfig = ToyConfig()):
        self.config = config
        rng = np.random.Generator(np.random.Philox(key=config.seed))
        c = config
        dh = c.d_model // c.heads

        def w(*shape, scale):
            return (rng.standard_normal(shape) * scale).astype(np.float32)

        self.tok_emb = w(c.vocab_size, c.d_model, scale=0.05)
        self.pos_emb = w(c.max_len, c.d_model, scale=0.05)
        self.layers = []
        s = 1.0 / np.sqrt(c.d_model)
        for _ in range(c.layers):
            self.layers.append(
                {
                    "ln1_g": np.ones(c.d_model, dtype=np.float32),
                    "ln1_b": np.zeros(c.d_model, dtype=np.float32),
                    "wq": w(c.heads, c.d_model, dh, scale=s),
                    "wk": w(c.heads, c.d_model, dh, scale=s),
                    "wv": w(c.heads, c.d_model, dh, scale=s),
                    "wo": w(c.heads, dh, c.d_model, scale=s),
                    "ln2_g": np.ones(c.d_model, dtype=np.float32),
                    "ln2_b": np.zeros(c.d_model, dtype=np.float32),
                    "w1": w(c.d_model, c.d_ff, scale=s),
                    "b1": np.zeros(c.d_ff, dtype=np.float32),
                    "w2": w(c.d_ff, c.d_model, scale=1.0 / np.sqrt(c.d_ff)),
                    "b2": np.zeros(c.d_model, dtype=np.float32),
                }
            )

    def forward_attentions(self, token_ids) -> np.ndarray:
        """Run the model and return attention of shape (L, H, T, T), float32.

        Rows are computed independently so that extending the prompt never
        changes the attention at earlier positions.
        """
        c = self.config
        ids = np.asarray(token_ids, dtype=np.int64)
        t_len = ids.shape[0]
        if t_len == 0:
            raise ContextOverflow("empty token sequence")
        if t_len > c.max_len:
            raise ContextOverflow(f"{t_len} tokens exceed max_len {c.max_len}")
        if ids.min() < 0 or ids.max() >= c.vocab_size:
            raise InvalidConfig("token id outside vocabulary")

        x = self.tok_emb[ids] + self.pos_emb[:t_len]
        attn_out = np.zeros((c.layers, c.heads, t_len, t_len), dtype=np.float32)
        dh = c.d_model // c.heads
        inv_sqrt = np.float32(1.0 / np.sqrt(dh))

        for li, p in enumerate(self.layers):
            h_in = _layer_norm(x, p["ln1_g"], p["ln1_b"])
            q = np.einsum("td,hde->the", h_in, p["wq"], optimize=False)
            k = np.einsum("td,hde->the", h_in, p["wk"], optimize=False)
            v = np.einsum("td,hde->the", h_in, p["wv"], optimize=False)

            ctx = np.zeros((t_len, c.heads, dh), dtype=np.float32)
            for t in range(t_len):
                # per-row softmax over [: t + 1] keeps position t independent
                # of anything to its right
                scores = np.einsum("he,she->hs", q[t], k[: t + 1], optimize=False)
                scores = scores * inv_sqrt
                scores = scores - scores.max(axis=1, keepdims=True)
                e = np.exp(scores)
                weights = e / e.sum(axis=1, keepdims=True)
                attn_out[li, :, t, : t + 1] = weights
                ctx[t] = np.einsum("hs,she->he", weights, v[: t + 1], optimize=False)

            proj = np.einsum("the,hed->td", ctx, p["wo"], optimize=False)
            x = x + proj
            h_in = _layer_norm(x, p["ln2_g"], p["ln2_b"])
            ff = np.einsum("td,df->tf", h_in, p["w1"], optimize=False) + p["b1"]
            ff = np.maximum(ff, np.float32(0.0))
            x = x + np.einsum("tf,fd->td", ff, p["w2"], optimize=False) + p["b2"]
        return attn_out

    def attention_slice(self, token_ids, row_indices) -> AttentionSlice:
        full = self.forward_attentions(token_ids)
        return AttentionSlice.from_full(full, row_indices)


def uniform_attention(
    total_len: int, row_indices, layers: int = 1, heads: int = 1
) -> AttentionSlice:
    """Causal-uniform rows: position k attends 1/(k+1) to each of 0..k."""
    rows = tuple(int(k) for k in row_indices)
    values = np.zeros((layers, heads, len(rows), total_len), dtype=np.float64)
    for r, k in enumerate(rows):
        values[:, :, r, : k + 1] = 1.0 / (k + 1)
    return AttentionSlice(layers, heads, total_len, rows, values)


def synth_attention(
    layout,
    *,
    layers: int = 2,
    heads: int = 2,
    seed: int = 0,
    boost_doc_id: str | None = None,
    boost: float = 6.0,
    bias_doc_id: str | None = None,
    bias: float = 40.0,
) -> AttentionSlice:
    """Draw synthetic row-stochastic attention for a layout's query rows.

    ``bias_doc_id`` marks a distractor document that receives a large,
    structural extra mass; generating the calibration pass with the same
    seed and bias plants the same structure there, which is exactly the
    effect calibration exists to cancel. ``boost_doc_id`` adds the
    relevance signal and should be set on the query pass only.
    Deterministic given (seed, geometry); rows are normalized in float64.
    """
    rows = tuple(range(layout.query_span[0], layout.query_span[1]))
    t_len = layout.total_len
    rng = np.random.Generator(np.random.Philox(key=seed))
    raw = 0.05 + rng.random((layers, heads, len(rows), t_len))

    for target, strength in ((bias_doc_id, bias), (boost_doc_id, boost)):
        if target is None:
            continue
        if target not in layout.doc_spans:
            raise UnknownTargetDoc(target)
        s, e = layout.doc_spans[target]
        raw[:, :, :, s:e] += strength

    for r, k in enumerate(rows):
        raw[:, :, r, k + 1 :] = 0.0
        head = raw[:, :, r, : k + 1]
        head /= head.sum(axis=-1, keepdims=True)
    return AttentionSlice(layers, heads, t_len, rows, raw)
