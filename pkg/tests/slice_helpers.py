import numpy as np


def random_slice(rng, layers, heads, total_len, rows):
    """Row-stochastic causal attention with the given query rows."""
    from icr.attention_core import AttentionSlice

    values = np.zeros((layers, heads, len(rows), total_len), dtype=np.float64)
    for r, k in enumerate(rows):
        raw = rng.random((layers, heads, k + 1)) + 1e-3
        values[:, :, r, : k + 1] = raw / raw.sum(axis=-1, keepdims=True)
    return AttentionSlice(layers, heads, total_len, tuple(rows), values)
