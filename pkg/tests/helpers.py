"""Loop-based reference implementations used as oracles in the tests.

These stay deliberately naive (explicit python loops, no vectorization) and
independent of the library's forward paths.
"""

import numpy as np


def brute_force_attention(q_in: np.ndarray, kv_in: np.ndarray, attn) -> tuple[np.ndarray, np.ndarray]:
    """Per-position multi-head attention with explicit loops.

    ``attn`` is a MultiHeadAttention module; reads its projection weights.
    Returns (output, weights[h, Lq, Lk]) for unbatched 2-D inputs.
    """
    wq = attn.wq.weight.data
    wk = attn.wk.weight.data
    wv = attn.wv.weight.data
    wo = attn.wo.weight.data
    heads, d = attn.heads, attn.head_dim
    lq, lk = q_in.shape[0], kv_in.shape[0]

    q = q_in @ wq
    k = kv_in @ wk
    v = kv_in @ wv
    weights = np.zeros((heads, lq, lk))
    head_outputs = np.zeros((lq, heads, d))
    for h in range(heads):
        qs = q[:, h * d : (h + 1) * d]
        ks = k[:, h * d : (h + 1) * d]
        vs = v[:, h * d : (h + 1) * d]
        for i in range(lq):
            scores = np.empty(lk)
            for j in range(lk):
                scores[j] = float(np.dot(qs[i], ks[j])) / np.sqrt(d)
            scores -= scores.max()
            e = np.exp(scores)
            w = e / e.sum()
            weights[h, i] = w
            acc = np.zeros(d)
            for j in range(lk):
                acc += w[j] * vs[j]
            head_outputs[i, h] = acc
    out = head_outputs.reshape(lq, heads * d) @ wo
    return out, weights


def layer_norm_reference(x: np.ndarray, gain: np.ndarray, shift: np.ndarray, eps=1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + shift


def brute_force_attention_block(x: np.ndarray, block, context: np.ndarray | None = None):
    """Full post-norm block with the loop attention core."""
    ctx = x if context is None else context
    attended, weights = brute_force_attention(x, ctx, block.attention)
    y = layer_norm_reference(x + attended, block.norm1.gain.data, block.norm1.shift.data)
    hidden = np.maximum(y @ block.ffn.lin1.weight.data + block.ffn.lin1.bias.data, 0.0)
    ff = hidden @ block.ffn.lin2.weight.data + block.ffn.lin2.bias.data
    out = layer_norm_reference(y + ff, block.norm2.gain.data, block.norm2.shift.data)
    return out, weights


def brute_force_semgcn(nodes: np.ndarray, layer, adjacency: np.ndarray) -> np.ndarray:
    """Mask, per-row softmax over the support, weighted neighbour sum, then
    the shared linear transform; explicit loops throughout."""
    k = adjacency.shape[0]
    relation = layer.relation.data
    prop = np.zeros((k, k))
    for i in range(k):
        support = [j for j in range(k) if adjacency[i, j] > 0]
        scores = np.array([relation[i, j] for j in support])
        scores -= scores.max()
        e = np.exp(scores)
        w = e / e.sum()
        for idx, j in enumerate(support):
            prop[i, j] = w[idx]
    mixed = np.zeros_like(nodes)
    for i in range(k):
        for j in range(k):
            mixed[i] += prop[i, j] * nodes[j]
    return mixed @ layer.weight.data


def brute_force_keypoint_vectors(x_kpt: np.ndarray, x_vec: np.ndarray) -> np.ndarray:
    """Nested-loop double sum over pixels."""
    h, w, k = x_kpt.shape
    d = x_vec.shape[-1]
    out = np.zeros((k, d))
    for c in range(k):
        for i in range(h):
            for j in range(w):
                out[c] += x_kpt[i, j, c] * x_vec[i, j]
    return out


def brute_force_cam(x_kpt: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Per-pixel dot product of feature channels with one weight column per
    category, then relu."""
    h, w, k = x_kpt.shape
    out = np.zeros((h, w, weight.shape[1]))
    for c in range(weight.shape[1]):
        for i in range(h):
            for j in range(w):
                out[i, j, c] = max(float(np.dot(x_kpt[i, j], weight[:, c])), 0.0)
    return out
