"""
Transformer building blocks on the tape engine: linear maps, multi-head
attention, MLPs and pre-norm blocks. Parameters are addressed by dotted
prefixes inside a ModelParams store.
"""

from typing import Optional

import numpy as np

from tools.params import ModelParams
from tools.tensor import (
    Tensor, add, add_constant, concat_cols, gelu, layer_norm, matmul,
    scale, slice_cols, softmax, transpose,
)

MASK_VALUE = -1e30


def init_linear(params: ModelParams, rng: np.random.Generator, prefix: str,
                d_in: int, d_out: int, std: float, bias: bool = True):
    params.add(f"{prefix}.weight", rng.normal(0.0, std, size=(d_in, d_out)))
    if bias:
        params.add(f"{prefix}.bias", np.zeros(d_out))


def init_norm(params: ModelParams, prefix: str, dim: int):
    params.add(f"{prefix}.gamma", np.ones(dim))
    params.add(f"{prefix}.beta", np.zeros(dim))


def init_attention(params: ModelParams, rng: np.random.Generator, prefix: str,
                   dim: int, std: float, kv_dim: Optional[int] = None):
    kv_dim = kv_dim or dim
    init_linear(params, rng, f"{prefix}.q", dim, dim, std)
    init_linear(params, rng, f"{prefix}.k", kv_dim, dim, std)
    init_linear(params, rng, f"{prefix}.v", kv_dim, dim, std)
    init_linear(params, rng, f"{prefix}.out", dim, dim, std)


def init_mlp(params: ModelParams, rng: np.random.Generator, prefix: str,
             dim: int, ratio: int, std: float):
    init_linear(params, rng, f"{prefix}.fc1", dim, dim * ratio, std)
    init_linear(params, rng, f"{prefix}.fc2", dim * ratio, dim, std)


def init_block(params: ModelParams, rng: np.random.Generator, prefix: str,
               dim: int, mlp_ratio: int, std: float):
    """Pre-norm self-attention block: ln1, attn, ln2, mlp."""
    init_norm(params, f"{prefix}.ln1", dim)
    init_attention(params, rng, f"{prefix}.attn", dim, std)
    init_norm(params, f"{prefix}.ln2", dim)
    init_mlp(params, rng, f"{prefix}.mlp", dim, mlp_ratio, std)


def linear(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    out = matmul(x, params[f"{prefix}.weight"])
    bias = params.get(f"{prefix}.bias")
    return add(out, bias) if bias is not None else out


def norm(x: Tensor, params: ModelParams, prefix: str, eps: float = 1e-5) -> Tensor:
    return layer_norm(x, params[f"{prefix}.gamma"], params[f"{prefix}.beta"], eps)


def causal_mask(length: int) -> np.ndarray:
    """Additive mask hiding every position j > i from query i."""
    return np.triu(np.full((length, length), MASK_VALUE), k=1)


def attention(queries: Tensor, context: Tensor, params: ModelParams, prefix: str,
              heads: int, causal: bool = False) -> Tensor:
    """
    Multi-head scaled dot-product attention.

    Args:
        queries: [n_q x dim] query-side inputs
        context: [n_k x kv_dim] key/value-side inputs
        params: Parameter store
        prefix: Prefix of the q/k/v/out projections
        heads: Number of heads
        causal: Mask keys after each query position (requires n_q == n_k)
    """
    q = linear(queries, params, f"{prefix}.q")
    k = linear(context, params, f"{prefix}.k")
    v = linear(context, params, f"{prefix}.v")
    dim = q.shape[1]
    head_dim = dim // heads
    mask = causal_mask(q.shape[0]) if causal else None

    outputs = []
    for h in range(heads):
        lo, hi = h * head_dim, (h + 1) * head_dim
        qh = slice_cols(q, lo, hi)
        kh = slice_cols(k, lo, hi)
        vh = slice_cols(v, lo, hi)
        scores = scale(matmul(qh, transpose(kh)), 1.0 / np.sqrt(head_dim))
        if mask is not None:
            scores = add_constant(scores, mask)
        outputs.append(matmul(softmax(scores, axis=-1), vh))
    merged = outputs[0] if heads == 1 else concat_cols(outputs)
    return linear(merged, params, f"{prefix}.out")


def mlp(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    return linear(gelu(linear(x, params, f"{prefix}.fc1")), params, f"{prefix}.fc2")


def block(x: Tensor, params: ModelParams, prefix: str, heads: int, causal: bool = False) -> Tensor:
    """x + attn(ln1(x)), then + mlp(ln2(.))."""
    h = norm(x, params, f"{prefix}.ln1")
    x = add(x, attention(h, h, params, f"{prefix}.attn", heads, causal=causal))
    return add(x, mlp(norm(x, params, f"{prefix}.ln2"), params, f"{prefix}.mlp"))
