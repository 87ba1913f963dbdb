"""Reference forward kernels: ROI bias, ego-view attention, cross-agent
masked attention and the FFN refinement.

Feature maps are (L, D) row matrices; projections multiply on the right
(``f @ query`` etc.).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erf

from .conditioning import BACKGROUND, VSTAR_OBJECT, TokenLabeling
from .errors import (
    InvalidThresholds,
    NeighborBiasMismatch,
    ShapeMismatch,
    UnknownVertex,
    ValidationError,
)
from .viewgraph import ViewGraph, ViewVertex, neighbors

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 1.0
DEFAULT_TAU_O = 30.0
DEFAULT_TAU_B = 1.0
LAYERNORM_EPS = 1e-5


@dataclass(frozen=True, eq=False)
class FeatureMap:
    values: np.ndarray
    vertex: ViewVertex | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeMismatch("feature map must be 2-D (L, D)")
        if not np.all(np.isfinite(v)):
            raise ValidationError("feature map has non-finite entries")
        object.__setattr__(self, "values", v)
        if self.vertex is not None:
            object.__setattr__(self, "vertex", ViewVertex(*self.vertex))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class AttentionWeights:
    query: np.ndarray  # (D, d_k)
    key: np.ndarray  # (D, d_k)
    value: np.ndarray  # (D, D)
    ffn_in: np.ndarray  # (D, H)
    ffn_out: np.ndarray  # (H, D)
    ln_scale: np.ndarray  # (D,)
    ln_shift: np.ndarray  # (D,)

    def __post_init__(self):
        for name in ("query", "key", "value", "ffn_in", "ffn_out", "ln_scale", "ln_shift"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        D, dk = self.query.shape
        if self.key.shape != (D, dk) or self.value.shape != (D, D):
            raise ShapeMismatch("query/key/value shapes are inconsistent")
        if self.ffn_in.ndim != 2 or self.ffn_in.shape[0] != D or self.ffn_out.shape != self.ffn_in.shape[::-1]:
            raise ShapeMismatch("FFN weight shapes are inconsistent")
        if self.ln_scale.shape != (D,) or self.ln_shift.shape != (D,):
            raise ShapeMismatch("layer-norm parameters must have length D")

    @property
    def dim(self) -> int:
        return self.query.shape[0]

    @property
    def key_dim(self) -> int:
        return self.query.shape[1]

    def as_dict(self) -> dict:
        return {n: getattr(self, n) for n in ("query", "key", "value", "ffn_in", "ffn_out", "ln_scale", "ln_shift")}

    @classmethod
    def random(cls, rng: np.random.Generator, dim: int, key_dim: int, hidden: int | None = None, scale: float = 1.0):
        hidden = hidden or 2 * dim
        return cls(
            query=rng.normal(0, scale / math.sqrt(dim), (dim, key_dim)),
            key=rng.normal(0, scale / math.sqrt(dim), (dim, key_dim)),
            value=rng.normal(0, scale / math.sqrt(dim), (dim, dim)),
            ffn_in=rng.normal(0, 1 / math.sqrt(dim), (dim, hidden)),
            ffn_out=rng.normal(0, 1 / math.sqrt(hidden), (hidden, dim)),
            ln_scale=1.0 + 0.1 * rng.normal(size=dim),
            ln_shift=0.1 * rng.normal(size=dim),
        )


@dataclass(frozen=True, eq=False)
class BiasMatrix:
    values: np.ndarray
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    tau_o: float = DEFAULT_TAU_O
    tau_b: float = DEFAULT_TAU_B


def _pair_table(ids_q: np.ndarray, ids_k: np.ndarray, same_instance) -> np.ndarray:
    if same_instance is None:
        return ids_q[:, None] == ids_k[None, :]
    pairs = {(int(a), int(b)) for a, b in same_instance}
    uq, iq = np.unique(ids_q, return_inverse=True)
    uk, ik = np.unique(ids_k, return_inverse=True)
    table = np.array([[(int(a), int(b)) in pairs for b in uk] for a in uq], dtype=bool).reshape(len(uq), len(uk))
    return table[iq][:, ik]


def build_roi_bias(
    lab_q: TokenLabeling,
    lab_k: TokenLabeling,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    tau_o: float = DEFAULT_TAU_O,
    tau_b: float = DEFAULT_TAU_B,
    same_instance: Iterable | None = None,
) -> BiasMatrix:
    """Additive bias ``alpha * S + beta * B`` between query and key tokens.

    ``same_instance`` lists (query_id, key_id) pairs that denote the same
    shared object; ``None`` pairs equal ids. Background pairs are not
    suppressed; any other non-shared pair with differing ids is.
    """
    if not (tau_o > tau_b > 0):
        raise InvalidThresholds(f"need tau_o > tau_b > 0, got tau_o={tau_o}, tau_b={tau_b}")
    vq = lab_q.categories == VSTAR_OBJECT
    vk = lab_k.categories == VSTAR_OBJECT
    same = vq[:, None] & vk[None, :] & _pair_table(lab_q.object_ids, lab_k.object_ids, same_instance)
    strong = (vq[:, None] ^ vk[None, :]) | (vq[:, None] & vk[None, :] & ~same)
    bq = lab_q.categories == BACKGROUND
    bk = lab_k.categories == BACKGROUND
    # bg-bg pairs stay unsuppressed; bg vs object always counts as different
    different = (bq[:, None] ^ bk[None, :]) | (
        ~bq[:, None] & ~bk[None, :] & (lab_q.object_ids[:, None] != lab_k.object_ids[None, :])
    )
    weak = ~vq[:, None] & ~vk[None, :] & different
    values = np.where(strong, -alpha * tau_o, np.where(weak, -beta * tau_b, 0.0))
    return BiasMatrix(values, alpha, beta, tau_o, tau_b)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def attention_weights(f_q: np.ndarray, f_k: np.ndarray, w: AttentionWeights, bias=None) -> np.ndarray:
    logits = (f_q @ w.query) @ (f_k @ w.key).T / math.sqrt(w.key_dim)
    if bias is not None:
        logits = logits + bias
    return softmax(logits)


def _check_dim(f: np.ndarray, w: AttentionWeights) -> None:
    if f.shape[1] != w.dim:
        raise ShapeMismatch(f"feature width {f.shape[1]} does not match weights width {w.dim}")


def ego_view_attention(features: Sequence[FeatureMap], g_in: ViewGraph, w: AttentionWeights) -> list:
    """Residual neighbor attention along intra-agent edges."""
    by_vertex = {f.vertex: f.values for f in features}
    shapes = {f.shape for f in features}
    if len(shapes) > 1:
        raise ShapeMismatch("all feature maps must share (L, D)")
    out = []
    for f in features:
        _check_dim(f.values, w)
        if f.vertex not in g_in.vertices:
            raise UnknownVertex(f"feature vertex {f.vertex} not in graph")
        acc = f.values.copy()
        for nb in neighbors(g_in, f.vertex, "intra"):
            if nb not in by_vertex:
                raise ValidationError(f"no features supplied for neighbor {nb.label}")
            f_nb = by_vertex[nb]
            acc += attention_weights(f.values, f_nb, w) @ (f_nb @ w.value)
        out.append(FeatureMap(acc, f.vertex))
    return out


def cross_agent_attention(
    f_j: FeatureMap,
    neighbor_feats: Sequence[FeatureMap],
    biases: Sequence,
    w: AttentionWeights,
    g_cr: ViewGraph | None = None,
) -> FeatureMap:
    """Unnormalized sum over cross-agent neighbors of biased attention.

    With ``g_cr`` given, the neighbor list must equal the graph's cross
    neighbors of ``f_j.vertex`` in canonical order.
    """
    if len(neighbor_feats) != len(biases):
        raise NeighborBiasMismatch(f"{len(neighbor_feats)} neighbors but {len(biases)} bias matrices")
    if g_cr is not None:
        expected = neighbors(g_cr, f_j.vertex, "cross")
        if [n.vertex for n in neighbor_feats] != expected:
            raise ValidationError("neighbor features do not match the cross-agent neighborhood")
    _check_dim(f_j.values, w)
    L = f_j.shape[0]
    acc = np.zeros((L, w.dim))
    for f_i, bias in zip(neighbor_feats, biases):
        m = bias.values if isinstance(bias, BiasMatrix) else np.asarray(bias, dtype=np.float64)
        if f_i.shape != f_j.shape:
            raise ShapeMismatch("neighbor feature shape differs from ego feature shape")
        if m.shape != (L, f_i.shape[0]):
            raise ShapeMismatch(f"bias shape {m.shape} does not match ({L}, {f_i.shape[0]})")
        acc += attention_weights(f_j.values, f_i.values, w, m) @ (f_i.values @ w.value)
    return FeatureMap(acc, f_j.vertex)


def layer_norm(x: np.ndarray, scale, shift, eps: float = LAYERNORM_EPS) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * scale + shift


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def refine(f_j: FeatureMap, f2_j: FeatureMap, w: AttentionWeights) -> FeatureMap:
    """``FFN(LayerNorm(f_j + f2_j))`` with a bias-free GELU FFN."""
    if f_j.shape != f2_j.shape:
        raise ShapeMismatch("refine inputs must share a shape")
    _check_dim(f_j.values, w)
    x = layer_norm(f_j.values + f2_j.values, w.ln_scale, w.ln_shift)
    return FeatureMap(gelu(x @ w.ffn_in) @ w.ffn_out, f_j.vertex)
