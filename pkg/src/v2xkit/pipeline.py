"""Pure compute stages chained by the CLI: masks, labelings, biases,
attention and pooled per-agent embeddings."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import EmbeddingSet
from .attention import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_TAU_B,
    DEFAULT_TAU_O,
    AttentionWeights,
    FeatureMap,
    build_roi_bias,
    cross_agent_attention,
    ego_view_attention,
    refine,
)
from .conditioning import (
    DEFAULT_BANDS,
    DEFAULT_ETA,
    DEFAULT_NUM_CLASSES,
    OBJECT,
    VSTAR_OBJECT,
    LinearEncoder,
    encode_condition,
    label_tokens,
    make_object_token,
)
from .errors import ValidationError
from .geometry import (
    DEFAULT_MASK_HEIGHT,
    DEFAULT_MASK_WIDTH,
    CLASS_NAMES,
    BevParams,
    Scene,
    bev_render,
    rasterize_fpv_mask,
    rasterize_object_ids,
)
from .rng import CounterRng
from .viewgraph import ViewGraph, camera_of, neighbors, scene_vertices

DEFAULT_LATENT_H = 17
DEFAULT_LATENT_W = 30
DEFAULT_CLASS_DIM = 8


def worker_count() -> int:
    raw = os.environ.get("V2XKIT_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValidationError(f"V2XKIT_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


@dataclass(frozen=True)
class BiasParams:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    tau_o: float = DEFAULT_TAU_O
    tau_b: float = DEFAULT_TAU_B


def camera_rasters(scene: Scene, width: int = DEFAULT_MASK_WIDTH, height: int = DEFAULT_MASK_HEIGHT) -> dict:
    """Vertex -> (FpvMask, object-id raster), computed per camera in parallel."""
    verts = scene_vertices(scene)

    def one(v):
        cam = camera_of(scene, v)
        return rasterize_fpv_mask(scene.objects, cam, width, height), rasterize_object_ids(
            scene.objects, cam, width, height
        )

    workers = min(worker_count(), len(verts))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, verts))
    else:
        results = [one(v) for v in verts]
    return dict(zip(verts, results))


def scene_labelings(scene: Scene, rasters: dict, latent_h: int = DEFAULT_LATENT_H, latent_w: int = DEFAULT_LATENT_W) -> dict:
    shared = {o.id for o in scene.objects if o.is_shared}
    return {v: label_tokens(m, ids, latent_h, latent_w, shared) for v, (m, ids) in rasters.items()}


def cross_biases(graph: ViewGraph, labelings: dict, params: BiasParams = BiasParams()) -> dict:
    """Bias for every ordered cross-agent pair (query j, key i)."""
    out = {}
    for u, v in sorted(graph.edge_set("cross")):
        for j, i in ((u, v), (v, u)):
            out[(j, i)] = build_roi_bias(
                labelings[j], labelings[i], params.alpha, params.beta, params.tau_o, params.tau_b
            )
    return out


def synthetic_features(vertices, tokens: int, dim: int, seed: int) -> dict:
    """Deterministic U(-1, 1) features from the counter RNG, one stream
    for all cameras in vertex order."""
    rng = CounterRng(seed)
    out = {}
    for v in sorted(vertices):
        vals = np.array([rng.uniform(-1.0, 1.0) for _ in range(tokens * dim)]).reshape(tokens, dim)
        out[v] = FeatureMap(vals, v)
    return out


def synthetic_weights(dim: int, key_dim: int, seed: int, hidden: int | None = None) -> AttentionWeights:
    hidden = hidden or 2 * dim
    rng = CounterRng(seed ^ 0x5EED)

    def mat(r, c, scale):
        return np.array([rng.uniform(-scale, scale) for _ in range(r * c)]).reshape(r, c)

    s = 1.0 / np.sqrt(dim)
    return AttentionWeights(
        query=mat(dim, key_dim, s),
        key=mat(dim, key_dim, s),
        value=mat(dim, dim, s),
        ffn_in=mat(dim, hidden, s),
        ffn_out=mat(hidden, dim, 1.0 / np.sqrt(hidden)),
        ln_scale=1.0 + mat(1, dim, 0.1).ravel(),
        ln_shift=mat(1, dim, 0.1).ravel(),
    )


def _uniform_matrix(rng: CounterRng, rows: int, cols: int, scale: float) -> np.ndarray:
    return np.array([rng.uniform(-scale, scale) for _ in range(rows * cols)]).reshape(rows, cols)


def condition_features(
    scene: Scene,
    rasters: dict,
    dim: int,
    seed: int,
    eta: float = DEFAULT_ETA,
    latent_h: int = DEFAULT_LATENT_H,
    latent_w: int = DEFAULT_LATENT_W,
    bev_pool: int = 4,
    bev_resolution: float = 0.5,
) -> dict:
    """Fused FPV/BEV condition feature per camera from seeded linear encoders.

    The BEV raster is rendered at ``latent * bev_pool`` cells centred on the
    origin so both rasters pool onto the same latent grid.
    """
    if bev_pool < 1:
        raise ValidationError("bev_pool must be >= 1")
    rng = CounterRng(seed ^ 0xC0DE)
    enc_weights = _uniform_matrix(rng, 2 * DEFAULT_NUM_CLASSES, dim, 1.0)
    bw, bh = latent_w * bev_pool, latent_h * bev_pool
    params = BevParams(bw, bh, -bw * bev_resolution / 2, -bh * bev_resolution / 2, bev_resolution)
    grid = bev_render(scene, params)
    enc_bev = LinearEncoder(enc_weights[DEFAULT_NUM_CLASSES:], (bev_pool, bev_pool))
    out = {}
    for v, (mask, _) in sorted(rasters.items()):
        h, w = mask.cells.shape
        if h % latent_h or w % latent_w:
            raise ValidationError(f"latent grid {latent_h}x{latent_w} does not divide mask {h}x{w}")
        enc_fpv = LinearEncoder(enc_weights[:DEFAULT_NUM_CLASSES], (h // latent_h, w // latent_w))
        out[v] = encode_condition(mask, grid, enc_fpv, enc_bev, eta)
    return out


def object_tokens(scene: Scene, dim: int, seed: int, bands: int = DEFAULT_BANDS, class_dim: int = DEFAULT_CLASS_DIM):
    """Tokens for every object in id order with a seeded class table, V*
    and projection."""
    rng = CounterRng(seed ^ 0x70CE)
    table = {name: _uniform_matrix(rng, 1, class_dim, 1.0).ravel() for name in CLASS_NAMES}
    vstar = _uniform_matrix(rng, 1, class_dim, 1.0).ravel()
    width = 8 * 3 * 2 * bands + class_dim
    proj = _uniform_matrix(rng, dim, width, 1.0 / np.sqrt(width))
    return [make_object_token(o, table, vstar, proj, bands) for o in sorted(scene.objects, key=lambda o: o.id)]


def attend(graph: ViewGraph, features: dict, weights: AttentionWeights, biases: dict) -> dict:
    """Ego-view attention on intra edges, then cross-agent masked attention
    on the ego-updated features, then the FFN refinement."""
    order = sorted(features)
    ego = ego_view_attention([features[v] for v in order], graph.subgraph("intra"), weights)
    ego = {f.vertex: f for f in ego}
    out = {}
    for v in order:
        nbrs = neighbors(graph, v, "cross")
        cross = cross_agent_attention(
            ego[v], [ego[n] for n in nbrs], [biases[(v, n)] for n in nbrs], weights
        )
        out[v] = refine(ego[v], cross, weights)
    return out


def agent_embeddings(scene: Scene, labelings: dict, features: dict, agent_id: int) -> EmbeddingSet:
    """Mean feature of the tokens labeled with each object across one
    agent's cameras, restricted to shared objects."""
    shared = sorted(o.id for o in scene.objects if o.is_shared)
    sums: dict = {}
    counts: dict = {}
    for v, lab in labelings.items():
        if v.agent_id != agent_id:
            continue
        vals = features[v].values
        for oid in shared:
            sel = (lab.object_ids == oid) & ((lab.categories == VSTAR_OBJECT) | (lab.categories == OBJECT))
            if sel.any():
                sums[oid] = sums.get(oid, 0.0) + vals[sel].sum(axis=0)
                counts[oid] = counts.get(oid, 0) + int(sel.sum())
    ids = [oid for oid in shared if oid in sums and np.linalg.norm(sums[oid]) > 0]
    dim = next(iter(features.values())).shape[1] if features else 0
    vecs = np.array([sums[oid] / counts[oid] for oid in ids]) if ids else np.zeros((0, dim))
    return EmbeddingSet(tuple(ids), vecs)
