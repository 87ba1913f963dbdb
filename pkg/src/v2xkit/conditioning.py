"""Object tokens, FPV/BEV condition features and latent-token labeling.

Learned encoders are stood in for by explicit linear maps so the
surrounding arithmetic can be checked exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ShapeMismatch, UnknownClass, ValidationError
from .geometry import BevGrid, FpvMask, SceneObject, box_corners

DEFAULT_BANDS = 8
DEFAULT_ETA = 0.1
DEFAULT_NUM_CLASSES = 6  # background + 5 object classes

BACKGROUND = 0
OBJECT = 1
VSTAR_OBJECT = 2
CATEGORY_NAMES = {BACKGROUND: "background", OBJECT: "object", VSTAR_OBJECT: "vstar"}


@dataclass(frozen=True, eq=False)
class ObjectToken:
    vector: np.ndarray
    object_id: int
    is_shared: bool


@dataclass(frozen=True, eq=False)
class TokenLabeling:
    """Per-token category and object id (-1 for background) on an
    ``latent_h x latent_w`` grid, flattened row-major."""

    categories: np.ndarray
    object_ids: np.ndarray
    latent_h: int
    latent_w: int

    def __post_init__(self):
        cats = np.asarray(self.categories, dtype=np.int8).ravel()
        ids = np.asarray(self.object_ids, dtype=np.int64).ravel()
        if len(cats) != len(ids) or len(cats) != self.latent_h * self.latent_w:
            raise ShapeMismatch("labeling length must equal latent_h * latent_w")
        object.__setattr__(self, "categories", cats)
        object.__setattr__(self, "object_ids", ids)

    def __len__(self) -> int:
        return len(self.categories)

    @classmethod
    def from_tokens(cls, tokens, latent_h: int | None = None, latent_w: int | None = None):
        """Build from a list of ``(category, object_id)`` pairs."""
        cats = [c for c, _ in tokens]
        ids = [-1 if c == BACKGROUND else i for c, i in tokens]
        if latent_h is None:
            latent_h, latent_w = 1, len(tokens)
        return cls(np.array(cats), np.array(ids), latent_h, latent_w)


def fourier_encode(corners, bands: int = DEFAULT_BANDS) -> np.ndarray:
    """sin/cos features at frequencies 2**b, ordered corner, coordinate,
    band, (sin, cos)."""
    if bands < 1:
        raise ValidationError("bands must be >= 1")
    x = np.asarray(corners, dtype=np.float64).reshape(-1, 1)
    angles = x * (2.0 ** np.arange(bands))
    return np.stack([np.sin(angles), np.cos(angles)], axis=-1).ravel()


def enriched_class_embedding(obj: SceneObject, class_table: Mapping, vstar) -> np.ndarray:
    try:
        emb = np.asarray(class_table[obj.class_label], dtype=np.float64)
    except KeyError:
        raise UnknownClass(f"no class embedding for {obj.class_label!r}") from None
    if obj.is_shared:
        vstar = np.asarray(vstar, dtype=np.float64)
        if vstar.shape != emb.shape:
            raise ShapeMismatch("modifier width must equal the class embedding width")
        return emb + vstar
    return emb.copy()


def make_object_token(
    obj: SceneObject,
    class_table: Mapping,
    vstar,
    proj,
    bands: int = DEFAULT_BANDS,
) -> ObjectToken:
    """``proj @ [fourier(corners); class_emb + [shared] * vstar]``.

    ``proj`` has shape (d, fourier_len + d_cls).
    """
    label = enriched_class_embedding(obj, class_table, vstar)
    x = np.concatenate([fourier_encode(box_corners(obj), bands), label])
    proj = np.asarray(proj, dtype=np.float64)
    if proj.ndim != 2 or proj.shape[1] != len(x):
        raise ShapeMismatch(f"projection expects input width {len(x)}, got shape {proj.shape}")
    return ObjectToken(proj @ x, obj.id, obj.is_shared)


def fuse_fpv_bev(f_fpv, f_bev, eta: float = DEFAULT_ETA) -> np.ndarray:
    f_fpv = np.asarray(f_fpv, dtype=np.float64)
    f_bev = np.asarray(f_bev, dtype=np.float64)
    if f_fpv.shape != f_bev.shape:
        raise ShapeMismatch(f"FPV feature {f_fpv.shape} vs BEV feature {f_bev.shape}")
    return f_fpv + eta * f_bev


def one_hot(cells, num_classes: int = DEFAULT_NUM_CLASSES) -> np.ndarray:
    """(H, W) class raster -> (H*W, num_classes) indicator matrix."""
    flat = np.asarray(cells).ravel().astype(np.int64)
    if flat.size and (flat.min() < 0 or flat.max() >= num_classes):
        raise ValidationError(f"class ids must lie in [0, {num_classes})")
    out = np.zeros((flat.size, num_classes))
    out[np.arange(flat.size), flat] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class LinearEncoder:
    """One-hot expand, average-pool over ``pool`` blocks, then apply
    ``weight`` (num_classes x d_out) per token."""

    weight: np.ndarray
    pool: tuple = (1, 1)

    def __call__(self, cells) -> np.ndarray:
        cells = np.asarray(cells)
        weight = np.asarray(self.weight, dtype=np.float64)
        ph, pw = self.pool
        h, w = cells.shape
        if h % ph or w % pw:
            raise ShapeMismatch(f"raster {h}x{w} is not divisible by pool {ph}x{pw}")
        x = one_hot(cells, weight.shape[0]).reshape(h // ph, ph, w // pw, pw, -1)
        x = x.mean(axis=(1, 3)).reshape(-1, weight.shape[0])
        return x @ weight


def encode_condition(
    mask: FpvMask, grid: BevGrid, enc_fpv: LinearEncoder, enc_bev: LinearEncoder, eta: float = DEFAULT_ETA
) -> np.ndarray:
    return fuse_fpv_bev(enc_fpv(mask.cells), enc_bev(grid.cells), eta)


def label_tokens(mask: FpvMask, object_ids, latent_h: int, latent_w: int, shared_ids) -> TokenLabeling:
    """Pool a pixel raster onto the latent grid by per-block majority vote.

    Foreground is ``mask.cells != 0``; the winning id is the most frequent
    object id among foreground pixels, smaller id on ties.
    """
    cells = np.asarray(mask.cells)
    ids = np.asarray(object_ids, dtype=np.int64)
    h, w = cells.shape
    if ids.shape != cells.shape:
        raise ShapeMismatch("object id raster must match the mask shape")
    if latent_h <= 0 or latent_w <= 0 or h % latent_h or w % latent_w:
        raise ShapeMismatch(f"latent grid {latent_h}x{latent_w} does not divide mask {h}x{w}")
    bh, bw = h // latent_h, w // latent_w
    shared = set(shared_ids)
    blocks_fg = (cells != 0).reshape(latent_h, bh, latent_w, bw).transpose(0, 2, 1, 3).reshape(-1, bh * bw)
    blocks_id = ids.reshape(latent_h, bh, latent_w, bw).transpose(0, 2, 1, 3).reshape(-1, bh * bw)
    n = latent_h * latent_w
    cats = np.zeros(n, dtype=np.int8)
    out_ids = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        fg = blocks_id[k][blocks_fg[k]]
        if fg.size == 0:
            continue
        values, counts = np.unique(fg, return_counts=True)  # sorted ascending
        winner = int(values[np.argmax(counts)])  # first max -> smallest id
        out_ids[k] = winner
        cats[k] = VSTAR_OBJECT if winner in shared else OBJECT
    return TokenLabeling(cats, out_ids, latent_h, latent_w)
