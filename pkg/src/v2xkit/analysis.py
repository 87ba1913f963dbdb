"""Cross-agent consistency metrics and trainability diagnostics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptySequence, MissingMatch, NegativeComplexity, ValidationError, ZeroVector
from .viewgraph import ViewGraph


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    object_ids: tuple
    vectors: np.ndarray

    def __post_init__(self):
        ids = tuple(int(i) for i in self.object_ids)
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[0] != len(ids):
            raise ValidationError("need one vector per object id")
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate object ids in embedding set")
        if len(ids) and np.any(np.linalg.norm(vecs, axis=1) == 0):
            raise ZeroVector("embedding vectors must be nonzero")
        object.__setattr__(self, "object_ids", ids)
        object.__setattr__(self, "vectors", vecs)

    def __len__(self) -> int:
        return len(self.object_ids)

    def to_dict(self) -> dict:
        return {"object_ids": list(self.object_ids), "vectors": self.vectors.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "EmbeddingSet":
        return cls(tuple(data["object_ids"]), np.array(data["vectors"], dtype=np.float64))


@dataclass(frozen=True)
class RetrievalResult:
    mean_sim: float
    mrr: float
    top1: float
    n_queries: int


@dataclass(frozen=True)
class ComplexityReport:
    c_in: float
    c_cr: float
    c_couple: float
    c_joint: float
    rho_reduce: float

    def to_dict(self) -> dict:
        return asdict(self)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity is undefined for zero vectors")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _unit_rows(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def retrieval_metrics(queries: EmbeddingSet, candidates: EmbeddingSet) -> RetrievalResult:
    """Rank all candidates per query by cosine similarity (ties -> smaller
    object id) and score the rank of the same-id candidate."""
    if len(queries) == 0:
        raise EmptySequence("no queries to score")
    index = {oid: i for i, oid in enumerate(candidates.object_ids)}
    missing = [q for q in queries.object_ids if q not in index]
    if missing:
        raise MissingMatch(f"query ids {missing} have no candidate")
    sims = _unit_rows(queries.vectors) @ _unit_rows(candidates.vectors).T
    cand_ids = np.array(candidates.object_ids)
    ranks, hits, true_sims = [], 0, []
    for qi, qid in enumerate(queries.object_ids):
        row = sims[qi]
        order = np.lexsort((cand_ids, -row))
        rank = int(np.nonzero(order == index[qid])[0][0]) + 1
        ranks.append(rank)
        hits += rank == 1
        true_sims.append(row[index[qid]])
    n = len(queries)
    return RetrievalResult(
        mean_sim=float(np.mean(true_sims)),
        # exact rational mean, rounded once: independent of summation order
        mrr=float(sum(Fraction(1, r) for r in ranks) / n),
        top1=hits / n,
        n_queries=n,
    )


def graph_complexity(seq: Sequence[ViewGraph], kind=None) -> float:
    """Mean frame edge count times the mean Bernoulli variance p(1-p) of
    edge presence, over pairs that appear in at least one frame."""
    if len(seq) == 0:
        raise EmptySequence("graph sequence has no frames")
    verts = seq[0].vertices
    if any(g.vertices != verts for g in seq[1:]):
        raise ValidationError("all frames must share the same vertex set")
    frames = [g.edge_set(kind) for g in seq]
    union = set().union(*frames)
    if not union:
        return 0.0
    n = len(frames)
    mean_edges = sum(len(f) for f in frames) / n
    variances = []
    for e in sorted(union):
        p = sum(e in f for f in frames) / n
        variances.append(p * (1.0 - p))
    return mean_edges * (sum(variances) / len(variances))


def complexity_report(c_in: float, c_cr: float) -> ComplexityReport:
    if c_in < 0 or c_cr < 0:
        raise NegativeComplexity("complexities must be non-negative")
    c_couple = 2.0 * math.sqrt(c_in * c_cr)
    c_joint = c_in + c_cr + c_couple
    rho = c_couple / c_joint if c_joint > 0 else 0.0
    return ComplexityReport(float(c_in), float(c_cr), c_couple, c_joint, rho)


@dataclass(frozen=True)
class GradientConflict:
    cosine: float
    combined_sq_norm: float
    conflict: bool


def gradient_conflict(g1, g2) -> GradientConflict:
    g1 = np.asarray(g1, dtype=np.float64)
    g2 = np.asarray(g2, dtype=np.float64)
    cos = cosine_similarity(g1, g2)
    s = g1 + g2
    return GradientConflict(cos, float(s @ s), cos <= 0)
