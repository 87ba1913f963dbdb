"""Collaboration view graph over all cameras, split into intra-agent edges
and cross-agent edges (object-based and geometric)."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import UnknownVertex, ValidationError
from .geometry import (
    DEFAULT_MAX_RANGE,
    DEPTH_EPS,
    Scene,
    box_corners,
    footprints_overlap,
    frustum_footprint,
    project_points,
)

INTRA = "intra"
CROSS_OBJ = "cross_obj"
CROSS_GEO = "cross_geo"
EDGE_KINDS = (INTRA, CROSS_OBJ, CROSS_GEO)

# kind filters accepted by neighbors() and friends
KIND_FILTERS = {
    None: frozenset(EDGE_KINDS),
    "all": frozenset(EDGE_KINDS),
    "intra": frozenset({INTRA}),
    "cross": frozenset({CROSS_OBJ, CROSS_GEO}),
    "cross_obj": frozenset({CROSS_OBJ}),
    "cross_geo": frozenset({CROSS_GEO}),
}


class ViewVertex(NamedTuple):
    agent_id: int
    camera_index: int

    @property
    def label(self) -> str:
        return f"a{self.agent_id}:c{self.camera_index}"

    @classmethod
    def parse(cls, label: str) -> "ViewVertex":
        try:
            a, c = label.split(":")
            if not (a.startswith("a") and c.startswith("c")):
                raise ValueError
            return cls(int(a[1:]), int(c[1:]))
        except ValueError:
            raise ValidationError(f"bad vertex label {label!r}") from None


def canonical_edge(u: ViewVertex, v: ViewVertex) -> tuple[ViewVertex, ViewVertex]:
    return (u, v) if u < v else (v, u)


def _kinds(kind) -> frozenset:
    try:
        return KIND_FILTERS[kind]
    except KeyError:
        raise ValidationError(f"unknown edge kind filter {kind!r}") from None


@dataclass
class ViewGraph:
    vertices: list
    edges: dict = field(default_factory=dict)  # canonical (u, v) -> kind

    def __post_init__(self):
        self.vertices = sorted(ViewVertex(*v) for v in self.vertices)
        self.edges = {canonical_edge(ViewVertex(*u), ViewVertex(*v)): k for (u, v), k in self.edges.items()}
        known = set(self.vertices)
        for (u, v), kind in self.edges.items():
            if kind not in EDGE_KINDS:
                raise ValidationError(f"unknown edge kind {kind!r}")
            if u == v:
                raise ValidationError(f"self-loop at {u.label}")
            if u not in known or v not in known:
                raise UnknownVertex(f"edge ({u.label}, {v.label}) references an unknown vertex")
            if (kind == INTRA) != (u.agent_id == v.agent_id):
                raise ValidationError(f"edge ({u.label}, {v.label}) kind {kind} contradicts agent ownership")

    def edge_set(self, kind=None) -> set:
        kinds = _kinds(kind)
        return {e for e, k in self.edges.items() if k in kinds}

    def subgraph(self, kind) -> "ViewGraph":
        kinds = _kinds(kind)
        return ViewGraph(self.vertices, {e: k for e, k in self.edges.items() if k in kinds})

    def adjacency(self, kind="cross") -> np.ndarray:
        """0/1 adjacency matrix in vertex order; ``kind="cross"`` gives W."""
        index = {v: i for i, v in enumerate(self.vertices)}
        W = np.zeros((len(self.vertices), len(self.vertices)), dtype=np.int8)
        for u, v in self.edge_set(kind):
            W[index[u], index[v]] = W[index[v], index[u]] = 1
        return W

    def to_dict(self) -> dict:
        return {
            "vertices": [v.label for v in self.vertices],
            "edges": [
                {"u": u.label, "v": v.label, "kind": self.edges[(u, v)]}
                for u, v in sorted(self.edges)
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ViewGraph":
        vertices = [ViewVertex.parse(s) for s in data["vertices"]]
        edges = {
            (ViewVertex.parse(e["u"]), ViewVertex.parse(e["v"])): e["kind"] for e in data["edges"]
        }
        return cls(vertices, edges)


def scene_vertices(scene: Scene) -> list:
    return sorted(ViewVertex(a.id, j) for a in scene.agents for j in range(len(a.cameras)))


def camera_of(scene: Scene, v: ViewVertex):
    return scene.agent(v.agent_id).cameras[v.camera_index]


def compute_visibility(scene: Scene, out_w: int | None = None, out_h: int | None = None) -> dict:
    """Object ids per camera: an object is visible when at least one corner
    in front of the camera projects inside the image rectangle."""
    corners = {o.id: box_corners(o) for o in scene.objects}
    table = {}
    for v in scene_vertices(scene):
        cam = camera_of(scene, v)
        w = cam.image_width if out_w is None else out_w
        h = cam.image_height if out_h is None else out_h
        sx, sy = w / cam.image_width, h / cam.image_height
        visible = set()
        for oid, pts in corners.items():
            uv, depth = project_points(pts, cam)
            front = depth > DEPTH_EPS
            if not front.any():
                continue
            u = uv[front, 0] * sx
            vv = uv[front, 1] * sy
            if np.any((u >= 0) & (u < w) & (vv >= 0) & (vv < h)):
                visible.add(oid)
        table[v] = frozenset(visible)
    return table


def camera_footprints(scene: Scene, max_range: float = DEFAULT_MAX_RANGE) -> dict:
    return {v: frustum_footprint(camera_of(scene, v), max_range) for v in scene_vertices(scene)}


def intra_edges(scene: Scene, max_range: float = DEFAULT_MAX_RANGE, footprints=None) -> dict:
    fp = footprints or camera_footprints(scene, max_range)
    edges = {}
    for agent in scene.agents:
        verts = [ViewVertex(agent.id, j) for j in range(len(agent.cameras))]
        for u, v in combinations(verts, 2):
            if footprints_overlap(fp[u], fp[v]):
                edges[canonical_edge(u, v)] = INTRA
    return edges


def cross_edges_obj(scene: Scene, vis: Mapping) -> dict:
    edges = {}
    for u, v in combinations(scene_vertices(scene), 2):
        if u.agent_id != v.agent_id and vis[u] & vis[v]:
            edges[canonical_edge(u, v)] = CROSS_OBJ
    return edges


def cross_edges_geo(
    scene: Scene, e_obj: Iterable, max_range: float = DEFAULT_MAX_RANGE, footprints=None
) -> dict:
    fp = footprints or camera_footprints(scene, max_range)
    taken = {canonical_edge(*e) for e in e_obj}
    edges = {}
    for u, v in combinations(scene_vertices(scene), 2):
        e = canonical_edge(u, v)
        if u.agent_id != v.agent_id and e not in taken and footprints_overlap(fp[u], fp[v]):
            edges[e] = CROSS_GEO
    return edges


def build_collaboration_graph(
    scene: Scene, vis: Mapping | None = None, max_range: float = DEFAULT_MAX_RANGE
) -> ViewGraph:
    if vis is None:
        vis = compute_visibility(scene)
    fp = camera_footprints(scene, max_range)
    e_in = intra_edges(scene, max_range, fp)
    e_obj = cross_edges_obj(scene, vis)
    e_geo = cross_edges_geo(scene, e_obj, max_range, fp)
    return ViewGraph(scene_vertices(scene), {**e_in, **e_obj, **e_geo})


def neighbors(g: ViewGraph, v: ViewVertex, kind=None) -> list:
    """Vertices adjacent to ``v`` through edges whose kind passes the filter."""
    v = ViewVertex(*v)
    if v not in g.vertices:
        raise UnknownVertex(f"{v.label} is not a vertex of this graph")
    kinds = _kinds(kind)
    out = set()
    for (a, b), k in g.edges.items():
        if k not in kinds:
            continue
        if a == v:
            out.add(b)
        elif b == v:
            out.add(a)
    return sorted(out)
