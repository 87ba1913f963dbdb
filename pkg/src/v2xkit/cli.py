"""Command-line driver.

Exit codes: 0 success, 2 usage or validation error, 3 runtime/numeric
failure. Every command writes only inside its ``--out-dir``.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .analysis import EmbeddingSet, complexity_report, graph_complexity, retrieval_metrics
from .attention import AttentionWeights, FeatureMap
from .conditioning import DEFAULT_BANDS, DEFAULT_ETA
from .errors import NumericError, ValidationError
from .geometry import BevParams, bev_render
from .pipeline import (
    DEFAULT_LATENT_H,
    DEFAULT_LATENT_W,
    BiasParams,
    agent_embeddings,
    attend,
    camera_rasters,
    condition_features,
    cross_biases,
    object_tokens,
    scene_labelings,
    synthetic_features,
    synthetic_weights,
)
from .scenegen import SceneConfig, SceneEdit, apply_edit, generate_scene
from .viewgraph import ViewGraph, build_collaboration_graph, camera_footprints, compute_visibility


def _stem(v) -> str:
    return f"a{v.agent_id}_c{v.camera_index}"


def _load_graph(args, scene):
    if getattr(args, "graph", None):
        return ViewGraph.from_dict(io.read_json(args.graph))
    return build_collaboration_graph(scene, compute_visibility(scene), args.max_range)


def _f32(a: np.ndarray) -> np.ndarray:
    # round to the on-disk precision so file-driven reruns reproduce results
    return np.asarray(a, dtype=np.float32).astype(np.float64)


# --------------------------------------------------------------------------
# commands


def cmd_gen_scene(args) -> int:
    cfg = SceneConfig(
        seed=args.seed,
        num_agents=args.agents,
        cameras_per_agent=args.cams,
        num_objects=args.objects,
        shared_ratio=args.shared_ratio,
        extent=args.extent,
        fov_degrees=args.fov,
        camera_height=args.camera_height,
        max_range=args.max_range,
    )
    scene = generate_scene(cfg)
    io.save_scene(Path(args.out_dir) / "scene.json", scene)
    return 0


def cmd_masks(args) -> int:
    scene = io.load_scene(args.scene)
    out = Path(args.out_dir)
    for v, (mask, _) in camera_rasters(scene, args.width, args.height).items():
        io.save_mask(out / f"mask_{_stem(v)}.bin", mask)
        if args.pgm:
            io.save_pgm(out / f"mask_{_stem(v)}.pgm", mask.cells)
    return 0


def cmd_bev(args) -> int:
    scene = io.load_scene(args.scene)
    params = BevParams(args.size, args.size, args.x_min, args.y_min, args.resolution)
    grid = bev_render(scene, params)
    out = Path(args.out_dir)
    io.atomic_write_bytes(out / "bev.bin", np.ascontiguousarray(grid.cells, dtype="<u2").tobytes())
    io.write_json(out / "bev.json", {"width": params.width, "height": params.height, "dtype": "u16le"})
    if args.pgm:
        io.save_pgm(out / "bev.pgm", grid.cells[::-1])
    return 0


def cmd_graph(args) -> int:
    scene = io.load_scene(args.scene)
    graph = build_collaboration_graph(scene, compute_visibility(scene), args.max_range)
    io.write_json(Path(args.out_dir) / "graph.json", graph.to_dict())
    return 0


def _bias_params(args) -> BiasParams:
    return BiasParams(args.alpha, args.beta, args.tau_o, args.tau_b)


def _biases_for(args, scene, graph):
    rasters = camera_rasters(scene, args.width, args.height)
    labelings = scene_labelings(scene, rasters, args.latent_h, args.latent_w)
    return labelings, cross_biases(graph, labelings, _bias_params(args))


def _bias_name(j, i) -> str:
    return f"bias_{_stem(j)}__{_stem(i)}.bin"


def cmd_bias(args) -> int:
    scene = io.load_scene(args.scene)
    graph = _load_graph(args, scene)
    _, biases = _biases_for(args, scene, graph)
    out = Path(args.out_dir)
    for (j, i), m in sorted(biases.items()):
        io.save_matrix(out / _bias_name(j, i), m.values)
    return 0


def cmd_attend(args) -> int:
    scene = io.load_scene(args.scene)
    graph = _load_graph(args, scene)
    out = Path(args.out_dir)
    tokens = args.latent_h * args.latent_w

    if args.features_dir:
        features = {}
        for v in graph.vertices:
            path = Path(args.features_dir) / f"feat_{_stem(v)}.bin"
            features[v] = FeatureMap(io.load_matrix(path), v)
    else:
        raw = synthetic_features(graph.vertices, tokens, args.dim, args.seed)
        features = {v: FeatureMap(_f32(f.values), v) for v, f in raw.items()}
        for v, f in features.items():
            io.save_matrix(out / f"feat_{_stem(v)}.bin", f.values)

    if args.weights:
        weights = AttentionWeights(**io.load_weights(args.weights))
    else:
        w = synthetic_weights(args.dim, args.key_dim, args.seed)
        weights = AttentionWeights(**{k: _f32(a) for k, a in w.as_dict().items()})
        io.save_weights(out / "weights.bin", weights.as_dict())

    if args.bias_dir:
        biases = {}
        for u, v in sorted(graph.edge_set("cross")):
            for j, i in ((u, v), (v, u)):
                biases[(j, i)] = io.load_matrix(Path(args.bias_dir) / _bias_name(j, i))
    else:
        _, biases = _biases_for(args, scene, graph)

    for v, f in attend(graph, features, weights, biases).items():
        io.save_matrix(out / f"attn_{_stem(v)}.bin", f.values)
    return 0


def cmd_condition(args) -> int:
    if not np.isfinite(args.eta):
        raise ValidationError("eta must be finite")
    scene = io.load_scene(args.scene)
    out = Path(args.out_dir)
    rasters = camera_rasters(scene, args.width, args.height)
    feats = condition_features(
        scene, rasters, args.dim, args.seed, args.eta, args.latent_h, args.latent_w, args.bev_pool, args.bev_resolution
    )
    tokens = object_tokens(scene, args.dim, args.seed, args.bands)
    for v, f in feats.items():
        io.save_matrix(out / f"cond_{_stem(v)}.bin", f)
    io.save_matrix(out / "tokens.bin", np.array([t.vector for t in tokens]).reshape(len(tokens), args.dim))
    io.write_json(out / "tokens_index.json", {"object_ids": [t.object_id for t in tokens],
                                              "shared": [t.is_shared for t in tokens]})
    return 0


def _metrics_dict(result) -> dict:
    return {"mean_sim": result.mean_sim, "mrr": result.mrr, "top1": result.top1, "n_queries": result.n_queries}


def cmd_metrics(args) -> int:
    if args.queries and args.candidates:
        queries = EmbeddingSet.from_dict(io.read_json(args.queries))
        candidates = EmbeddingSet.from_dict(io.read_json(args.candidates))
    elif args.scene and args.features_dir:
        scene = io.load_scene(args.scene)
        rasters = camera_rasters(scene, args.width, args.height)
        labelings = scene_labelings(scene, rasters, args.latent_h, args.latent_w)
        features = {
            v: FeatureMap(io.load_matrix(Path(args.features_dir) / f"{args.prefix}_{_stem(v)}.bin"), v)
            for v in labelings
        }
        agent_ids = [a.id for a in scene.agents]
        qa = args.query_agent if args.query_agent is not None else agent_ids[0]
        ca = args.candidate_agent if args.candidate_agent is not None else agent_ids[min(1, len(agent_ids) - 1)]
        queries = agent_embeddings(scene, labelings, features, qa)
        candidates = agent_embeddings(scene, labelings, features, ca)
        keep = [i for i, oid in enumerate(queries.object_ids) if oid in set(candidates.object_ids)]
        queries = EmbeddingSet(tuple(queries.object_ids[i] for i in keep), queries.vectors[keep])
    else:
        raise ValidationError("metrics needs --queries/--candidates or --scene/--features-dir")

    if len(queries) == 0:
        report = {"mean_sim": None, "mrr": None, "top1": None, "n_queries": 0}
    else:
        report = _metrics_dict(retrieval_metrics(queries, candidates))
    io.write_json(Path(args.out_dir) / "metrics.json", report)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_analyze(args) -> int:
    if args.graphs:
        seq = [ViewGraph.from_dict(io.read_json(p)) for p in args.graphs]
        c_in = graph_complexity(seq, "intra")
        c_cr = graph_complexity(seq, "cross")
    elif args.c_in is not None and args.c_cr is not None:
        c_in, c_cr = args.c_in, args.c_cr
    else:
        raise ValidationError("analyze needs --c-in and --c-cr, or --graphs")
    report = complexity_report(c_in, c_cr).to_dict()
    io.write_json(Path(args.out_dir) / "complexity.json", report)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_edit(args) -> int:
    scene = io.load_scene(args.scene)
    edit = SceneEdit.from_dict(io.read_json(args.edit))
    io.save_scene(Path(args.out_dir) / "scene.json", apply_edit(scene, edit))
    return 0


REPORT_COLUMNS = (
    "vertex",
    "agent",
    "camera",
    "visible_objects",
    "visible_shared",
    "mask_coverage",
    "intra_degree",
    "cross_obj_degree",
    "cross_geo_degree",
)


def cmd_report(args) -> int:
    from .plotting import plot_bev, plot_graph, plot_masks

    scene = io.load_scene(args.scene)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vis = compute_visibility(scene)
    graph = build_collaboration_graph(scene, vis, args.max_range)
    rasters = camera_rasters(scene, args.width, args.height)
    shared = {o.id for o in scene.objects if o.is_shared}

    buf = _io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for v in graph.vertices:
        mask = rasters[v][0]
        degree = {k: 0 for k in ("intra", "cross_obj", "cross_geo")}
        for (a, b), kind in graph.edges.items():
            if v in (a, b):
                degree[kind] += 1
        writer.writerow(
            (
                v.label,
                v.agent_id,
                v.camera_index,
                len(vis[v]),
                len(vis[v] & shared),
                repr(float(np.count_nonzero(mask.cells)) / mask.cells.size),
                degree["intra"],
                degree["cross_obj"],
                degree["cross_geo"],
            )
        )
    io.atomic_write_bytes(out / "report.tsv", buf.getvalue().encode("utf-8"))

    plot_masks({v: m for v, (m, _) in rasters.items()}, out / "masks.png")
    plot_bev(bev_render(scene), out / "bev.png", camera_footprints(scene, args.max_range), scene.agents)
    plot_graph(graph, out / "graph.png")
    return 0


# --------------------------------------------------------------------------
# parser


def _add_raster_args(p) -> None:
    p.add_argument("--width", type=int, default=480)
    p.add_argument("--height", type=int, default=272)


def _add_latent_args(p) -> None:
    p.add_argument("--latent-h", type=int, default=DEFAULT_LATENT_H)
    p.add_argument("--latent-w", type=int, default=DEFAULT_LATENT_W)


def _add_bias_args(p) -> None:
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--tau-o", type=float, default=30.0)
    p.add_argument("--tau-b", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v2xkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("-o", "--out-dir", required=True)
        return p

    p = command("gen-scene", cmd_gen_scene, "generate a synthetic multi-agent scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--cams", type=int, default=4)
    p.add_argument("--objects", type=int, default=20)
    p.add_argument("--shared-ratio", type=float, default=0.0)
    p.add_argument("--extent", type=float, default=50.0)
    p.add_argument("--fov", type=float, default=100.0)
    p.add_argument("--camera-height", type=float, default=1.6)
    p.add_argument("--max-range", type=float, default=50.0)

    p = command("masks", cmd_masks, "rasterize per-camera FPV masks")
    p.add_argument("scene")
    _add_raster_args(p)
    p.add_argument("--pgm", action="store_true", help="also export PGM previews")

    p = command("bev", cmd_bev, "render the BEV class grid")
    p.add_argument("scene")
    p.add_argument("--size", type=int, default=200)
    p.add_argument("--x-min", type=float, default=-50.0)
    p.add_argument("--y-min", type=float, default=-50.0)
    p.add_argument("--resolution", type=float, default=0.5)
    p.add_argument("--pgm", action="store_true")

    p = command("graph", cmd_graph, "build the collaboration view graph")
    p.add_argument("scene")
    p.add_argument("--max-range", type=float, default=50.0)

    p = command("bias", cmd_bias, "ROI bias matrices for every cross-agent camera pair")
    p.add_argument("scene")
    p.add_argument("--graph")
    p.add_argument("--max-range", type=float, default=50.0)
    _add_raster_args(p)
    _add_latent_args(p)
    _add_bias_args(p)

    p = command("attend", cmd_attend, "run ego-view and cross-agent attention")
    p.add_argument("scene")
    p.add_argument("--graph")
    p.add_argument("--bias-dir")
    p.add_argument("--features-dir")
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--key-dim", type=int, default=4)
    p.add_argument("--max-range", type=float, default=50.0)
    _add_raster_args(p)
    _add_latent_args(p)
    _add_bias_args(p)

    p = command("condition", cmd_condition, "fused FPV/BEV condition features and object tokens")
    p.add_argument("scene")
    p.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p.add_argument("--bands", type=int, default=DEFAULT_BANDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--bev-pool", type=int, default=4)
    p.add_argument("--bev-resolution", type=float, default=0.5)
    _add_raster_args(p)
    _add_latent_args(p)

    p = command("metrics", cmd_metrics, "retrieval consistency metrics")
    p.add_argument("--queries")
    p.add_argument("--candidates")
    p.add_argument("--scene")
    p.add_argument("--features-dir")
    p.add_argument("--prefix", default="attn")
    p.add_argument("--query-agent", type=int)
    p.add_argument("--candidate-agent", type=int)
    _add_raster_args(p)
    _add_latent_args(p)

    p = command("analyze", cmd_analyze, "complexity reduction report")
    p.add_argument("--c-in", type=float)
    p.add_argument("--c-cr", type=float)
    p.add_argument("--graphs", nargs="+")

    p = command("edit", cmd_edit, "apply a shared-object edit")
    p.add_argument("scene")
    p.add_argument("edit")

    p = command("report", cmd_report, "render figures and a per-camera TSV summary")
    p.add_argument("scene")
    p.add_argument("--max-range", type=float, default=50.0)
    _add_raster_args(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"v2xkit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError, OSError) as exc:
        print(f"v2xkit {args.command}: failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
