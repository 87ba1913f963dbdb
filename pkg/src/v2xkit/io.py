"""On-disk formats: canonical JSON, u16 masks and f32 matrices with JSON
sidecars, PGM export. All writes go through a temp file and a rename."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import InvalidScene, ShapeMismatch, ValidationError
from .geometry import Agent, CameraPose, FpvMask, Scene, SceneObject


def canonical_json(data) -> str:
    """Sorted keys, two-space indent, shortest round-trip floats, LF ending."""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, data) -> None:
    atomic_write_bytes(path, canonical_json(data).encode("utf-8"))


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: {exc}") from None


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


# --------------------------------------------------------------------------
# scenes


def _floats(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=np.float64).ravel()]


def camera_to_dict(cam: CameraPose) -> dict:
    return {
        "K": _floats(cam.intrinsics),
        "R": _floats(cam.rotation),
        "t": _floats(cam.translation),
        "width": cam.image_width,
        "height": cam.image_height,
    }


def scene_to_dict(scene: Scene) -> dict:
    return {
        "agents": [
            {
                "id": a.id,
                "pose": dict(zip(("x", "y", "z", "yaw"), (float(p) for p in a.pose))),
                "cameras": [camera_to_dict(c) for c in a.cameras],
            }
            for a in scene.agents
        ],
        "objects": [
            {
                "id": o.id,
                "center": _floats(o.center),
                "size": _floats(o.size),
                "yaw": float(o.yaw),
                "class": o.class_label,
                "observers": sorted(o.observers),
            }
            for o in scene.objects
        ],
        "globals": dict(scene.globals),
    }


def scene_from_dict(data: Mapping) -> Scene:
    try:
        agents = []
        for a in data["agents"]:
            pose = a["pose"]
            cams = tuple(
                CameraPose(
                    np.reshape(c["K"], (3, 3)),
                    np.reshape(c["R"], (3, 3)),
                    np.reshape(c["t"], (3,)),
                    int(c["width"]),
                    int(c["height"]),
                )
                for c in a["cameras"]
            )
            agents.append(Agent(int(a["id"]), (pose["x"], pose["y"], pose["z"], pose["yaw"]), cams))
        objects = tuple(
            SceneObject(
                int(o["id"]),
                o["center"],
                o["size"],
                float(o["yaw"]),
                o["class"],
                frozenset(o["observers"]),
            )
            for o in data["objects"]
        )
        return Scene(tuple(agents), objects, data.get("globals", {}))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise InvalidScene(f"malformed scene: {exc!r}") from None


def save_scene(path, scene: Scene) -> None:
    write_json(path, scene_to_dict(scene))


def load_scene(path) -> Scene:
    data = read_json(path)
    try:
        return scene_from_dict(data)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def scene_bytes(scene: Scene) -> bytes:
    return canonical_json(scene_to_dict(scene)).encode("utf-8")


# --------------------------------------------------------------------------
# masks


def save_mask(path, mask: FpvMask) -> None:
    path = Path(path)
    atomic_write_bytes(path, np.ascontiguousarray(mask.cells, dtype="<u2").tobytes())
    write_json(sidecar_path(path), {"width": mask.width, "height": mask.height, "dtype": "u16le"})


def load_mask(path) -> FpvMask:
    path = Path(path)
    meta = read_json(sidecar_path(path))
    if meta.get("dtype") != "u16le":
        raise ValidationError(f"{path}: unsupported dtype {meta.get('dtype')!r}")
    raw = path.read_bytes()
    w, h = int(meta["width"]), int(meta["height"])
    if len(raw) != 2 * w * h:
        raise ShapeMismatch(f"{path}: expected {2 * w * h} bytes, found {len(raw)}")
    cells = np.frombuffer(raw, dtype="<u2").reshape(h, w).astype(np.uint16)
    return FpvMask(w, h, cells)


def save_pgm(path, cells: np.ndarray) -> None:
    """Binary P5 export for inspection; requires values <= 255."""
    cells = np.asarray(cells)
    if cells.size and cells.max() > 255:
        raise ValidationError("PGM export needs class ids <= 255")
    h, w = cells.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + cells.astype(np.uint8).tobytes())


# --------------------------------------------------------------------------
# float32 matrices


def save_matrix(path, values) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ShapeMismatch("matrix files hold 2-D arrays")
    path = Path(path)
    atomic_write_bytes(path, np.ascontiguousarray(values, dtype="<f4").tobytes())
    write_json(sidecar_path(path), {"rows": int(values.shape[0]), "cols": int(values.shape[1])})


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    meta = read_json(sidecar_path(path))
    rows, cols = int(meta["rows"]), int(meta["cols"])
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if len(raw) != 4 * rows * cols:
        raise ShapeMismatch(f"{path}: expected {4 * rows * cols} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").reshape(rows, cols).astype(np.float64)


def save_weights(path, maps: Mapping[str, np.ndarray]) -> None:
    """Concatenate named float32 arrays; the sidecar lists names and shapes
    in storage order."""
    path = Path(path)
    chunks, meta = [], []
    for name, arr in maps.items():
        arr = np.asarray(arr)
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        meta.append({"name": name, "shape": list(arr.shape)})
    atomic_write_bytes(path, b"".join(chunks))
    write_json(sidecar_path(path), {"dtype": "f32le", "maps": meta})


def load_weights(path) -> dict:
    path = Path(path)
    meta = read_json(sidecar_path(path))
    raw = path.read_bytes()
    flat = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    out, offset = {}, 0
    for entry in meta["maps"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        if offset + n > flat.size:
            raise ShapeMismatch(f"{path}: sidecar shapes exceed file size")
        out[entry["name"]] = flat[offset : offset + n].reshape(shape)
        offset += n
    if offset != flat.size:
        raise ShapeMismatch(f"{path}: {flat.size - offset} trailing floats not described by sidecar")
    return out
