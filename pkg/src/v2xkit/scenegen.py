"""Deterministic synthetic multi-agent scenes and shared-object edits."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import (
    EmptyScene,
    InfeasibleSharedRatio,
    InvalidConfig,
    NotObserved,
    OutOfExtent,
    UnknownObject,
    ValidationError,
)
from .geometry import (
    CLASS_NAMES,
    DEFAULT_MASK_HEIGHT,
    DEFAULT_MASK_WIDTH,
    DEFAULT_MAX_RANGE,
    Agent,
    CameraPose,
    Scene,
    SceneObject,
    frustum_footprint,
    point_in_convex,
)
from .rng import CounterRng
from .viewgraph import compute_visibility

# nominal (length, width, height) in meters; each axis is scaled by U(0.9, 1.1)
NOMINAL_SIZES = {
    "car": (4.5, 1.9, 1.6),
    "van": (5.0, 2.0, 2.2),
    "bus": (12.0, 2.5, 3.2),
    "truck": (8.0, 2.5, 3.0),
    "pedestrian": (0.6, 0.6, 1.75),
}
SIZE_JITTER = 0.1
WEATHER = ("clear", "cloudy", "rain", "fog")
TIME_OF_DAY = ("day", "dusk", "night")
MAX_PLACEMENT_ATTEMPTS = 1000


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    num_agents: int = 2
    cameras_per_agent: int = 4
    num_objects: int = 20
    shared_ratio: float = 0.0
    extent: float = 50.0
    fov_degrees: float = 100.0
    camera_height: float = 1.6
    max_range: float = DEFAULT_MAX_RANGE
    image_width: int = DEFAULT_MASK_WIDTH
    image_height: int = DEFAULT_MASK_HEIGHT

    def validate(self) -> None:
        if self.num_agents < 1:
            raise InvalidConfig("num_agents must be >= 1")
        if self.cameras_per_agent < 1:
            raise InvalidConfig("cameras_per_agent must be >= 1")
        if self.num_objects < 0:
            raise InvalidConfig("num_objects must be >= 0")
        if not (0.0 <= self.shared_ratio <= 1.0):
            raise InvalidConfig("shared_ratio must lie in [0, 1]")
        if not (0.0 < self.fov_degrees < 180.0):
            raise InvalidConfig("fov_degrees must lie in (0, 180)")
        if self.extent <= 0 or self.max_range <= 0:
            raise InvalidConfig("extent and max_range must be positive")
        if self.camera_height <= 0:
            raise InvalidConfig("camera_height must be positive")
        if self.image_width <= 0 or self.image_height <= 0:
            raise InvalidConfig("image size must be positive")


@dataclass(frozen=True)
class SceneEdit:
    kind: str  # remove_shared | move_shared | insert_shared
    object_id: int | None = None
    new_center: tuple | None = None
    class_label: str | None = None
    size: tuple | None = None
    yaw: float = 0.0

    KINDS = ("remove_shared", "move_shared", "insert_shared")

    @classmethod
    def from_dict(cls, data) -> "SceneEdit":
        kind = data.get("kind")
        if kind not in cls.KINDS:
            raise ValidationError(f"unknown edit kind {kind!r}")
        center = data.get("new_center")
        size = data.get("size")
        return cls(
            kind=kind,
            object_id=data.get("object_id"),
            new_center=tuple(center) if center is not None else None,
            class_label=data.get("class"),
            size=tuple(size) if size is not None else None,
            yaw=float(data.get("yaw", 0.0)),
        )


def shared_count(ratio: float, n: int) -> int:
    # the 1e-9 guard keeps e.g. 0.07 * 100 = 7.000000000000001 at 7
    return min(n, math.ceil(ratio * n - 1e-9))


def _make_agent(agent_id: int, x: float, y: float, yaw: float, cfg: SceneConfig) -> Agent:
    cams = []
    for k in range(cfg.cameras_per_agent):
        heading = yaw + 2.0 * math.pi * k / cfg.cameras_per_agent
        cams.append(
            CameraPose.from_heading(
                (x, y, cfg.camera_height), heading, cfg.fov_degrees, cfg.image_width, cfg.image_height
            )
        )
    return Agent(agent_id, (x, y, cfg.camera_height, yaw), tuple(cams))


def agent_footprints(agent: Agent, max_range: float = DEFAULT_MAX_RANGE) -> list:
    return [frustum_footprint(cam, max_range) for cam in agent.cameras]


def agents_covering(agents: Sequence[Agent], xy, max_range: float = DEFAULT_MAX_RANGE, footprints=None) -> list:
    """Ids of agents with at least one camera footprint containing ``xy``."""
    fps = footprints or {a.id: agent_footprints(a, max_range) for a in agents}
    return [a.id for a in agents if any(point_in_convex(fp.vertices, xy) for fp in fps[a.id])]


def _sample_object(rng: CounterRng, oid: int, x: float, y: float, observers) -> SceneObject:
    label = CLASS_NAMES[rng.randbelow(len(CLASS_NAMES))]
    size = tuple(s * rng.uniform(1.0 - SIZE_JITTER, 1.0 + SIZE_JITTER) for s in NOMINAL_SIZES[label])
    yaw = rng.uniform(-math.pi, math.pi)
    return SceneObject(oid, (x, y, size[2] / 2.0), size, yaw, label, frozenset(observers))


def generate_scene(cfg: SceneConfig) -> Scene:
    """Byte-deterministic scene for ``cfg``.

    Agents sit in the central half of the extent with evenly spaced ring
    rigs. The first ``ceil(shared_ratio * num_objects)`` objects are
    rejection-sampled until at least two agents' footprints contain them;
    the rest are uniform in the extent and observed by the nearest agent.
    """
    cfg.validate()
    rng = CounterRng(cfg.seed)
    half = cfg.extent / 2.0
    agents = []
    for i in range(cfg.num_agents):
        x = rng.uniform(-half, half)
        y = rng.uniform(-half, half)
        yaw = rng.uniform(-math.pi, math.pi)
        agents.append(_make_agent(i, x, y, yaw, cfg))
    fps = {a.id: agent_footprints(a, cfg.max_range) for a in agents}

    n_shared = shared_count(cfg.shared_ratio, cfg.num_objects)
    if n_shared and cfg.num_agents < 2:
        raise InfeasibleSharedRatio("shared objects need at least two agents")
    objects = []
    for oid in range(cfg.num_objects):
        if oid < n_shared:
            for _ in range(MAX_PLACEMENT_ATTEMPTS):
                x = rng.uniform(-cfg.extent, cfg.extent)
                y = rng.uniform(-cfg.extent, cfg.extent)
                observers = agents_covering(agents, (x, y), cfg.max_range, fps)
                if len(observers) >= 2:
                    break
            else:
                raise InfeasibleSharedRatio(
                    f"could not place shared object {oid} after {MAX_PLACEMENT_ATTEMPTS} attempts"
                )
        else:
            x = rng.uniform(-cfg.extent, cfg.extent)
            y = rng.uniform(-cfg.extent, cfg.extent)
            nearest = min(agents, key=lambda a: ((a.pose[0] - x) ** 2 + (a.pose[1] - y) ** 2, a.id))
            observers = [nearest.id]
        objects.append(_sample_object(rng, oid, x, y, observers))

    glob = {
        "seed": cfg.seed,
        "extent": cfg.extent,
        "max_range": cfg.max_range,
        "weather": WEATHER[rng.randbelow(len(WEATHER))],
        "time_of_day": TIME_OF_DAY[rng.randbelow(len(TIME_OF_DAY))],
    }
    return Scene(tuple(agents), tuple(objects), glob)


def observing_agents(scene: Scene, obj: SceneObject) -> frozenset:
    """Agents for which ``obj`` passes the corner-in-image visibility test."""
    probe = Scene(scene.agents, (replace(obj, observers=frozenset({scene.agents[0].id})),), {})
    vis = compute_visibility(probe)
    return frozenset(v.agent_id for v, ids in vis.items() if obj.id in ids)


def _check_extent(scene: Scene, center, extent: float | None) -> None:
    lim = float(extent if extent is not None else scene.globals.get("extent", 50.0))
    if abs(center[0]) > lim or abs(center[1]) > lim:
        raise OutOfExtent(f"position ({center[0]}, {center[1]}) outside +/-{lim} m")


def apply_edit(scene: Scene, edit: SceneEdit, extent: float | None = None) -> Scene:
    """Return a new scene with ``edit`` applied; the input is untouched."""
    objects = list(scene.objects)
    ids = [o.id for o in objects]
    if edit.kind == "remove_shared":
        if edit.object_id not in ids:
            raise UnknownObject(f"no object with id {edit.object_id}")
        objects = [o for o in objects if o.id != edit.object_id]
    elif edit.kind == "move_shared":
        if edit.object_id not in ids:
            raise UnknownObject(f"no object with id {edit.object_id}")
        if edit.new_center is None:
            raise ValidationError("move needs new_center")
        _check_extent(scene, edit.new_center, extent)
        i = ids.index(edit.object_id)
        old = objects[i]
        center = tuple(edit.new_center) if len(edit.new_center) == 3 else (*edit.new_center, old.center[2])
        moved = replace(old, center=np.array(center, dtype=np.float64))
        observers = observing_agents(scene, moved)
        if not observers:
            raise NotObserved(f"object {old.id} would be visible to no agent")
        objects[i] = replace(moved, observers=observers)
    elif edit.kind == "insert_shared":
        if edit.new_center is None or edit.class_label is None:
            raise ValidationError("insert needs new_center and class")
        if edit.class_label not in NOMINAL_SIZES:
            raise ValidationError(f"unknown class {edit.class_label!r}")
        _check_extent(scene, edit.new_center, extent)
        size = edit.size or NOMINAL_SIZES[edit.class_label]
        center = tuple(edit.new_center) if len(edit.new_center) == 3 else (*edit.new_center, size[2] / 2.0)
        new_id = max(ids, default=-1) + 1
        obj = SceneObject(new_id, center, size, edit.yaw, edit.class_label, frozenset())
        observers = observing_agents(scene, obj)
        if not observers:
            raise NotObserved("inserted object would be visible to no agent")
        objects.append(replace(obj, observers=observers))
    else:
        raise ValidationError(f"unknown edit kind {edit.kind!r}")
    return Scene(scene.agents, tuple(objects), scene.globals)


def shared_ratio(scene: Scene) -> float:
    if not scene.objects:
        raise EmptyScene("shared ratio is undefined for a scene without objects")
    return sum(o.is_shared for o in scene.objects) / len(scene.objects)
