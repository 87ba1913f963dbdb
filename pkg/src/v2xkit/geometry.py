"""Scene types, pinhole projection, FPV mask rasterization and BEV geometry.

Coordinate conventions
----------------------
World frame: right-handed, x forward / y left / z up, ground plane z = 0.
Camera frame: x right, y down, z forward (optical axis).
Image frame: origin top-left, u to the right, v down, pixel (col, row) has
its center at (col + 0.5, row + 0.5).

``CameraPose.rotation`` maps world to camera: ``x_cam = R @ x_world + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateFov,
    DepthNearZero,
    InvalidScene,
    OutOfRange,
    ValidationError,
)

CLASS_NAMES = ("car", "van", "bus", "truck", "pedestrian")
CLASS_IDS = {name: i + 1 for i, name in enumerate(CLASS_NAMES)}

# corners in front of the camera must be deeper than this (meters)
DEPTH_EPS = 1e-6
# |x3| below this means the point cannot be projected
PROJECTION_EPS = 1e-9
# separating-axis slack; projections closer than this count as touching
OVERLAP_EPS = 1e-9

DEFAULT_MAX_RANGE = 50.0
DEFAULT_MASK_WIDTH = 480
DEFAULT_MASK_HEIGHT = 272

# bottom face counter-clockwise from (-x, -y), then the top face in the same order
UNIT_CORNERS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=np.float64,
)


def _frozen_array(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=np.float64).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CameraPose:
    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_width: int
    image_height: int

    def __post_init__(self):
        K = _frozen_array(self.intrinsics, (3, 3))
        R = _frozen_array(self.rotation, (3, 3))
        t = _frozen_array(self.translation, (3,))
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if not (K[0, 0] > 0 and K[1, 1] > 0 and K[2, 2] == 1.0):
            raise ValidationError("intrinsics need positive focal lengths and K[2,2] == 1")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9, rtol=0) or not math.isclose(
            np.linalg.det(R), 1.0, abs_tol=1e-9
        ):
            raise ValidationError("rotation must be orthonormal with det +1")
        if int(self.image_width) <= 0 or int(self.image_height) <= 0:
            raise ValidationError("image dimensions must be positive")
        object.__setattr__(self, "image_width", int(self.image_width))
        object.__setattr__(self, "image_height", int(self.image_height))

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def horizontal_fov(self) -> float:
        K = self.intrinsics
        cx, fx = K[0, 2], K[0, 0]
        return math.atan(cx / fx) + math.atan((self.image_width - cx) / fx)

    @classmethod
    def from_heading(
        cls,
        position: Sequence[float],
        heading: float,
        fov_degrees: float,
        width: int = DEFAULT_MASK_WIDTH,
        height: int = DEFAULT_MASK_HEIGHT,
    ) -> "CameraPose":
        """Level camera at ``position`` looking along world yaw ``heading``."""
        c, s = math.cos(heading), math.sin(heading)
        R = np.array([[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]])
        f = (width / 2.0) / math.tan(math.radians(fov_degrees) / 2.0)
        K = np.array([[f, 0.0, width / 2.0], [0.0, f, height / 2.0], [0.0, 0.0, 1.0]])
        t = -R @ np.asarray(position, dtype=np.float64)
        return cls(K, R, t, width, height)

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return (
            np.array_equal(self.intrinsics, other.intrinsics)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
            and self.image_width == other.image_width
            and self.image_height == other.image_height
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SceneObject:
    id: int
    center: np.ndarray
    size: np.ndarray
    yaw: float
    class_label: str
    observers: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen_array(self.center, (3,)))
        object.__setattr__(self, "size", _frozen_array(self.size, (3,)))
        object.__setattr__(self, "yaw", float(self.yaw))
        object.__setattr__(self, "observers", frozenset(int(a) for a in self.observers))
        if np.any(self.size <= 0):
            raise ValidationError(f"object {self.id}: size components must be positive")

    @property
    def class_id(self) -> int:
        return CLASS_IDS[self.class_label]

    @property
    def is_shared(self) -> bool:
        return len(self.observers) > 1

    def __eq__(self, other):
        if not isinstance(other, SceneObject):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.center, other.center)
            and np.array_equal(self.size, other.size)
            and self.yaw == other.yaw
            and self.class_label == other.class_label
            and self.observers == other.observers
        )

    __hash__ = None


@dataclass(frozen=True)
class Agent:
    id: int
    pose: tuple  # (x, y, z, yaw)
    cameras: tuple

    def __post_init__(self):
        object.__setattr__(self, "pose", tuple(float(p) for p in self.pose))
        object.__setattr__(self, "cameras", tuple(self.cameras))


@dataclass(frozen=True)
class Scene:
    agents: tuple
    objects: tuple = ()
    globals: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "globals", dict(self.globals))
        self.validate()

    def validate(self) -> None:
        if not self.agents:
            raise InvalidScene("scene needs at least one agent")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise InvalidScene("duplicate agent ids")
        counts = {len(a.cameras) for a in self.agents}
        if 0 in counts:
            raise InvalidScene("every agent needs at least one camera")
        if len(counts) != 1:
            raise InvalidScene("camera count must be equal across agents")
        agent_ids = set(ids)
        seen = set()
        for obj in self.objects:
            if obj.id in seen:
                raise InvalidScene(f"duplicate object id {obj.id}")
            seen.add(obj.id)
            if obj.class_label not in CLASS_IDS:
                raise InvalidScene(f"object {obj.id}: unknown class {obj.class_label!r}")
            if not obj.observers:
                raise InvalidScene(f"object {obj.id}: empty observer set")
            if not obj.observers <= agent_ids:
                raise InvalidScene(f"object {obj.id}: observers reference unknown agents")

    def agent(self, agent_id: int) -> Agent:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(agent_id)

    def object(self, object_id: int) -> SceneObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)


@dataclass(frozen=True, eq=False)
class FpvMask:
    width: int
    height: int
    cells: np.ndarray  # (height, width) uint16

    def __eq__(self, other):
        if not isinstance(other, FpvMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.cells, other.cells)
        )

    __hash__ = None


@dataclass(frozen=True)
class BevParams:
    width: int = 200
    height: int = 200
    x_min: float = -50.0
    y_min: float = -50.0
    resolution: float = 0.5


@dataclass(frozen=True, eq=False)
class BevGrid:
    """Class-id raster indexed ``cells[v, u]`` (v along y, u along x)."""

    cells: np.ndarray
    params: BevParams = BevParams()


@dataclass(frozen=True, eq=False)
class FootprintPolygon:
    vertices: np.ndarray  # (n, 2), counter-clockwise

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen_array(self.vertices, (-1, 2)))
        if len(self.vertices) < 3:
            raise ValidationError("footprint needs at least 3 vertices")

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)


# --------------------------------------------------------------------------
# boxes and projection


def rotation_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def box_corners(obj: SceneObject) -> np.ndarray:
    """Return the (8, 3) world-space corners of ``obj`` in ``UNIT_CORNERS`` order."""
    local = UNIT_CORNERS * (obj.size / 2.0)
    return local @ rotation_z(obj.yaw).T + obj.center


def project_point(pt: Sequence[float], cam: CameraPose) -> tuple[float, float, float]:
    x = cam.intrinsics @ (cam.rotation @ np.asarray(pt, dtype=np.float64) + cam.translation)
    if abs(x[2]) < PROJECTION_EPS:
        raise DepthNearZero(f"point {tuple(pt)} lies on the camera's principal plane")
    return float(x[0] / x[2]), float(x[1] / x[2]), float(x[2])


def project_points(pts: np.ndarray, cam: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection. Returns ``(uv, depth)``; uv rows are NaN where
    ``|depth| < PROJECTION_EPS``."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    x = (pts @ cam.rotation.T + cam.translation) @ cam.intrinsics.T
    depth = x[:, 2]
    uv = np.full((len(pts), 2), np.nan)
    ok = np.abs(depth) >= PROJECTION_EPS
    uv[ok] = x[ok, :2] / depth[ok, None]
    return uv, depth


def unproject(u: float, v: float, depth: float, cam: CameraPose) -> np.ndarray:
    """World point that projects to pixel (u, v) at the given depth."""
    ray = np.linalg.solve(cam.intrinsics, np.array([u * depth, v * depth, depth]))
    return cam.rotation.T @ (ray - cam.translation)


def camera_depth(pt: Sequence[float], cam: CameraPose) -> float:
    return float((cam.rotation @ np.asarray(pt, dtype=np.float64) + cam.translation)[2])


# --------------------------------------------------------------------------
# 2D polygon helpers


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain. Returns counter-clockwise hull vertices
    (positive signed area), collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.float64).reshape(-1, 2))))
    if len(pts) < 3:
        return np.array(pts, dtype=np.float64).reshape(-1, 2)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise winding."""
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def point_in_convex(vertices: np.ndarray, pt: Sequence[float]) -> bool:
    """Inclusive containment test for a counter-clockwise convex polygon."""
    v = np.asarray(vertices, dtype=np.float64)
    n = len(v)
    for i in range(n):
        if _cross(v[i], v[(i + 1) % n], pt) < 0:
            return False
    return True


def _fill_convex(cells: np.ndarray, hull: np.ndarray, value, xs: np.ndarray, ys: np.ndarray) -> None:
    """Write ``value`` into every cell whose sample point (xs[col], ys[row])
    lies inside or on the counter-clockwise ``hull``.

    ``xs`` and ``ys`` must be increasing.
    """
    lo = hull.min(axis=0)
    hi = hull.max(axis=0)
    c0, c1 = np.searchsorted(xs, lo[0], "left"), np.searchsorted(xs, hi[0], "right")
    r0, r1 = np.searchsorted(ys, lo[1], "left"), np.searchsorted(ys, hi[1], "right")
    if c0 >= c1 or r0 >= r1:
        return
    px = xs[c0:c1][None, :]
    py = ys[r0:r1][:, None]
    inside = np.ones((r1 - r0, c1 - c0), dtype=bool)
    n = len(hull)
    for i in range(n):
        ax, ay = hull[i]
        bx, by = hull[(i + 1) % n]
        inside &= (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0
    cells[r0:r1, c0:c1][inside] = value


# --------------------------------------------------------------------------
# FPV masks


def _projected_hull(obj: SceneObject, cam: CameraPose, out_w: int, out_h: int):
    """Hull of the object's in-front corners in output-raster pixels, or None."""
    uv, depth = project_points(box_corners(obj), cam)
    front = depth > DEPTH_EPS
    if front.sum() < 3:
        return None
    scale = np.array([out_w / cam.image_width, out_h / cam.image_height])
    hull = convex_hull(uv[front] * scale)
    if len(hull) < 3:
        return None
    return hull


def _paint_order(objects: Iterable[SceneObject], cam: CameraPose) -> list:
    # farthest center first so nearer objects overwrite; id breaks ties
    return sorted(objects, key=lambda o: (-camera_depth(o.center, cam), o.id))


def _paint(objects, cam, out_w, out_h, values, dtype, fill):
    if out_w <= 0 or out_h <= 0:
        raise ValidationError("output raster dimensions must be positive")
    cells = np.full((out_h, out_w), fill, dtype=dtype)
    xs = np.arange(out_w) + 0.5
    ys = np.arange(out_h) + 0.5
    for obj in _paint_order(objects, cam):
        hull = _projected_hull(obj, cam, out_w, out_h)
        if hull is not None:
            _fill_convex(cells, hull, values(obj), xs, ys)
    return cells


def rasterize_fpv_mask(
    objects: Sequence[SceneObject],
    cam: CameraPose,
    out_w: int = DEFAULT_MASK_WIDTH,
    out_h: int = DEFAULT_MASK_HEIGHT,
) -> FpvMask:
    """Per-camera class-id mask from projected box hulls (painter's order)."""
    cells = _paint(objects, cam, out_w, out_h, lambda o: o.class_id, np.uint16, 0)
    return FpvMask(out_w, out_h, cells)


def rasterize_object_ids(
    objects: Sequence[SceneObject],
    cam: CameraPose,
    out_w: int = DEFAULT_MASK_WIDTH,
    out_h: int = DEFAULT_MASK_HEIGHT,
) -> np.ndarray:
    """Same raster as :func:`rasterize_fpv_mask` but holding object ids;
    background is -1."""
    return _paint(objects, cam, out_w, out_h, lambda o: o.id, np.int64, -1)


# --------------------------------------------------------------------------
# footprints


def frustum_footprint(cam: CameraPose, max_range: float = DEFAULT_MAX_RANGE) -> FootprintPolygon:
    """Ground-plane triangle spanned by the camera position and the two
    horizontal field-of-view boundary rays, truncated at depth ``max_range``."""
    if max_range <= 0:
        raise ValidationError("max_range must be positive")
    K = cam.intrinsics
    fx, cx = K[0, 0], K[0, 2]
    if cam.horizontal_fov <= 0:
        raise DegenerateFov("horizontal field of view is not positive")
    forward = cam.rotation[2]
    if math.hypot(forward[0], forward[1]) < 1e-6:
        raise DegenerateFov("optical axis is vertical; footprint undefined")
    apex = cam.center[:2]
    rays = []
    for u in (cam.image_width, 0.0):
        d_cam = np.array([(u - cx) / fx, 0.0, 1.0])
        d_world = cam.rotation.T @ d_cam
        rays.append(apex + max_range * d_world[:2])
    tri = np.array([apex, rays[0], rays[1]])
    area = polygon_area(tri)
    if abs(area) < 1e-12:
        raise DegenerateFov("footprint collapsed to zero area")
    if area < 0:
        tri = tri[[0, 2, 1]]
    return FootprintPolygon(tri)


def footprints_overlap(a: FootprintPolygon, b: FootprintPolygon) -> bool:
    """Separating-axis test; true only for positive-area intersection."""
    va, vb = a.vertices, b.vertices
    for poly in (va, vb):
        n = len(poly)
        for i in range(n):
            edge = poly[(i + 1) % n] - poly[i]
            length = math.hypot(edge[0], edge[1])
            if length == 0.0:
                continue
            axis = np.array([-edge[1], edge[0]]) / length
            pa = va @ axis
            pb = vb @ axis
            if pa.max() - pb.min() <= OVERLAP_EPS or pb.max() - pa.min() <= OVERLAP_EPS:
                return False
    return True


# --------------------------------------------------------------------------
# BEV


def bev_discretize(pt: Sequence[float], params: BevParams = BevParams()) -> tuple[int, int]:
    x, y = float(pt[0]), float(pt[1])
    u = math.floor((x - params.x_min) / params.resolution)
    v = math.floor((y - params.y_min) / params.resolution)
    if not (0 <= u < params.width and 0 <= v < params.height):
        raise OutOfRange(f"point ({x}, {y}) lies outside the BEV grid")
    return u, v


def bev_cell_centers(params: BevParams) -> tuple[np.ndarray, np.ndarray]:
    xs = params.x_min + (np.arange(params.width) + 0.5) * params.resolution
    ys = params.y_min + (np.arange(params.height) + 0.5) * params.resolution
    return xs, ys


def bev_render(scene: Scene, params: BevParams = BevParams()) -> BevGrid:
    """Class-id BEV raster of box ground footprints; higher ids overwrite."""
    cells = np.zeros((params.height, params.width), dtype=np.uint16)
    xs, ys = bev_cell_centers(params)
    for obj in sorted(scene.objects, key=lambda o: o.id):
        footprint = convex_hull(box_corners(obj)[:4, :2])
        if len(footprint) >= 3:
            _fill_convex(cells, footprint, obj.class_id, xs, ys)
    return BevGrid(cells, params)
