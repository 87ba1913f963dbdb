import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from v2xkit.geometry import Agent, CameraPose, Scene, SceneObject  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"


def level_camera(x=0.0, y=0.0, z=1.6, heading=0.0, fov=90.0, width=480, height=272):
    return CameraPose.from_heading((x, y, z), heading, fov, width, height)


def make_agent(agent_id, x=0.0, y=0.0, yaw=0.0, cams=4, fov=100.0):
    cameras = tuple(level_camera(x, y, 1.6, yaw + 2 * np.pi * k / cams, fov) for k in range(cams))
    return Agent(agent_id, (x, y, 1.6, yaw), cameras)


def make_box(oid, x, y, cls="car", size=(4.5, 1.9, 1.6), yaw=0.0, observers=(0,)):
    return SceneObject(oid, (x, y, size[2] / 2), size, yaw, cls, frozenset(observers))


def random_camera(rng, width=480, height=272):
    """Random orthonormal pose with a random positive-focal K."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    f = rng.uniform(100, 800)
    K = np.array([[f, 0, rng.uniform(0, width)], [0, f * rng.uniform(0.8, 1.2), rng.uniform(0, height)], [0, 0, 1]])
    return CameraPose(K, q, rng.normal(scale=5, size=3), width, height)


def two_agent_scene(objects=()):
    return Scene((make_agent(0, 0.0, 0.0), make_agent(1, 20.0, 0.0, np.pi)), tuple(objects))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if not mod or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.format_line(num))
