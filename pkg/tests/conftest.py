import numpy as np
import pytest

from hybrid_icp.association import ObjectModel, Scene
from hybrid_icp.geometry import CameraIntrinsics, icosphere, render_depth
from hybrid_icp.se3 import Pose


@pytest.fixture(scope="session")
def cam():
    return CameraIntrinsics.default()


@pytest.fixture(scope="session")
def small_cam():
    return CameraIntrinsics(60.0, 60.0, 31.5, 23.5, 64, 48)


@pytest.fixture(scope="session")
def sphere_mesh():
    return icosphere(0.05, 3)


@pytest.fixture(scope="session")
def sphere_model(sphere_mesh):
    return ObjectModel.from_mesh(sphere_mesh, 2000, seed=0)


@pytest.fixture(scope="session")
def sphere_gt():
    return Pose(np.eye(3), np.array([0.01, -0.005, 0.4]))


@pytest.fixture(scope="session")
def sphere_scene(sphere_mesh, sphere_gt, cam):
    depth, mask = render_depth(sphere_mesh, sphere_gt, cam)
    return Scene(depth, mask, cam)


# --- acceptance reporting -----------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    verdict = "PASS" if rep.passed else "FAIL"
    if rep.when != "call":
        detail = detail or f"error during {rep.when}"
    _ACCEPTANCE[number] = (verdict, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        verdict, title, detail = _ACCEPTANCE[number]
        line = f"criterion {number:2d} {verdict}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
