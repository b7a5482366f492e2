import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from endoscale.geometry import CameraIntrinsics, CylinderAxis

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ALPHA_C1 = 1.0 / math.sqrt(24.0)


@pytest.fixture
def c1():
    """Axis along x through (0, 0, 5), radius 1."""
    return CylinderAxis(np.array([1.0, 0.0, 0.0]), np.array([0.0, -5.0, 0.0]), 1.0)


@pytest.fixture
def k_id():
    return CameraIntrinsics.identity()


@pytest.fixture
def k500():
    return CameraIntrinsics(500.0, 500.0, 320.0, 256.0, 640, 512)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@st.composite
def axes(draw, depth=(20.0, 150.0), radius=(2.0, 6.0), max_cos_z=0.95):
    """Random cylinders in front of the camera, camera well outside the shaft."""
    r = draw(st.floats(*radius))
    z = draw(st.floats(*depth))
    x = draw(st.floats(-0.4, 0.4)) * z
    y = draw(st.floats(-0.4, 0.4)) * z
    theta = draw(st.floats(0.0, 2 * math.pi))
    cz = draw(st.floats(-max_cos_z + 1e-3, max_cos_z - 1e-3))
    sz = math.sqrt(1.0 - cz * cz)
    d = np.array([sz * math.cos(theta), sz * math.sin(theta), cz])
    axis = CylinderAxis.from_point_direction([x, y, z], d, r)
    if np.linalg.norm(axis.m) < 2 * r:
        axis = CylinderAxis.from_point_direction([x, y, z + 4 * r], d, r)
    return axis
