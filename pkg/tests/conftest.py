import math

import numpy as np
import pytest

from rotostep.geometry import MotorGeometry
from rotostep.materials import default_table
from rotostep.mesh import extrude_twist, triangulate_reference

QUARTER_TURN_ALPHA = (math.pi / 2.0) / 0.015


def make_desk_geometry(**overrides) -> MotorGeometry:
    params = dict(
        r0=0.02,
        r1=0.04,
        r2=0.06,
        R=0.09,
        alpha=QUARTER_TURN_ALPHA,
        n_magnets=4,
        n_coils=12,
        magnet_arc=0.5,
        coil_arc=0.5,
        T_final=0.015,
    )
    params.update(overrides)
    return MotorGeometry(**params)


@pytest.fixture(scope="session")
def desk_geom() -> MotorGeometry:
    return make_desk_geometry()


@pytest.fixture(scope="session")
def desk_planar(desk_geom):
    return triangulate_reference(desk_geom, 0.009)


@pytest.fixture(scope="session")
def desk_mesh(desk_geom, desk_planar):
    return extrude_twist(desk_planar, desk_geom, 4)


@pytest.fixture(scope="session")
def linear_materials():
    return default_table()


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
