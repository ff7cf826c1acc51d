from __future__ import annotations

import math

import numpy as np
import pytest

from eulercert.boundary import FourierProfile, InflowData
from eulercert.geometry import DomainSpec, build_mesh, disc_mesh
from eulercert.transport import VelocityField

R1, R2 = 2.0, 0.5


def annulus_spec(h=0.1, **kw) -> DomainSpec:
    return DomainSpec("annulus", R1, R2, mesh_target_h=h, **kw)


def const_inflow(c=1.0, **kw) -> InflowData:
    return InflowData(FourierProfile(c), **kw)


def radial_oracle(x):
    return R1 / np.linalg.norm(np.atleast_2d(x), axis=1)


@pytest.fixture(scope="session")
def annulus():
    return build_mesh(annulus_spec(0.1))


@pytest.fixture(scope="session")
def annulus_coarse():
    return build_mesh(annulus_spec(0.2))


@pytest.fixture(scope="session")
def annulus_fine():
    return build_mesh(annulus_spec(0.05))


@pytest.fixture(scope="session")
def disc():
    return disc_mesh(1.0, 0.05)


@pytest.fixture(scope="session")
def radial_q(annulus):
    return VelocityField(annulus, None, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


LN2, LN4 = math.log(2.0), math.log(4.0)

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
