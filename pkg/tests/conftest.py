"""Shared fixtures: meshes are immutable, so build each one once per session."""

import numpy as np
import pytest

from obsfem import build_disk_mesh, build_square_mesh


@pytest.fixture(scope="session")
def square4():
    return build_square_mesh(4)


@pytest.fixture(scope="session")
def square8():
    return build_square_mesh(8)


@pytest.fixture(scope="session")
def square10():
    return build_square_mesh(10)


@pytest.fixture(scope="session")
def disk10():
    return build_disk_mesh(10)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
