import numpy as np
import pytest

from app.models.design import StructureSpec
from app.models.geometry import DiscProfile, DiscSpec
from app.services.csdesign import make_cs_matrix, optimize_sin, sample_selection_list
from app.services.geometry import (
    make_disc_phantom,
    make_image_grid,
    make_sensor_geometry,
    make_time_grid,
    nyquist_sensor_count,
)


@pytest.fixture(scope="session")
def small_grid():
    return make_image_grid(64, 1.0)


@pytest.fixture(scope="session")
def small_times():
    return make_time_grid(256, 1.0)


@pytest.fixture(scope="session")
def nyquist_geometry(small_grid):
    return make_sensor_geometry(nyquist_sensor_count(small_grid.n_r), 1.0)


@pytest.fixture(scope="session")
def smooth_disc(small_grid):
    disc = DiscSpec(center=(0.1, -0.05), radius=0.35, amplitude=1.0, profile=DiscProfile.SMOOTH)
    return make_disc_phantom(small_grid, [disc])


@pytest.fixture(scope="session")
def default_spec():
    return StructureSpec(b=4, g=4, group_count=4, m0=12)


@pytest.fixture(scope="session")
def designed_group(default_spec):
    """12 x 16 group matrix from a short design search"""
    return optimize_sin(default_spec, k=4, n_iter=100, seed=0)


@pytest.fixture
def random_admissible():
    """Generator of random admissible 12 x 16 matrices"""
    spec = StructureSpec(b=4, g=4, group_count=1, m0=12)

    def draw(seed):
        return make_cs_matrix(sample_selection_list(spec, seed), spec).entries

    return draw


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
