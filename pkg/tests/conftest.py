import numpy as np
import pytest

from romassim.fields import ScalarField, StructuredMesh


@pytest.fixture
def unit_square_mesh():
    """16x16 cells on [0,1]^2, all symmetry edges, one region."""
    return StructuredMesh(
        nx=16, ny=16, dx=1 / 16, dy=1 / 16, origin=(0.0, 0.0),
        region_id=np.zeros(256, dtype=int),
        boundary={s: "symmetry" for s in ("west", "east", "south", "north")})


@pytest.fixture
def coarse_mesh():
    """10x10 unit cells on [0,10]^2."""
    return StructuredMesh(
        nx=10, ny=10, dx=1.0, dy=1.0, origin=(0.0, 0.0),
        region_id=np.zeros(100, dtype=int),
        boundary={s: "symmetry" for s in ("west", "east", "south", "north")})


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240810))


def random_field(mesh, rng, scale=1.0):
    return ScalarField(mesh, scale * rng.standard_normal(mesh.n_cells))
