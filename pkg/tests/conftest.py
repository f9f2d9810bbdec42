from __future__ import annotations

import random

import numpy as np
import pytest

from segstudio.geometry import VolumeGrid, identity_grid
from segstudio.mask import VoxelMask
from segstudio.phantom import PhantomSpec, Sphere


@pytest.fixture
def rng():
    return random.Random(20240811)


@pytest.fixture
def nprng():
    return np.random.default_rng(20240811)


def random_unit_frame(rng) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    """Random orthonormal (col_cos, row_cos) pair via Gram-Schmidt."""
    while True:
        a = np.array([rng.gauss(0, 1) for _ in range(3)])
        if np.linalg.norm(a) > 1e-3:
            break
    a = a / np.linalg.norm(a)
    while True:
        b = np.array([rng.gauss(0, 1) for _ in range(3)])
        b = b - a * float(a @ b)
        if np.linalg.norm(b) > 1e-3:
            break
    b = b / np.linalg.norm(b)
    return tuple(float(v) for v in a), tuple(float(v) for v in b)


def random_grid(rng, max_dim=16) -> VolumeGrid:
    col, row = random_unit_frame(rng)
    return VolumeGrid(
        rows=rng.randint(1, max_dim), cols=rng.randint(1, max_dim),
        slices=rng.randint(1, max_dim),
        pixel_spacing=(rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0)),
        slice_spacing=rng.uniform(0.3, 5.0),
        origin=(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)),
        col_cos=col, row_cos=row)


def random_mask(nprng, grid: VolumeGrid, density: float = 0.5) -> VoxelMask:
    return VoxelMask(grid, nprng.random(grid.shape) < density)


@pytest.fixture
def small_grid() -> VolumeGrid:
    return identity_grid(4, 4, 2)


def sphere_phantom_spec(label: str, size: int = 24, radius: float | None = None,
                        intensity: int = 1000, roi_name: str = "lesion") -> PhantomSpec:
    grid = identity_grid(size, size, size)
    c = (size - 1) / 2.0
    if radius is None:
        radius = size / 4.0
    return PhantomSpec(label=label, grid=grid, background=0,
                       shapes=(Sphere(center=(c, c, c), radius=radius,
                                      intensity=intensity, roi_name=roi_name),))
