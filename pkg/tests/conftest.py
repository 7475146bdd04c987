import numpy as np
import pytest

from urbanfn.synth import CitySpec, allocate_blocks, synthesize_tile


@pytest.fixture(scope="session")
def small_tile():
    """One 256 px tile, generated once per session for read-only tests."""
    spec = CitySpec(n_tiles=1, tile_px=256)
    blocks = allocate_blocks(spec, 42)
    return spec, synthesize_tile(spec, 42, 0, blocks[0])


@pytest.fixture()
def rng():
    return np.random.default_rng(20260814)
