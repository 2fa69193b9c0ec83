import numpy as np
import pytest

from pmri.core import NoiseSpec, SensitivityMaps
from pmri.sim import (CoilProfileSpec, PhantomSpec, make_coil_maps, make_mask,
                      make_phantom, simulate_acquisition)


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def unit_maps(coils, h, w):
    """Flat maps with |S_c| = 1/sqrt(C) everywhere (exact unit RSS)."""
    data = np.full((coils, h, w), 1.0 / np.sqrt(coils), dtype=np.complex128)
    return SensitivityMaps(data=data, support=np.ones((h, w), dtype=bool))


def random_unit_maps(rng, coils, h, w):
    raw = random_complex(rng, (coils, h, w))
    rss = np.sqrt((np.abs(raw) ** 2).sum(axis=0))
    return SensitivityMaps(data=raw / rss[None],
                           support=np.ones((h, w), dtype=bool))


@pytest.fixture
def ring_maps_8c():
    return make_coil_maps(CoilProfileSpec(coils=8, falloff=28.0,
                                          ring_radius=26.0, seed=2), 64, 64)


@pytest.fixture
def head_64(ring_maps_8c):
    """Noiseless 8-coil 64x64 head acquisition at R=4 with a 24x24 ACS."""
    truth = make_phantom(PhantomSpec("shepp_logan", 64, 64, seed=11))
    mask = make_mask(64, 64, 4, 24, 24)
    return simulate_acquisition(truth, ring_maps_8c, mask, NoiseSpec(0.0, 0))
