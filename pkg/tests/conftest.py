"""Shared fixtures: seeded smooth random fields at the standard degree."""

import numpy as np
import pytest

from capdrop.sphgrid import SphCoeffs, degrees, get_basis, sobolev_norm

LMAX = 16


def smooth_field(rng, lmax=LMAX, amp=1.0, lmin=0, lcut=6, norm_s=0.0):
    """Random band-limited field scaled to ``|c|_{H^norm_s} = amp``."""
    c = SphCoeffs(lmax)
    l = degrees(lmax)
    mask = (l >= lmin) & (l <= min(lcut, lmax))
    c.data[mask] = rng.standard_normal(int(mask.sum())) * np.exp(-0.5 * l[mask])
    return c * (amp / sobolev_norm(c, norm_s))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def basis16():
    return get_basis(LMAX)
