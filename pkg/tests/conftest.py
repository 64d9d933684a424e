import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vegdyn.model import build_model

# Compiled kernels make the first call of a test slow; no per-example deadline.
settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def phi_oracle(x, lo=0.1, hi=0.9, center=0.4, slope=0.05):
    """Independent evaluation of the default forest-mortality sigmoid."""
    x = min(max(x, 0.0), 1.0)
    return lo + (hi - lo) / (1.0 + math.exp(-(x - center) / slope))


@pytest.fixture
def gf_patch_config():
    return {
        "model": {"family": "gf"},
        "domain": {"type": "patches", "M": 1},
        "kernels": {"jbar": 1.1},
        "initial": {"law": {"G": 0.5, "F": 0.5}},
    }


@pytest.fixture
def gstf_periodic_config():
    return {
        "model": {"family": "gstf"},
        "domain": {"type": "patches", "M": 1},
        "kernels": {"jbar": 0.25, "beta": 0.4},
        "initial": {"law": {"G": 0.4, "S": 0.2, "T": 0.2, "F": 0.2}},
    }


def forest_block_ring(jbar, sigma=0.05, lo=1.0, hi=2.5, L=5.0):
    return build_model({
        "model": {"family": "gf"},
        "domain": {"type": "ring", "L": L},
        "kernels": {"jbar": jbar, "sigma": sigma},
        "initial": {"law": {"G": 1.0, "F": 0.0}, "blocks": [{"lo": lo, "hi": hi, "law": {"G": 0.0, "F": 1.0}}]},
    })


def pinning_model(forest_hi=0.45):
    return build_model({
        "model": {"family": "gf"},
        "domain": {"type": "interval", "L": 1.0, "measure": "trapezoid", "a": 0.4, "b": 1.2,
                   "boundary": "reflecting"},
        "kernels": {"jbar": 1.1, "sigma": 0.02},
        "initial": {"law": {"G": 1.0, "F": 0.0},
                    "blocks": [{"lo": 0.0, "hi": forest_hi, "law": {"G": 0.0, "F": 1.0}}]},
    })


def binomial_ok(count, n, p, z=4.0):
    return abs(count - n * p) <= z * math.sqrt(n * p * (1 - p))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
