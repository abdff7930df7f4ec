import numpy as np
import pytest
from hypothesis import settings

from stnn_ddi import data
from stnn_ddi.model import FactorModel

settings.register_profile("stnn", deadline=None, max_examples=50)
settings.load_profile("stnn")


def random_model(rng, n, f, R, bias=0.0):
    return FactorModel(
        rng.standard_normal((n, R)),
        rng.standard_normal((f, R)),
        rng.standard_normal(R),
        bias,
    )


def random_fingerprint(rng, n, lo=0, hi=None):
    hi = n if hi is None else hi
    size = int(rng.integers(lo, hi + 1))
    return tuple(sorted(rng.choice(n, size=size, replace=False).tolist()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def planted():
    return data.generate_planted(20, 30, 3, 3, 0.1, seed=4)
