import numpy as np
import pytest
from hypothesis import settings

from osa.init import InitConfig, init_osa_head, make_rng, random_input

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return make_rng(20240611)


def make_head(d=4, h=2, alpha=0.1, seed=0):
    return init_osa_head(InitConfig(d, h, alpha0=alpha), make_rng(seed))


def make_input(n, d, seed=1, norm=1.0):
    return random_input(n, d, make_rng(seed), spectral_norm=norm)


def random_skew(rng, n, norm=None):
    a = rng.standard_normal((n, n))
    a = a - a.T
    if norm is not None:
        a *= norm / np.linalg.norm(a, 2)
    return a
