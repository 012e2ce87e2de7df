import numpy as np
import pytest
from hypothesis import settings

from contactlo.geometry import Grid
from contactlo.lagrangians import make_model

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def quad(lam):
    return make_model("quadratic_discounted", **{"lambda": lam})


@pytest.fixture
def sine64():
    g = Grid(1, 64)
    return g.sample(lambda x: 0.2 * np.sin(2 * np.pi * x[:, 0]))
