import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from novipeak.field import PeakonConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240611))


finite = st.floats(-6.0, 6.0, allow_nan=False, allow_infinity=False)
amplitude = st.floats(-2.0, 2.0, allow_nan=False).filter(lambda a: abs(a) > 1e-3)
positive_amplitude = st.floats(0.1, 2.0, allow_nan=False)


@st.composite
def configs(draw, max_n=4, positive=False):
    n = draw(st.integers(1, max_n))
    q = draw(st.lists(finite, min_size=n, max_size=n))
    amp = positive_amplitude if positive else amplitude
    p = draw(st.lists(amp, min_size=n, max_size=n))
    return PeakonConfig(q, p)


@st.composite
def ordered_positive(draw, max_n=3, min_gap=0.5):
    n = draw(st.integers(1, max_n))
    start = draw(st.floats(-5.0, 5.0))
    gaps = draw(st.lists(st.floats(min_gap, 6.0), min_size=n - 1, max_size=n - 1))
    p = draw(st.lists(positive_amplitude, min_size=n, max_size=n))
    return PeakonConfig(np.cumsum([start] + gaps), p)
