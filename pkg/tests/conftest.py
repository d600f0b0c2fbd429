from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from sfcalc.clifford import Multivector, Paravector

settings.register_profile("sfcalc", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("sfcalc")

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


@st.composite
def multivectors(draw, n: int):
    return Multivector(n, draw(st.lists(finite, min_size=1 << n, max_size=1 << n)))


@st.composite
def paravectors(draw, n: int = 3, min_scalar: float = 0.05):
    """Paravectors with |Sc(s)| >= min_scalar and a nonzero vector part."""
    sign = draw(st.sampled_from([-1.0, 1.0]))
    s0 = sign * draw(st.floats(min_scalar, 3.0))
    vec = draw(st.lists(finite, min_size=n, max_size=n))
    if np.linalg.norm(vec) < 1e-3:
        vec = [1.0] + list(vec[1:])
    return Paravector(s0, vec)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
