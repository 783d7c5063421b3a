from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import settings
from hypothesis import strategies as st

from anosovflows.fields import SYMBOLS
from anosovflows.manifolds import build_model

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

x, y, z = SYMBOLS


@pytest.fixture(scope="session")
def cat():
    return build_model("cat_suspension")


@pytest.fixture(scope="session")
def t3():
    return build_model("t3_pA")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@st.composite
def trig_expr(draw):
    """A short sum of periodic trig terms in x, y, z."""
    terms = []
    for _ in range(draw(st.integers(1, 3))):
        k = [draw(st.integers(-2, 2)) for _ in range(3)]
        c = draw(st.floats(-2, 2, allow_nan=False)).__round__(3)
        phase = draw(st.sampled_from([0, sp.pi / 3, sp.pi / 2]))
        terms.append(sp.Float(c) * sp.sin(2 * sp.pi * (k[0] * x + k[1] * y + k[2] * z) + phase))
    return sum(terms) + sp.Float(draw(st.floats(-1, 1, allow_nan=False)).__round__(3))


trig_triple = st.tuples(trig_expr(), trig_expr(), trig_expr())
