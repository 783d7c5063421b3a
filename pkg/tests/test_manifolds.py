from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anosovflows.errors import ModelError
from anosovflows.fields import SYMBOLS, constant, contact_volume, from_sympy
from anosovflows.manifolds import (
    CAT_MATRIX,
    alpha_n_form,
    build_model,
    compatibility_check,
    mapping_torus,
    t3_pA,
    torus3,
)

x, y, z = SYMBOLS
LAM = (3 + np.sqrt(5)) / 2
points = arrays(float, (5, 3), elements=st.floats(-4, 4, allow_nan=False))


@pytest.fixture(scope="module")
def cat_model():
    return mapping_torus(CAT_MATRIX)


def test_canonicalize_examples(cat_model):
    # (0.2, 0.1, 1.0) ~ (A (0.2, 0.1), 0) = (0.5, 0.3, 0)
    q = cat_model.canonicalize(np.array([0.2, 0.1, 1.0]))
    assert np.allclose(q, [0.5, 0.3, 0.0])
    assert np.allclose(torus3().canonicalize(np.array([1.25, -0.5, 3.0])), [0.25, 0.5, 0.0])


def test_transport_examples(cat_model):
    assert np.allclose(cat_model.transport_vector(1, [1.0, 0.0, 0.0]), [2.0, 1.0, 0.0])
    assert np.allclose(cat_model.transport_covector(1, [1.0, 0.0, 0.0]), [1.0, -1.0, 0.0])


@given(points)
def test_canonicalize_idempotent_and_in_box(p):
    for model in (torus3(), mapping_torus(CAT_MATRIX)):
        q = model.canonicalize(p)
        assert np.all((q >= 0) & (q < 1))
        assert np.allclose(model.canonicalize(q), q, atol=1e-12)


@given(points, st.integers(-2, 2))
def test_lift_round_trip(p, k):
    model = mapping_torus(CAT_MATRIX)
    q = model.canonicalize(p)
    assert np.allclose(model.canonicalize(model.lift(q, k)), q, atol=1e-9)
    assert np.allclose(model.distance(model.lift(q, k), q), 0.0, atol=1e-9)


@given(st.integers(-3, 3))
def test_transports_are_dual(k):
    model = mapping_torus(CAT_MATRIX)
    v, a = np.array([0.3, -1.2, 0.5]), np.array([1.0, 2.0, -0.4])
    assert a @ v == pytest.approx(model.transport_covector(k, a) @ model.transport_vector(k, v))


def test_deck_linear_power(cat_model):
    assert np.array_equal(cat_model.deck_linear(2)[:2, :2], CAT_MATRIX @ CAT_MATRIX)
    assert np.allclose(cat_model.deck_linear(-1)[:2, :2] @ CAT_MATRIX, np.eye(2))


def test_distance_is_symmetric_and_wraps():
    model = torus3()
    assert model.distance(np.array([0.01, 0, 0]), np.array([0.99, 0, 0])) == pytest.approx(0.02)
    p, q = np.random.default_rng(2).random((2, 10, 3))
    assert np.allclose(model.distance(p, q), model.distance(q, p))


def test_grid_is_row_major():
    g = torus3().grid(2)
    assert g.shape == (8, 3)
    assert np.array_equal(g[1], [0, 0, 0.5]) and np.array_equal(g[4], [0.5, 0, 0])


def test_sample_points_deterministic():
    m = torus3()
    assert np.array_equal(m.sample_points(2, 5, seed=3), m.sample_points(2, 5, seed=3))
    assert not np.array_equal(m.sample_points(2, 5, seed=3), m.sample_points(2, 5, seed=4))


@pytest.mark.parametrize("A", [[[1, 1], [0, 1]], [[2, 0], [0, 1]], [[1.5, 1], [1, 1]], [[1, 0, 0]]])
def test_bad_monodromy(A):
    with pytest.raises(ModelError):
        mapping_torus(A)


# gluing compatibility -----------------------------------------------------------------


def test_cat_fields_are_compatible(cat):
    model, flow = cat
    fields = [flow.X, flow.invariant_volume, *flow.exact_splitting, *flow.forms.values()]
    for f in fields:
        assert compatibility_check(model, f).passed(1e-10), f


def test_incompatible_field_detected(cat):
    model, _ = cat
    assert not compatibility_check(model, from_sympy("scalar", x)).passed()
    assert not compatibility_check(torus3(), from_sympy("scalar", x)).passed()
    assert compatibility_check(torus3(), from_sympy("scalar", sp.sin(2 * sp.pi * x))).passed()


def test_t3_fields_are_compatible(t3):
    model, flow = t3
    for f in [flow.X, *flow.forms.values()]:
        assert compatibility_check(model, f).passed(1e-10)


# built-in models -------------------------------------------------------------------


def test_cat_constants(cat):
    _, flow = cat
    assert flow.constants["lambda"] == pytest.approx(LAM, abs=1e-14)
    assert flow.constants["log_lambda"] == pytest.approx(np.log(LAM), abs=1e-14)
    wu = flow.constants["w_u"]
    assert np.allclose(CAT_MATRIX @ wu, LAM * wu)
    assert np.linalg.norm(wu) == pytest.approx(1.0)


def test_cat_contact_volumes(cat):
    model, flow = cat
    p = model.sample_points(3, 10)
    L = np.log(LAM)
    assert np.allclose(contact_volume(flow.forms["alpha_plus"])(p), 2 * L)
    assert np.allclose(contact_volume(flow.forms["alpha_minus"])(p), -2 * L)


def test_t3_contact_volumes(t3):
    model, flow = t3
    p = model.sample_points(3, 10)
    assert np.allclose(contact_volume(flow.forms["alpha_plus"])(p), 2 * np.pi * 0.36)
    assert np.allclose(contact_volume(flow.forms["alpha_minus"])(p), -2 * np.pi * 0.09)


def test_t3_flow_in_both_kernels(t3):
    model, flow = t3
    p = model.sample_points(3, 20)
    X = flow.X(p)
    assert np.allclose(np.linalg.norm(X, axis=-1), 1.0)
    for a in flow.forms.values():
        assert np.abs(a.on(p, X)).max() < 1e-12


def test_alpha_n_form_reeb_pair():
    a1 = alpha_n_form(1)
    p = np.random.default_rng(0).random((5, 3))
    assert np.allclose(a1(p)[:, 0], np.cos(2 * np.pi * p[:, 2]))
    assert np.allclose(contact_volume(a1)(p), 2 * np.pi)


@pytest.mark.parametrize("kw", [dict(m=1, n=1), dict(m=-1, n=-2), dict(eps=0.0), dict(eps=1.2),
                                dict(eps=0.4, eps2=0.4), dict(m=0.5)])
def test_t3_rejects_bad_params(kw):
    with pytest.raises(ModelError):
        t3_pA(**kw)


def test_build_model_errors():
    with pytest.raises(ModelError):
        build_model("sphere")
    with pytest.raises(ModelError):
        build_model("t3_pA", {"delta": 1})
    model, _ = build_model("t3_pA", {"eps": 0.2})
    assert model.params["eps"] == 0.2 and model.params["eps2"] == 0.6


def test_reference_volume_orientation():
    p = np.zeros((1, 3))
    assert torus3(orientation=-1).reference_volume()(p) == pytest.approx(-1.0)
    assert constant("form", 1.0, 3)(p) == pytest.approx(1.0)
