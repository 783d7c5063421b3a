from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from anosovflows.contact import (
    cartan_check,
    check_contact,
    coframe_from_splitting,
    decompose_along_splitting,
    induced_growth_rates,
    induced_growth_rates_lie,
    reeb_field,
    reeb_residual,
    taut_hyperbola_check,
    verify_bicontact,
    volume_preserving_pair,
)
from anosovflows.errors import DegenerateContactError
from anosovflows.fields import SYMBOLS, DerivSpec, constant, ext_d, from_sympy, interior
from anosovflows.manifolds import alpha_n_form

from conftest import trig_expr

x, y, z = SYMBOLS
L = np.log((3 + np.sqrt(5)) / 2)
PTS = np.random.default_rng(11).random((30, 3))


@pytest.mark.parametrize("n", [1, -1, 2, 3])
def test_reeb_of_alpha_n(n):
    # a = (cos t, -sin t, 0), t = 2 pi n z: curl a = 2 pi n a, so R = a
    R = reeb_field(alpha_n_form(n))(PTS)
    t = 2 * np.pi * n * PTS[:, 2]
    assert np.abs(R - np.stack([np.cos(t), -np.sin(t), 0 * t], -1)).max() < 1e-12


@given(trig_expr(), trig_expr())
def test_reeb_defining_equations(f, g):
    alpha = from_sympy("form", [sp.Float(0.2) * sp.sin(2 * sp.pi * z) * (1 + f / 10),
                                sp.Float(0.2) * sp.cos(2 * sp.pi * z), 1 + g / 10], 1)
    vol = np.asarray(ext_d(alpha)(PTS))
    coef = np.einsum("ni,ni->n", alpha(PTS), vol)
    ok = np.abs(coef) > 1e-3
    if not ok.any():
        return
    p = PTS[ok]
    R = reeb_field(alpha)
    assert np.allclose(alpha.on(p, R(p)), 1.0)
    assert np.abs(interior(R, ext_d(alpha))(p)).max() < 1e-9 * max(1.0, np.abs(vol).max())
    assert reeb_residual(alpha, R, p) < 1e-9


def test_reeb_fd_mode():
    a1 = alpha_n_form(1).with_dspec(DerivSpec("fd", 4, 1e-4))
    t = 2 * np.pi * PTS[:, 2]
    assert np.abs(reeb_field(a1)(PTS) - np.stack([np.cos(t), -np.sin(t), 0 * t], -1)).max() < 1e-5


def test_reeb_degenerate():
    with pytest.raises(DegenerateContactError):
        reeb_field(constant("form", [0, 0, 1], 1))(PTS)


def test_check_contact_signs():
    assert check_contact(alpha_n_form(1), PTS).sign == 1
    assert check_contact(alpha_n_form(1), PTS).margin == pytest.approx(2 * np.pi)
    assert check_contact(alpha_n_form(-2), PTS).sign == -1
    assert check_contact(alpha_n_form(1) * -1.0, PTS).sign == 1
    assert not check_contact(constant("form", [0, 0, 1], 1), PTS).definite


@pytest.mark.parametrize("n", [1, 2])
def test_taut_check_on_negated_form(n):
    # alpha ^ d alpha is even in alpha, so (alpha_n, -alpha_n) doubles the volume instead of cancelling it
    rep = taut_hyperbola_check(alpha_n_form(n), alpha_n_form(n) * -1.0, PTS)
    assert rep.volume_residual == pytest.approx(4 * np.pi * n)
    assert not rep.transverse and not rep.passed()


def test_taut_pair_of_opposite_twists():
    rep = taut_hyperbola_check(alpha_n_form(1), alpha_n_form(-1), PTS)
    assert rep.passed(1e-12) and rep.transverse


# bi-contact pairs --------------------------------------------------------------------


def test_bicontact_cat(cat):
    model, flow = cat
    pair = verify_bicontact(flow.forms["alpha_minus"], flow.forms["alpha_plus"], flow.X, model.sample_points(3, 10),
                            model)
    assert pair.valid
    assert pair.plus.min_coefficient == pytest.approx(2 * L)
    assert pair.transversality_margin == pytest.approx(np.pi / 2)


def test_bicontact_t3_regression(t3):
    model, flow = t3
    pair = verify_bicontact(flow.forms["alpha_minus"], flow.forms["alpha_plus"], flow.X, model.sample_points(8, 64),
                            model)
    assert pair.valid
    assert pair.transversality_margin == pytest.approx(0.24896270579271707, abs=1e-12)


def test_bicontact_detects_non_tangent(cat):
    model, flow = cat
    pair = verify_bicontact(flow.forms["alpha_minus"], flow.forms["alpha_plus"], constant("vector", [1, 0, 0]),
                            model.grid(2), model)
    assert not pair.valid


# frames ----------------------------------------------------------------------------


@pytest.mark.parametrize("sign, form", [(1, "alpha_plus"), (-1, "alpha_minus")])
def test_decomposition_cat(cat, sign, form):
    model, flow = cat
    E_s, E_u = flow.exact_splitting
    alpha = flow.forms[form]
    p = model.sample_points(2, 6)
    fr = decompose_along_splitting(alpha, E_s * -3.0, E_u * 0.5, flow.X, sign, model)
    assert np.allclose(fr.alpha(p), alpha(p))
    assert np.allclose(fr.alpha_u.on(p, fr.e_u(p)), 1) and np.allclose(fr.alpha_s.on(p, fr.e_s(p)), 1)
    assert np.abs(fr.alpha_u.on(p, fr.e_s(p))).max() < 1e-12 and np.abs(fr.alpha_s.on(p, fr.e_u(p))).max() < 1e-12
    assert np.allclose(fr.alpha_u(p), flow.forms["alpha_u"](p))
    assert np.allclose(fr.alpha_s(p), flow.forms["alpha_s"](p))


def test_decomposition_independent_of_representatives(cat):
    model, flow = cat
    E_s, E_u = flow.exact_splitting
    p = model.sample_points(2, 4)
    a = decompose_along_splitting(flow.forms["alpha_plus"], E_s, E_u, flow.X, 1, model)
    b = decompose_along_splitting(flow.forms["alpha_plus"], E_s * -2.0, E_u * 7.0, flow.X, 1, model)
    for name in ("alpha_s", "alpha_u"):
        assert np.allclose(getattr(a, name)(p), getattr(b, name)(p))
    assert np.allclose(a.e_u(p), b.e_u(p))


def test_coframe_rates_cat(cat):
    model, flow = cat
    E_s, E_u = flow.exact_splitting
    p = model.sample_points(2, 6)
    fr = coframe_from_splitting(E_s, E_u, flow.X, model)
    assert np.allclose(fr.alpha_s.on(p, fr.e_s(p)), 1) and np.abs(fr.alpha_s.on(p, fr.e_u(p))).max() < 1e-12
    assert np.allclose(fr.alpha_X.on(p, flow.X(p)), 1) and np.abs(fr.alpha_u.on(p, flow.X(p))).max() < 1e-12
    rates = induced_growth_rates(fr)
    lie = induced_growth_rates_lie(fr)
    assert np.allclose(rates.r_u(p), L, atol=1e-9) and np.allclose(rates.r_s(p), -L, atol=1e-9)
    assert np.allclose(lie.r_u(p), rates.r_u(p), atol=1e-6) and np.allclose(lie.r_s(p), rates.r_s(p), atol=1e-6)


def test_scaled_frame_keeps_duality(cat):
    model, flow = cat
    E_s, E_u = flow.exact_splitting
    p = model.sample_points(2, 4)
    fr = coframe_from_splitting(E_s, E_u, flow.X, model)
    f = from_sympy("scalar", sp.exp(sp.sin(2 * sp.pi * z)))
    g = from_sympy("scalar", -1 - sp.cos(2 * sp.pi * z) ** 2)
    sc = fr.scaled(f, g)
    assert np.allclose(sc.alpha_s.on(p, sc.e_s(p)), 1) and np.allclose(sc.alpha_u.on(p, sc.e_u(p)), 1)
    assert np.allclose(sc.volume(p), f(p) * g(p) * fr.volume(p))


def test_volume_preserving_pair_cat(cat):
    model, flow = cat
    E_s, E_u = flow.exact_splitting
    p = model.sample_points(2, 6)
    pair, data = volume_preserving_pair(model, flow, E_s, E_u, p)
    assert not data.failures
    assert data.inclusion_residual < 1e-8
    assert np.allclose(data.r_u + data.r_s, 0.0, atol=1e-9)
    assert pair.valid


def test_volume_pair_needs_volume(t3):
    model, flow = t3
    with pytest.raises(ValueError):
        volume_preserving_pair(model, flow, flow.X, flow.X, model.grid(1))


def test_cartan_cat_and_t3(cat, t3):
    model, flow = cat
    rep = cartan_check(flow.forms["alpha_minus"], flow.forms["alpha_plus"], model.sample_points(2, 6),
                       flow.invariant_volume, model)
    assert rep.passed(1e-9) and rep.reeb_inclusions()
    model, flow = t3
    rep = cartan_check(flow.forms["alpha_minus"], flow.forms["alpha_plus"], model.grid(4), None, model)
    assert not rep.passed(1e-9)
    assert rep.mixed_residual > 0.5
