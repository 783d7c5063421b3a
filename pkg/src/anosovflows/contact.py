"""Contact forms, Reeb fields, bi-contact pairs and frames adapted to a splitting.

Frames follow one convention throughout.  Given a contact form ``alpha``
annihilating ``X`` and line fields ``E_s``, ``E_u``, the decomposition is
``alpha = alpha_u - sign * alpha_s`` where ``sign = +1`` for a positive form
(``alpha_+ = alpha_u - alpha_s``) and ``sign = -1`` for a negative one
(``alpha_- = alpha_u + alpha_s``).  ``ker alpha_u = E_s + <X>`` and
``ker alpha_s = E_u + <X>``; the frame vectors are projected onto the plane
``eta`` orthogonal to ``X`` in the model metric and scaled so that
``alpha_s(e_s) = alpha_u(e_u) = 1``.  ``alpha_X`` is the metric dual of
``X`` divided by ``|X|^2``, so it annihilates ``eta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import _inner, _metric, _projector, growth_rate_bracket, line_angle
from .errors import DegenerateContactError, FrameError, ReebInclusionError
from .fields import (
    COMPOSITE,
    EXACT,
    KForm,
    ScalarField,
    VectorField,
    contact_volume,
    ext_d,
    from_sympy,
    interior,
    wedge,
)
from .manifolds import ChartModel, ModelFlow

__all__ = [
    "ContactReport",
    "BiContactPair",
    "FrameDecomposition",
    "InducedRates",
    "ReebData",
    "TautReport",
    "CartanReport",
    "check_contact",
    "reeb_field",
    "reeb_residual",
    "verify_bicontact",
    "decompose_along_splitting",
    "coframe_from_splitting",
    "induced_growth_rates",
    "induced_growth_rates_lie",
    "volume_preserving_pair",
    "taut_hyperbola_check",
    "cartan_check",
]

CONTACT_FLOOR = 1e-12


def _ref(points, reference):
    if reference is None:
        return np.ones(len(points))
    return np.asarray(reference(points), dtype=float)


# contact checks ---------------------------------------------------------------------


@dataclass
class ContactReport:
    sign: int  # +1, -1, or 0 for indefinite
    margin: float
    min_coefficient: float
    max_coefficient: float
    worst_point: tuple
    n_points: int

    @property
    def definite(self) -> bool:
        return self.sign != 0


def check_contact(alpha: KForm, points, reference=None) -> ContactReport:
    """Sign and margin of ``alpha ^ d alpha`` relative to a reference volume over ``points``."""
    points = np.atleast_2d(points)
    coef = np.asarray(contact_volume(alpha)(points), dtype=float) / _ref(points, reference)
    lo, hi = float(coef.min()), float(coef.max())
    if lo > 0:
        sign = 1
    elif hi < 0:
        sign = -1
    else:
        sign = 0
    margin = float(np.abs(coef).min()) if sign else 0.0
    i = int(np.argmin(np.abs(coef)))
    return ContactReport(sign, margin, lo, hi, tuple(float(c) for c in points[i]), len(points))


def reeb_field(alpha: KForm) -> VectorField:
    """Reeb field ``R = curl(a) / (a . curl(a))``.

    In chart coefficients ``i_R d alpha = (curl a) x R`` vanishes exactly when
    ``R`` is parallel to ``curl a``; ``alpha(R) = 1`` fixes the scale.  The
    denominator is the contact volume, so a vanishing denominator is a
    non-contact point.
    """
    da = ext_d(alpha)
    vol = wedge(alpha, da)

    def check(p, den):
        if np.any(np.abs(den) < CONTACT_FLOOR):
            i = int(np.argmin(np.abs(np.ravel(den))))
            raise DegenerateContactError(
                f"alpha ^ d alpha vanishes near {np.asarray(p).reshape(-1, 3)[i].round(12).tolist()}"
            )

    def fn(p):
        den = vol._v(p)
        check(p, den)
        return da._v(p) / den

    if da.exact and vol.exact:

        def jac(p):
            num, den = da._v(p), vol._v(p)
            check(p, den)
            Jn, gd = da._J(p), vol._J(p)[..., 0, :]
            return Jn / den[..., None] - num[..., :, None] * gd[..., None, :] / (den**2)[..., None]

        R = VectorField(fn, jac, EXACT, name="Reeb")
    else:
        R = VectorField(fn, dspec=COMPOSITE, name="Reeb")
    return R


def reeb_residual(alpha: KForm, R: VectorField, points) -> float:
    """``max(|alpha(R) - 1|, |i_R d alpha|)`` over ``points``."""
    points = np.atleast_2d(points)
    r = R(points)
    a = np.abs(alpha.on(points, r) - 1.0)
    b = np.abs(interior(R, ext_d(alpha))(points)).max(axis=-1)
    return float(max(a.max(), b.max()))


# bi-contact pairs ---------------------------------------------------------------------


def _kernel_angle(model, points, am, ap):
    """Angle between ``ker am`` and ``ker ap``, measured between the covectors in the dual metric."""
    G = _metric(model, points)
    Ginv = np.linalg.inv(G)
    return line_angle(am, ap, Ginv)


@dataclass
class BiContactPair:
    alpha_minus: KForm
    alpha_plus: KForm
    X: VectorField
    minus: ContactReport
    plus: ContactReport
    transversality_margin: float
    transversality_point: tuple
    tangency_residual: float
    tangency_point: tuple
    metric: str
    tol: float
    failures: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.failures


def verify_bicontact(alpha_minus, alpha_plus, X, points, model: ChartModel | None = None, tol: float = 1e-9) -> BiContactPair:
    """Check contact signs (-, +), tangency of ``X`` to both kernels and their transversality.

    Tangency is measured as ``|alpha(X)| / (|alpha| |X|)``.  Transversality is
    the smallest angle between the two planes, in radians.
    """
    points = np.atleast_2d(points)
    ref = model.reference_volume() if model is not None else None
    minus = check_contact(alpha_minus, points, ref)
    plus = check_contact(alpha_plus, points, ref)
    xv = X(points)
    am, ap = alpha_minus(points), alpha_plus(points)
    nx = np.linalg.norm(xv, axis=-1)
    tang = np.maximum(
        np.abs(np.sum(am * xv, -1)) / (np.linalg.norm(am, axis=-1) * nx),
        np.abs(np.sum(ap * xv, -1)) / (np.linalg.norm(ap, axis=-1) * nx),
    )
    ang = _kernel_angle(model, points, am, ap)
    it = int(np.argmax(tang))
    ia = int(np.argmin(ang))
    failures = []
    if minus.sign != -1:
        failures.append("alpha_minus is not a negative contact form")
    if plus.sign != 1:
        failures.append("alpha_plus is not a positive contact form")
    if tang[it] >= tol:
        failures.append(f"X is not tangent to both planes (residual {tang[it]:.3g})")
    if not ang[ia] > tol:
        failures.append(f"planes are not transverse (angle {ang[ia]:.3g})")
    return BiContactPair(
        alpha_minus,
        alpha_plus,
        X,
        minus,
        plus,
        float(ang[ia]),
        tuple(float(c) for c in points[ia]),
        float(tang[it]),
        tuple(float(c) for c in points[it]),
        model.metric_name if model is not None else "euclidean",
        tol,
        failures,
    )


# frames ---------------------------------------------------------------------------


@dataclass
class FrameDecomposition:
    alpha_s: KForm
    alpha_u: KForm
    alpha_X: KForm
    e_s: VectorField
    e_u: VectorField
    X: VectorField
    sign: int
    eta: str = "metric-orthogonal complement of X"

    @property
    def volume(self) -> KForm:
        """Induced volume ``alpha_s ^ alpha_u ^ alpha_X``."""
        return wedge(wedge(self.alpha_s, self.alpha_u), self.alpha_X)

    @property
    def alpha(self) -> KForm:
        """The decomposed form ``alpha_u - sign * alpha_s``."""
        return self.alpha_u - self.alpha_s * float(self.sign)

    def scaled(self, f: ScalarField, f_s: ScalarField | None = None) -> "FrameDecomposition":
        """Frame with ``alpha_u`` multiplied by ``f`` and ``alpha_s`` by ``f_s`` (default ``f``).

        The vectors are divided by the same factors so duality is kept.
        """
        f_s = f if f_s is None else f_s
        return FrameDecomposition(
            self.alpha_s * f_s,
            self.alpha_u * f,
            self.alpha_X,
            self.e_s / f_s,
            self.e_u / f,
            self.X,
            self.sign,
            self.eta,
        )


class _FrameBuilder:
    """Pointwise algebra shared by the frame fields; evaluation is pure."""

    def __init__(self, model, alpha, E_s, E_u, X, sign, cond_tol, tangency_tol):
        self.model, self.alpha, self.E_s, self.E_u, self.X = model, alpha, E_s, E_u, X
        self.sign, self.cond_tol, self.tangency_tol = sign, cond_tol, tangency_tol

    def parts(self, p):
        p = np.asarray(p, dtype=float)
        es, eu, xv = self.E_s(p), self.E_u(p), self.X(p)
        B = np.stack([es, eu, xv], axis=-1)
        scale = np.linalg.norm(es, axis=-1) * np.linalg.norm(eu, axis=-1) * np.linalg.norm(xv, axis=-1)
        rel = np.abs(np.linalg.det(B)) / scale
        if np.any(rel < self.cond_tol):
            i = int(np.argmin(np.ravel(rel)))
            raise FrameError("splitting lines are nearly parallel to each other or to X", p.reshape(-1, 3)[i])
        theta = np.linalg.inv(B)  # rows: dual coframe of (E_s, E_u, X)
        G = _metric(self.model, p)
        P = _projector(G, xv)
        a = self.alpha(p) if self.alpha is not None else None
        if a is not None:
            ax = np.abs(np.sum(a * xv, -1)) / (np.linalg.norm(a, axis=-1) * np.linalg.norm(xv, axis=-1))
            if np.any(ax > self.tangency_tol):
                i = int(np.argmax(np.ravel(ax)))
                raise FrameError(f"form does not annihilate X (relative {np.ravel(ax)[i]:.3g})", p.reshape(-1, 3)[i])
        return dict(es=es, eu=eu, xv=xv, theta=theta, G=G, P=P, a=a)

    def alpha_u(self, p):
        d = self.parts(p)
        au = np.sum(d["a"] * d["eu"], -1)
        return au[..., None] * d["theta"][..., 1, :]

    def alpha_s(self, p):
        d = self.parts(p)
        as_ = -self.sign * np.sum(d["a"] * d["es"], -1)
        return as_[..., None] * d["theta"][..., 0, :]

    def e_u(self, p):
        d = self.parts(p)
        return np.einsum("...ij,...j->...i", d["P"], d["eu"]) / np.sum(d["a"] * d["eu"], -1)[..., None]

    def e_s(self, p):
        d = self.parts(p)
        return np.einsum("...ij,...j->...i", d["P"], d["es"]) / (-self.sign * np.sum(d["a"] * d["es"], -1))[..., None]


def _alpha_X(model, X):
    def fn(p):
        G = _metric(model, p)
        xv = X(p)
        gx = np.einsum("...ij,...j->...i", G, xv)
        return gx / _inner(G, xv, xv)[..., None]

    if model is None or model.metric is None:
        if X.sym is not None:
            import sympy as sp

            x = sp.Matrix(X.sym)
            return from_sympy("form", list(x / x.dot(x)), 1)
    return KForm(1, fn, dspec=COMPOSITE, name="alpha_X")


def decompose_along_splitting(
    alpha: KForm,
    E_s: VectorField,
    E_u: VectorField,
    X: VectorField,
    sign: int = 1,
    model: ChartModel | None = None,
    cond_tol: float = 1e-8,
    tangency_tol: float = 1e-8,
) -> FrameDecomposition:
    """Split ``alpha = alpha_u - sign * alpha_s`` along ``(E_s, E_u, X)``.

    The result does not depend on the length or orientation of the
    representatives ``E_s``, ``E_u``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    b = _FrameBuilder(model, alpha, E_s, E_u, X, sign, cond_tol, tangency_tol)
    return FrameDecomposition(
        alpha_s=KForm(1, b.alpha_s, dspec=COMPOSITE, name="alpha_s"),
        alpha_u=KForm(1, b.alpha_u, dspec=COMPOSITE, name="alpha_u"),
        alpha_X=_alpha_X(model, X),
        e_s=VectorField(b.e_s, dspec=COMPOSITE, name="e_s"),
        e_u=VectorField(b.e_u, dspec=COMPOSITE, name="e_u"),
        X=X,
        sign=sign,
    )


def coframe_from_splitting(
    E_s: VectorField, E_u: VectorField, X: VectorField, model: ChartModel | None = None, cond_tol: float = 1e-8
) -> FrameDecomposition:
    """Frame with ``alpha_s, alpha_u`` the dual coframe of ``(E_s, E_u, X)`` and no form to match.

    ``e_s, e_u`` are the projections of ``E_s, E_u`` onto ``eta``, so
    ``alpha_s(e_s) = alpha_u(e_u) = 1``.
    """
    b = _FrameBuilder(model, None, E_s, E_u, X, 1, cond_tol, np.inf)

    def proj(which):
        def fn(p):
            d = b.parts(p)
            return np.einsum("...ij,...j->...i", d["P"], d[which])

        return fn

    return FrameDecomposition(
        alpha_s=KForm(1, lambda p: b.parts(p)["theta"][..., 0, :], dspec=COMPOSITE, name="alpha_s"),
        alpha_u=KForm(1, lambda p: b.parts(p)["theta"][..., 1, :], dspec=COMPOSITE, name="alpha_u"),
        alpha_X=_alpha_X(model, X),
        e_s=VectorField(proj("es"), dspec=COMPOSITE, name="e_s"),
        e_u=VectorField(proj("eu"), dspec=COMPOSITE, name="e_u"),
        X=X,
        sign=1,
    )


@dataclass
class InducedRates:
    r_s: ScalarField
    r_u: ScalarField
    norm_id: str = "induced"


def induced_growth_rates(frame: FrameDecomposition, X: VectorField | None = None, tol: float = 1e-8) -> InducedRates:
    """``r_s = -alpha_s([X, e_s])``, ``r_u = -alpha_u([X, e_u])``."""
    X = X if X is not None else frame.X
    fl = ModelFlow(X=X)
    return InducedRates(
        growth_rate_bracket(fl, frame.e_s, frame.alpha_s, tol),
        growth_rate_bracket(fl, frame.e_u, frame.alpha_u, tol),
    )


def induced_growth_rates_lie(frame: FrameDecomposition, X: VectorField | None = None) -> InducedRates:
    """Same rates from ``r = (L_X alpha)(e) / alpha(e)``, which differentiates the forms instead of the frame."""
    from .fields import lie_derivative

    X = X if X is not None else frame.X
    Ls, Lu = lie_derivative(X, frame.alpha_s), lie_derivative(X, frame.alpha_u)

    def rate(L, a, e):
        return ScalarField(lambda p: (L.on(p, e(p)) / a.on(p, e(p))), dspec=COMPOSITE)

    return InducedRates(rate(Ls, frame.alpha_s, frame.e_s), rate(Lu, frame.alpha_u, frame.e_u), "induced (lie)")


# volume-preserving construction ----------------------------------------------------------


@dataclass
class ReebData:
    R_plus: VectorField
    inclusion_residual: float
    inclusion_point: tuple
    r_s: np.ndarray
    r_u: np.ndarray
    rate_sum_residual: float
    d_alpha_minus: np.ndarray  # d alpha_-(e_u - e_s, X) per point
    d_alpha_minus_residual: float  # against r_s - r_u
    frame: FrameDecomposition
    failures: list = field(default_factory=list)


def volume_preserving_pair(
    model: ChartModel,
    flow: ModelFlow,
    E_s: VectorField,
    E_u: VectorField,
    points,
    Omega: KForm | None = None,
    tol: float = 1e-8,
    raise_on_failure: bool = False,
):
    """Bi-contact pair built from an invariant volume and a splitting.

    ``alpha_u`` is the coframe dual of ``e_u`` (``ker alpha_u = E_s + <X>``,
    ``alpha_u(e_u) = 1``), ``alpha_s(v) = Omega(v, e_u, X)``, and
    ``alpha_+ = alpha_u - alpha_s``, ``alpha_- = alpha_u + alpha_s``.  The
    Reeb field of ``alpha_+`` should lie in ``ker alpha_-``.
    """
    Omega = Omega if Omega is not None else flow.invariant_volume
    if Omega is None:
        raise ValueError("model has no invariant volume")
    points = np.atleast_2d(points)
    X = flow.X

    def parts(p):
        es, eu, xv = E_s(p), E_u(p), X(p)
        theta = np.linalg.inv(np.stack([es, eu, xv], axis=-1))
        P = _projector(_metric(model, p), xv)
        return es, eu, xv, theta, P

    alpha_u = KForm(1, lambda p: parts(p)[3][..., 1, :], dspec=COMPOSITE, name="alpha_u")
    e_u = VectorField(lambda p: np.einsum("...ij,...j->...i", parts(p)[4], E_u(p)), dspec=COMPOSITE, name="e_u")
    alpha_s = interior(X, interior(e_u, Omega))  # alpha_s(v) = Omega(e_u, X, v) = Omega(v, e_u, X)

    def e_s_fn(p):
        es, _, _, _, P = parts(p)
        v = np.einsum("...ij,...j->...i", P, es)
        return v / alpha_s.on(p, v)[..., None]

    e_s = VectorField(e_s_fn, dspec=COMPOSITE, name="e_s")
    alpha_plus = alpha_u - alpha_s
    alpha_minus = alpha_u + alpha_s
    frame = FrameDecomposition(alpha_s, alpha_u, _alpha_X(model, X), e_s, e_u, X, 1)
    rates = induced_growth_rates(frame, X, tol=max(tol, 1e-8))
    r_s, r_u = rates.r_s(points), rates.r_u(points)
    pair = verify_bicontact(alpha_minus, alpha_plus, X, points, model, tol=max(tol, 1e-9))
    R = reeb_field(alpha_plus)
    inc = np.abs(alpha_minus.on(points, R(points)))
    ii = int(np.argmax(inc))
    da = ext_d(alpha_minus)
    dam = da.on(points, e_u(points) - e_s(points), X(points))
    failures = []
    if not np.all(r_u > 0):
        failures.append(f"r_u is not positive everywhere (min {r_u.min():.3g})")
    if inc[ii] >= tol:
        failures.append(f"Reeb field of alpha_plus leaves ker alpha_minus (residual {inc[ii]:.3g})")
    failures += pair.failures
    data = ReebData(
        R_plus=R,
        inclusion_residual=float(inc[ii]),
        inclusion_point=tuple(float(c) for c in points[ii]),
        r_s=r_s,
        r_u=r_u,
        rate_sum_residual=float(np.abs(r_s + r_u).max()),
        d_alpha_minus=dam,
        d_alpha_minus_residual=float(np.abs(dam - (r_s - r_u)).max()),
        frame=frame,
        failures=failures,
    )
    if raise_on_failure and failures:
        raise ReebInclusionError("; ".join(failures), data.inclusion_point)
    return pair, data


# taut contact hyperbolas and Cartan structures -------------------------------------------


@dataclass
class TautReport:
    volume_residual: float  # |a1 ^ da1 + a2 ^ da2|
    cross_residual: float  # |a1 ^ da2 + a2 ^ da1|
    transverse: bool
    min_angle: float
    worst_point: tuple

    def passed(self, tol=1e-9) -> bool:
        return self.volume_residual < tol and self.cross_residual < tol


@dataclass
class CartanReport:
    taut: TautReport
    mixed_residual: float  # max(|a+ ^ da-|, |a- ^ da+|)
    reeb_minus_of_plus: float  # |alpha_-(R_+)|
    reeb_plus_of_minus: float  # |alpha_+(R_-)|
    worst_point: tuple

    def passed(self, tol=1e-9) -> bool:
        return self.taut.passed(tol) and self.mixed_residual < tol

    def reeb_inclusions(self, tol=1e-8) -> bool:
        return self.reeb_minus_of_plus < tol and self.reeb_plus_of_minus < tol


def taut_hyperbola_check(alpha1: KForm, alpha2: KForm, points, reference=None, model=None) -> TautReport:
    """Residuals of ``a1 ^ da1 = -a2 ^ da2`` and ``a1 ^ da2 = -a2 ^ da1`` over ``points``."""
    points = np.atleast_2d(points)
    ref = _ref(points, reference)
    d1, d2 = ext_d(alpha1), ext_d(alpha2)
    v11, v22 = wedge(alpha1, d1)(points), wedge(alpha2, d2)(points)
    v12, v21 = wedge(alpha1, d2)(points), wedge(alpha2, d1)(points)
    r1 = np.abs(v11 + v22) / np.abs(ref)
    r2 = np.abs(v12 + v21) / np.abs(ref)
    ang = _kernel_angle(model, points, alpha1(points), alpha2(points))
    i = int(np.argmax(np.maximum(r1, r2)))
    return TautReport(
        float(r1.max()),
        float(r2.max()),
        bool(ang.min() > 1e-9),
        float(ang.min()),
        tuple(float(c) for c in points[i]),
    )


def cartan_check(alpha_minus: KForm, alpha_plus: KForm, points, reference=None, model=None) -> CartanReport:
    """Taut-hyperbola residuals plus ``a+ ^ da- = a- ^ da+ = 0`` and the mutual Reeb inclusions."""
    points = np.atleast_2d(points)
    taut = taut_hyperbola_check(alpha_minus, alpha_plus, points, reference, model)
    ref = np.abs(_ref(points, reference))
    m1 = np.abs(wedge(alpha_plus, ext_d(alpha_minus))(points)) / ref
    m2 = np.abs(wedge(alpha_minus, ext_d(alpha_plus))(points)) / ref
    mixed = np.maximum(m1, m2)
    try:
        rp = float(np.abs(alpha_minus.on(points, reeb_field(alpha_plus)(points))).max())
    except DegenerateContactError:
        rp = float("inf")
    try:
        rm = float(np.abs(alpha_plus.on(points, reeb_field(alpha_minus)(points))).max())
    except DegenerateContactError:
        rm = float("inf")
    i = int(np.argmax(mixed))
    return CartanReport(taut, float(mixed.max()), rp, rm, tuple(float(c) for c in points[i]))
