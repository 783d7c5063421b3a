"""Coordinate exterior calculus on a 3-dimensional chart.

Fields are pointwise-evaluable on arrays of points of shape ``(..., 3)``.
Scalars and 3-forms evaluate to shape ``(...)``; vector fields, 1-forms and
2-forms to ``(..., 3)``.  Component bases:

* 1-forms: ``(dx, dy, dz)``
* 2-forms: ``(dy^dz, dz^dx, dx^dy)``, so the wedge of two 1-forms is the
  cross product of their coefficient vectors and ``b(u, v) = b . (u x v)``
* 3-forms: the coefficient of ``dx^dy^dz``

Interior products contract the FIRST slot: ``(i_X w)(v, ...) = w(X, v, ...)``.
With this convention ``i_X b = b x X`` for a 2-form and ``i_X c = c X`` for a
3-form, e.g. ``i_{d/dz}(dx^dy^dz) = +dx^dy``.

Every field carries a :class:`DerivSpec`.  Leaf fields built with an exact
derivative (hand-written or via :func:`from_sympy`) differentiate exactly;
everything else uses central differences.  Linear combinations and the
bilinear pointwise products (wedge, interior, scalar multiplication) propagate
exact derivatives by the product rule; other composites fall back to
``COMPOSITE`` differences of their exactly evaluated values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .errors import DegenerateVolumeError, DegreeError

__all__ = [
    "DerivSpec",
    "EXACT",
    "FD2",
    "FD4",
    "COMPOSITE",
    "ScalarField",
    "VectorField",
    "KForm",
    "from_sympy",
    "constant",
    "wedge",
    "ext_d",
    "interior",
    "lie_derivative",
    "divergence",
    "bracket",
    "contact_volume",
    "evaluate",
    "pullback_values",
    "apply_matrix",
]


@dataclass(frozen=True)
class DerivSpec:
    """How a field is differentiated: exactly, or by central differences."""

    kind: str = "fd"
    order: int = 4
    h: float = 1e-4

    def __post_init__(self):
        if self.kind not in ("exact", "fd"):
            raise ValueError(f"unknown derivative kind {self.kind!r}")
        if self.order not in (2, 4):
            raise ValueError("finite-difference order must be 2 or 4")
        if not self.h > 0:
            raise ValueError("finite-difference step must be positive")


EXACT = DerivSpec("exact")
FD2 = DerivSpec("fd", 2, 1e-4)
FD4 = DerivSpec("fd", 4, 1e-4)
# Composites are already rounding-limited in value, so they use a coarser step.
COMPOSITE = DerivSpec("fd", 4, 1e-3)

VOLUME_FLOOR = 1e-12

_STENCILS = {
    2: (np.array([1.0, -1.0]), np.array([0.5, -0.5])),
    4: (np.array([1.0, -1.0, 2.0, -2.0]), np.array([8.0, -8.0, -1.0, 1.0]) / 12.0),
}


def _fd_jacobian(fn, p, order, h):
    """Central-difference Jacobian of ``fn`` (values ``(..., n)``) -> ``(..., n, 3)``."""
    offsets, weights = _STENCILS[order]
    steps = offsets[:, None, None] * h * np.eye(3)[None]  # (S, 3 directions, 3 coords)
    shape = (len(offsets), 3) + (1,) * (p.ndim - 1) + (3,)
    pts = p[None, None] + steps.reshape(shape)
    vals = fn(pts)  # (S, 3, ..., n)
    jac = np.tensordot(weights, vals, axes=(0, 0)) / h  # (3, ..., n)
    return np.moveaxis(jac, 0, -1)


class _Field:
    """Shared machinery. ``_v`` returns ``(..., n)``, ``_J`` returns ``(..., n, 3)``."""

    ncomp = 3
    degree: int | None = None

    def __init__(self, fn, jac=None, dspec=None, name=None):
        if dspec is None:
            dspec = EXACT if jac is not None else FD4
        if dspec.kind == "exact" and jac is None:
            raise ValueError("exact derivative mode needs a derivative function")
        self._fn = fn
        self._jacfn = jac
        self.dspec = dspec
        self.name = name
        self.sym = None  # sympy component expressions, when known

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<{type(self).__name__}{label} [{self.dspec.kind}]>"

    @property
    def exact(self) -> bool:
        return self.dspec.kind == "exact"

    # internal evaluation -------------------------------------------------

    def _v(self, p):
        out = np.asarray(self._fn(p), dtype=float)
        if self.ncomp == 1:
            return np.broadcast_to(out, p.shape[:-1])[..., None]
        return np.broadcast_to(out, p.shape[:-1] + (3,))

    def _J(self, p):
        if self.exact:
            out = np.asarray(self._jacfn(p), dtype=float)
            if self.ncomp == 1:
                return np.broadcast_to(out, p.shape[:-1] + (3,))[..., None, :]
            return np.broadcast_to(out, p.shape[:-1] + (3, 3))
        return _fd_jacobian(self._v, p, self.dspec.order, self.dspec.h)

    def _like(self, fn, jac=None, dspec=None, name=None):
        """Same kind of field with new internal-shape callables."""
        if self.ncomp == 1:
            pub_fn = lambda p: fn(p)[..., 0]
            pub_jac = None if jac is None else (lambda p: jac(p)[..., 0, :])
        else:
            pub_fn, pub_jac = fn, jac
        return _make(type(self), self.degree, pub_fn, pub_jac, dspec, name)

    # public evaluation ---------------------------------------------------

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        v = self._v(p)
        return np.array(v[..., 0] if self.ncomp == 1 else v)

    def jacobian(self, p):
        """Derivative of the components: ``(..., 3)`` for one component, else ``(..., 3, 3)``.

        The last axis is the differentiation direction.
        """
        p = np.asarray(p, dtype=float)
        J = self._J(p)
        return np.array(J[..., 0, :] if self.ncomp == 1 else J)

    def with_dspec(self, dspec: DerivSpec):
        """Copy that differentiates according to ``dspec``."""
        jac = self._jacfn if dspec.kind == "exact" else None
        out = _make(type(self), self.degree, self._fn, jac, dspec, self.name)
        if dspec.kind == "exact":
            out.sym = self.sym
        return out

    # linear structure ----------------------------------------------------

    def _check_same(self, other):
        if type(other) is not type(self) or other.degree != self.degree:
            raise TypeError(f"cannot combine {self!r} with {other!r}")

    def __add__(self, other):
        self._check_same(other)
        a, b = self, other
        if a.sym is not None and b.sym is not None:
            return _from_sym(a, [u + v for u, v in zip(a.sym, b.sym)])
        fn = lambda p: a._v(p) + b._v(p)
        if a.exact and b.exact:
            return a._like(fn, lambda p: a._J(p) + b._J(p), EXACT)
        return a._like(fn, dspec=COMPOSITE)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        a = self
        if isinstance(other, ScalarField):
            return _scale(other, a)
        c = float(other)
        if a.sym is not None:
            return _from_sym(a, [c * u for u in a.sym])
        fn = lambda p: c * a._v(p)
        if a.exact:
            return a._like(fn, lambda p: c * a._J(p), EXACT)
        return a._like(fn, dspec=a.dspec)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, ScalarField):
            return _scale(reciprocal(other), self)
        return self * (1.0 / float(other))


class ScalarField(_Field):
    """A smooth function of the chart point."""

    ncomp = 1
    degree = 0

    def __init__(self, fn, grad=None, dspec=None, name=None):
        super().__init__(fn, grad, dspec, name)

    def gradient(self, p):
        return self.jacobian(p)


class VectorField(_Field):
    """A vector field in chart coordinates; ``jacobian`` is ``dV_i/dx_j``."""

    ncomp = 3

    def __init__(self, fn, jacobian=None, dspec=None, name=None):
        super().__init__(fn, jacobian, dspec, name)


class KForm(_Field):
    """A differential form of degree 1, 2 or 3 (see module docstring for bases)."""

    def __init__(self, degree, coeffs, jac=None, dspec=None, name=None):
        if degree not in (1, 2, 3):
            raise DegreeError(f"KForm degree must be 1, 2 or 3, got {degree}")
        self.degree = degree
        self.ncomp = 1 if degree == 3 else 3
        super().__init__(coeffs, jac, dspec, name)

    def on(self, p, *vectors):
        """Evaluate the form on ``degree`` vectors (arrays broadcastable to ``(..., 3)``)."""
        return evaluate(self, p, *vectors)


def _make(cls, degree, fn, jac, dspec, name=None):
    if cls is KForm:
        return KForm(degree, fn, jac, dspec, name)
    return cls(fn, jac, dspec, name)


def reciprocal(f: ScalarField) -> ScalarField:
    if f.sym is not None:
        return from_sympy("scalar", 1 / f.sym[0])
    fn = lambda p: 1.0 / f._v(p)[..., 0]
    if f.exact:
        return ScalarField(fn, lambda p: -f._J(p)[..., 0, :] / f._v(p) ** 2, EXACT)
    return ScalarField(fn, dspec=COMPOSITE)


# constructors ---------------------------------------------------------------

X_, Y_, Z_ = sp.symbols("x y z", real=True)
SYMBOLS = (X_, Y_, Z_)


def _lambdify(exprs, symbols):
    exprs = [sp.sympify(e) for e in exprs]
    f = sp.lambdify(symbols, exprs, modules="numpy", cse=True)

    def fn(p):
        vals = f(p[..., 0], p[..., 1], p[..., 2])
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), p.shape[:-1]) for v in vals], axis=-1)

    return fn


def _lazy(build):
    cache = []

    def fn(p):
        if not cache:
            cache.append(build())
        return cache[0](p)

    return fn


def _from_sym(like, exprs):
    kind = _kind_of(type(like))
    return from_sympy(kind, exprs, like.degree if kind == "form" else None)


def _kind_of(cls):
    return {ScalarField: "scalar", VectorField: "vector", KForm: "form"}[cls]


def from_sympy(kind: str, exprs, degree: int | None = None, symbols: Sequence = SYMBOLS, name=None):
    """Build a field with exact derivatives from sympy expressions.

    ``kind`` is ``"scalar"``, ``"vector"`` or ``"form"`` (then ``degree`` is required).
    ``exprs`` is one expression for scalars and 3-forms, else three.
    """
    symbols = tuple(symbols)
    if kind == "form" and degree not in (1, 2, 3):
        raise DegreeError(f"a form needs degree 1, 2 or 3, got {degree}")
    single = kind == "scalar" or (kind == "form" and degree == 3)
    exprs = [exprs] if single and not isinstance(exprs, (list, tuple, sp.MatrixBase)) else list(exprs)
    exprs = [sp.sympify(e) for e in exprs]
    if len(exprs) != (1 if single else 3):
        raise ValueError(f"wrong number of components for {kind}")
    # compile on first use: intermediate results of symbolic algebra are often never evaluated
    val = _lazy(lambda: _lambdify(exprs, symbols))
    jacf = _lazy(lambda: _lambdify([sp.diff(e, s) for e in exprs for s in symbols], symbols))
    if single:
        fn = lambda p: val(p)[..., 0]
        jac = lambda p: jacf(p)
    else:
        fn = val
        jac = lambda p: jacf(p).reshape(p.shape[:-1] + (3, 3))
    if kind == "scalar":
        out = ScalarField(fn, jac, EXACT, name)
    elif kind == "vector":
        out = VectorField(fn, jac, EXACT, name)
    elif kind == "form":
        out = KForm(degree, fn, jac, EXACT, name)
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    if symbols == SYMBOLS:
        out.sym = exprs
    return out


def constant(kind: str, value, degree: int | None = None, name=None):
    """Constant field with exactly zero derivative."""
    value = np.asarray(value, dtype=float)
    n = 1 if value.ndim == 0 else 3
    fn = lambda p: value
    jac = lambda p: np.zeros(p.shape[:-1] + ((3,) if n == 1 else (3, 3)))
    if kind == "scalar":
        out = ScalarField(fn, jac, EXACT, name)
    elif kind == "vector":
        out = VectorField(fn, jac, EXACT, name)
    else:
        out = KForm(degree, fn, jac, EXACT, name)
    out.sym = [sp.Float(float(v), 17) for v in np.atleast_1d(value)]
    return out


# pointwise algebra on internal arrays ------------------------------------------


def _cross(a, b):
    return np.cross(a, b)


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def _bilinear(op, a: _Field, b: _Field, cls, degree, symop=None):
    """Field ``op(a, b)`` for a pointwise bilinear ``op``; product rule when possible.

    If both factors are symbolic and ``symop`` is given the result stays symbolic.
    """
    if symop is not None and a.sym is not None and b.sym is not None:
        exprs = list(symop(sp.Matrix(a.sym), sp.Matrix(b.sym)))
        return from_sympy(_kind_of(cls), exprs, degree if cls is KForm else None)
    fn = lambda p: op(a._v(p), b._v(p))
    if a.exact and b.exact:

        def jac(p):
            va, vb = a._v(p), b._v(p)
            Ja = np.moveaxis(a._J(p), -1, 0)  # (3, ..., na)
            Jb = np.moveaxis(b._J(p), -1, 0)
            return np.moveaxis(op(Ja, vb[None]) + op(va[None], Jb), 0, -1)

        dspec = EXACT
    else:
        jac, dspec = None, COMPOSITE
    proto = _make(cls, degree, lambda p: None, None, COMPOSITE)
    return proto._like(fn, jac, dspec)


def _scale(f: ScalarField, w: _Field):
    return _bilinear(lambda s, v: s * v, f, w, type(w), w.degree, lambda s, v: s[0] * v)


def _degree_of(w) -> int:
    if isinstance(w, ScalarField):
        return 0
    if isinstance(w, KForm):
        return w.degree
    raise TypeError(f"expected a form or scalar field, got {w!r}")


def wedge(a, b):
    """Exterior product ``a ^ b``."""
    da, db = _degree_of(a), _degree_of(b)
    if da + db > 3:
        raise DegreeError(f"wedge of degrees {da} and {db} exceeds 3")
    if da == 0:
        return _scale(a, b) if db else _bilinear(lambda s, t: s * t, a, b, ScalarField, 0, lambda s, t: [s[0] * t[0]])
    if db == 0:
        return _scale(b, a)
    if da == 1 and db == 1:
        return _bilinear(_cross, a, b, KForm, 2, lambda u, v: u.cross(v))
    # 1^2 and 2^1 coincide: (-1)^(1*2) = +1
    return _bilinear(_dot, a, b, KForm, 3, lambda u, v: [u.dot(v)])


def _sym_curl(e):
    x, y, z = SYMBOLS
    return sp.Matrix([sp.diff(e[2], y) - sp.diff(e[1], z), sp.diff(e[0], z) - sp.diff(e[2], x), sp.diff(e[1], x) - sp.diff(e[0], y)])


def _curl(J):
    return np.stack(
        [J[..., 2, 1] - J[..., 1, 2], J[..., 0, 2] - J[..., 2, 0], J[..., 1, 0] - J[..., 0, 1]],
        axis=-1,
    )


def ext_d(w, dspec: DerivSpec = COMPOSITE):
    """Exterior derivative of a scalar field, 1-form or 2-form.

    The result's values use ``w``'s derivative provider; the result's own
    derivative is by central differences with ``dspec``.
    """
    deg = _degree_of(w)
    if w.sym is not None and deg <= 2:
        e = w.sym
        grad = lambda f: [sp.diff(f, s) for s in SYMBOLS]
        if deg == 0:
            return from_sympy("form", grad(e[0]), 1)
        if deg == 1:
            return from_sympy("form", list(_sym_curl(e)), 2)
        return from_sympy("form", sum(sp.diff(c, s) for c, s in zip(e, SYMBOLS)), 3)
    if deg == 0:
        return KForm(1, lambda p: w._J(p)[..., 0, :], dspec=dspec)
    if deg == 1:
        return KForm(2, lambda p: _curl(w._J(p)), dspec=dspec)
    if deg == 2:
        return KForm(3, lambda p: np.trace(w._J(p), axis1=-2, axis2=-1), dspec=dspec)
    raise DegreeError("exterior derivative of a 3-form is zero on a 3-manifold; degree must be <= 2")


def interior(X: VectorField, w):
    """Contraction of ``X`` into the first slot of ``w``."""
    deg = _degree_of(w)
    if deg == 1:
        return _bilinear(lambda x, a: _dot(a, x), X, w, ScalarField, 0, lambda x, a: [a.dot(x)])
    if deg == 2:
        return _bilinear(lambda x, b: _cross(b, x), X, w, KForm, 1, lambda x, b: b.cross(x))
    if deg == 3:
        return _bilinear(lambda x, c: c * x, X, w, KForm, 2, lambda x, c: c[0] * x)
    raise DegreeError("interior product needs a form of degree >= 1")


def bracket(X: VectorField, Y: VectorField) -> VectorField:
    """Lie bracket ``[X, Y] = (DY) X - (DX) Y``."""
    if X.sym is not None and Y.sym is not None:
        x, y = sp.Matrix(X.sym), sp.Matrix(Y.sym)
        syms = sp.Matrix(SYMBOLS)
        return from_sympy("vector", list(y.jacobian(syms) * x - x.jacobian(syms) * y))

    def fn(p):
        return np.einsum("...ij,...j->...i", Y._J(p), X._v(p)) - np.einsum("...ij,...j->...i", X._J(p), Y._v(p))

    return VectorField(fn, dspec=COMPOSITE)


def lie_derivative(X: VectorField, w):
    """Lie derivative by Cartan's formula ``i_X dw + d(i_X w)``; brackets for vector fields."""
    if isinstance(w, VectorField):
        return bracket(X, w)
    deg = _degree_of(w)
    if deg == 0:
        if w.sym is not None and X.sym is not None:
            return interior(X, ext_d(w))
        return ScalarField(lambda p: np.einsum("...i,...i->...", w._J(p)[..., 0, :], X._v(p)), dspec=COMPOSITE)
    if deg == 3:
        return ext_d(interior(X, w))
    return interior(X, ext_d(w)) + ext_d(interior(X, w))


def divergence(X: VectorField, Omega: KForm) -> ScalarField:
    """``div_X Omega`` defined by ``L_X Omega = (div_X Omega) Omega``."""
    if _degree_of(Omega) != 3:
        raise DegreeError("divergence needs a 3-form")
    L = lie_derivative(X, Omega)

    def fn(p):
        om = Omega._v(p)[..., 0]
        bad = np.abs(om) < VOLUME_FLOOR
        if np.any(bad):
            where = np.asarray(p)[bad][0] if p.ndim > 1 else p
            raise DegenerateVolumeError(f"volume form vanishes at {np.round(where, 12).tolist()}")
        return L._v(p)[..., 0] / om

    return ScalarField(fn, dspec=COMPOSITE)


def contact_volume(alpha: KForm) -> KForm:
    """``alpha ^ d alpha``; the sign relative to the orientation is left to the caller."""
    if _degree_of(alpha) != 1:
        raise DegreeError("contact_volume needs a 1-form")
    return wedge(alpha, ext_d(alpha))


# pointwise evaluation helpers ----------------------------------------------------


def evaluate(w, p, *vectors):
    """Value of a k-form on k vectors at points ``p``."""
    deg = _degree_of(w)
    if len(vectors) != deg:
        raise DegreeError(f"a {deg}-form takes {deg} vectors, got {len(vectors)}")
    p = np.asarray(p, dtype=float)
    c = w._v(p)
    vs = [np.asarray(v, dtype=float) for v in vectors]
    if deg == 0:
        return np.array(c[..., 0])
    if deg == 1:
        return np.sum(c * vs[0], axis=-1)
    if deg == 2:
        return np.sum(c * np.cross(vs[0], vs[1]), axis=-1)
    M = np.stack(np.broadcast_arrays(*vs), axis=-1)
    return c[..., 0] * np.linalg.det(M)


def apply_matrix(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def pullback_values(degree: int, M, coeffs):
    """Coefficients of ``F^* w`` at ``p`` given ``DF(p) = M`` and ``w`` at ``F(p)``."""
    M = np.asarray(M, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    if degree == 0:
        return coeffs
    if degree == 1:
        return np.einsum("...ji,...j->...i", M, coeffs)
    if degree == 2:
        # b'.(u x v) = b.(Mu x Mv) = b.cof(M)(u x v), cof(M) = det(M) M^{-T}
        return np.linalg.det(M)[..., None] * np.linalg.solve(M, coeffs[..., None])[..., 0]
    if degree == 3:
        return np.linalg.det(M) * coeffs
    raise DegreeError(f"bad degree {degree}")
