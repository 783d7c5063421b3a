"""Chart models of closed 3-manifolds and the built-in flow models.

Points live on the lifted chart ``R^3``; a model knows how to reduce a lifted
point to its canonical representative in ``[0, 1)^3`` and how vectors and
covectors change along the way.  Fields are written as formulas on ``R^3``
and must be equivariant under the deck group, which
:func:`compatibility_check` tests numerically.

For a mapping torus the third coordinate is the suspension time ``t`` and
``(x, y, 1) ~ (A(x, y), 0)``.  A lifted point ``(x, y, t)`` with ``k = floor(t)``
is identified with ``(A^k (x, y) mod 1, t - k)``; the derivative of that
identification is ``diag(A^k, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

from .errors import ModelError
from .fields import SYMBOLS, KForm, ScalarField, VectorField, constant, from_sympy, pullback_values

__all__ = [
    "ChartModel",
    "ModelFlow",
    "NamedOrbit",
    "CompatibilityReport",
    "compatibility_check",
    "torus3",
    "mapping_torus",
    "cat_suspension",
    "t3_pA",
    "MODELS",
    "build_model",
]


def _mod1(a):
    r = np.mod(a, 1.0)
    # np.mod can round tiny negatives up to exactly 1.0
    return np.where(r >= 1.0, 0.0, r)


def _matrix_power(A, k):
    """``A^k`` for an integer matrix with det 1, per entry of the integer array ``k``."""
    k = np.asarray(k, dtype=int)
    Ainv = np.rint(np.linalg.inv(A)).astype(np.int64)
    out = np.broadcast_to(np.eye(2, dtype=np.int64), k.shape + (2, 2)).copy()
    for kk in np.unique(k):
        M = np.linalg.matrix_power(A if kk >= 0 else Ainv, abs(int(kk)))
        out[k == kk] = M
    return out


@dataclass(frozen=True, eq=False)
class ChartModel:
    """A closed 3-manifold as a glued unit box.

    ``metric`` maps points ``(..., 3)`` to symmetric positive matrices
    ``(..., 3, 3)``; ``None`` means the Euclidean chart metric.
    """

    kind: str
    monodromy: np.ndarray | None = None
    orientation: int = 1
    metric: Callable | None = None
    metric_name: str = "euclidean"
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("torus3", "mapping_torus"):
            raise ModelError(f"unknown chart kind {self.kind!r}")
        if self.orientation not in (1, -1):
            raise ModelError("orientation must be +1 or -1")
        if self.kind == "mapping_torus":
            A = np.asarray(self.monodromy)
            if A.shape != (2, 2) or not np.array_equal(A, np.rint(A)):
                raise ModelError("monodromy must be an integer 2x2 matrix")
            A = np.rint(A).astype(np.int64)
            if round(np.linalg.det(A)) != 1:
                raise ModelError("monodromy must have determinant 1")
            if abs(np.trace(A)) <= 2:
                raise ModelError("monodromy must be hyperbolic (|trace| > 2)")
            object.__setattr__(self, "monodromy", A)

    # identifications ---------------------------------------------------------

    def canonicalize_with_deck(self, p):
        """Canonical representative and the number ``k`` of t-shifts applied.

        The tangent map from the lifted point to the representative is
        ``deck_linear(k)``.
        """
        p = np.asarray(p, dtype=float)
        if self.kind == "torus3":
            return _mod1(p), np.zeros(p.shape[:-1], dtype=int)
        k = np.floor(p[..., 2]).astype(int)
        t = p[..., 2] - k
        xy = np.einsum("...ij,...j->...i", _matrix_power(self.monodromy, k), p[..., :2])
        q = np.concatenate([_mod1(xy), _mod1(t)[..., None]], axis=-1)
        return q, k

    def canonicalize(self, p):
        return self.canonicalize_with_deck(p)[0]

    def deck_linear(self, k):
        """Tangent map ``diag(A^k, 1)`` of the identification that shifts t by ``-k``."""
        k = np.asarray(k, dtype=int)
        T = np.broadcast_to(np.eye(3), k.shape + (3, 3)).copy()
        if self.kind == "mapping_torus":
            T[..., :2, :2] = _matrix_power(self.monodromy, k)
        return T

    def transport_vector(self, k, v):
        """Vector carried across ``k`` upward t-crossings: ``(vx, vy) -> A^k (vx, vy)``."""
        return np.einsum("...ij,...j->...i", self.deck_linear(k), np.asarray(v, dtype=float))

    def transport_covector(self, k, a):
        """Covector carried across ``k`` upward t-crossings (inverse transpose)."""
        T = self.deck_linear(k)
        return np.linalg.solve(np.swapaxes(T, -1, -2), np.asarray(a, dtype=float)[..., None])[..., 0]

    def lift(self, q, k):
        """A lifted point identified with ``q``, lying ``k`` periods above it in t."""
        q = np.asarray(q, dtype=float)
        k = np.broadcast_to(np.asarray(k, dtype=int), q.shape[:-1])
        if self.kind == "torus3":
            return q + k[..., None] * np.array([0.0, 0.0, 1.0])
        xy = np.einsum("...ij,...j->...i", _matrix_power(self.monodromy, -k), q[..., :2])
        return np.concatenate([xy, (q[..., 2] + k)[..., None]], axis=-1)

    def distance(self, p, q):
        """Chart distance between the points of the manifold represented by ``p`` and ``q``."""
        p, q = self.canonicalize(p), self.canonicalize(q)
        best = np.full(np.broadcast_shapes(p.shape, q.shape)[:-1], np.inf)
        for k in (-1, 0, 1):
            d = self.lift(q, k) - p
            d[..., :2] -= np.rint(d[..., :2])
            if self.kind == "torus3":
                d[..., 2] -= np.rint(d[..., 2])
            best = np.minimum(best, np.linalg.norm(d, axis=-1))
        return best

    # geometry -------------------------------------------------------------------

    def metric_at(self, p):
        p = np.asarray(p, dtype=float)
        if self.metric is None:
            return np.broadcast_to(np.eye(3), p.shape[:-1] + (3, 3))
        return self.metric(p)

    def reference_volume(self) -> KForm:
        """The oriented coordinate volume ``orientation * dx^dy^dz``."""
        return constant("form", float(self.orientation), degree=3, name="reference volume")

    def grid(self, n: int):
        """Regular ``n^3`` grid of canonical points, row-major with x slowest."""
        g = np.arange(n) / n
        X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
        return np.stack([X, Y, Z], axis=-1).reshape(-1, 3)

    def random_points(self, n: int, rng):
        return rng.random((n, 3))

    def sample_points(self, n_grid: int, n_random: int, seed: int = 0):
        """Grid points followed by seeded uniform random points."""
        rng = np.random.default_rng(seed)
        return np.concatenate([self.grid(n_grid), self.random_points(n_random, rng)], axis=0)

    def describe(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "params": dict(self.params), "metric": self.metric_name}
        if self.monodromy is not None:
            out["monodromy"] = self.monodromy.tolist()
        return out


def torus3(**kw) -> ChartModel:
    return ChartModel("torus3", **kw)


def mapping_torus(A, **kw) -> ChartModel:
    return ChartModel("mapping_torus", np.asarray(A), **kw)


@dataclass(frozen=True)
class NamedOrbit:
    label: str
    start: tuple
    period: float


@dataclass(frozen=True, eq=False)
class ModelFlow:
    """A flow on a chart model together with whatever closed-form data it ships."""

    X: VectorField
    exact_splitting: tuple | None = None  # (E_s, E_u) as vector fields
    invariant_volume: KForm | None = None
    named_orbits: tuple = ()
    forms: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)


# compatibility -------------------------------------------------------------------


@dataclass(frozen=True)
class CompatibilityReport:
    max_mismatch: float
    worst_point: tuple
    n_samples: int

    def passed(self, tol=1e-12) -> bool:
        return self.max_mismatch < tol


def _field_kind(f):
    if isinstance(f, ScalarField):
        return 0
    if isinstance(f, VectorField):
        return "vector"
    if isinstance(f, KForm):
        return f.degree
    raise TypeError(f"not a field: {f!r}")


def compatibility_check(model: ChartModel, f, n: int = 200, seed: int = 0) -> CompatibilityReport:
    """Largest disagreement of ``f`` between identified points, after transport.

    Each sample pairs a canonical point ``q`` with a lifted copy shifted by a
    nonzero deck transformation.
    """
    rng = np.random.default_rng(seed)
    q = rng.random((n, 3))
    k = rng.integers(-2, 3, size=n)
    shifts = rng.integers(-1, 2, size=(n, 2)).astype(float)
    if model.kind == "torus3":
        zero = (k == 0) & np.all(shifts == 0, axis=1)
        shifts[zero, 0] = 1.0
    p = model.lift(q, k)
    # integer translations in (x, y) at the lifted level are also deck maps
    p[:, :2] += np.einsum("nij,nj->ni", model.deck_linear(-k)[:, :2, :2], shifts)
    T = model.deck_linear(k)  # tangent map from p to q
    kind = _field_kind(f)
    fq, fp = np.asarray(f(q)), np.asarray(f(p))
    if kind == "vector":
        mapped = np.einsum("nij,nj->ni", T, fp)
    elif kind == 0:
        mapped = fp
    else:
        # identification g with Dg = T satisfies g^* f = f: pull f(q) back to p
        fq = pullback_values(kind, T, fq)
        mapped = fp
    diff = np.abs(np.asarray(fq) - mapped)
    if diff.ndim > 1:
        diff = diff.max(axis=-1)
    i = int(np.argmax(diff))
    return CompatibilityReport(float(diff[i]), tuple(float(v) for v in q[i]), n)


# built-in models -------------------------------------------------------------------

CAT_MATRIX = np.array([[2, 1], [1, 1]])


def cat_suspension() -> tuple[ChartModel, ModelFlow]:
    """Suspension of the cat map ``[[2, 1], [1, 1]]`` with coordinates ``(x, y, t)``."""
    lam = (3.0 + np.sqrt(5.0)) / 2.0
    L = float(np.log(lam))
    wu = np.array([1.0, lam - 2.0])
    wu /= np.linalg.norm(wu)
    ws = np.array([wu[1], -wu[0]])  # det[ws; wu] = +1
    x, y, t = SYMBOLS
    lam_s = (3 + sp.sqrt(5)) / 2
    Ls = sp.log(lam_s)
    wu_s = sp.Matrix([1, lam_s - 2]) / sp.sqrt(1 + (lam_s - 2) ** 2)
    ws_s = sp.Matrix([wu_s[1], -wu_s[0]])
    grow, shrink = sp.exp(Ls * t), sp.exp(-Ls * t)
    alpha_u = from_sympy("form", [grow * wu_s[0], grow * wu_s[1], 0], 1, name="alpha_u")
    alpha_s = from_sympy("form", [shrink * ws_s[0], shrink * ws_s[1], 0], 1, name="alpha_s")
    e_u = from_sympy("vector", [shrink * wu_s[0], shrink * wu_s[1], 0], name="e_u")
    e_s = from_sympy("vector", [grow * ws_s[0], grow * ws_s[1], 0], name="e_s")
    X = from_sympy("vector", [0, 0, 1], name="X")
    alpha_X = from_sympy("form", [0, 0, 1], 1, name="alpha_X")
    Omega = from_sympy("form", sp.Integer(1), 3, name="Omega")
    alpha_plus = alpha_u - alpha_s
    alpha_minus = alpha_u + alpha_s
    alpha_plus.name, alpha_minus.name = "alpha_plus", "alpha_minus"

    def sol_metric(p):
        tt = np.asarray(p, dtype=float)[..., 2]
        au = np.exp(L * tt)[..., None] * np.append(wu, 0.0)
        as_ = np.exp(-L * tt)[..., None] * np.append(ws, 0.0)
        G = au[..., :, None] * au[..., None, :] + as_[..., :, None] * as_[..., None, :]
        G[..., 2, 2] += 1.0
        return G

    model = mapping_torus(CAT_MATRIX, metric=sol_metric, metric_name="sol", name="cat_suspension")
    flow = ModelFlow(
        X=X,
        exact_splitting=(e_s, e_u),
        invariant_volume=Omega,
        named_orbits=(NamedOrbit("fixed_point", (0.0, 0.0, 0.0), 1.0),),
        forms={
            "alpha_u": alpha_u,
            "alpha_s": alpha_s,
            "alpha_X": alpha_X,
            "alpha_plus": alpha_plus,
            "alpha_minus": alpha_minus,
            "e_u": e_u,
            "e_s": e_s,
        },
        constants={"lambda": lam, "log_lambda": L, "w_u": wu, "w_s": ws},
    )
    return model, flow


def alpha_n_form(n: int, eps=None) -> KForm:
    """``cos(2 pi n z) dx - sin(2 pi n z) dy``, plus ``dz`` with amplitude ``eps`` if given."""
    z = SYMBOLS[2]
    c, s = sp.cos(2 * sp.pi * n * z), sp.sin(2 * sp.pi * n * z)
    if eps is None:
        return from_sympy("form", [c, -s, 0], 1, name=f"alpha_{n}")
    e = sp.nsimplify(eps)
    return from_sympy("form", [e * c, -e * s, 1], 1)


def t3_pA(m: int = -1, n: int = 1, eps: float = 0.3, eps2: float = 0.6) -> tuple[ChartModel, ModelFlow]:
    """Projectively Anosov flow on the 3-torus along the intersection of two contact planes."""
    if not (float(m).is_integer() and float(n).is_integer()):
        raise ModelError("m and n must be integers")
    m, n = int(m), int(n)
    if not m < 0 < n:
        raise ModelError(f"need m < 0 < n, got m={m}, n={n}")
    if not (0 < eps < 1 and 0 < eps2 < 1):
        raise ModelError("eps and eps2 must lie in (0, 1)")
    if eps == eps2:
        raise ModelError("eps and eps2 must differ")
    alpha_minus = alpha_n_form(m, eps)
    alpha_plus = alpha_n_form(n, eps2)
    alpha_minus.name, alpha_plus.name = "alpha_minus", "alpha_plus"
    a, b = sp.Matrix(alpha_minus.sym), sp.Matrix(alpha_plus.sym)
    cross = a.cross(b)
    # the kernels depend on z only, so a dense z sample covers the whole torus
    zs = np.linspace(0.0, 1.0, 4097)
    cfun = sp.lambdify(SYMBOLS[2], list(cross), "numpy")
    norms = np.linalg.norm(np.stack(np.broadcast_arrays(*cfun(zs)), axis=-1), axis=-1)
    if norms.min() < 1e-9:
        raise ModelError(f"contact planes are tangent (min |a- x a+| = {norms.min():.3g})")
    X = from_sympy("vector", list(cross / sp.sqrt(cross.dot(cross))), name="X")
    model = torus3(name="t3_pA", params={"m": m, "n": n, "eps": eps, "eps2": eps2})
    flow = ModelFlow(
        X=X,
        forms={"alpha_plus": alpha_plus, "alpha_minus": alpha_minus},
        constants={"min_cross_norm": float(norms.min())},
    )
    return model, flow


MODELS = {
    "cat_suspension": (cat_suspension, {}),
    "t3_pA": (t3_pA, {"m": -1, "n": 1, "eps": 0.3, "eps2": 0.6}),
}


def build_model(name: str, params: dict | None = None):
    """Construct a built-in model by name."""
    if name not in MODELS:
        raise ModelError(f"unknown model {name!r}; choose from {sorted(MODELS)}")
    ctor, defaults = MODELS[name]
    params = dict(params or {})
    unknown = set(params) - set(defaults)
    if unknown:
        raise ModelError(f"unknown parameters for {name}: {sorted(unknown)}")
    model, flow = ctor(**{**defaults, **params})
    if not model.params:
        object.__setattr__(model, "params", {**defaults, **params})
    return model, flow
