"""Flow integration, normal-bundle linear dynamics, invariant lines and growth rates.

Integration happens on the lifted chart, where every built-in field is a
global formula; results are reduced to canonical points afterwards and
tangent maps are converted with the model's deck derivatives.  All routines
are vectorized over a leading batch of points.

The normal bundle ``TM / <X>`` is represented by the orthogonal complement of
``X`` in the model's chart metric.
"""

from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .errors import ConvergenceError, FlowError, FrameError, OrbitError
from .fields import FD2, DerivSpec, KForm, ScalarField, VectorField
from .manifolds import ChartModel, ModelFlow, NamedOrbit

__all__ = [
    "FlowResult",
    "Crossing",
    "Trajectory",
    "FlowJacobian",
    "NormalLine",
    "GrowthRates",
    "LineEstimate",
    "OrbitData",
    "DominationReport",
    "ChartNorm",
    "InducedNorm",
    "flow_map",
    "integrate_along",
    "integrate_flow",
    "linearize_flow",
    "project_normal",
    "estimate_lines",
    "estimate_line",
    "EstimatedLineField",
    "growth_rate_fd",
    "growth_rate_bracket",
    "domination_report",
    "close_orbit",
    "orbit_integral",
    "line_angle",
]

DEFAULT_STEP = 1e-2
X_FLOOR = 1e-12


def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def _inner(G, u, v):
    return np.einsum("...i,...ij,...j->...", u, G, v)


# integration ------------------------------------------------------------------------


@dataclass
class FlowResult:
    """End state of a batched flow computation.

    ``lifted`` is the endpoint on the lifted chart, ``points`` its canonical
    representative; ``M`` is the tangent map from the start to ``points``.
    """

    points: np.ndarray
    lifted: np.ndarray
    deck: np.ndarray
    M: np.ndarray | None = None
    M_lifted: np.ndarray | None = None
    integrals: np.ndarray | None = None
    samples: np.ndarray | None = None
    times: np.ndarray | None = None


def _check_X(x, p):
    n = np.linalg.norm(x, axis=-1)
    if np.any(n < X_FLOOR) or not np.all(np.isfinite(n)):
        bad = np.asarray(p).reshape(-1, 3)[int(np.argmin(np.nan_to_num(n, nan=0.0).reshape(-1)))]
        raise FlowError(f"generator vanishes or is not finite near {bad.tolist()}")


def flow_map(
    model: ChartModel,
    flow: ModelFlow,
    p,
    T: float,
    step: float = DEFAULT_STEP,
    *,
    jacobian: bool = False,
    integrands=(),
    keep_samples: bool = False,
) -> FlowResult:
    """Classical RK4 for ``p' = X(p)`` (and ``M' = DX M``, ``I' = g(p)``) over time ``T``.

    The step is shrunk so that an integer number of steps covers ``|T|``.
    Starting points are used as given; the returned tangent map ends at the
    canonical representative of the endpoint.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    p = np.array(p, dtype=float)
    n = int(np.ceil(abs(T) / step - 1e-9)) if T != 0 else 0
    h = T / n if n else 0.0
    X = flow.X
    gs = list(integrands)

    def rhs(q, M):
        xv = X._v(q)
        _check_X(xv, q)
        dM = np.einsum("...ij,...jk->...ik", X._J(q), M) if M is not None else None
        dI = np.stack([g._v(q)[..., 0] for g in gs], axis=-1) if gs else None
        return xv, dM, dI

    M = np.broadcast_to(np.eye(3), p.shape[:-1] + (3, 3)).copy() if jacobian else None
    I = np.zeros(p.shape[:-1] + (len(gs),)) if gs else None
    samples = [p.copy()] if keep_samples else None
    for _ in range(n):
        k1 = rhs(p, M)
        k2 = rhs(p + 0.5 * h * k1[0], None if M is None else M + 0.5 * h * k1[1])
        k3 = rhs(p + 0.5 * h * k2[0], None if M is None else M + 0.5 * h * k2[1])
        k4 = rhs(p + h * k3[0], None if M is None else M + h * k3[1])
        p = p + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        if M is not None:
            M = M + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if I is not None:
            I = I + (h / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        if keep_samples:
            samples.append(p.copy())
    q, k = model.canonicalize_with_deck(p)
    out = FlowResult(points=q, lifted=p, deck=k, integrals=I)
    if M is not None:
        out.M_lifted = M
        out.M = np.einsum("...ij,...jk->...ik", model.deck_linear(k), M)
    if keep_samples:
        out.samples = np.stack(samples, axis=-2)
        out.times = np.linspace(0.0, T, n + 1)
    return out


def integrate_along(model, flow, p, T: float, g: ScalarField, step: float = DEFAULT_STEP, jacobian: bool = False):
    """Flow ``p`` for time ``T`` and return ``(FlowResult, int_0^T g(phi^t p) dt)``.

    ``g`` is evaluated once on all trajectory samples and integrated by
    composite Simpson, which is much cheaper than carrying it through every
    integrator stage when ``g`` itself is expensive.
    """
    res = flow_map(model, flow, p, T, step, jacobian=jacobian, keep_samples=True)
    if len(res.times) < 2:
        return res, np.zeros(np.shape(p)[:-1])
    vals = np.asarray(g(res.samples), dtype=float)
    return res, simpson(vals, x=res.times, axis=-1)


@dataclass(frozen=True)
class Crossing:
    """The trajectory passed through a gluing between samples ``index - 1`` and ``index``."""

    index: int
    time: float
    shift: tuple


@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray  # canonical
    lifted: np.ndarray
    step: float
    crossings: list = field(default_factory=list)

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.points))


def integrate_flow(model: ChartModel, flow: ModelFlow, p, T: float, step: float = DEFAULT_STEP) -> Trajectory:
    """Sampled trajectory of a single point, with crossing bookkeeping."""
    p = np.asarray(p, dtype=float)
    res = flow_map(model, flow, p, T, step, keep_samples=True)
    lifted = res.samples
    canon = model.canonicalize(lifted)
    floors = np.floor(lifted).astype(int)
    if model.kind == "mapping_torus":
        floors[:, :2] = 0
    crossings = [
        Crossing(i, float(res.times[i]), tuple((floors[i] - floors[i - 1]).tolist()))
        for i in range(1, len(lifted))
        if np.any(floors[i] != floors[i - 1])
    ]
    h = abs(res.times[1] - res.times[0]) if len(res.times) > 1 else step
    return Trajectory(res.times, canon, lifted, float(h), crossings)


@dataclass
class FlowJacobian:
    T: float
    M: np.ndarray
    base: np.ndarray
    end: np.ndarray


def linearize_flow(model: ChartModel, flow: ModelFlow, p, T: float, step: float = DEFAULT_STEP) -> FlowJacobian:
    """Chart derivative of the time-``T`` map at ``p``, from canonical ``p`` to canonical endpoint."""
    p = model.canonicalize(np.asarray(p, dtype=float))
    res = flow_map(model, flow, p, T, step, jacobian=True)
    return FlowJacobian(T, res.M, p, res.points)


# normal bundle ------------------------------------------------------------------------


def _metric(model, p):
    return model.metric_at(p) if model is not None else np.broadcast_to(np.eye(3), np.shape(p)[:-1] + (3, 3))


def project_normal(p, v, X, model: ChartModel | None = None):
    """Component of ``v`` orthogonal to ``X`` in the chart metric at ``p``.

    ``X`` is a :class:`VectorField` or an array of its values.
    """
    p = np.asarray(p, dtype=float)
    xv = X(p) if isinstance(X, VectorField) else np.asarray(X, dtype=float)
    G = _metric(model, p)
    xx = _inner(G, xv, xv)
    if np.any(xx < X_FLOOR**2):
        raise FlowError("cannot project: X vanishes")
    v = np.asarray(v, dtype=float)
    return v - (_inner(G, v, xv) / xx)[..., None] * xv


def _projector(G, xv):
    """Matrix of the G-orthogonal projection onto ``X^perp``."""
    xx = _inner(G, xv, xv)
    return np.eye(3) - np.einsum("...i,...j->...ij", xv, np.einsum("...ij,...j->...i", G, xv)) / xx[..., None, None]


def _gnormalize(G, v):
    n = np.sqrt(_inner(G, v, v))
    return v / n[..., None], n


def line_angle(u, v, G=None):
    """Angle between the lines spanned by ``u`` and ``v`` (accurate near 0)."""
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if G is None:
        G = np.broadcast_to(np.eye(3), np.broadcast_shapes(u.shape, v.shape)[:-1] + (3, 3))
    u, _ = _gnormalize(G, u)
    v, _ = _gnormalize(G, v)
    d = np.minimum(np.sqrt(np.maximum(_inner(G, u - v, u - v), 0)), np.sqrt(np.maximum(_inner(G, u + v, u + v), 0)))
    return 2.0 * np.arcsin(np.clip(d / 2.0, 0.0, 1.0))


@dataclass
class NormalLine:
    base: np.ndarray
    dir: np.ndarray


@dataclass
class LineEstimate:
    """Batched output of :func:`estimate_lines`."""

    base: np.ndarray
    dir: np.ndarray
    converged: np.ndarray
    last_delta: np.ndarray
    horizon: np.ndarray
    seed: int

    def line(self, i=0) -> NormalLine:
        return NormalLine(self.base[i], self.dir[i])


def _seed_vector(seed):
    g = np.random.default_rng(seed).normal(size=3)
    return g / np.linalg.norm(g)


def estimate_lines(
    model: ChartModel,
    flow: ModelFlow,
    p,
    direction: str = "unstable",
    T: float = 30.0,
    step: float = DEFAULT_STEP,
    angle_tol: float = 1e-8,
    seed: int = 0,
    chunk: float | None = None,
    fixed_horizon: bool = False,
) -> LineEstimate:
    """Power iteration for the invariant normal line at each point of ``p``.

    For the unstable line a fixed generic normal vector at ``phi^{-t} p`` is
    pushed forward to ``p``; for the stable line, one at ``phi^{t} p`` is pulled
    back.  The horizon ``t`` grows in chunks; the tangent maps of the chunks are
    composed vector-wise (never as an accumulated matrix) and the normal
    projection is applied after every chunk.  Iteration stops per point when
    successive estimates differ by less than ``angle_tol`` (unless
    ``fixed_horizon``), or when the horizon reaches ``T``.
    """
    if direction not in ("stable", "unstable"):
        raise ValueError("direction must be 'stable' or 'unstable'")
    if not T > 0:
        raise ValueError("horizon T must be positive")
    p = model.canonicalize(np.atleast_2d(np.asarray(p, dtype=float)))
    N = p.shape[0]
    dt = min(1.0, T) if chunk is None else chunk
    K = int(np.ceil(T / dt - 1e-9))
    sgn = -1.0 if direction == "unstable" else 1.0
    g = _seed_vector(seed)
    bases = [p]
    maps = []  # maps[j] carries T_{c_{j+1}} to T_{c_j}
    projs = [_projector(_metric(model, p), flow.X(p))]
    est = None
    converged = np.zeros(N, bool)
    delta = np.full(N, np.nan)
    horizon = np.zeros(N)
    G0 = _metric(model, p)
    for k in range(1, K + 1):
        res = flow_map(model, flow, bases[-1], sgn * dt, step, jacobian=True)
        c = res.points
        maps.append(np.linalg.inv(res.M))
        bases.append(c)
        projs.append(_projector(_metric(model, c), flow.X(c)))
        w = _mv(projs[-1], np.broadcast_to(g, c.shape))
        Gk = _metric(model, c)
        wn = np.sqrt(_inner(Gk, w, w))
        stalled = wn < 1e-6
        if np.any(stalled):
            alt = _seed_vector(seed + 1)
            w[stalled] = _mv(projs[-1][stalled], np.broadcast_to(alt, w[stalled].shape))
        for j in range(k - 1, -1, -1):
            w = _mv(projs[j], _mv(maps[j], w))
            w = w / np.linalg.norm(w, axis=-1, keepdims=True)
        w, _ = _gnormalize(G0, w)
        if est is not None:
            d = line_angle(w, est, G0)
            active = ~converged
            delta[active] = d[active]
            horizon[active] = k * dt
            newly = active & (d < angle_tol)
            if fixed_horizon:
                newly[:] = False
            keep = active
            est[keep] = w[keep]
            converged |= newly
            if not fixed_horizon and converged.all():
                break
        else:
            est = w
            horizon[:] = k * dt
    if fixed_horizon:
        converged = delta < angle_tol
    # orient by the seed vector so that nearby points get nearby representatives
    ref = _mv(projs[0], np.broadcast_to(g, p.shape))
    flip = _inner(G0, est, ref) < 0
    est[flip] *= -1.0
    return LineEstimate(p, est, converged, delta, horizon, seed)


def estimate_line(model, flow, p, direction="unstable", T=30.0, step=DEFAULT_STEP, angle_tol=1e-8, seed=0) -> NormalLine:
    """Single-point :func:`estimate_lines`; raises :class:`ConvergenceError` if not converged."""
    est = estimate_lines(model, flow, np.asarray(p, dtype=float)[None], direction, T, step, angle_tol, seed)
    if not est.converged[0]:
        raise ConvergenceError(
            f"{direction} line did not converge within horizon {T} (last angle change {est.last_delta[0]:.3g})",
            float(est.last_delta[0]),
        )
    return est.line(0)


class EstimatedLineField(VectorField):
    """Invariant normal line field computed pointwise by power iteration.

    Values are unit vectors in the chart metric at the canonical point,
    transported back to the lifted query point.  A fixed horizon keeps the
    field smooth in the point, which matters for its difference quotients.
    """

    def __init__(
        self,
        model: ChartModel,
        flow: ModelFlow,
        direction: str,
        T: float = 10.0,
        step: float = DEFAULT_STEP,
        seed: int = 0,
        dspec: DerivSpec = DerivSpec("fd", 2, 1e-3),
    ):
        self.model, self.flow, self.direction = model, flow, direction
        self.T, self.step, self.seed = T, step, seed

        # Frames ask for the same point arrays several times; remember the last few.
        self._memo: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

        def compute(p):
            flat = p.reshape(-1, 3)
            c, k = model.canonicalize_with_deck(flat)
            est = estimate_lines(model, flow, c, direction, T, step, seed=seed, fixed_horizon=True)
            v = np.linalg.solve(model.deck_linear(k), est.dir[..., None])[..., 0]
            return v.reshape(p.shape), est.last_delta.reshape(p.shape[:-1])

        def lookup(p):
            p = np.ascontiguousarray(p, dtype=float)
            key = (p.shape, hashlib.sha1(p.tobytes()).hexdigest())
            with self._lock:
                if key in self._memo:
                    self._memo.move_to_end(key)
                    return self._memo[key]
            v, delta = compute(p)
            v.setflags(write=False)
            with self._lock:
                self._memo[key] = (v, delta)
                while len(self._memo) > 16:
                    self._memo.popitem(last=False)
            return v, delta

        self._lookup = lookup
        super().__init__(lambda p: lookup(p)[0], dspec=dspec, name=f"E_{direction[0]}")

    def last_delta(self, p) -> np.ndarray:
        """Angle change over the final power-iteration chunk at each point."""
        return self._lookup(p)[1]


# norms and rates -------------------------------------------------------------------


class ChartNorm:
    """Chart-metric norm of the X-orthogonal component."""

    norm_id = "chart"

    def __init__(self, model: ChartModel, flow: ModelFlow):
        self.model, self.flow = model, flow

    def __call__(self, p, v):
        G = _metric(self.model, p)
        w = _mv(_projector(G, self.flow.X(p)), v)
        return np.sqrt(_inner(G, w, w))


class InducedNorm:
    """``sqrt(alpha_s(v)^2 + alpha_u(v)^2)``, the norm induced by a frame's dual forms."""

    norm_id = "induced"

    def __init__(self, alpha_s: KForm, alpha_u: KForm):
        self.alpha_s, self.alpha_u = alpha_s, alpha_u

    def __call__(self, p, v):
        return np.hypot(self.alpha_s.on(p, v), self.alpha_u.on(p, v))


@dataclass
class GrowthRates:
    r_s: np.ndarray
    r_u: np.ndarray
    norm_id: str


def growth_rate_fd(model, flow, line: NormalLine, h: float = 1e-3, norm=None, step: float | None = None):
    """``d/dt ln |phi^t_* e|`` at ``t = 0`` by a central difference of width ``2h``.

    ``line`` may be batched (``base`` of shape ``(N, 3)``).  The norm defaults
    to :class:`ChartNorm`.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    norm = norm or ChartNorm(model, flow)
    p = np.asarray(line.base, dtype=float)
    e = np.asarray(line.dir, dtype=float)
    step = h / 4 if step is None else step
    n0 = norm(p, e)
    if np.any(n0 < 1e-12 * np.maximum(1.0, np.linalg.norm(e, axis=-1))):
        raise ValueError("line has no normal component (it is parallel to X)")
    # work on the lifted chart so forms are compared with their own formulas
    fwd = flow_map(model, flow, p, h, step, jacobian=True)
    bwd = flow_map(model, flow, p, -h, step, jacobian=True)
    up = norm(fwd.lifted, _mv(fwd.M_lifted, e))
    down = norm(bwd.lifted, _mv(bwd.M_lifted, e))
    return (np.log(up) - np.log(down)) / (2 * h)


def growth_rate_bracket(flow: ModelFlow, e: VectorField, alpha_dual: KForm, tol: float = 1e-8) -> ScalarField:
    """Rate ``r = -alpha_dual([X, e])`` read off ``L_X e = -r e + q X``."""
    from .fields import bracket

    br = bracket(flow.X, e)

    def fn(p):
        norm = alpha_dual.on(p, e(p))
        bad = np.abs(norm - 1.0) > tol
        if np.any(bad):
            idx = np.argmax(np.abs(norm - 1.0))
            raise FrameError(
                f"alpha_dual(e) = {np.ravel(norm)[idx]:.6g}, expected 1", np.asarray(p).reshape(-1, 3)[idx]
            )
        return -alpha_dual.on(p, br(p))

    return ScalarField(fn, dspec=DerivSpec("fd", 4, 1e-3))


@dataclass
class DominationReport:
    norm_id: str
    min_gap: float
    min_r_u: float
    max_r_s: float
    worst_point: tuple
    converged: bool
    n_unconverged: int
    max_last_delta: float
    r_s: np.ndarray
    r_u: np.ndarray
    points: np.ndarray

    @property
    def dominated(self) -> bool:
        return self.min_gap > 0

    def anosov_witnessed(self, margin: float = 1e-6) -> bool:
        """Rates are at least ``margin`` away from zero with opposite signs.

        A False value only means this norm does not witness it.
        """
        return self.min_r_u > margin and self.max_r_s < -margin


def domination_report(
    model, flow, sample_points, T: float = 30.0, step: float = DEFAULT_STEP, h: float = 1e-3, seed: int = 0, norm=None
) -> DominationReport:
    """Estimate both invariant lines and their chart-norm rates at each sample."""
    pts = model.canonicalize(np.atleast_2d(np.asarray(sample_points, dtype=float)))
    eu = estimate_lines(model, flow, pts, "unstable", T, step, seed=seed)
    es = estimate_lines(model, flow, pts, "stable", T, step, seed=seed)
    norm = norm or ChartNorm(model, flow)
    ru = growth_rate_fd(model, flow, NormalLine(pts, eu.dir), h, norm)
    rs = growth_rate_fd(model, flow, NormalLine(pts, es.dir), h, norm)
    gap = ru - rs
    i = int(np.argmin(gap))
    conv = eu.converged & es.converged
    deltas = np.concatenate([eu.last_delta, es.last_delta])
    return DominationReport(
        norm_id=getattr(norm, "norm_id", "custom"),
        min_gap=float(gap.min()),
        min_r_u=float(ru.min()),
        max_r_s=float(rs.max()),
        worst_point=tuple(pts[i].tolist()),
        converged=bool(conv.all()),
        n_unconverged=int((~conv).sum()),
        max_last_delta=float(np.nanmax(deltas)) if np.any(np.isfinite(deltas)) else float("nan"),
        r_s=rs,
        r_u=ru,
        points=pts,
    )


# periodic orbits ---------------------------------------------------------------------


@dataclass
class OrbitData:
    label: str
    trajectory: Trajectory
    period: float
    monodromy: FlowJacobian
    normal_monodromy: np.ndarray
    lambda_u: float
    lambda_s: float
    q_X: float
    closing_gap: float


def close_orbit(
    model: ChartModel, flow: ModelFlow, seed: NamedOrbit, step: float = 1e-3, gap_tol: float = 1e-9
) -> OrbitData:
    """Integrate a declared periodic orbit once and extract its normal return map."""
    p0 = model.canonicalize(np.asarray(seed.start, dtype=float))
    traj = integrate_flow(model, flow, p0, seed.period, step)
    jac = linearize_flow(model, flow, p0, seed.period, step)
    gap = float(model.distance(jac.end, p0))
    if gap > gap_tol:
        raise OrbitError(f"orbit {seed.label!r} does not close: gap {gap:.3g} > {gap_tol:.1g}")
    G = _metric(model, p0)
    xv = flow.X(p0)
    P = _projector(G, xv)
    # G-orthonormal basis of X^perp
    cand = np.eye(3)[np.argsort(np.abs(xv))[:2]]
    basis = []
    for c in cand:
        v = P @ c
        for b in basis:
            v = v - (b @ G @ v) * b
        basis.append(v / np.sqrt(v @ G @ v))
    B = np.stack(basis, axis=1)
    Nm = B.T @ G @ P @ jac.M @ B
    ev = np.linalg.eigvals(Nm)
    ev = ev[np.argsort(np.abs(ev))]
    if np.any(np.abs(ev.imag) > 1e-12):
        raise OrbitError(f"orbit {seed.label!r} has a non-real normal return map")
    qx = float((xv @ G @ jac.M @ xv) / (xv @ G @ xv))
    return OrbitData(
        label=seed.label,
        trajectory=traj,
        period=float(seed.period),
        monodromy=jac,
        normal_monodromy=Nm,
        lambda_u=float(ev[-1].real),
        lambda_s=float(ev[0].real),
        q_X=qx,
        closing_gap=gap,
    )


def orbit_integral(orbit: OrbitData, g: ScalarField) -> float:
    """``int_0^P g(gamma(t)) dt`` by composite Simpson on the trajectory samples."""
    tr = orbit.trajectory
    vals = np.asarray(g(tr.lifted), dtype=float)
    if len(tr.times) < 2:
        return 0.0
    return float(simpson(vals, x=tr.times))
