"""Theorem-level verification harnesses.

Each verifier assembles fields, dynamics and contact operations into a
:class:`VerificationReport` holding named residuals (value, tolerance, worst
point), named margins (value, threshold) and a verdict.  A report passes when
every residual is below its tolerance and every margin exceeds its threshold;
it is inconclusive only when an invariant-line estimate failed to converge.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

from . import __version__
from .contact import (
    FrameDecomposition,
    cartan_check,
    coframe_from_splitting,
    decompose_along_splitting,
    induced_growth_rates,
    induced_growth_rates_lie,
    reeb_field,
    verify_bicontact,
    volume_preserving_pair,
)
from .dynamics import (
    DEFAULT_STEP,
    EstimatedLineField,
    close_orbit,
    domination_report,
    estimate_lines,
    flow_map,
    integrate_along,
    orbit_integral,
)
from .errors import AnosovFlowsError, FrameError
from .fields import (
    COMPOSITE,
    VOLUME_FLOOR,
    SYMBOLS,
    KForm,
    ScalarField,
    VectorField,
    divergence,
    ext_d,
    from_sympy,
    lie_derivative,
    wedge,
)
from .manifolds import ChartModel, ModelFlow, NamedOrbit

__all__ = [
    "VerificationReport",
    "Splitting",
    "get_splitting",
    "verify_divergence_identity",
    "verify_contcomp_volcomp",
    "verify_contchar",
    "flow_average_form",
    "verify_prop_claims",
    "verify_legendrian_push",
    "verify_cartan_equations",
    "verify_domination",
    "verify_bicontact_pair",
    "verify_reeb_inclusion",
    "VERIFIERS",
    "run_verifier",
]


def _num(x):
    """JSON-safe float."""
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _pt(p):
    return [_num(c) for c in np.ravel(p)]


@dataclass
class VerificationReport:
    theorem_id: str
    model: dict
    provenance: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    unconverged: bool = False
    error: str | None = None
    runtime: float = 0.0

    def residual(self, name, values, tol, points=None):
        """Record ``max |values|`` as a residual."""
        v = np.abs(np.atleast_1d(np.asarray(values, dtype=float)))
        i = int(np.nanargmax(v)) if np.any(np.isfinite(v)) else 0
        worst = None if points is None else _pt(np.atleast_2d(points)[i])
        val = float(v[i]) if np.all(np.isfinite(v)) else float("inf")
        self.residuals[name] = {"value": _num(val), "tol": _num(tol), "worst_point": worst}
        return val

    def margin(self, name, values, threshold=0.0, points=None):
        """Record ``min values`` as a margin that must exceed ``threshold``."""
        v = np.atleast_1d(np.asarray(values, dtype=float))
        i = int(np.nanargmin(v)) if np.any(np.isfinite(v)) else 0
        worst = None if points is None else _pt(np.atleast_2d(points)[i])
        val = float(v[i]) if np.all(np.isfinite(v)) else float("-inf")
        self.margins[name] = {"value": _num(val), "threshold": _num(threshold), "worst_point": worst}
        return val

    @property
    def verdict(self) -> str:
        if self.error is not None:
            return "fail"
        if self.unconverged:
            return "inconclusive"
        ok = all(_ok_res(r) for r in self.residuals.values()) and all(_ok_margin(m) for m in self.margins.values())
        return "pass" if ok else "fail"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def failed_checks(self) -> list:
        out = [k for k, r in self.residuals.items() if not _ok_res(r)]
        return out + [k for k, m in self.margins.items() if not _ok_margin(m)]

    def to_dict(self, include_runtime: bool = False) -> dict:
        d = {
            "theorem_id": self.theorem_id,
            "verdict": self.verdict,
            "model": self.model,
            "provenance": self.provenance,
            "residuals": self.residuals,
            "margins": self.margins,
            "values": self.values,
            "failed": self.failed_checks(),
            "notes": list(self.notes),
            "error": self.error,
        }
        if include_runtime:
            d["runtime_s"] = self.runtime
        return d


def _ok_res(r):
    v = r["value"]
    return isinstance(v, float) and v < r["tol"]


def _ok_margin(m):
    v = m["value"]
    return isinstance(v, float) and v > m["threshold"]


# shared ingredients -----------------------------------------------------------------


@dataclass
class Splitting:
    E_s: VectorField
    E_u: VectorField
    source: str
    params: dict


def get_splitting(model, flow, T: float = 10.0, step: float = DEFAULT_STEP, seed: int = 0) -> Splitting:
    """The model's exact splitting, or power-iteration line fields when none ships."""
    if flow.exact_splitting is not None:
        E_s, E_u = flow.exact_splitting
        return Splitting(E_s, E_u, "exact", {})
    E_s = EstimatedLineField(model, flow, "stable", T, step, seed)
    E_u = EstimatedLineField(model, flow, "unstable", T, step, seed)
    return Splitting(E_s, E_u, "estimated", {"horizon": T, "step": step, "seed": seed, "fd_step": E_s.dspec.h})


def _check_convergence(report, model, flow, split: Splitting, points, angle_tol=1e-6):
    """Mark the report inconclusive if the line estimates have not settled at ``points``."""
    if split.source != "estimated":
        return
    worst = max(float(np.nanmax(E.last_delta(points))) for E in (split.E_s, split.E_u))
    report.values["line_estimate_last_angle_change"] = _num(worst)
    if not worst < angle_tol:
        report.unconverged = True
        report.notes.append(f"invariant lines not converged (last angle change {worst:.3g})")


# Estimated line fields are differenced at step 1e-3 on top of power-iteration
# output, which limits identities built from their derivatives to ~1e-7.
ESTIMATED_TOL = 1e-5


def _tol(given, split, exact_default):
    if given is not None:
        return given
    return exact_default if split.source == "exact" else max(exact_default, ESTIMATED_TOL)


def _points(model, grid=4, n_random=16, seed=0):
    return model.sample_points(grid, n_random, seed)


def _base_report(theorem_id, model, split=None, **prov):
    r = VerificationReport(theorem_id, model.describe())
    r.provenance = {"tool_version": __version__, "metric": model.metric_name,
                    "eta": "metric-orthogonal complement of X"}
    if split is not None:
        r.provenance["splitting"] = {"source": split.source, **split.params}
        r.provenance["tolerance_profile"] = split.source
    r.provenance.update(prov)
    return r


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        rep = fn(*a, **kw)
        rep.runtime = time.perf_counter() - t0
        return rep

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


def _ratio_sqrt(num: KForm, den: KForm) -> tuple[ScalarField, ScalarField]:
    """Factors ``(f_u, f_s)`` with ``f_u * f_s = num / den`` and ``f_u = sqrt|num / den|``.

    ``f_s`` carries the sign, which absorbs the orientation of the stable
    representative. A vanishing ratio is refused.
    """

    def ratio(p):
        r = num._v(p)[..., 0] / den._v(p)[..., 0]
        if np.any(~(np.abs(r) > VOLUME_FLOOR)):
            i = int(np.argmin(np.abs(np.ravel(r))))
            raise FrameError("volume ratio vanishes", np.asarray(p).reshape(-1, 3)[i])
        return r

    f_u = ScalarField(lambda p: np.sqrt(np.abs(ratio(p))), dspec=COMPOSITE)
    f_s = ScalarField(lambda p: np.sign(ratio(p)) * np.sqrt(np.abs(ratio(p))), dspec=COMPOSITE)
    return f_u, f_s


# divergence identity -----------------------------------------------------------------


@_timed
def verify_divergence_identity(
    model: ChartModel,
    flow: ModelFlow,
    Omega: KForm | None = None,
    points=None,
    split: Splitting | None = None,
    tol: float | None = None,
    omega_label: str = "invariant",
) -> VerificationReport:
    """``div_X Omega = r_s + r_u`` for the frame rescaled so that it induces ``Omega``.

    Starting from the dual coframe of the splitting, ``f = sqrt(Omega /
    (a_s ^ a_u ^ a_X))`` gives forms ``f a_s, f a_u`` whose induced volume
    is ``Omega``; their bracket rates must add up to the divergence.
    """
    if Omega is None:
        Omega = flow.invariant_volume if flow.invariant_volume is not None else model.reference_volume()
        omega_label = "invariant" if flow.invariant_volume is not None else "reference"
    split = split or get_splitting(model, flow)
    points = _points(model) if points is None else np.atleast_2d(points)
    tol = _tol(tol, split, 1e-8)
    rep = _base_report("metric1", model, split, omega=omega_label, frame="dual coframe rescaled to Omega")
    base = coframe_from_splitting(split.E_s, split.E_u, flow.X, model)
    f_u, f_s = _ratio_sqrt(Omega, base.volume)
    frame = base.scaled(f_u, f_s)
    rates = induced_growth_rates(frame, flow.X)
    div = divergence(flow.X, Omega)(points)
    rs, ru = rates.r_s(points), rates.r_u(points)
    vol = frame.volume(points)
    rep.residual("frame_volume", (vol - Omega(points)) / np.abs(Omega(points)), _tol(None, split, 1e-8), points)
    rep.residual("div_minus_rate_sum", div - (rs + ru), tol, points)
    rep.values.update(div_min=_num(div.min()), div_max=_num(div.max()),
                      rate_sum_min=_num((rs + ru).min()), rate_sum_max=_num((rs + ru).max()))
    _check_convergence(rep, model, flow, split, points)
    return rep


# contact / volume compatibility --------------------------------------------------------


def _form(flow, name):
    if name not in flow.forms:
        raise AnosovFlowsError(f"model has no built-in form {name!r}")
    return flow.forms[name]


@_timed
def verify_contcomp_volcomp(
    model, flow, which: str = "alpha_plus", points=None, split=None, tol: float | None = None, vol_tol: float | None = None
) -> VerificationReport:
    """``a ^ da = sign (r_u - r_s) Omega^a`` and ``div_X Omega^a = r_u + r_s`` for the induced frame."""
    sign = 1 if which == "alpha_plus" else -1
    alpha = _form(flow, which)
    split = split or get_splitting(model, flow)
    points = _points(model) if points is None else np.atleast_2d(points)
    tol, vol_tol = _tol(tol, split, 1e-9), _tol(vol_tol, split, 1e-8)
    rep = _base_report("contcomp", model, split, form=which, norm="induced")
    frame = decompose_along_splitting(alpha, split.E_s, split.E_u, flow.X, sign, model)
    rates = induced_growth_rates(frame, flow.X)
    rs, ru = rates.r_s(points), rates.r_u(points)
    ref = model.reference_volume()(points)
    Om = frame.volume
    lhs = wedge(alpha, ext_d(alpha))(points)
    rhs = sign * (ru - rs) * Om(points)
    rep.residual("contact_volume_identity", (lhs - rhs) / ref, tol, points)
    div = divergence(flow.X, Om)(points)
    rep.residual("divergence_identity", div - (ru + rs), vol_tol, points)
    rep.margin("induced_volume_positive", Om(points) / ref, 0.0, points)
    gap = ru - rs
    rep.values.update(rate_gap_min=_num(gap.min()), rate_gap_max=_num(gap.max()),
                      r_u_min=_num(ru.min()), r_s_max=_num(rs.max()))
    _check_convergence(rep, model, flow, split, points)
    return rep


@_timed
def verify_contchar(
    model, flow, points=None, split=None, margin_tol: float = 1e-6, scale: float = 1.0
) -> VerificationReport:
    """``-a ^ da < (div_X Omega^a) Omega^a < a ^ da`` for the positive form, two ways.

    Margins are reported against the reference volume and after dividing by
    the induced volume (``2 r_u`` and ``-2 r_s``, invariant under rescaling
    the form).  The rate formulation ``r_s < 0 < r_u`` is computed alongside
    and the two verdicts are cross-checked.
    """
    alpha = _form(flow, "alpha_plus") * float(scale)
    split = split or get_splitting(model, flow)
    points = _points(model) if points is None else np.atleast_2d(points)
    rep = _base_report("contchar", model, split, form="alpha_plus", scale=scale, norm="induced")
    frame = decompose_along_splitting(alpha, split.E_s, split.E_u, flow.X, 1, model)
    Om = frame.volume
    ref = model.reference_volume()(points)
    kappa = wedge(alpha, ext_d(alpha))(points) / ref
    omega = Om(points) / ref
    div = divergence(flow.X, Om)(points)
    lower, upper = div * omega + kappa, kappa - div * omega
    rep.margin("lower_inequality", lower, margin_tol, points)
    rep.margin("upper_inequality", upper, margin_tol, points)
    rep.margin("lower_inequality_induced", lower / omega, margin_tol, points)
    rep.margin("upper_inequality_induced", upper / omega, margin_tol, points)
    rates = induced_growth_rates(frame, flow.X)
    rs, ru = rates.r_s(points), rates.r_u(points)
    ineq_ok = bool(min(lower.min(), upper.min()) > margin_tol * min(1.0, float(np.abs(omega).min())))
    induced_ok = bool(min((lower / omega).min(), (upper / omega).min()) > margin_tol)
    rates_ok = bool(ru.min() > margin_tol / 2 and rs.max() < -margin_tol / 2)
    rep.residual("induced_margin_vs_rates", np.concatenate([lower / omega - 2 * ru, upper / omega + 2 * rs]),
                 _tol(None, split, 1e-6),
                 np.concatenate([points, points]))
    rep.values.update(
        r_u_min=_num(ru.min()), r_s_max=_num(rs.max()),
        formulations_agree=bool(induced_ok == rates_ok),
        inequality_verdict=ineq_ok, rate_verdict=rates_ok,
    )
    if induced_ok != rates_ok:
        rep.notes.append("inequality and rate formulations disagree")
    _check_convergence(rep, model, flow, split, points)
    return rep


# flow averaging --------------------------------------------------------------------------


def flow_average_form(
    model, flow, alpha0: KForm, rate: ScalarField, T: float, direction: str = "unstable", step: float = DEFAULT_STEP
) -> KForm:
    """``exp(-int_0^tau r) (phi^tau)^* alpha0`` with ``tau = T`` (unstable) or ``-T`` (stable)."""
    if T < 0:
        raise ValueError("T must be non-negative")
    if direction not in ("stable", "unstable"):
        raise ValueError("direction must be 'stable' or 'unstable'")
    tau = T if direction == "unstable" else -T

    def fn(p):
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, 3)
        res, integral = integrate_along(model, flow, flat, tau, rate, step, jacobian=True)
        a_end = alpha0(res.lifted)
        pulled = np.einsum("nji,nj->ni", res.M_lifted, a_end)
        return (np.exp(-integral)[:, None] * pulled).reshape(p.shape)

    return KForm(1, fn, dspec=COMPOSITE, name=f"alpha^{T}_{direction[0]}")


@_timed
def verify_prop_claims(
    model,
    flow,
    alpha0: KForm | None = None,
    T_values=(0.0, 1.0, 2.0, 3.0),
    points=None,
    split=None,
    step: float = DEFAULT_STEP,
    tol: float | None = None,
    decay_tol: float = 0.1,
    delta: float = 1e-3,
    monotone_slack: float = 1e-10,
) -> VerificationReport:
    """Invariance of ``a^T_u(e_u)``, decay of ``a^T_u(e_s)`` and of its derivative along ``X``.

    The default starting form is ``alpha_u + 0.1 (1 + 0.5 sin 2 pi t) alpha_s``
    in the model's frame.  Decay of ``a^T_u(e_s)`` between consecutive horizons
    is compared with ``exp(-int (r_u - r_s))`` times the change of
    ``a^0_u(e_s)`` along the orbit.
    """
    split = split or get_splitting(model, flow)
    points = _points(model, 3, 8) if points is None else np.atleast_2d(points)
    T_values = sorted(float(t) for t in T_values)
    frame = coframe_from_splitting(split.E_s, split.E_u, flow.X, model)
    rates = induced_growth_rates(frame, flow.X)
    if alpha0 is None:
        t = SYMBOLS[2]
        bump = from_sympy("scalar", sp.Rational(1, 10) * (1 + sp.sin(2 * sp.pi * t) / 2))
        alpha0 = frame.alpha_u + frame.alpha_s * bump
        a0_label = "alpha_u + 0.1 (1 + 0.5 sin 2 pi t) alpha_s"
    else:
        a0_label = getattr(alpha0, "name", None) or "user"
    tol = _tol(tol, split, 1e-8)
    rep = _base_report("claims", model, split, alpha0=a0_label, T_values=T_values, step=step, delta=delta)
    eu, es = frame.e_u(points), frame.e_s(points)
    base_u = alpha0.on(points, eu)
    gap = ScalarField(lambda p: rates.r_u._v(p)[..., 0] - rates.r_s._v(p)[..., 0], dspec=COMPOSITE)
    a0_es = ScalarField(lambda p: alpha0.on(p, frame.e_s(p)), dspec=COMPOSITE)
    fwd = flow_map(model, flow, points, delta, step=delta)
    bwd = flow_map(model, flow, points, -delta, step=delta)
    ahead = {}
    d_es = []
    values_es = []
    for T in T_values:
        aT = flow_average_form(model, flow, alpha0, rates.r_u, T, "unstable", step)
        rep.residual(f"invariance_T{T:g}", aT.on(points, eu) - base_u, tol, points)
        values_es.append(aT.on(points, es))
        s_f = aT.on(fwd.lifted, frame.e_s(fwd.lifted))
        s_b = aT.on(bwd.lifted, frame.e_s(bwd.lifted))
        d_es.append(np.abs(s_f - s_b) / (2 * delta))
        # expected change along the orbit, for the decay comparison
        res, integral = integrate_along(model, flow, points, T, gap, step)
        ahead[T] = (integral, a0_es(res.lifted))
    factors = []
    for (T0, v0), (T1, v1) in zip(zip(T_values, values_es), zip(T_values[1:], values_es[1:])):
        obs = (v1 / v0) ** (1.0 / (T1 - T0))
        I0, c0 = ahead[T0]
        I1, c1 = ahead[T1]
        expected = (np.exp(-(I1 - I0)) * c1 / c0) ** (1.0 / (T1 - T0))
        rep.residual(f"decay_T{T1:g}", obs / expected - 1.0, decay_tol, points)
        factors.append(float(np.median(obs)))
    sups = [float(d.max()) for d in d_es]
    rep.residual("derivative_decay_monotone", np.maximum(np.diff(sups), 0.0) if len(sups) > 1 else 0.0,
                 monotone_slack)
    rep.values.update(decay_factor_per_unit_T=[_num(f) for f in factors],
                      sup_X_derivative=[_num(s) for s in sups],
                      alpha_T_es_sup=[_num(np.abs(v).max()) for v in values_es])
    _check_convergence(rep, model, flow, split, points)
    return rep


# Reeb inclusion and the Legendrian push --------------------------------------------------------


def _require_volume(model, flow):
    if flow.invariant_volume is None:
        raise AnosovFlowsError(f"model {model.name!r} ships no invariant volume; the construction needs one")


@_timed
def verify_reeb_inclusion(model, flow, points=None, split=None, tol: float | None = None) -> VerificationReport:
    """Reeb field of ``alpha_+ = alpha_u - Omega(., e_u, X)`` lies in ``ker alpha_-``."""
    _require_volume(model, flow)
    split = split or get_splitting(model, flow)
    points = _points(model) if points is None else np.atleast_2d(points)
    tol = _tol(tol, split, 1e-8)
    rep = _base_report("reeb", model, split, construction="alpha_s = Omega(., e_u, X)")
    pair, data = volume_preserving_pair(model, flow, split.E_s, split.E_u, points, tol=tol)
    rep.residual("reeb_inclusion", data.inclusion_residual, tol)
    rep.residual("rate_sum", data.r_s + data.r_u, tol, points)
    rep.residual("d_alpha_minus_identity", data.d_alpha_minus - (data.r_s - data.r_u), tol, points)
    rep.residual("tangency", pair.tangency_residual, 1e-9)
    rep.margin("r_u_positive", data.r_u, 0.0, points)
    rep.margin("alpha_minus_negative", -pair.minus.max_coefficient, 0.0)
    rep.margin("alpha_plus_positive", pair.plus.min_coefficient, 0.0)
    rep.margin("transversality", pair.transversality_margin, 0.0)
    rep.values.update(d_alpha_minus_mean=_num(np.mean(data.d_alpha_minus)))
    _check_convergence(rep, model, flow, split, points)
    return rep


@_timed
def verify_legendrian_push(
    model,
    flow,
    orbit: NamedOrbit | None = None,
    s_values=(0.01, 0.02, 0.05),
    points=None,
    split=None,
    n_samples: int = 64,
    delta: float = 1e-3,
    step: float = 1e-3,
    tol: float = 1e-6,
) -> VerificationReport:
    """Push a periodic orbit along the Reeb field of ``alpha_+`` and check the loop.

    The pushed loop should stay tangent to ``ker alpha_+`` and become
    transverse to ``ker alpha_-`` for ``s > 0``.  Tangents come from central
    differences of width ``2 delta`` along the original orbit.
    """
    s_values = [float(s) for s in s_values]
    if any(not s > 0 for s in s_values):
        raise ValueError("push parameter s must be positive: at s = 0 the orbit is tangent to both planes")
    _require_volume(model, flow)
    if orbit is None:
        if not flow.named_orbits:
            raise AnosovFlowsError(f"model {model.name!r} declares no periodic orbits")
        orbit = flow.named_orbits[0]
    split = split or get_splitting(model, flow)
    pts = _points(model) if points is None else np.atleast_2d(points)
    rep = _base_report("push", model, split, orbit=orbit.label, s_values=s_values, n_samples=n_samples,
                       delta=delta, step=step)
    pair, data = volume_preserving_pair(model, flow, split.E_s, split.E_u, pts)
    ap, am, R = pair.alpha_plus, pair.alpha_minus, data.R_plus
    reeb_flow = ModelFlow(X=R)
    ts = np.arange(n_samples) * orbit.period / n_samples
    start = np.asarray(orbit.start, dtype=float)
    gam = flow_map(model, flow, np.broadcast_to(start, (1, 3)), 0.0).lifted
    # sample the orbit at the ts on the lifted chart
    pts_orbit = np.concatenate([flow_map(model, flow, gam, t, step).lifted for t in ts])
    plus = flow_map(model, flow, pts_orbit, delta, step=delta).lifted
    minus = flow_map(model, flow, pts_orbit, -delta, step=delta).lifted
    margins = []
    for s in s_values:
        q = flow_map(model, reeb_flow, pts_orbit, s, step).lifted
        qp = flow_map(model, reeb_flow, plus, s, step).lifted
        qm = flow_map(model, reeb_flow, minus, s, step).lifted
        tangent = (qp - qm) / (2 * delta)
        nt = np.linalg.norm(tangent, axis=-1)
        leg = np.abs(ap.on(q, tangent)) / (np.linalg.norm(ap(q), axis=-1) * nt)
        tra = np.abs(am.on(q, tangent)) / (np.linalg.norm(am(q), axis=-1) * nt)
        rep.residual(f"legendrian_s{s:g}", leg, tol, q)
        margins.append(rep.margin(f"transverse_s{s:g}", tra, 0.0, q))
    rep.residual("margin_monotone_in_s", np.maximum(-np.diff(margins), 0.0) if len(margins) > 1 else 0.0, 1e-12)
    rep.residual("reeb_inclusion", data.inclusion_residual, _tol(None, split, 1e-8))
    rep.values["transversality_margins"] = [_num(m) for m in margins]
    _check_convergence(rep, model, flow, split, pts)
    return rep


# Cartan structure equations --------------------------------------------------------------


@_timed
def verify_cartan_equations(
    model,
    flow,
    alpha_minus: KForm | None = None,
    alpha_plus: KForm | None = None,
    points=None,
    split=None,
    tol: float | None = None,
    cartan_tol: float = 1e-9,
    delta: float = DEFAULT_STEP,
    orbit_step: float = 1e-3,
) -> VerificationReport:
    """Structure equations of a (-1)-Cartan pair in the frame of ``alpha_+``.

    With ``alpha_- = f alpha_u + g alpha_s``: Reeb fields in frame
    coordinates, ``g = -f r_s / r_u``, ``X.f + X.g + g r_s + f r_u = 0``,
    ``r_u + r_s = X . ln(r_u / (f (r_u - r_s)))`` and zero integrals of
    ``r_u + r_s`` over the declared periodic orbits.  Checking only declared
    orbits is consistent with, not a proof of, the periodic-data condition.
    """
    am = alpha_minus if alpha_minus is not None else _form(flow, "alpha_minus")
    ap = alpha_plus if alpha_plus is not None else _form(flow, "alpha_plus")
    split = split or get_splitting(model, flow)
    points = _points(model) if points is None else np.atleast_2d(points)
    tol = _tol(tol, split, 1e-8)
    rep = _base_report("cartan", model, split, delta=delta, orbit_step=orbit_step,
                       orbits=[o.label for o in flow.named_orbits])
    cc = cartan_check(am, ap, points, model.reference_volume(), model)
    rep.residual("taut_volume", cc.taut.volume_residual, cartan_tol)
    rep.residual("taut_cross", cc.taut.cross_residual, cartan_tol)
    rep.residual("mixed_alpha_plus_d_alpha_minus", cc.mixed_residual, cartan_tol)
    rep.residual("reeb_plus_in_ker_minus", cc.reeb_minus_of_plus, tol)
    rep.residual("reeb_minus_in_ker_plus", cc.reeb_plus_of_minus, tol)
    frame = decompose_along_splitting(ap, split.E_s, split.E_u, flow.X, 1, model)
    rates = induced_growth_rates(frame, flow.X)
    rs, ru = rates.r_s(points), rates.r_u(points)
    eu, es, xv = frame.e_u(points), frame.e_s(points), flow.X(points)
    f_field = ScalarField(lambda p: am.on(p, frame.e_u(p)), dspec=COMPOSITE)
    g_field = ScalarField(lambda p: am.on(p, frame.e_s(p)), dspec=COMPOSITE)
    f, g = f_field(points), g_field(points)
    au, as_ = frame.alpha_u(points), frame.alpha_s(points)
    rep.residual("decomposition", np.abs(am(points) - (f[:, None] * au + g[:, None] * as_)).max(-1), tol, points)
    if np.any(np.abs(ru) < 1e-12):
        rep.notes.append("r_u vanishes at a sample; equation (2) is undefined there")
    Rp = reeb_field(ap)(points)
    Rm = reeb_field(am)(points)
    den = ru - rs
    eq1 = np.concatenate([frame.alpha_u.on(points, Rp) + rs / den, frame.alpha_s.on(points, Rp) + ru / den])
    rep.residual("eq_reeb_plus", eq1, tol, np.concatenate([points, points]))
    rep.residual("eq_g_from_f", g + f * rs / ru, tol, points)
    eq3 = np.concatenate([frame.alpha_u.on(points, Rm) - 1 / (f + g), frame.alpha_s.on(points, Rm) - 1 / (f + g)])
    rep.residual("eq_reeb_minus", eq3, tol, np.concatenate([points, points]))
    Xf = lie_derivative(flow.X, f_field)(points)
    Xg = lie_derivative(flow.X, g_field)(points)
    rep.residual("eq_transport", Xf + Xg + g * rs + f * ru, tol, points)

    def h_of(p):
        a, b = rates.r_u(p), rates.r_s(p)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.log(a / (f_field(p) * (a - b)))

    fwd = flow_map(model, flow, points, delta, step=delta)
    bwd = flow_map(model, flow, points, -delta, step=delta)
    Xh = (h_of(fwd.lifted) - h_of(bwd.lifted)) / (2 * delta)
    rep.residual("eq_log_derivative", (ru + rs) - Xh, max(tol, 10 * delta**2), points)
    liv = {}
    for orb in flow.named_orbits:
        od = close_orbit(model, flow, orb, orbit_step)
        total = ScalarField(lambda p: rates.r_u(p) + rates.r_s(p), dspec=COMPOSITE)
        liv[orb.label] = orbit_integral(od, total)
    if liv:
        rep.residual("periodic_orbit_integrals", list(liv.values()), tol)
    rep.values.update(f_range=[_num(f.min()), _num(f.max())], g_range=[_num(g.min()), _num(g.max())],
                      orbit_integrals={k: _num(v) for k, v in liv.items()},
                      q_plus_range=[_num(frame.alpha_X.on(points, Rp).min()), _num(frame.alpha_X.on(points, Rp).max())])
    rep.notes.append("periodic-orbit condition checked on declared orbits only")
    _check_convergence(rep, model, flow, split, points)
    return rep


# domination and bi-contact pair ------------------------------------------------------------


@_timed
def verify_domination(model, flow, points=None, T: float = 30.0, step: float = DEFAULT_STEP, seed: int = 0,
                      margin_tol: float = 1e-6) -> VerificationReport:
    """``r_u - r_s > 0`` in the chart metric; opposite signs are reported, not required."""
    points = _points(model) if points is None else np.atleast_2d(points)
    rep = _base_report("domination", model, None, norm="chart", horizon=T, step=step, seed=seed)
    dr = domination_report(model, flow, points, T, step, seed=seed)
    rep.margin("rate_gap", dr.r_u - dr.r_s, margin_tol, dr.points)
    rep.values.update(min_r_u=_num(dr.min_r_u), max_r_s=_num(dr.max_r_s),
                      anosov_witnessed_by_this_norm=bool(dr.anosov_witnessed(margin_tol)),
                      max_last_angle_change=_num(dr.max_last_delta))
    if not dr.anosov_witnessed(margin_tol):
        rep.notes.append("r_s < 0 < r_u not witnessed by this norm; no claim about other metrics")
    if not dr.converged:
        rep.unconverged = True
        rep.notes.append(f"{dr.n_unconverged} line estimates did not converge")
    return rep


@_timed
def verify_bicontact_pair(model, flow, points=None, tol: float = 1e-9) -> VerificationReport:
    """The built-in forms are a negative/positive contact pair whose planes both contain ``X``."""
    points = _points(model, 8, 64) if points is None else np.atleast_2d(points)
    rep = _base_report("bicontact", model, None, transversality="angle between planes in the dual metric")
    pair = verify_bicontact(_form(flow, "alpha_minus"), _form(flow, "alpha_plus"), flow.X, points, model, tol)
    rep.residual("tangency", pair.tangency_residual, tol)
    rep.margin("alpha_minus_negative", -pair.minus.max_coefficient, 0.0)
    rep.margin("alpha_plus_positive", pair.plus.min_coefficient, 0.0)
    rep.margin("transversality", pair.transversality_margin, tol)
    return rep


# registry ------------------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifierInfo:
    id: str
    fn: Callable
    target: str
    options: tuple
    requires: tuple = ()
    sample: tuple = (4, 16)  # default (grid, n_random) of the evaluation points


VERIFIERS = {
    v.id: v
    for v in [
        VerifierInfo("bicontact", verify_bicontact_pair, "flow tangent to a transverse negative/positive contact pair",
                     ("tol",), sample=(8, 64)),
        VerifierInfo("cartan", verify_cartan_equations, "(-1)-Cartan structure equations and periodic-orbit integrals",
                     ("tol", "cartan_tol", "delta", "orbit_step")),
        VerifierInfo("claims", verify_prop_claims, "flow-averaged unstable form: invariance and decay",
                     ("T_values", "step", "tol", "decay_tol", "delta"), sample=(3, 8)),
        VerifierInfo("contchar", verify_contchar, "Anosov iff div of the induced volume lies strictly between -/+ a^da",
                     ("margin_tol", "scale")),
        VerifierInfo("contcomp", verify_contcomp_volcomp, "a^da = (r_u - r_s) Omega^a and div Omega^a = r_u + r_s",
                     ("which", "tol", "vol_tol")),
        VerifierInfo("domination", verify_domination, "dominated splitting: r_u - r_s > 0 in the chart metric",
                     ("T", "step", "seed", "margin_tol")),
        VerifierInfo("metric1", verify_divergence_identity, "div_X Omega = r_s + r_u in a frame inducing Omega",
                     ("tol",)),
        VerifierInfo("push", verify_legendrian_push, "Reeb push of a periodic orbit is Legendrian-transverse",
                     ("s_values", "n_samples", "delta", "step", "tol"), ("invariant_volume", "named_orbits")),
        VerifierInfo("reeb", verify_reeb_inclusion, "Reeb field of alpha_u - Omega(., e_u, X) lies in ker alpha_-",
                     ("tol",), ("invariant_volume",)),
    ]
}

_SPLIT_USERS = {"cartan", "claims", "contchar", "contcomp", "metric1", "push", "reeb"}


def missing_requirements(vid: str, flow: ModelFlow) -> list[str]:
    """Model data a verifier needs that ``flow`` does not provide."""
    return [r for r in VERIFIERS[vid].requires if not getattr(flow, r)]


def run_verifier(vid: str, model, flow, points=None, options: dict | None = None, split_params: dict | None = None):
    """Run a registered verifier; evaluation errors become failing reports."""
    info = VERIFIERS[vid]
    missing = missing_requirements(vid, flow)
    if missing:
        rep = _base_report(vid, model)
        rep.error = f"model provides no {', '.join(missing)}"
        return rep
    kw = dict(options or {})
    if points is not None:
        kw["points"] = points
    t0 = time.perf_counter()
    try:
        if vid in _SPLIT_USERS:
            kw["split"] = get_splitting(model, flow, **(split_params or {}))
        return info.fn(model, flow, **kw)
    except AnosovFlowsError as exc:
        rep = _base_report(vid, model)
        rep.error = f"{type(exc).__name__}: {exc}"
        rep.runtime = time.perf_counter() - t0
        return rep
