"""Largest Lyapunov exponent along trapped orbits.

A dispersing wave front hitting a boundary of curvature kappa at angle
phi leaves with front curvature increased by 2 kappa / cos phi; over a
free flight of length d the curvature relaxes to k / (1 + d k) while the
front width grows by the factor (1 + d k).  Iterating this pair along an
orbit gives the exponent as the mean of log(1 + d_j k_j), its
alpha-derivative as the mean of the exactly differentiated terms, and
two independent cross-checks: a finite-difference Jacobian product of
the boundary-coordinate billiard map, and a literal two-ray pencil.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import first_intersection, reflect
from .geometry import DeformationFamily, GeometryError, TableBounds, partial_jet
from .symbolic import (AlphaDerivatives, BilliardOrbit, SolveError, Word,
                       find_orbit_segment, find_periodic_orbit)

_FIXED_POINT_TOL = 1e-13
_DEFAULT_BURN_IN = 10     # flights discarded before averaging, open words only
_RENORM_EVERY = 5


@dataclass(frozen=True)
class CurvatureTrace:
    """Post-reflection front curvatures k[j] and flight contractions
    delta[j] = 1/(1 + d_j k_j) along an orbit; ``seed_k0`` is nan for a
    periodic fixed point."""

    k: np.ndarray
    delta: np.ndarray
    seed_k0: float


@dataclass(frozen=True)
class KdotTrace:
    """Alpha-derivatives k_dot[j] of the trace curvatures, with the
    per-flight factors beta[j] = delta[j]^2 and the forcing terms of the
    linear recursion k_dot[j+1] = beta[j] k_dot[j] + forcing[j]."""

    k_dot: np.ndarray
    beta: np.ndarray
    forcing: np.ndarray


@dataclass(frozen=True)
class LyapunovReport:
    lambda_m: float
    m: int
    lower: float
    upper: float
    seed_sensitivity: float
    F_m: Optional[float] = None
    oracle_lambda: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)


def curvature_between(k: float, tau: float) -> float:
    """Front curvature after free flight tau from a dispersing front k."""
    denom = 1.0 + tau * k
    if denom <= 0.0:
        raise GeometryError("front focuses within the flight; not dispersing")
    return k / denom


def default_seed_curvature(orbit: BilliardOrbit) -> float:
    return 2.0 * orbit.records[0].kappa


def _orbit_dgc(orbit: BilliardOrbit):
    d = np.array([r.d for r in orbit.records])
    cphi = np.array([math.cos(r.phi) for r in orbit.records])
    if np.min(cphi) < 1e-9:
        raise GeometryError("collision angle too close to pi/2")
    g = 2.0 * np.array([r.kappa for r in orbit.records]) / cphi
    return d, g, cphi


def propagate_curvature(orbit: BilliardOrbit, k0: float,
                        steps: Optional[int] = None) -> CurvatureTrace:
    """Run the curvature recursion from seed k0.

    Periodic orbits cycle; segments are capped at one flight per record.
    """
    if not k0 > 0.0:
        raise GeometryError("seed curvature must be positive")
    p = len(orbit.records)
    d, g, _ = _orbit_dgc(orbit)
    if steps is None:
        steps = p
    if orbit.kind == "segment" and steps > p:
        raise ValueError(f"segment supports at most {p} flights, got {steps}")
    k = np.empty(steps)
    delta = np.empty(steps)
    k[0] = k0
    for j in range(steps):
        dj = d[j % p]
        delta[j] = 1.0 / (1.0 + dj * k[j])
        if j + 1 < steps:
            k[j + 1] = k[j] * delta[j] + g[(j + 1) % p]
    return CurvatureTrace(k, delta, k0)


def periodic_curvature_fixed_point(orbit: BilliardOrbit) -> CurvatureTrace:
    """Periodic trace: the unique positive fixed point of the full cycle."""
    if orbit.kind != "periodic":
        raise ValueError("fixed point needs a periodic orbit")
    p = len(orbit.records)
    d, g, _ = _orbit_dgc(orbit)
    k = g.copy()
    for _ in range(500):
        prev = k.copy()
        for j in range(p):
            nxt = (j + 1) % p
            k[nxt] = k[j] / (1.0 + d[j] * k[j]) + g[nxt]
        if float(np.abs(k - prev).max()) < _FIXED_POINT_TOL:
            break
    else:
        raise SolveError("curvature fixed point iteration did not settle")
    delta = 1.0 / (1.0 + d * k)
    return CurvatureTrace(k, delta, math.nan)


def lyapunov_bounds(bounds: TableBounds) -> tuple[float, float]:
    """A priori per-flight bracket [log(1+d_min k_min), log(1+d_max k_max)]."""
    return (math.log1p(bounds.d_min * bounds.k_min),
            math.log1p(bounds.d_max * bounds.k_max))


def lyapunov_estimate(orbit: BilliardOrbit, k0: Optional[float] = None,
                      burn_in: Optional[int] = None, m: Optional[int] = None,
                      *, bounds: Optional[TableBounds] = None) -> LyapunovReport:
    """Finite-orbit exponent estimate.

    Periodic orbits use the cycle fixed point (exact per-period mean, no
    seed, no burn-in).  Segments propagate from the seed and discard
    ``burn_in`` flights; ``seed_sensitivity`` is the estimate spread
    under seeds k0/2 and 2 k0.
    """
    lower, upper = lyapunov_bounds(bounds) if bounds is not None \
        else (math.nan, math.nan)
    if orbit.kind == "periodic":
        trace = periodic_curvature_fixed_point(orbit)
        terms = -np.log(trace.delta)
        lam = float(terms.mean())
        return LyapunovReport(lam, len(terms), lower, upper, 0.0,
                              diagnostics={"kind": "periodic",
                                           "residual": orbit.residual,
                                           "k_fixed_point": trace.k})

    p = len(orbit.records)
    m_use = p if m is None else m
    if not 1 <= m_use <= p:
        raise ValueError(f"m must lie in 1..{p}")
    burn = _DEFAULT_BURN_IN if burn_in is None else burn_in
    if not 0 <= burn < m_use:
        raise ValueError("burn-in must leave at least one flight")
    k_seed = default_seed_curvature(orbit) if k0 is None else k0

    def estimate(seed):
        trace = propagate_curvature(orbit, seed, m_use)
        terms = -np.log(trace.delta)
        return float(terms[burn:].mean()), terms

    lam, terms = estimate(k_seed)
    lam_lo, _ = estimate(0.5 * k_seed)
    lam_hi, _ = estimate(2.0 * k_seed)
    sens = abs(lam_hi - lam_lo)
    running = np.cumsum(terms[burn:]) / np.arange(1, m_use - burn + 1)
    return LyapunovReport(lam, m_use - burn, lower, upper, sens,
                          diagnostics={"kind": "segment",
                                       "residual": orbit.residual,
                                       "burn_in": burn,
                                       "seed_k0": k_seed,
                                       "running_mean": running})


def kdot_trace(orbit: BilliardOrbit, derivs: AlphaDerivatives,
               trace: CurvatureTrace) -> KdotTrace:
    """Alpha-derivative of the curvature trace.

    Differentiating k[j+1] = k[j] delta[j] + g[j+1] gives the linear
    recursion with factor beta = delta^2; segments start from
    k_dot[0] = 0 (the seed is held fixed), periodic traces close the
    cycle with the geometric-series formula.
    """
    p = len(orbit.records)
    steps = len(trace.k)
    if steps != p:
        raise ValueError("trace length must match the record count")
    beta = trace.delta ** 2
    # forcing[j] enters k_dot[j+1]
    forcing = np.empty(steps)
    for j in range(steps):
        nxt = (j + 1) % p
        forcing[j] = -beta[j] * derivs.d_dot[j] * trace.k[j] ** 2 \
            + derivs.g_dot[nxt]

    k_dot = np.empty(steps)
    if orbit.kind == "segment":
        k_dot[0] = 0.0
        for j in range(steps - 1):
            k_dot[j + 1] = beta[j] * k_dot[j] + forcing[j]
    else:
        prod = float(np.prod(beta))
        acc = 0.0
        for j in range(p):
            acc = beta[j] * acc + forcing[j]
        # acc maps k_dot[0] = 0 once around; solve the affine fixed point
        k_dot[0] = acc / (1.0 - prod)
        for j in range(p - 1):
            k_dot[j + 1] = beta[j] * k_dot[j] + forcing[j]
    return KdotTrace(k_dot, beta, forcing)


def f_derivative_sum(orbit: BilliardOrbit, derivs: AlphaDerivatives,
                     trace: CurvatureTrace, kdot: KdotTrace,
                     burn_in: Optional[int] = None,
                     m: Optional[int] = None):
    """(F_m, per-flight f_dot): exact alpha-derivative of the exponent
    estimate, f_dot[j] = (d_dot[j] k[j] + d[j] k_dot[j]) / (1 + d[j] k[j])."""
    p = len(orbit.records)
    steps = len(trace.k)
    d = np.array([r.d for r in orbit.records])[:steps]
    f_dot = (derivs.d_dot[:steps] * trace.k + d * kdot.k_dot) * trace.delta
    if orbit.kind == "periodic":
        burn = 0 if burn_in is None else burn_in
    else:
        burn = _DEFAULT_BURN_IN if burn_in is None else burn_in
    m_use = steps if m is None else m
    if not 0 <= burn < m_use <= steps:
        raise ValueError("window must leave at least one flight")
    return float(f_dot[burn:m_use].mean()), f_dot


def _tangent_frame(family, i, u, alpha):
    t = partial_jet(family, i, u, alpha, 1, 0, checked=False)
    speed = math.hypot(t[0], t[1])
    that = t / speed
    nhat = np.array([that[1], -that[0]])
    return speed, that, nhat


def _uvt_step(family, i, u, vt, alpha, expected):
    """One billiard bounce in boundary coordinates (u, tangential velocity)."""
    speed, that, nhat = _tangent_frame(family, i, u, alpha)
    vn = 1.0 - vt * vt
    if vn <= 0.0:
        raise SolveError("tangential component leaves no outgoing direction")
    v = vt * that + math.sqrt(vn) * nhat
    q = partial_jet(family, i, u, alpha, 0, 0, checked=False)
    hit = first_intersection(q, v, family, alpha, exclude=i)
    if hit is None:
        raise SolveError("ray escaped during map evaluation")
    if expected is not None and hit.obstacle != expected:
        raise SolveError(
            f"ray hit obstacle {hit.obstacle} instead of {expected}")
    n2 = _tangent_frame(family, hit.obstacle, hit.u, alpha)
    v2 = reflect(v, n2[2])
    return hit.obstacle, hit.u, float(v2 @ n2[1])


def _wrap_angle(x: float) -> float:
    return (x + math.pi) % (2.0 * math.pi) - math.pi


def _step_jacobian(family, i, u, vt, alpha, expected, h):
    cols = []
    for du, dv in ((h, 0.0), (0.0, h)):
        _, up, vtp = _uvt_step(family, i, u + du, vt + dv, alpha, expected)
        _, um, vtm = _uvt_step(family, i, u - du, vt - dv, alpha, expected)
        cols.append([_wrap_angle(up - um) / (2.0 * h), (vtp - vtm) / (2.0 * h)])
    return np.array(cols).T


def _chain_index(orbit, j):
    """Chain node index for reflection j; j may reach one past the core
    for segments (the first pad reflection after the core)."""
    n = len(orbit.chain_us)
    if orbit.kind == "periodic":
        return j % n
    idx = orbit.core_start + j
    if not 0 <= idx < n:
        raise ValueError(f"reflection {j} outside the solved chain")
    return idx


def _node_data(family, orbit, j, alpha):
    """(obstacle, u, point, |T|, cos phi, v_t) at reflection j, taken from
    the solved chain so pad successors are available."""
    n = len(orbit.chain_us)
    idx = _chain_index(orbit, j)
    succ = _chain_index(orbit, j + 1) if orbit.kind == "periodic" \
        else idx + 1
    if succ >= n:
        raise ValueError(
            f"reflection {j} has no successor in the chain; deepen the padding")
    i = orbit.chain_symbols[idx]
    u = orbit.chain_us[idx]
    q = partial_jet(family, i, u, alpha, 0, 0, checked=False)
    q2 = partial_jet(family, orbit.chain_symbols[succ], orbit.chain_us[succ],
                     alpha, 0, 0, checked=False)
    e = q2 - q
    e /= math.hypot(e[0], e[1])
    speed, that, nhat = _tangent_frame(family, i, u, alpha)
    return i, float(u), q, speed, float(e @ nhat), float(e @ that)


def _outgoing_vt(family, orbit, j, alpha):
    return _node_data(family, orbit, j, alpha)[5]


def jacobian_lyapunov_oracle(word: Word, family: DeformationFamily, alpha: float,
                             m: Optional[int] = None, h: float = 1e-6, *,
                             k0: Optional[float] = None,
                             orbit: Optional[BilliardOrbit] = None,
                             burn_in: int = 0) -> float:
    """Exponent from finite-difference Jacobians of the boundary map.

    Shares nothing with the curvature recursion beyond the solved orbit:
    each step's 2x2 Jacobian in (u, v_t) coordinates is differenced from
    the literal flight-and-reflect map.  Cyclic words use the spectral
    radius of the once-around product; open words push a front-seeded
    tangent vector and average the growth of the physical front width
    |T| cos(phi) du.
    """
    if not 1e-7 <= h <= 1e-4:
        raise ValueError("step h must lie in [1e-7, 1e-4]")
    if orbit is None:
        orbit = find_periodic_orbit(word, family, alpha) if word.cyclic \
            else find_orbit_segment(word, family, alpha)
    records = orbit.records
    p = len(records)

    if word.cyclic:
        mat = np.eye(2)
        scale_log = 0.0
        for j in range(p):
            rec = records[j]
            vt = _outgoing_vt(family, orbit, j, alpha)
            jac = _step_jacobian(family, rec.obstacle, rec.u, vt, alpha,
                                 records[(j + 1) % p].obstacle, h)
            mat = jac @ mat
            nrm = float(np.abs(mat).max())
            if nrm > 1e12:
                scale_log += math.log(nrm)
                mat /= nrm
        rho = float(np.abs(np.linalg.eigvals(mat)).max())
        return (math.log(rho) + scale_log) / p

    m_use = p if m is None else m
    if not 1 <= m_use <= p:
        raise ValueError(f"m must lie in 1..{p}")
    if not 0 <= burn_in < m_use:
        raise ValueError("burn-in must leave at least one flight")

    # node j holds (obstacle, u, point, |T|, cos phi, v_t); the node one
    # past the core comes from the padded chain
    nodes = [_node_data(family, orbit, j, alpha) for j in range(m_use + 1)]
    speed0, c0 = nodes[0][3], nodes[0][4]
    seed = default_seed_curvature(orbit) if k0 is None else k0
    # unit-width front with curvature k0, in (du, dv_t) coordinates
    x = np.array([1.0 / (speed0 * c0), seed * c0 - orbit.records[0].kappa])
    scale_log = 0.0

    def width_log(j, vec, scale):
        val = nodes[j][3] * nodes[j][4] * abs(vec[0])
        if val <= 0.0:
            raise SolveError("front width collapsed in the oracle push")
        return math.log(val) + scale

    prev = width_log(0, x, scale_log)
    terms = []
    for j in range(m_use):
        obst, u, _, _, _, vt = nodes[j]
        jac = _step_jacobian(family, obst, u, vt, alpha, nodes[j + 1][0], h)
        x = jac @ x
        if (j + 1) % _RENORM_EVERY == 0:
            nrm = float(np.hypot(x[0], x[1]))
            scale_log += math.log(nrm)
            x /= nrm
        cur = width_log(j + 1, x, scale_log)
        terms.append(cur - prev)
        prev = cur
    return float(np.mean(terms[burn_in:]))


@dataclass(frozen=True)
class FrontExpansionReport:
    """Ratio of the literally measured pencil expansion to the predicted
    product of (1 + d_j k_j); 1 up to linearization error."""

    ratio: float
    measured_log: float
    predicted_log: float
    steps: int
    eps: float


def front_expansion_check(orbit: BilliardOrbit, family: DeformationFamily,
                          trace: CurvatureTrace, eps: float = 1e-6,
                          steps: Optional[int] = None) -> FrontExpansionReport:
    """Drive a real two-ray pencil seeded with the trace's curvature and
    compare its width growth against the delta-product prediction.

    The base ray is pinned to the solved orbit; the companion starts
    offset by an eps-wide front of curvature trace.k[0] and is shot
    through the literal dynamics, renormalized back to width ~eps after
    every flight so linearization error stays first order in eps.  If
    the companion escapes or breaks the itinerary the check retries once
    with eps/10.
    """
    p = len(orbit.records)
    # periodic orbits cycle, so any pencil length is available
    max_steps = p if orbit.kind == "segment" else 10 ** 6
    n = min(8, max_steps) if steps is None else steps
    if not 1 <= n <= max_steps:
        raise ValueError(f"steps must lie in 1..{max_steps}")
    if len(trace.delta) < n and orbit.kind == "segment":
        raise ValueError("trace too short for the requested steps")
    if not 0.0 < eps <= 1e-3:
        raise ValueError("pencil offset eps must lie in (0, 1e-3]")
    try:
        return _front_check_run(orbit, family, trace, eps, n)
    except SolveError:
        return _front_check_run(orbit, family, trace, eps / 10.0, n)


def _front_check_run(orbit, family, trace, eps, n):
    alpha = orbit.alpha
    p = len(orbit.records)
    cache = {}

    def node(j):
        key = j % p if orbit.kind == "periodic" else j
        if key not in cache:
            cache[key] = _node_data(family, orbit, key, alpha)
        return cache[key]

    def outgoing_dir(j):
        i, u, _, _, _, vt = node(j)
        _, that, nhat = _tangent_frame(family, i, u, alpha)
        return vt * that + math.sqrt(max(0.0, 1.0 - vt * vt)) * nhat

    def width(j, du, flight_dir):
        i, u, qa, _, _, _ = node(j)
        qb = partial_jet(family, i, u + du, alpha, 0, 0, checked=False)
        dq = qb - qa
        return float(-dq[0] * flight_dir[1] + dq[1] * flight_dir[0])

    _, _, _, speed0, c0, _ = node(0)
    k_seed = trace.k[0]
    delta_uvt = eps * np.array([1.0 / (speed0 * c0),
                                k_seed * c0 - orbit.records[0].kappa])

    measured_log = 0.0
    for j in range(n):
        v_out = outgoing_dir(j)
        w_cur = width(j, delta_uvt[0], v_out)
        if w_cur == 0.0:
            raise SolveError("pencil width vanished at the seed")
        ia, ua, _, _, _, vta = node(j)
        _, ub, vtb = _uvt_step(family, ia, ua + delta_uvt[0],
                               vta + delta_uvt[1], alpha, node(j + 1)[0])
        du_next = _wrap_angle(ub - node(j + 1)[1])
        w_next = width(j + 1, du_next, v_out)
        growth = w_next / w_cur
        if growth <= 0.0:
            raise SolveError("pencil folded over; offset too large")
        measured_log += math.log(growth)
        if j + 1 < n:
            vta1 = node(j + 1)[5]
            delta_uvt = (w_cur / w_next) * np.array([du_next, vtb - vta1])

    predicted_log = float(-np.log(
        trace.delta[np.arange(n) % len(trace.delta)]).sum())
    return FrontExpansionReport(math.exp(measured_log - predicted_log),
                                measured_log, predicted_log, n, eps)
