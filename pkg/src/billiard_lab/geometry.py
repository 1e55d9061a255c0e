"""Deformable planar obstacle tables.

Strictly convex obstacles (circles and ellipses) whose defining
parameters are polynomials in the deformation parameter alpha.  Every
mixed (u, alpha)-derivative of a boundary embedding has a closed form,
obtained through a small complex-polynomial calculus, so the geometric
core never differentiates numerically.

Boundaries are parametrized counterclockwise by the angle u in
[0, 2*pi).  Obstacle indices are 1-based throughout the public API,
matching itinerary symbols.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

KAPPA_FLOOR = 1e-6        # minimum admissible boundary curvature
ALPHA_SLACK_REL = 1e-3    # evaluation headroom beyond [0, b], needed by FD oracles
PHI_SAFETY = 0.99         # safety factor applied to the observed min cos(phi)
PHI_PERIOD_CAP = 6        # periodic itineraries enumerated up to this period
PHI_SAMPLE_WORDS = 100    # random itineraries drawn for the angle estimate
PHI_SAMPLE_LENGTH = 40


class GeometryError(ValueError):
    """Invalid table geometry or invalid geometric query."""


class SmoothnessError(GeometryError):
    """Jet order above the declared smoothness."""


class AlphaRangeError(GeometryError):
    """Deformation parameter outside the declared range."""


class ConvexityError(GeometryError):
    """Strict convexity violated somewhere on a boundary."""


class EclipseError(GeometryError):
    """The no-eclipse condition failed; carries the failing certificate."""

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


def _coeffs(value) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),)
    out = tuple(float(v) for v in value)
    return out if out else (0.0,)


def _poly_der(c: np.ndarray, n: int = 1) -> np.ndarray:
    c = np.asarray(c)
    for _ in range(n):
        if c.shape[0] <= 1:
            return np.zeros(1, dtype=c.dtype)
        c = c[1:] * np.arange(1, c.shape[0])
    return c


def _poly_eval(c, x):
    return np.polynomial.polynomial.polyval(x, np.asarray(c))


@dataclass(frozen=True)
class ObstacleSpec:
    """One strictly convex obstacle.

    Every parameter is a polynomial in alpha given by its coefficient
    tuple, lowest order first.  Circles take ``radius``; ellipses take
    ``semi_axis_a``, ``semi_axis_b`` and optionally ``rotation``.
    """

    kind: str
    center_x: tuple[float, ...]
    center_y: tuple[float, ...]
    radius: tuple[float, ...] = ()
    semi_axis_a: tuple[float, ...] = ()
    semi_axis_b: tuple[float, ...] = ()
    rotation: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if self.kind not in ("circle", "ellipse"):
            raise GeometryError(f"unknown obstacle kind {self.kind!r}")
        if self.kind == "circle" and not self.radius:
            raise GeometryError("circle obstacle needs a radius polynomial")
        if self.kind == "ellipse" and not (self.semi_axis_a and self.semi_axis_b):
            raise GeometryError("ellipse obstacle needs both semi-axis polynomials")

    def axes(self):
        """Coefficient tuples (A, B, psi); circles degenerate to A = B = radius."""
        if self.kind == "circle":
            return self.radius, self.radius, (0.0,)
        return self.semi_axis_a, self.semi_axis_b, self.rotation

    def max_degree(self) -> int:
        polys = [self.center_x, self.center_y, self.radius,
                 self.semi_axis_a, self.semi_axis_b, self.rotation]
        return max(len(p) - 1 for p in polys if p)


def circle(center_x, center_y, radius) -> ObstacleSpec:
    return ObstacleSpec("circle", _coeffs(center_x), _coeffs(center_y),
                        radius=_coeffs(radius))


def ellipse(center_x, center_y, semi_axis_a, semi_axis_b, rotation=0.0) -> ObstacleSpec:
    return ObstacleSpec("ellipse", _coeffs(center_x), _coeffs(center_y),
                        semi_axis_a=_coeffs(semi_axis_a),
                        semi_axis_b=_coeffs(semi_axis_b),
                        rotation=_coeffs(rotation))


@dataclass(frozen=True)
class DeformationFamily:
    """A one-parameter table K(alpha), alpha in [0, alpha_max].

    ``smoothness`` is the declared (r, r') differentiability contract:
    jets are served up to r in u and r' in alpha and refused beyond.
    ``mode`` is "general" (at least three obstacles, no-eclipse must be
    certified) or "period2" (exactly two obstacles; the trapped set is
    the single orbit bouncing along the common perpendicular).
    """

    obstacles: tuple[ObstacleSpec, ...]
    alpha_max: float
    smoothness: tuple[int, int] = (5, 3)
    mode: str = "general"

    def __post_init__(self):
        if self.mode not in ("general", "period2"):
            raise GeometryError(f"unknown mode {self.mode!r}")
        n = len(self.obstacles)
        if self.mode == "period2" and n != 2:
            raise GeometryError("period2 mode requires exactly 2 obstacles")
        if self.mode == "general" and n < 3:
            raise GeometryError("general mode requires at least 3 obstacles")
        if not self.alpha_max > 0:
            raise GeometryError("alpha_max must be positive")
        r, rp = self.smoothness
        if r < 2 or rp < 0:
            raise GeometryError("declared smoothness must satisfy r >= 2, r' >= 0")

    @property
    def z0(self) -> int:
        return len(self.obstacles)

    def spec(self, index: int) -> ObstacleSpec:
        if not 1 <= index <= len(self.obstacles):
            raise GeometryError(
                f"obstacle index {index} outside 1..{len(self.obstacles)}")
        return self.obstacles[index - 1]

    def check_alpha(self, alpha: float) -> None:
        slack = ALPHA_SLACK_REL * max(self.alpha_max, 1.0)
        if not -slack <= alpha <= self.alpha_max + slack:
            raise AlphaRangeError(
                f"alpha = {alpha} outside the declared range [0, {self.alpha_max}]")


@lru_cache(maxsize=None)
def _axis_polys(spec: ObstacleSpec, dalpha_order: int):
    """Complex alpha-polynomials P, Q with

        d^n/da^n [e^{i psi}(A cos u + i B sin u)] = e^{i psi}(P cos u + i Q sin u),

    obtained from the recursion P_{n+1} = P_n' + i psi' P_n (and likewise Q)."""
    a, b, psi = spec.axes()
    psip = _poly_der(np.asarray(psi, float))
    p = np.asarray(a, complex)
    q = np.asarray(b, complex)
    for _ in range(dalpha_order):
        p = _rot_step(p, psip)
        q = _rot_step(q, psip)
    return p, q


def _rot_step(c: np.ndarray, psip: np.ndarray) -> np.ndarray:
    der = _poly_der(c)
    mix = 1j * np.convolve(psip, c)
    out = np.zeros(max(len(der), len(mix)), complex)
    out[:len(der)] += der
    out[:len(mix)] += mix
    return out


def partial_jet(family: DeformationFamily, obstacle_index: int, u, alpha: float,
                du_order: int, dalpha_order: int, *, checked: bool = True) -> np.ndarray:
    """One mixed partial d^l_u d^m_alpha of the boundary embedding.

    Returns an array of shape u.shape + (2,).  Orders above the declared
    smoothness and alpha outside the declared range are refused.
    """
    if checked:
        family.check_alpha(alpha)
        r, rp = family.smoothness
        if du_order < 0 or dalpha_order < 0:
            raise GeometryError("jet orders must be nonnegative")
        if du_order > r or dalpha_order > rp:
            raise SmoothnessError(
                f"jet order ({du_order},{dalpha_order}) exceeds the declared "
                f"smoothness C^({r},{rp})")
    spec = family.spec(obstacle_index)
    p, q = _axis_polys(spec, dalpha_order)
    pv = _poly_eval(p, alpha)
    qv = _poly_eval(q, alpha)
    _, _, psi = spec.axes()
    phase = np.exp(1j * _poly_eval(psi, alpha))
    uu = np.asarray(u, float)
    shift = uu + du_order * (np.pi / 2.0)
    z = phase * (pv * np.cos(shift) + 1j * qv * np.sin(shift))
    if du_order == 0:
        cx = _poly_eval(_poly_der(np.asarray(spec.center_x, float), dalpha_order), alpha)
        cy = _poly_eval(_poly_der(np.asarray(spec.center_y, float), dalpha_order), alpha)
        z = z + (cx + 1j * cy)
    return np.stack([np.real(z), np.imag(z)], axis=-1)


def eval_jet(family: DeformationFamily, obstacle_index: int, u, alpha: float,
             max_u_order: int, max_alpha_order: int) -> np.ndarray:
    """All mixed partials up to the requested orders.

    ``out[l, m]`` is d^l_u d^m_alpha phi, so the full result has shape
    (max_u_order + 1, max_alpha_order + 1) + u.shape + (2,).
    """
    family.check_alpha(alpha)
    r, rp = family.smoothness
    if max_u_order < 0 or max_alpha_order < 0:
        raise GeometryError("jet orders must be nonnegative")
    if max_u_order > r or max_alpha_order > rp:
        raise SmoothnessError(
            f"jet order ({max_u_order},{max_alpha_order}) exceeds the declared "
            f"smoothness C^({r},{rp})")
    uu = np.asarray(u, float)
    out = np.empty((max_u_order + 1, max_alpha_order + 1) + uu.shape + (2,))
    for l in range(max_u_order + 1):
        for m in range(max_alpha_order + 1):
            out[l, m] = partial_jet(family, obstacle_index, uu, alpha, l, m,
                                    checked=False)
    return out


def curvature(family: DeformationFamily, obstacle_index: int, u, alpha: float):
    """Signed curvature (x' y'' - y' x'') / |phi'|^3; must be positive."""
    t = partial_jet(family, obstacle_index, u, alpha, 1, 0)
    s = partial_jet(family, obstacle_index, u, alpha, 2, 0)
    num = t[..., 0] * s[..., 1] - t[..., 1] * s[..., 0]
    speed2 = t[..., 0] ** 2 + t[..., 1] ** 2
    kap = num / speed2 ** 1.5
    if np.min(kap) <= 0.0:
        raise ConvexityError(
            f"obstacle {obstacle_index} is not strictly convex at alpha = {alpha}")
    return float(kap) if np.ndim(kap) == 0 else kap


def curvature_partials(family: DeformationFamily, obstacle_index: int, u, alpha: float):
    """(kappa, d kappa/du, d kappa/dalpha) at fixed u; closed forms from jets."""
    t = partial_jet(family, obstacle_index, u, alpha, 1, 0)
    s = partial_jet(family, obstacle_index, u, alpha, 2, 0)
    w = partial_jet(family, obstacle_index, u, alpha, 3, 0)
    ta = partial_jet(family, obstacle_index, u, alpha, 1, 1)
    sa = partial_jet(family, obstacle_index, u, alpha, 2, 1)
    num = t[..., 0] * s[..., 1] - t[..., 1] * s[..., 0]
    sp2 = t[..., 0] ** 2 + t[..., 1] ** 2
    sp = np.sqrt(sp2)
    den = sp2 * sp
    # cross terms x'' y'' cancel in d(num)/du
    num_u = t[..., 0] * w[..., 1] - t[..., 1] * w[..., 0]
    den_u = 3.0 * sp * (t[..., 0] * s[..., 0] + t[..., 1] * s[..., 1])
    num_a = (ta[..., 0] * s[..., 1] + t[..., 0] * sa[..., 1]
             - ta[..., 1] * s[..., 0] - t[..., 1] * sa[..., 0])
    den_a = 3.0 * sp * (t[..., 0] * ta[..., 0] + t[..., 1] * ta[..., 1])
    kap = num / den
    kap_u = (num_u * den - num * den_u) / den ** 2
    kap_a = (num_a * den - num * den_a) / den ** 2
    return kap, kap_u, kap_a


def outward_normal(family: DeformationFamily, obstacle_index: int, u, alpha: float):
    """Unit outward normal: the tangent rotated by -pi/2, normalized."""
    t = partial_jet(family, obstacle_index, u, alpha, 1, 0)
    speed = np.sqrt(t[..., 0] ** 2 + t[..., 1] ** 2)
    if np.min(speed) < 1e-12:
        raise GeometryError(
            f"degenerate tangent on obstacle {obstacle_index} at alpha = {alpha}")
    return np.stack([t[..., 1], -t[..., 0]], axis=-1) / speed[..., None]


def perimeter(family: DeformationFamily, obstacle_index: int, alpha: float) -> float:
    family.check_alpha(alpha)

    def speed(u):
        t = partial_jet(family, obstacle_index, u, alpha, 1, 0, checked=False)
        return math.hypot(t[0], t[1])

    val, _ = integrate.quad(speed, 0.0, 2.0 * np.pi, epsabs=0.0, epsrel=1e-12,
                            limit=200)
    return val


def _boundary_points(family, index, alpha, n):
    us = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return us, partial_jet(family, index, us, alpha, 0, 0, checked=False)


def boundary_pair_extremes(family: DeformationFamily, i: int, k: int, alpha: float,
                           n_samples: int = 512):
    """(min, max) distance between the boundaries of obstacles i and k.

    Seeded on a sample grid and polished with a quasi-Newton step on the
    squared distance; the extremes are smooth for disjoint strictly
    convex boundaries, so the polish is quadratic.
    """
    family.check_alpha(alpha)
    us_i, pi = _boundary_points(family, i, alpha, n_samples)
    us_k, pk = _boundary_points(family, k, alpha, n_samples)
    diff = pi[:, None, :] - pk[None, :, :]
    d2 = (diff ** 2).sum(-1)

    def polish(seed, sign):
        def fun(x):
            a = partial_jet(family, i, x[0], alpha, 0, 0, checked=False)
            b = partial_jet(family, k, x[1], alpha, 0, 0, checked=False)
            ta = partial_jet(family, i, x[0], alpha, 1, 0, checked=False)
            tb = partial_jet(family, k, x[1], alpha, 1, 0, checked=False)
            v = a - b
            val = float(v @ v)
            grad = 2.0 * np.array([v @ ta, -(v @ tb)])
            return sign * val, sign * grad

        res = optimize.minimize(fun, seed, jac=True, method="BFGS",
                                options={"gtol": 1e-13, "maxiter": 200})
        return math.sqrt(abs(sign * res.fun))

    lo_seed = np.unravel_index(np.argmin(d2), d2.shape)
    hi_seed = np.unravel_index(np.argmax(d2), d2.shape)
    dmin = polish(np.array([us_i[lo_seed[0]], us_k[lo_seed[1]]]), 1.0)
    dmax = polish(np.array([us_i[hi_seed[0]], us_k[hi_seed[1]]]), -1.0)
    return dmin, dmax


@dataclass(frozen=True)
class EclipseCertificate:
    """Sampled certificate for the no-eclipse condition at one alpha.

    ``margin`` is the worst clearance observed between any sampled
    cross segment and the obstacle it might shadow (conservatively
    scaled for ellipses).  ``witness`` on failure is (i, j, k,
    (u_i, u_k)): the segment between the sampled boundary points of
    obstacles i and k that got too close to obstacle j.
    """

    holds: bool
    alpha: float
    n_samples: int
    margin: float
    witness: Optional[tuple] = None


def _norm_transform(spec: ObstacleSpec, alpha: float):
    a, b, psi = spec.axes()
    av = float(_poly_eval(a, alpha))
    bv = float(_poly_eval(b, alpha))
    psiv = float(_poly_eval(psi, alpha))
    c = np.array([float(_poly_eval(spec.center_x, alpha)),
                  float(_poly_eval(spec.center_y, alpha))])
    cp, sp = math.cos(psiv), math.sin(psiv)
    rot = np.array([[cp, sp], [-sp, cp]])          # rotation by -psi
    scale = np.array([1.0 / av, 1.0 / bv])
    return c, rot, scale, min(av, bv)


def check_no_eclipse(family: DeformationFamily, alpha: float, n_samples: int = 256,
                     margin: float = 0.0) -> EclipseCertificate:
    """Sampled no-eclipse certificate.

    For every ordered triple the segments between sampled points of the
    outer pair must keep distance > margin from the middle obstacle.
    The middle obstacle is mapped to its normalized frame where it is
    the unit disc; the clearance bound there is exact for circles and
    conservative for ellipses, so a certified pass never overstates the
    clearance.
    """
    family.check_alpha(alpha)
    if n_samples < 64:
        raise GeometryError("n_samples must be at least 64")
    if margin < 0.0:
        raise GeometryError("margin must be nonnegative")
    z0 = family.z0
    if z0 < 3:
        return EclipseCertificate(True, alpha, n_samples, math.inf)

    us = {}
    pts = {}
    for i in range(1, z0 + 1):
        us[i], pts[i] = _boundary_points(family, i, alpha, n_samples)

    best_clear = math.inf
    for j in range(1, z0 + 1):
        c, rot, scale, ell_scale = _norm_transform(family.spec(j), alpha)
        mapped = {i: ((pts[i] - c) @ rot.T) * scale for i in range(1, z0 + 1) if i != j}
        for i in range(1, z0 + 1):
            for k in range(i + 1, z0 + 1):
                if j in (i, k):
                    continue
                a = mapped[i][:, None, :]
                b = mapped[k][None, :, :]
                seg = b - a
                denom = (seg ** 2).sum(-1)
                tpar = np.clip(-(a * seg).sum(-1) / denom, 0.0, 1.0)
                closest = a + tpar[..., None] * seg
                clearance = np.sqrt((closest ** 2).sum(-1)) - 1.0
                worst = np.unravel_index(np.argmin(clearance), clearance.shape)
                clear = clearance[worst] * ell_scale
                best_clear = min(best_clear, clear)
                if clear <= margin:
                    witness = (i, j, k, (float(us[i][worst[0]]),
                                         float(us[k][worst[1]])))
                    return EclipseCertificate(False, alpha, n_samples,
                                              clear, witness)
    return EclipseCertificate(True, alpha, n_samples, best_clear)


@dataclass(frozen=True)
class TableBounds:
    """Global geometric bounds of the table at one alpha.

    k_min and k_max bound the propagated front curvature on the trapped
    set: k_min = 2 kappa_min, k_max = 1/d_min + 2 kappa_max / cos(phi_max).
    """

    d_min: float
    d_max: float
    kappa_min: float
    kappa_max: float
    phi_max: float
    k_min: float
    k_max: float
    alpha: float = 0.0


def _default_phi_observation(family: DeformationFamily, alpha: float) -> float:
    # orbit machinery lives above geometry; import late to keep layering simple
    from . import symbolic

    best = 0.0
    solved = 0
    for word in symbolic.enumerate_cyclic_words(family.z0, PHI_PERIOD_CAP):
        try:
            orbit = symbolic.find_periodic_orbit(word, family, alpha)
        except symbolic.SolveError:
            continue
        solved += 1
        best = max(best, max(r.phi for r in orbit.records))
    for s in range(PHI_SAMPLE_WORDS):
        word = symbolic.sample_itinerary(family.z0, PHI_SAMPLE_LENGTH, seed=s)
        try:
            orbit = symbolic.find_orbit_segment(word, family, alpha, padding=8,
                                                shadow_check=False)
        except symbolic.SolveError:
            continue
        solved += 1
        best = max(best, max(r.phi for r in orbit.records))
    if solved == 0:
        raise GeometryError("collision angle estimate failed: no orbit converged")
    return best


def phi_max_from_observation(phi_obs: float) -> float:
    """Inflate an observed maximal collision angle into the reported bound.

    The safety factor shrinks the observed min cosine, which is the
    quantity the k_max formula divides by."""
    if phi_obs >= math.pi / 2 - 1e-6:
        raise GeometryError(
            f"observed collision angle {phi_obs:.6f} reaches pi/2; table rejected")
    return math.acos(PHI_SAFETY * math.cos(phi_obs))


def table_bounds(family: DeformationFamily, alpha: float, n_samples: int = 512,
                 phi_max_override: Optional[float] = None, *,
                 eclipse_samples: int = 128, margin: float = 0.0,
                 phi_observer: Optional[Callable] = None) -> TableBounds:
    """Assemble the global bounds d_min, d_max, kappa range, phi_max, k range.

    d_min is the minimum boundary-to-boundary distance over obstacle
    pairs.  d_max bounds the flight length between reflections: the
    supremum of boundary-point distances in general mode, and exactly
    the axis-orbit distance (= d_min) in period2 mode, where that orbit
    is the whole trapped set.  phi_max comes from the override if given,
    is exactly 0 in period2 mode, and otherwise is estimated from
    periodic orbits of low period plus sampled itineraries, with a
    safety factor on the cosine.
    """
    family.check_alpha(alpha)
    cert = check_no_eclipse(family, alpha, max(eclipse_samples, 64), margin)
    if not cert.holds:
        raise EclipseError(
            f"no-eclipse condition fails at alpha = {alpha}: witness {cert.witness}",
            cert)

    mins, maxes = [], []
    for i in range(1, family.z0 + 1):
        for k in range(i + 1, family.z0 + 1):
            lo, hi = boundary_pair_extremes(family, i, k, alpha, n_samples)
            mins.append(lo)
            maxes.append(hi)
    d_min = min(mins)
    d_max = d_min if family.mode == "period2" else max(maxes)

    us = np.linspace(0.0, 2.0 * np.pi, n_samples, endpoint=False)
    kap_lo = math.inf
    kap_hi = -math.inf
    for i in range(1, family.z0 + 1):
        kap = curvature(family, i, us, alpha)
        kap_lo = min(kap_lo, float(np.min(kap)))
        kap_hi = max(kap_hi, float(np.max(kap)))

    if phi_max_override is not None:
        phi_max = float(phi_max_override)
    elif family.mode == "period2":
        phi_max = 0.0
    else:
        observe = phi_observer or _default_phi_observation
        phi_max = phi_max_from_observation(observe(family, alpha))
    if phi_max >= math.pi / 2:
        raise GeometryError(f"phi_max = {phi_max:.6f} >= pi/2; k_max undefined")

    k_min = 2.0 * kap_lo
    k_max = 1.0 / d_min + 2.0 * kap_hi / math.cos(phi_max)
    return TableBounds(d_min, d_max, kap_lo, kap_hi, phi_max, k_min, k_max, alpha)


def validate_family(family: DeformationFamily, n_alpha: int = 65, n_u: int = 512,
                    eclipse_samples: int = 128, margin: float = 0.0) -> None:
    """Convexity, positivity and the no-eclipse condition over a validation grid.

    Raises ConvexityError / EclipseError / GeometryError on the first
    failure; returns None when the family is admissible.
    """
    r, rp = family.smoothness
    for idx, spec in enumerate(family.obstacles, start=1):
        deg = spec.max_degree()
        if deg > rp:
            raise SmoothnessError(
                f"obstacle {idx}: polynomial degree {deg} exceeds declared "
                f"alpha-smoothness r' = {rp}")
    alphas = np.linspace(0.0, family.alpha_max, n_alpha)
    us = np.linspace(0.0, 2.0 * np.pi, n_u, endpoint=False)
    for a in alphas:
        for idx, spec in enumerate(family.obstacles, start=1):
            ax, bx, _ = spec.axes()
            if _poly_eval(ax, a) <= 0.0 or _poly_eval(bx, a) <= 0.0:
                raise GeometryError(
                    f"obstacle {idx} degenerates (nonpositive axis) at alpha = {a}")
            kap = curvature(family, idx, us, a)
            if float(np.min(kap)) < KAPPA_FLOOR:
                raise ConvexityError(
                    f"obstacle {idx} curvature {float(np.min(kap)):.3e} below "
                    f"floor {KAPPA_FLOOR} at alpha = {a}")
        if family.mode == "general":
            cert = check_no_eclipse(family, a, eclipse_samples, margin)
            if not cert.holds:
                raise EclipseError(
                    f"no-eclipse condition fails at alpha = {a}: "
                    f"witness {cert.witness}", cert)
