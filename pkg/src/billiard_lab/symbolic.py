"""Symbolic itineraries and orbits realizing them.

An itinerary is a word over the obstacle alphabet with consecutive
letters distinct.  The orbit realizing a word is found variationally:
reflection points are critical points of the total chain length, and
with strictly convex obstacles and the no-eclipse condition the critical
chain is the unique minimizer in its symbol class, so a damped Newton
iteration with a gradient-descent fallback converges from crude seeds.

Finite trapped-orbit pieces are produced by padding the requested word
on both sides and discarding the pads; the boundary condition at the cut
ends contaminates the core only through the stable/unstable contraction,
so the core converges exponentially in the padding depth.  A consistency
check against a deeper padding certifies the truncation error.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import ReflectionRecord
from .geometry import (DeformationFamily, GeometryError, curvature_partials,
                       partial_jet)

TOL_ORBIT = 1e-11       # convergence threshold on the sup-norm of the length gradient
TOL_SHADOW = 1e-9       # admissible core displacement under a padding increase
COND_LIMIT = 1e12       # chain Hessians worse than this are rejected for derivatives
_GD_TRIGGER = 0.5       # seed residual above which gradient descent runs first


class SolveError(RuntimeError):
    """Orbit solve failed; ``residual`` holds the final gradient sup-norm."""

    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(message)
        self.residual = residual


class ShadowingError(RuntimeError):
    """Padded-chain truncation error above tolerance."""


@dataclass(frozen=True)
class Word:
    """An itinerary: obstacle symbols, cyclic or open."""

    symbols: tuple[int, ...]
    cyclic: bool = True

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("empty word")
        if any(int(s) != s or s < 1 for s in self.symbols):
            raise ValueError("word symbols must be positive integers")

    @property
    def label(self) -> str:
        body = ",".join(str(s) for s in self.symbols)
        return body if self.cyclic else "open:" + body

    @classmethod
    def parse(cls, text: str) -> "Word":
        text = text.strip()
        cyclic = True
        if text.startswith("open:"):
            cyclic = False
            text = text[len("open:"):]
        try:
            symbols = tuple(int(p) for p in text.split(","))
        except ValueError as exc:
            raise ValueError(f"cannot parse word {text!r}") from exc
        return cls(symbols, cyclic)

    def __len__(self) -> int:
        return len(self.symbols)


def is_admissible(word: Word, z0: int) -> bool:
    """Consecutive symbols distinct (including the wrap for cyclic words).

    Symbols outside 1..z0 are a usage error and raise."""
    s = word.symbols
    if any(not 1 <= x <= z0 for x in s):
        raise ValueError(f"word {word.label} uses symbols outside 1..{z0}")
    if word.cyclic and len(s) == 1:
        return False
    pairs = zip(s, s[1:] + (s[0],)) if word.cyclic else zip(s, s[1:])
    return all(a != b for a, b in pairs)


def theta_metric(xi, eta, theta: float) -> float:
    """Symbol-space distance theta^n between two centered windows.

    Both windows must share the same odd length; n is the smallest
    offset from the center at which they disagree, and equal windows
    have distance 0.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie strictly between 0 and 1")
    a = np.asarray(xi, int)
    b = np.asarray(eta, int)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("windows must be 1-d with equal length")
    if a.shape[0] % 2 == 0:
        raise ValueError("windows must have odd length (a center entry)")
    diff = np.nonzero(a != b)[0]
    if diff.size == 0:
        return 0.0
    center = a.shape[0] // 2
    return float(theta) ** int(np.min(np.abs(diff - center)))


def sample_itinerary(z0: int, length: int, seed: int) -> Word:
    """Reproducible random admissible open word."""
    if z0 < 2:
        raise ValueError("sampling needs at least two obstacles")
    if length < 1:
        raise ValueError("length must be positive")
    rng = np.random.default_rng(seed)
    out = [int(rng.integers(1, z0 + 1))]
    for _ in range(length - 1):
        step = int(rng.integers(1, z0))
        out.append((out[-1] - 1 + step) % z0 + 1)
    return Word(tuple(out), cyclic=False)


def enumerate_cyclic_words(z0: int, max_period: int):
    """Primitive admissible cyclic words up to rotation, periods 2..max_period."""
    seen = set()
    out = []
    for period in range(2, max_period + 1):
        for tup in itertools.product(range(1, z0 + 1), repeat=period):
            if any(tup[i] == tup[(i + 1) % period] for i in range(period)):
                continue
            rots = [tup[i:] + tup[:i] for i in range(period)]
            if len(set(rots)) < period:
                continue  # non-primitive: some rotation repeats
            canon = min(rots)
            if canon in seen:
                continue
            seen.add(canon)
            out.append(Word(canon, cyclic=True))
    return out


@dataclass(frozen=True)
class ChainEval:
    length: float
    grad: np.ndarray
    hess: Optional[np.ndarray]
    g_alpha: Optional[np.ndarray]


def _node_jets(family, symbols, us, alpha, orders):
    m = len(us)
    out = {key: np.empty((m, 2)) for key in orders}
    for i in set(symbols):
        mask = np.asarray([s == i for s in symbols])
        uu = us[mask]
        for (lu, la) in orders:
            out[(lu, la)][mask] = partial_jet(family, i, uu, alpha, lu, la,
                                              checked=False)
    return out


def _edge_index(m: int, cyclic: bool):
    ia = np.arange(m if cyclic else m - 1)
    ib = (ia + 1) % m
    return ia, ib


def _chain_length(family, symbols, us, alpha, cyclic) -> float:
    jets = _node_jets(family, symbols, us, alpha, [(0, 0)])
    p = jets[(0, 0)]
    ia, ib = _edge_index(len(us), cyclic)
    return float(np.sqrt(((p[ib] - p[ia]) ** 2).sum(-1)).sum())


def _chain_system(family, symbols, us, alpha, cyclic, want_hess=True,
                  want_alpha=False) -> ChainEval:
    orders = [(0, 0), (1, 0)]
    if want_hess:
        orders.append((2, 0))
    if want_alpha:
        orders += [(0, 1), (1, 1)]
    jets = _node_jets(family, symbols, us, alpha, orders)
    m = len(us)
    p = jets[(0, 0)]
    t = jets[(1, 0)]
    ia, ib = _edge_index(m, cyclic)
    v = p[ib] - p[ia]
    d = np.sqrt((v ** 2).sum(-1))
    if np.min(d) < 1e-12:
        raise SolveError("degenerate chain: coincident reflection points")
    e = v / d[:, None]
    e_ta = np.einsum("ij,ij->i", e, t[ia])
    e_tb = np.einsum("ij,ij->i", e, t[ib])

    grad = np.zeros(m)
    np.add.at(grad, ia, -e_ta)
    np.add.at(grad, ib, e_tb)

    hess = None
    if want_hess:
        u2 = jets[(2, 0)]
        haa = ((t[ia] ** 2).sum(-1) - np.einsum("ij,ij->i", v, u2[ia])) / d \
            - e_ta ** 2 / d
        hbb = ((t[ib] ** 2).sum(-1) + np.einsum("ij,ij->i", v, u2[ib])) / d \
            - e_tb ** 2 / d
        hab = -np.einsum("ij,ij->i", t[ia], t[ib]) / d + e_ta * e_tb / d
        hess = np.zeros((m, m))
        np.add.at(hess, (ia, ia), haa)
        np.add.at(hess, (ib, ib), hbb)
        np.add.at(hess, (ia, ib), hab)
        np.add.at(hess, (ib, ia), hab)

    g_alpha = None
    if want_alpha:
        pa = jets[(0, 1)]
        ta = jets[(1, 1)]
        va = pa[ib] - pa[ia]
        e_va = np.einsum("ij,ij->i", e, va)
        ga_a = (-np.einsum("ij,ij->i", va, t[ia])
                - np.einsum("ij,ij->i", v, ta[ia])) / d + e_ta * e_va / d
        ga_b = (np.einsum("ij,ij->i", va, t[ib])
                + np.einsum("ij,ij->i", v, ta[ib])) / d - e_tb * e_va / d
        g_alpha = np.zeros(m)
        np.add.at(g_alpha, ia, ga_a)
        np.add.at(g_alpha, ib, ga_b)

    return ChainEval(float(d.sum()), grad, hess, g_alpha)


def _seed_chain(family, symbols, alpha, cyclic) -> np.ndarray:
    """Aim each reflection point at the midpoint of its neighbors' centers."""
    from .geometry import _poly_eval

    m = len(symbols)
    centers = {}
    for i in set(symbols):
        spec = family.spec(i)
        centers[i] = np.array([float(_poly_eval(spec.center_x, alpha)),
                               float(_poly_eval(spec.center_y, alpha))])
    us = np.empty(m)
    for j, s in enumerate(symbols):
        nbrs = []
        if cyclic or j > 0:
            nbrs.append(symbols[(j - 1) % m])
        if cyclic or j < m - 1:
            nbrs.append(symbols[(j + 1) % m])
        target = np.mean([centers[n] for n in nbrs], axis=0)
        w = target - centers[s]
        spec = family.spec(s)
        a, b, psi = spec.axes()
        psiv = float(_poly_eval(psi, alpha))
        cp, sp = math.cos(psiv), math.sin(psiv)
        wx = cp * w[0] + sp * w[1]
        wy = -sp * w[0] + cp * w[1]
        us[j] = math.atan2(float(_poly_eval(b, alpha)) * wy,
                           float(_poly_eval(a, alpha)) * wx)
    return us


def _solve_chain(family, symbols, us0, alpha, cyclic, tol):
    us = np.array(us0, float)
    ev = _chain_system(family, symbols, us, alpha, cyclic)
    ginf = float(np.abs(ev.grad).max())

    # crude seeds first descend the length directly
    it = 0
    while ginf > _GD_TRIGGER and it < 200:
        it += 1
        gsq = float(ev.grad @ ev.grad)
        eta = 1.0 / (1.0 + ginf)
        stepped = False
        while eta > 1e-14:
            cand = us - eta * ev.grad
            if _chain_length(family, symbols, cand, alpha, cyclic) \
                    < ev.length - 1e-4 * eta * gsq:
                us = cand
                ev = _chain_system(family, symbols, us, alpha, cyclic)
                ginf = float(np.abs(ev.grad).max())
                stepped = True
                break
            eta *= 0.5
        if not stepped:
            break

    mu = 0.0
    for _ in range(80):
        if ginf <= tol:
            return us, ginf
        accepted = False
        for _ in range(15):
            try:
                step = np.linalg.solve(
                    ev.hess + mu * np.eye(len(us)), -ev.grad)
            except np.linalg.LinAlgError:
                mu = 1e-8 if mu == 0.0 else mu * 10.0
                continue
            cand = us + step
            ev_new = _chain_system(family, symbols, cand, alpha, cyclic)
            ginf_new = float(np.abs(ev_new.grad).max())
            if ginf_new < ginf or ginf_new <= tol:
                us, ev, ginf = cand, ev_new, ginf_new
                mu = 0.0 if mu < 1e-13 else mu * 0.25
                accepted = True
                break
            mu = 1e-8 if mu == 0.0 else mu * 10.0
        if not accepted:
            raise SolveError(
                f"chain iteration stalled at residual {ginf:.3e}", ginf)
    if ginf <= tol:
        return us, ginf
    raise SolveError(f"chain iteration did not converge: residual {ginf:.3e}", ginf)


@dataclass(frozen=True)
class BilliardOrbit:
    """A solved orbit piece.

    ``records`` covers the core reflections only; ``chain_symbols`` and
    ``chain_us`` keep the full solved chain (pads included) for warm
    restarts and implicit differentiation.  ``kind`` is "periodic" or
    "segment"; ``shadow_gap`` is the measured core displacement under a
    deeper padding (segments only, nan when the check was skipped).
    """

    word: Word
    alpha: float
    records: tuple[ReflectionRecord, ...]
    residual: float
    kind: str
    chain_symbols: tuple[int, ...]
    chain_us: tuple[float, ...]
    core_start: int
    shadow_gap: float = math.nan

    @property
    def period(self) -> int:
        return len(self.records)

    def core_us(self) -> np.ndarray:
        return np.asarray(
            self.chain_us[self.core_start:self.core_start + len(self.records)])


def _build_records(family, symbols, us, alpha, core_start, core_len, cyclic):
    jets = _node_jets(family, symbols, us, alpha, [(0, 0), (1, 0), (2, 0)])
    p = jets[(0, 0)]
    t = jets[(1, 0)]
    v2 = jets[(2, 0)]
    speed = np.sqrt((t ** 2).sum(-1))
    n = np.stack([t[:, 1], -t[:, 0]], axis=-1) / speed[:, None]
    kappa = (t[:, 0] * v2[:, 1] - t[:, 1] * v2[:, 0]) / speed ** 3
    m = len(us)
    idxs = np.arange(core_start, core_start + core_len)
    succs = (idxs + 1) % m
    if not cyclic and np.any(succs == 0):
        raise SolveError("chain node without successor; cannot build records")
    v = p[succs] - p[idxs]
    d = np.sqrt((v ** 2).sum(-1))
    e = v / d[:, None]
    c_out = np.einsum("ij,ij->i", e, n[idxs])
    c_in = np.einsum("ij,ij->i", e, n[succs])
    if np.min(c_out) <= 1e-9 or np.max(c_in) >= -1e-9:
        raise SolveError("chain converged to a nonphysical configuration "
                         "(a tangent or penetrating edge)")
    cum = np.concatenate([[0.0], np.cumsum(d[:-1])])
    return tuple(
        ReflectionRecord(symbols[idx], float(us[idx]) % (2.0 * math.pi),
                         (float(p[idx][0]), float(p[idx][1])), float(cum[j]),
                         float(d[j]), math.acos(min(1.0, float(c_out[j]))),
                         float(kappa[idx]))
        for j, idx in enumerate(idxs))


def find_periodic_orbit(word: Word, family: DeformationFamily, alpha: float,
                        init=None, tol: float = TOL_ORBIT) -> BilliardOrbit:
    """Periodic orbit with the prescribed cyclic itinerary."""
    if not word.cyclic:
        raise ValueError("find_periodic_orbit needs a cyclic word")
    if not is_admissible(word, family.z0):
        raise ValueError(f"word {word.label} is not admissible")
    family.check_alpha(alpha)
    symbols = word.symbols
    us0 = np.asarray(init, float) if init is not None \
        else _seed_chain(family, symbols, alpha, cyclic=True)
    if len(us0) != len(symbols):
        raise ValueError("init length must match the word length")
    us, residual = _solve_chain(family, symbols, us0, alpha, True, tol)
    records = _build_records(family, symbols, us, alpha, 0, len(symbols), True)
    return BilliardOrbit(word, alpha, records, residual, "periodic",
                         symbols, tuple(us), 0)


def _pad_symbols(symbols, padding):
    left = list(symbols)
    for _ in range(padding):
        left.insert(0, 1 if left[0] != 1 else 2)
        left.append(1 if left[-1] != 1 else 2)
    return tuple(left)


def _segment_solve(word, family, alpha, padding, init, tol):
    symbols = _pad_symbols(word.symbols, padding)
    if init is not None:
        us0 = np.asarray(init, float)
        if len(us0) != len(symbols):
            raise ValueError("init length must match the padded chain length")
    else:
        us0 = _seed_chain(family, symbols, alpha, cyclic=False)
    us, residual = _solve_chain(family, symbols, us0, alpha, False, tol)
    return symbols, us, residual


def find_orbit_segment(word: Word, family: DeformationFamily, alpha: float,
                       padding: int = 12, init=None, tol: float = TOL_ORBIT,
                       shadow_check: bool = True) -> BilliardOrbit:
    """Trapped-orbit piece realizing an open word.

    The word is padded on both sides, the open chain is solved, and only
    the core reflections are reported.  With ``shadow_check`` (and
    padding of at least 8) the chain is re-solved 4 symbols deeper and
    the deeper core is returned; the displacement between the two cores
    must stay below TOL_SHADOW, which certifies the truncation error.
    """
    if word.cyclic:
        raise ValueError("find_orbit_segment needs an open word")
    if not is_admissible(word, family.z0):
        raise ValueError(f"word {word.label} is not admissible")
    if padding < 1:
        raise ValueError("padding must be at least 1")
    family.check_alpha(alpha)
    m = len(word.symbols)

    symbols, us, residual = _segment_solve(word, family, alpha, padding, init, tol)
    gap = math.nan
    core_start = padding
    if shadow_check and padding >= 8:
        deeper = padding + 4
        outer_seed = _seed_chain(family, _pad_symbols(word.symbols, deeper),
                                 alpha, cyclic=False)
        seed = np.concatenate([outer_seed[:4], us, outer_seed[-4:]])
        symbols2, us2, residual2 = _segment_solve(word, family, alpha, deeper,
                                                  seed, tol)
        jets_a = _node_jets(family, symbols[padding:padding + m],
                            us[padding:padding + m], alpha, [(0, 0)])
        jets_b = _node_jets(family, symbols2[deeper:deeper + m],
                            us2[deeper:deeper + m], alpha, [(0, 0)])
        gap = float(np.sqrt(
            ((jets_a[(0, 0)] - jets_b[(0, 0)]) ** 2).sum(-1)).max())
        if gap > TOL_SHADOW:
            raise ShadowingError(
                f"core moved {gap:.3e} under deeper padding (tolerance "
                f"{TOL_SHADOW:.1e}); word {word.label} at alpha = {alpha}")
        symbols, us, residual = symbols2, us2, residual2
        core_start = deeper
    records = _build_records(family, symbols, us, alpha, core_start, m, False)
    return BilliardOrbit(word, alpha, records, residual, "segment",
                         symbols, tuple(us), core_start, gap)


@dataclass(frozen=True)
class AlphaDerivatives:
    """First alpha-derivatives along an orbit core, from the implicit
    function theorem on the chain equations.

    Per core reflection j: boundary parameter velocity u_dot, flight
    length derivative d_dot (flight j -> j+1), curvature derivative
    kappa_dot, derivative of cos(phi), and the forcing
    g_dot = d/dalpha [2 kappa / cos phi].  ``cond`` is the chain Hessian
    condition number.
    """

    u_dot: np.ndarray
    d_dot: np.ndarray
    kappa_dot: np.ndarray
    cosphi_dot: np.ndarray
    g_dot: np.ndarray
    cond: float


def orbit_alpha_derivatives(orbit: BilliardOrbit,
                            family: DeformationFamily) -> AlphaDerivatives:
    symbols = orbit.chain_symbols
    us = np.asarray(orbit.chain_us)
    alpha = orbit.alpha
    cyclic = orbit.kind == "periodic"
    ev = _chain_system(family, symbols, us, alpha, cyclic,
                       want_hess=True, want_alpha=True)
    cond = float(np.linalg.cond(ev.hess))
    if not cond < COND_LIMIT:
        raise SolveError(
            f"chain Hessian condition number {cond:.3e} exceeds {COND_LIMIT:.1e}; "
            "implicit derivative rejected", orbit.residual)
    udot_full = np.linalg.solve(ev.hess, -ev.g_alpha)

    jets = _node_jets(family, symbols, us, alpha,
                      [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1)])
    p, t, u2, pa, ta = (jets[k] for k in
                        [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1)])
    speed = np.sqrt((t ** 2).sum(-1))
    n = np.stack([t[:, 1], -t[:, 0]], axis=-1) / speed[:, None]
    qdot = t * udot_full[:, None] + pa
    tdot = u2 * udot_full[:, None] + ta
    # unit-normal derivative: rotate T-dot, remove the speed variation
    rot_td = np.stack([tdot[:, 1], -tdot[:, 0]], axis=-1)
    t_tdot = np.einsum("ij,ij->i", t, tdot)
    ndot = rot_td / speed[:, None] \
        - np.stack([t[:, 1], -t[:, 0]], axis=-1) * (t_tdot / speed ** 3)[:, None]

    m_chain = len(us)
    core = range(orbit.core_start, orbit.core_start + len(orbit.records))
    u_dot, d_dot, k_dot, c_dot, g_dot = [], [], [], [], []
    for idx in core:
        succ = (idx + 1) % m_chain
        v = p[succ] - p[idx]
        d = float(np.sqrt(v @ v))
        e = v / d
        dd = float(e @ (qdot[succ] - qdot[idx]))
        edot = (qdot[succ] - qdot[idx]) / d - e * (dd / d)
        kap, kap_u, kap_a = curvature_partials(family, symbols[idx], us[idx], alpha)
        kd = float(kap_u * udot_full[idx] + kap_a)
        cphi = float(e @ n[idx])
        cd = float(ndot[idx] @ e) + float(n[idx] @ edot)
        gd = 2.0 * kd / cphi - 2.0 * float(kap) * cd / cphi ** 2
        u_dot.append(float(udot_full[idx]))
        d_dot.append(dd)
        k_dot.append(kd)
        c_dot.append(cd)
        g_dot.append(gd)
    return AlphaDerivatives(np.array(u_dot), np.array(d_dot), np.array(k_dot),
                            np.array(c_dot), np.array(g_dot), cond)
