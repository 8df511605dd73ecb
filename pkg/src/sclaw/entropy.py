"""Entropy production of trajectories and analytic profiles.

Three faces of the same object, kept deliberately independent so they can
cross-check each other:

  * weak-form production of a stored trajectory against a test function
    (``entropy_production_weak``) or an entropy sampler
    (``sampled_production``);
  * the exact production measure of a piecewise-smooth profile
    (``rho_of_profile``): on each shock the chord-defect density

        r(v, t) = s(t) [ f(v) - f(u-) - sigma (v - u-) ],
        s = -1 if u- < u+,  s = +1 if u- > u+,

    for v between the states and zero elsewhere; the sign convention is
    pinned by the jump-formula oracle sigma [eta] - [q] (brackets = left
    minus right), against which it is verified in the test suite;
  * the second-order cost ``h_functional``: time integral over shocks of
    int max(r, 0) D(v)/a^2(v) dv, with a +inf sentinel when the positive
    part sits on a non-integrable zero of a^2.

Production measures are computed only for analytic profiles: extracting a
measure from rasterized numerical fields is ill-posed and out of scope.

Profiles declare their shocks explicitly.  Declared shocks must satisfy
Rankine-Hugoniot; undeclared interfaces (e.g. the torus wrap of a
one-shock profile) are not part of the structure and contribute nothing,
which permits non-closed profiles such as a single admissible jump.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .core import Trajectory
from .model import EntropyPair, EntropySampler, ModelCoefficients
from .smoothfn import TestFunction

__all__ = [
    "ShockCurve",
    "PiecewiseSmoothProfile",
    "RhoMeasure",
    "SplitReport",
    "InvalidProfileError",
    "AccuracyWarning",
    "standing_shock_profile",
    "piecewise_constant_profile",
    "entropy_production_weak",
    "sampled_production",
    "jump_production_rate",
    "rho_of_profile",
    "h_functional",
    "classify_splittable",
]


class InvalidProfileError(ValueError):
    """The declared structure is not a weak solution (Rankine-Hugoniot fails)."""


class AccuracyWarning(UserWarning):
    """Quadrature accuracy degraded (e.g. frame stride too coarse)."""


@dataclass(frozen=True)
class ShockCurve:
    """One shock: curve x(t) with speed sigma(t) = x'(t) and side states.

    position, speed, left_state, right_state are scalar callables of t on
    [t_start, t_end]; "left" is the state seen for x slightly below x(t).
    """

    position: Callable
    speed: Callable
    left_state: Callable
    right_state: Callable
    t_start: float
    t_end: float
    label: str = ""

    def states(self, t):
        return float(self.left_state(t)), float(self.right_state(t))


@dataclass(frozen=True)
class PiecewiseSmoothProfile:
    """Analytic candidate solution: smooth background + declared shocks.

    ``evaluate(t, x)`` rasterizes the profile (vectorized in x).
    ``u_range`` is the closed range of values the profile takes, used by
    the splittable classifier's distance-to-{0,1} condition.
    """

    evaluate: Callable
    shocks: tuple
    t_end: float
    u_range: tuple

    def validate(self, model: ModelCoefficients, n_t: int = 33,
                 tol: float = 1e-10) -> None:
        """Check Rankine-Hugoniot on every declared shock, states in [0,1]."""
        for s in self.shocks:
            ts = np.linspace(s.t_start, min(s.t_end, self.t_end), n_t)
            for t in ts:
                ul, ur = s.states(t)
                if not (0.0 <= ul <= 1.0 and 0.0 <= ur <= 1.0):
                    raise InvalidProfileError(
                        f"shock {s.label or '?'}: state outside [0,1] "
                        f"at t = {t:.6g}")
                if ul == ur:
                    raise InvalidProfileError(
                        f"shock {s.label or '?'}: zero jump at t = {t:.6g}")
                fl = float(np.asarray(model.f(ul), dtype=float))
                fr = float(np.asarray(model.f(ur), dtype=float))
                resid = float(s.speed(t)) * (ul - ur) - (fl - fr)
                if abs(resid) > tol * max(1.0, abs(fl), abs(fr)):
                    raise InvalidProfileError(
                        f"shock {s.label or '?'}: Rankine-Hugoniot residual "
                        f"{resid:.3e} at t = {t:.6g}")


def standing_shock_profile(model: ModelCoefficients, u_left: float,
                           u_right: float, x0: float = 0.5,
                           t_end: float = 1.0) -> PiecewiseSmoothProfile:
    """Single standing shock at x0 (requires f(u_left) = f(u_right))."""
    return piecewise_constant_profile(
        model, positions=[x0], speeds=[0.0],
        states=[u_left, u_right], t_end=t_end, closed=False)


def piecewise_constant_profile(model: ModelCoefficients,
                               positions: Sequence[float],
                               speeds: Sequence[float],
                               states: Sequence[float], t_end: float,
                               closed: bool = True,
                               time_windows=None) -> PiecewiseSmoothProfile:
    """Constant states separated by straight shock lines on the torus.

    positions[i] is the t = 0 location of shock i moving at speeds[i];
    states has one more entry than positions: states[i] sits left of shock
    i, states[-1] right of the last one.  closed=True declares the wrap
    interface at the torus seam as an additional shock (so the profile is
    a genuine weak solution on the torus; states[0] must then differ from
    states[-1] or coincide with it, in which case no seam shock is added).
    time_windows optionally restricts each declared shock to [t0, t1].
    """
    positions = [float(p) for p in positions]
    speeds = [float(s) for s in speeds]
    states = [float(u) for u in states]
    if len(states) != len(positions) + 1:
        raise ValueError("need len(states) == len(positions) + 1")
    if sorted(positions) != positions:
        raise ValueError("positions must be sorted")
    windows = ([(0.0, t_end)] * len(positions) if time_windows is None
               else [tuple(map(float, w)) for w in time_windows])

    shocks = []
    for i, (x0, sig) in enumerate(zip(positions, speeds)):
        t0, t1 = windows[i]
        shocks.append(ShockCurve(
            position=(lambda t, x0=x0, sig=sig: x0 + sig * t),
            speed=(lambda t, sig=sig: sig),
            left_state=(lambda t, u=states[i]: u),
            right_state=(lambda t, u=states[i + 1]: u),
            t_start=t0, t_end=t1, label=f"s{i}"))
    seam = None
    if closed and states[0] != states[-1]:
        # the seam between the last and first region: keep it standing at 0
        if abs(float(np.asarray(model.f(states[-1]), dtype=float))
               - float(np.asarray(model.f(states[0]), dtype=float))) > 1e-12:
            raise InvalidProfileError(
                "closed profile needs f(states[-1]) == f(states[0]) for a "
                "standing seam shock; declare the seam explicitly otherwise")
        seam = ShockCurve(
            position=lambda t: 0.0, speed=lambda t: 0.0,
            left_state=lambda t: states[-1],
            right_state=lambda t: states[0],
            t_start=0.0, t_end=t_end, label="seam")
        shocks.append(seam)

    pos_fns = [s.position for s in shocks[:len(positions)]]
    inner_states = states

    def evaluate(t, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, inner_states[0])
        for i, pf in enumerate(pos_fns):
            out = np.where(x >= pf(t) % 1.0, inner_states[i + 1], out)
        return out

    prof = PiecewiseSmoothProfile(
        evaluate=evaluate, shocks=tuple(shocks), t_end=t_end,
        u_range=(min(states), max(states)))
    prof.validate(model)
    return prof


# ---------------------------------------------------------------------------
# weak-form productions of trajectories
# ---------------------------------------------------------------------------

def _time_weights(times: np.ndarray) -> np.ndarray:
    """Trapezoid weights on the stored frame times."""
    w = np.zeros_like(times)
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def _check_stride(traj: Trajectory):
    if traj.meta.store_stride > 10:
        warnings.warn(
            AccuracyWarning(
                f"frame stride {traj.meta.store_stride} > 10 steps: "
                "time quadrature of the production may be inaccurate"),
            stacklevel=3)


def entropy_production_weak(traj: Trajectory, pair: EntropyPair,
                            phi: TestFunction) -> float:
    """Weak entropy production of a stored trajectory.

        - <eta(u_0), phi(0)> - <<eta(u), d_t phi>> - <<q(u), grad phi>>

    Space integrals are cell sums, the time integral is the trapezoid rule
    on the stored frames.  phi must vanish at the final time.
    """
    if phi.t_end < traj.times[-1] - 1e-12:
        raise ValueError("test function support ends before the trajectory")
    x = traj.grid.cell_centers
    dx = traj.grid.dx
    T = traj.times[-1]
    if np.max(np.abs(np.asarray(phi.phi(T, x), dtype=float))) > 1e-12:
        raise ValueError("phi(T, .) must vanish (compact support in [0,T))")
    _check_stride(traj)
    w = _time_weights(traj.times)
    eta_u = pair.eta(traj.data)
    q_u = pair.q(traj.data)
    total = -float(np.sum(pair.eta(traj.data[0])
                          * np.asarray(phi.phi(0.0, x), dtype=float)) * dx)
    for k, t in enumerate(traj.times):
        pt = np.asarray(phi.phi_t(t, x), dtype=float)
        px = np.asarray(phi.phi_x(t, x), dtype=float)
        total -= w[k] * float(np.sum(eta_u[k] * pt + q_u[k] * px) * dx)
    return total


def sampled_production(traj: Trajectory, sampler: EntropySampler) -> float:
    """Production of a trajectory against an entropy sampler theta(v,t,x).

        - int theta(u_0, 0, x) dx
        - int int [ (d_t theta)(u,t,x) + (d_x Q)(u,t,x) ] dx dt
    """
    if sampler.t_end < traj.times[-1] - 1e-12:
        raise ValueError("sampler support ends before the trajectory")
    x = traj.grid.cell_centers
    dx = traj.grid.dx
    _check_stride(traj)
    w = _time_weights(traj.times)
    total = -float(np.sum(np.asarray(
        sampler.theta(traj.data[0], 0.0, x), dtype=float)) * dx)
    for k, t in enumerate(traj.times):
        integrand = (np.asarray(sampler.theta_t(traj.data[k], t, x),
                                dtype=float)
                     + np.asarray(sampler.Qx(traj.data[k], t, x),
                                  dtype=float))
        total -= w[k] * float(np.sum(integrand) * dx)
    return total


# ---------------------------------------------------------------------------
# the production measure of a profile and the second-order cost
# ---------------------------------------------------------------------------

def jump_production_rate(model: ModelCoefficients, pair: EntropyPair,
                         shock: ShockCurve, t: float) -> float:
    """Independent jump-formula oracle: sigma [eta] - [q], [g] = g(u-) - g(u+).

    This is the production rate per unit time carried by the shock curve;
    the chord-defect density must reproduce it for every C^2 entropy.
    """
    ul, ur = shock.states(t)
    sig = float(shock.speed(t))
    eta_l = float(np.asarray(pair.eta(ul), dtype=float))
    eta_r = float(np.asarray(pair.eta(ur), dtype=float))
    q_l = float(np.asarray(pair.q(ul), dtype=float))
    q_r = float(np.asarray(pair.q(ur), dtype=float))
    return sig * (eta_l - eta_r) - (q_l - q_r)


@dataclass(frozen=True)
class ShockDensity:
    """Chord-defect density of one shock: r(v, t) on v between the states."""

    shock: ShockCurve
    model: ModelCoefficients

    def support(self, t):
        ul, ur = self.shock.states(t)
        return min(ul, ur), max(ul, ur)

    def r(self, v, t: float) -> np.ndarray:
        ul, ur = self.shock.states(t)
        sig = float(self.shock.speed(t))
        sign = -1.0 if ul < ur else 1.0
        v = np.asarray(v, dtype=float)
        f = self.model.f
        fl = float(np.asarray(f(ul), dtype=float))
        chord = fl + sig * (v - ul)
        vals = sign * (np.asarray(f(v), dtype=float) - chord)
        lo, hi = min(ul, ur), max(ul, ur)
        return np.where((v >= lo) & (v <= hi), vals, 0.0)


@dataclass(frozen=True)
class RhoMeasure:
    """Production measure of a profile: shock densities + zero smooth part."""

    densities: tuple
    t_end: float
    smooth_part_zero: bool = True

    def integrate_eta2(self, eta2: Callable, n_t: int = 17) -> float:
        """int r(v,t) eta''(v) dv dt over all shocks (Gauss in t and v)."""
        total = 0.0
        for d in self.densities:
            t0, t1 = d.shock.t_start, min(d.shock.t_end, self.t_end)
            tn, tw = np.polynomial.legendre.leggauss(n_t)
            tn = 0.5 * (t1 - t0) * tn + 0.5 * (t1 + t0)
            tw = 0.5 * (t1 - t0) * tw
            for t, wt in zip(tn, tw):
                lo, hi = d.support(t)
                vn, vw = np.polynomial.legendre.leggauss(64)
                vn = 0.5 * (hi - lo) * vn + 0.5 * (hi + lo)
                vw = 0.5 * (hi - lo) * vw
                total += wt * float(np.sum(
                    d.r(vn, t) * np.asarray(eta2(vn), dtype=float) * vw))
        return total


def production_tv_estimate(traj: Trajectory, pair: EntropyPair,
                           n_dict: int = 32, seed: int = 0) -> float:
    """Lower-bound diagnostic for the total-variation norm of the production.

    Maximizes the weak-form production over a dictionary of smooth test
    functions with |phi| <= 1 (random plateau products and their
    negatives).  A dictionary supremum only ever under-estimates the true
    TV norm; no tightness is claimed.
    """
    from .smoothfn import plateau, product_test_function
    T = float(traj.times[-1])
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_dict):
        t_marks = np.sort(rng.uniform(0.02, 0.95, 2))
        t0, t1 = float(t_marks[0]) * T, float(t_marks[1]) * T
        ramp_t = 0.45 * (t1 - t0)
        x_marks = np.sort(rng.uniform(0.05, 0.95, 2))
        x0, x1 = float(x_marks[0]), float(x_marks[1])
        ramp_x = 0.45 * (x1 - x0)
        chi, chi_dot = plateau(t0, t0 + ramp_t, t1 - ramp_t, t1)
        psi, dpsi = plateau(x0, x0 + ramp_x, x1 - ramp_x, x1)
        phi = product_test_function(chi, chi_dot, psi, dpsi, t_end=T)
        for sign in (1.0, -1.0):
            signed = TestFunction(
                phi=lambda t, x, s=sign: s * phi.phi(t, x),
                phi_t=lambda t, x, s=sign: s * phi.phi_t(t, x),
                phi_x=lambda t, x, s=sign: s * phi.phi_x(t, x),
                t_end=T)
            best = max(best, entropy_production_weak(traj, pair, signed))
    return best


def rho_of_profile(profile: PiecewiseSmoothProfile,
                   model: ModelCoefficients) -> RhoMeasure:
    """Chord-defect representation of the production measure.

    Valid for piecewise-smooth profiles only; raises InvalidProfileError
    if a declared shock violates Rankine-Hugoniot (the density formula
    needs the chord to vanish at both states).
    """
    profile.validate(model)
    densities = tuple(ShockDensity(shock=s, model=model)
                      for s in profile.shocks)
    return RhoMeasure(densities=densities, t_end=profile.t_end)


def _endpoint_divergent(integrand, lo, hi) -> bool:
    """Probe non-integrable endpoint blowup by nested shrinking intervals."""
    vals = []
    for delta in (1e-4, 1e-6, 1e-8, 1e-10):
        span = hi - lo
        a = lo + delta * span
        b = hi - delta * span
        if a >= b:
            return False
        val, _ = quad(integrand, a, b, limit=200)
        vals.append(val)
    increments = np.abs(np.diff(vals))
    if increments[0] == 0:
        return False
    # integrable endpoints give geometrically shrinking increments
    return bool(increments[-1] > 0.5 * increments[0]
                and increments[-1] > 1e-9 * max(1.0, abs(vals[-1])))


def h_functional(profile: PiecewiseSmoothProfile, model: ModelCoefficients,
                 n_t: int = 17, tol: float = 1e-9) -> float:
    """Second-order cost: sum over shocks of int dt int r^+ D/a^2 dv.

    Adaptive Gauss-Kronrod in v with sign-change breakpoints of r supplied
    to the quadrature; returns math.inf (with a warning naming the shock)
    when the positive part touches a zero of a^2 with a non-integrable
    D/a^2 ratio.  Nonnegative by construction; zero when every shock
    satisfies the chord (Oleinik) admissibility condition.
    """
    rho = rho_of_profile(profile, model)
    total = 0.0
    for d in rho.densities:
        t0, t1 = d.shock.t_start, min(d.shock.t_end, rho.t_end)
        if t1 <= t0:
            continue
        tn, tw = np.polynomial.legendre.leggauss(n_t)
        tn = 0.5 * (t1 - t0) * tn + 0.5 * (t1 + t0)
        tw = 0.5 * (t1 - t0) * tw
        for t, wt in zip(tn, tw):
            lo, hi = d.support(t)

            def integrand(v, d=d, t=t):
                rv = float(d.r(v, t))
                if rv <= 0.0:
                    return 0.0
                a2v = float(np.asarray(model.a2(v), dtype=float))
                dv = float(np.asarray(model.D(v), dtype=float))
                if a2v <= 0.0:
                    return math.inf if dv > 0 else 0.0
                return rv * dv / a2v

            # breakpoints where r changes sign keep the quadrature smooth
            scan = np.linspace(lo, hi, 257)
            rs = d.r(scan, t)
            cross = scan[1:][np.sign(rs[1:]) * np.sign(rs[:-1]) < 0]
            if np.all(rs <= 1e-15):
                continue  # admissible shock: positive part empty
            degenerate_lo = float(np.asarray(model.a2(lo), dtype=float)) <= tol
            degenerate_hi = float(np.asarray(model.a2(hi), dtype=float)) <= tol
            if (degenerate_lo or degenerate_hi) and _endpoint_divergent(
                    integrand, lo, hi):
                warnings.warn(
                    f"h_functional: non-integrable positive part on shock "
                    f"{d.shock.label or '?'} at t = {t:.6g}", stacklevel=2)
                return math.inf
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                val, err = quad(integrand, lo, hi,
                                points=list(cross) if len(cross) else None,
                                limit=200, epsabs=tol, epsrel=tol)
            if not np.isfinite(val):
                return math.inf
            total += wt * val
    return float(total)


# ---------------------------------------------------------------------------
# entropy-splittable classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitReport:
    """Sign structure of the production measure and the split verdict.

    shock_signs: one of '+', '-', 'mixed', '0' per declared shock.
    e_plus / e_minus: the closed sets carrying the positive and negative
    parts, as (label, t0, t1) curve segments.  Conditions:
      (i)   supports contained in the segment sets (by construction),
      (ii)  times where a (+) and a (-) segment intersect have empty
            interior on the finite representation,
      (iii) the profile range stays delta away from {0, 1}.
    """

    shock_signs: tuple
    e_plus: tuple
    e_minus: tuple
    cond_supports: bool
    cond_time_separation: bool
    cond_interior_range: bool
    delta: float

    @property
    def verdict(self) -> bool:
        return (self.cond_supports and self.cond_time_separation
                and self.cond_interior_range)

    def summary(self) -> str:
        lines = [f"shock signs: {', '.join(self.shock_signs)}",
                 f"E+ segments: {list(self.e_plus)}",
                 f"E- segments: {list(self.e_minus)}",
                 f"(i) supports classified: {self.cond_supports}",
                 f"(ii) +/- time separation: {self.cond_time_separation}",
                 f"(iii) range margin delta = {self.delta:.6g} > 0: "
                 f"{self.cond_interior_range}",
                 f"splittable: {self.verdict}"]
        return "\n".join(lines)


def _sign_of_density(d: ShockDensity, rho_t_end: float, n_t: int = 9,
                     n_v: int = 201, tol: float = 1e-12) -> str:
    has_pos = has_neg = False
    t1 = min(d.shock.t_end, rho_t_end)
    for t in np.linspace(d.shock.t_start, t1, n_t):
        lo, hi = d.support(t)
        r = d.r(np.linspace(lo, hi, n_v), t)
        if np.any(r > tol):
            has_pos = True
        if np.any(r < -tol):
            has_neg = True
    if has_pos and has_neg:
        return "mixed"
    if has_pos:
        return "+"
    if has_neg:
        return "-"
    return "0"


def classify_splittable(profile: PiecewiseSmoothProfile,
                        model: ModelCoefficients) -> SplitReport:
    """Decide entropy-splittability on the finite shock representation."""
    rho = rho_of_profile(profile, model)
    signs = tuple(_sign_of_density(d, rho.t_end) for d in rho.densities)
    e_plus, e_minus = [], []
    supports_ok = True
    for d, s in zip(rho.densities, signs):
        seg = (d.shock.label or "?", d.shock.t_start,
               min(d.shock.t_end, rho.t_end))
        if s == "+":
            e_plus.append(seg)
        elif s == "-":
            e_minus.append(seg)
        elif s == "mixed":
            supports_ok = False  # single curve carries both signs

    # condition (ii): a (+) curve and a (-) curve may only meet at
    # isolated times; coexistence is harmless while they stay apart in x
    sep_ok = True
    plus_shocks = [d.shock for d, s in zip(rho.densities, signs) if s == "+"]
    minus_shocks = [d.shock for d, s in zip(rho.densities, signs)
                    if s == "-"]
    for sp in plus_shocks:
        for sm in minus_shocks:
            t0 = max(sp.t_start, sm.t_start)
            t1 = min(sp.t_end, sm.t_end, rho.t_end)
            if t1 <= t0:
                continue
            ts = np.linspace(t0, t1, 257)
            xp = np.array([float(sp.position(t)) % 1.0 for t in ts])
            xm = np.array([float(sm.position(t)) % 1.0 for t in ts])
            gap = np.abs(xp - xm)
            gap = np.minimum(gap, 1.0 - gap)  # torus distance
            touching = gap < 1e-9
            # an interval of coincidence (not isolated crossings) fails
            if np.any(touching[:-1] & touching[1:]):
                sep_ok = False
    lo, hi = profile.u_range
    delta = min(lo, 1.0 - hi)
    return SplitReport(
        shock_signs=signs, e_plus=tuple(e_plus), e_minus=tuple(e_minus),
        cond_supports=supports_ok, cond_time_separation=sep_ok,
        cond_interior_range=delta > 0.0, delta=delta)
