"""Deterministic reference solvers for the limiting conservation law.

Three routes to the entropic picture:

  * ``solve_viscous``  -- the parabolic regularization
        du/dt + div f(u) = (eps/2) div( D(u) grad u )
    with the same Engquist-Osher flux and centered diffusion as the
    stochastic schemes (a2 = 0 reduces them to this bitwise);
  * ``solve_kruzkov``  -- the monotone EO scheme with zero explicit
    viscosity, first-order convergent to the entropic solution;
  * ``riemann_exact``  -- the exact self-similar solution of a Riemann
    problem built from the convex/concave envelope of the flux between
    the two states.

Periodic Riemann data is realized as a two-jump profile (the torus forces
an even number of jumps); exact comparisons are only valid before the two
fans interact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BlowUpError, GridField, TorusGrid, Trajectory, TrajectoryMeta
from .model import ModelCoefficients

__all__ = [
    "RiemannProblem",
    "Wave",
    "WaveFan",
    "solve_viscous",
    "solve_kruzkov",
    "riemann_exact",
    "two_jump_initial",
    "two_jump_exact",
]


@dataclass(frozen=True)
class RiemannProblem:
    u_left: float
    u_right: float
    jump_position: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.u_left <= 1.0 and 0.0 <= self.u_right <= 1.0):
            raise ValueError("Riemann states must lie in [0, 1]")


@dataclass(frozen=True)
class Wave:
    """One wave of a fan: a shock or a rarefaction.

    For a shock, speed_lo == speed_hi == sigma and Rankine-Hugoniot
    sigma (u_left - u_right) = f(u_left) - f(u_right) holds exactly by
    construction.  For a rarefaction the (speeds, states) tables give the
    self-similar profile u(xi) by interpolation.
    """

    kind: str                 # "shock" | "rarefaction"
    u_left: float
    u_right: float
    speed_lo: float
    speed_hi: float
    speeds: np.ndarray | None = None
    states: np.ndarray | None = None


@dataclass(frozen=True)
class WaveFan:
    """Ordered wave list with an exact evaluator in xi = (x - x0)/t."""

    problem: RiemannProblem
    waves: tuple

    def evaluate_xi(self, xi) -> np.ndarray:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        out = np.full(xi.shape, self.problem.u_left)
        for w in self.waves:
            if w.kind == "shock":
                out = np.where(xi >= w.speed_lo, w.u_right, out)
            else:
                inside = (xi >= w.speed_lo) & (xi <= w.speed_hi)
                if np.any(inside):
                    out[inside] = np.interp(xi[inside], w.speeds, w.states)
                out = np.where(xi > w.speed_hi, w.u_right, out)
        return out

    def __call__(self, t: float, x, jump_position: float | None = None):
        x0 = self.problem.jump_position if jump_position is None \
            else jump_position
        x = np.asarray(x, dtype=float)
        if t <= 0:
            return np.where(x < x0, self.problem.u_left,
                            self.problem.u_right)
        return self.evaluate_xi((x - x0) / t)

    def describe(self) -> str:
        lines = [f"riemann {self.problem.u_left:g} -> "
                 f"{self.problem.u_right:g} at x = "
                 f"{self.problem.jump_position:g}"]
        if not self.waves:
            lines.append("constant (no waves)")
        for w in self.waves:
            if w.kind == "shock":
                lines.append(f"shock {w.u_left:g} -> {w.u_right:g} "
                             f"speed {w.speed_lo:.12g}")
            else:
                lines.append(f"rarefaction {w.u_left:g} -> {w.u_right:g} "
                             f"speeds [{w.speed_lo:.12g}, {w.speed_hi:.12g}]")
        return "\n".join(lines)


def _march(model, u0, T, dt, epsilon, stride, scheme_name, meta_extra=None):
    from .spde import _StepKernel
    grid = u0.grid
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T/dt must be an integer")
    if n_steps % stride != 0:
        raise ValueError("step count not divisible by store_stride")
    data = np.empty((n_steps // stride + 1, grid.n_cells))
    data[0] = u0.values
    u = u0.values.copy()
    kern = _StepKernel(model, grid.dx, dt, epsilon)  # shared with the SPDE
    for k in range(n_steps):
        u = kern(u, u, None)
        if not np.isfinite(u.sum()):
            raise BlowUpError(step=k + 1, time=(k + 1) * dt,
                              message="deterministic solver blew up "
                                      "(bug-level: check the dt bound)")
        if (k + 1) % stride == 0:
            data[(k + 1) // stride] = u
    times = np.arange(data.shape[0]) * (stride * dt)
    meta = TrajectoryMeta(scheme=scheme_name, epsilon=epsilon, dt=dt,
                          store_stride=stride,
                          extra={"model": model.name, **(meta_extra or {})})
    return Trajectory(grid, times, data, meta)


def solve_viscous(model: ModelCoefficients, epsilon: float, u0: GridField,
                  T: float, dt: float, store_stride: int = 1) -> Trajectory:
    """March the viscous equation; conserves mass exactly (flux form)."""
    return _march(model, u0, T, dt, epsilon, store_stride, "viscous")


def cfl_dt(model: ModelCoefficients, grid: TorusGrid, T: float,
           cfl: float = 0.5) -> float:
    """Largest dt <= cfl*dx/lip_f that divides T into whole steps."""
    bound = cfl * grid.dx / model.lip_f if model.lip_f > 0 else T
    return T / math.ceil(T / bound - 1e-12)


def solve_kruzkov(model: ModelCoefficients, u0: GridField, T: float,
                  dt: float, store_stride: int = 1) -> Trajectory:
    """Monotone EO scheme with zero explicit viscosity.

    Requires the CFL bound dt <= 0.5 dx / lip_f; converges first order to
    the unique entropic solution under grid refinement.
    """
    if model.lip_f > 0 and dt > 0.5 * u0.grid.dx / model.lip_f + 1e-15:
        raise ValueError(
            f"CFL violation: dt = {dt:.4g} > 0.5 dx/lip_f = "
            f"{0.5 * u0.grid.dx / model.lip_f:.4g}")
    return _march(model, u0, T, dt, 0.0, store_stride, "kruzkov")


def riemann_exact(model: ModelCoefficients, rp: RiemannProblem,
                  n_samples: int = 10_001,
                  slope_tol: float = 1e-10) -> WaveFan:
    """Exact entropic Riemann fan from the flux envelope.

    u_left < u_right: waves follow the lower convex envelope of f on
    [u_left, u_right]; u_left > u_right: the upper concave envelope.
    Envelope edges joining non-adjacent samples are shocks (speed = chord
    slope, hence Rankine-Hugoniot exact); runs of adjacent samples are
    rarefaction arcs unless their slope variation is below slope_tol, in
    which case they collapse to a contact-type shock.
    """
    ul, ur = rp.u_left, rp.u_right
    if ul == ur:
        return WaveFan(problem=rp, waves=())
    lo, hi = min(ul, ur), max(ul, ur)
    v = np.linspace(lo, hi, n_samples)
    fv = np.asarray(model.f(v), dtype=float)
    increasing = ul < ur
    # Monotone-chain hull of the sampled graph: lower hull for the convex
    # envelope, upper hull for the concave one.
    hull = [0]
    for i in range(1, n_samples):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = ((v[i1] - v[i0]) * (fv[i] - fv[i0])
                     - (fv[i1] - fv[i0]) * (v[i] - v[i0]))
            if (cross <= 0 and increasing) or (cross >= 0 and not increasing):
                hull.pop()
            else:
                break
        hull.append(i)
    hull = np.asarray(hull)
    # Classify hull edges, then merge adjacent-sample runs.
    segments = []  # (kind, idx_from, idx_to) over hull vertex positions
    for p in range(len(hull) - 1):
        gap = hull[p + 1] - hull[p]
        segments.append(("arc" if gap == 1 else "jump", p, p + 1))
    merged = []
    for seg in segments:
        if merged and merged[-1][0] == seg[0] == "arc":
            merged[-1] = ("arc", merged[-1][1], seg[2])
        else:
            merged.append(list(seg))
    waves = []
    for kind, p0, p1 in merged:
        i0, i1 = hull[p0], hull[p1]
        vv = v[hull[p0:p1 + 1]]
        ff = fv[hull[p0:p1 + 1]]
        slopes = np.diff(ff) / np.diff(vv)
        if kind == "arc" and np.ptp(slopes) < slope_tol:
            kind = "jump"  # affine stretch: contact discontinuity
        # traverse in x-order: ascending v if increasing data, else descending
        if increasing:
            a_state, b_state = float(vv[0]), float(vv[-1])
        else:
            vv, ff = vv[::-1], ff[::-1]
            slopes = slopes[::-1]
            a_state, b_state = float(vv[0]), float(vv[-1])
        if kind == "jump":
            sigma = (float(ff[-1]) - float(ff[0])) / (b_state - a_state)
            waves.append(Wave("shock", a_state, b_state, sigma, sigma))
        else:
            speeds = np.asarray(model.df(vv), dtype=float)
            order = np.argsort(speeds, kind="stable")
            waves.append(Wave("rarefaction", a_state, b_state,
                              float(speeds.min()), float(speeds.max()),
                              speeds=speeds[order], states=vv[order]))
    waves.sort(key=lambda w: w.speed_lo)
    # Fuse consecutive shocks of (numerically) equal speed: hull roundoff
    # on affine stretches can split one contact into slivers.
    fused = []
    for w in waves:
        if (fused and w.kind == "shock" and fused[-1].kind == "shock"
                and abs(w.speed_lo - fused[-1].speed_lo)
                <= slope_tol * max(1.0, abs(w.speed_lo))):
            prev = fused.pop()
            fl = float(np.asarray(model.f(prev.u_left), dtype=float))
            fr = float(np.asarray(model.f(w.u_right), dtype=float))
            sigma = (fr - fl) / (w.u_right - prev.u_left)
            fused.append(Wave("shock", prev.u_left, w.u_right, sigma, sigma))
        else:
            fused.append(w)
    return WaveFan(problem=rp, waves=tuple(fused))


def two_jump_initial(grid: TorusGrid, u_outer: float, u_inner: float,
                     x1: float = 0.25, x2: float = 0.75) -> GridField:
    """Torus profile equal to u_inner on [x1, x2), u_outer elsewhere."""
    x = grid.cell_centers
    vals = np.where((x >= x1) & (x < x2), u_inner, u_outer)
    return GridField(grid, vals)


def two_jump_exact(model: ModelCoefficients, u_outer: float, u_inner: float,
                   x1: float = 0.25, x2: float = 0.75):
    """Exact entropic solution of the two-jump data, pre-interaction.

    Returns a callable (t, x) -> values, valid while the fans emanating
    from x1 and x2 stay inside disjoint neighborhoods.
    """
    fan1 = riemann_exact(model, RiemannProblem(u_outer, u_inner, x1))
    fan2 = riemann_exact(model, RiemannProblem(u_inner, u_outer, x2))
    # Unwrap the torus on [m_out, m_out + 1) where m_out is the midpoint
    # antipodal to the in-between midpoint; both jumps are then interior.
    m_out = (0.5 * (x1 + x2) + 0.5) % 1.0
    x1u = m_out + (x1 - m_out) % 1.0
    x2u = m_out + (x2 - m_out) % 1.0
    split = 0.5 * (x1u + x2u)

    def solution(t, x):
        x = np.asarray(x, dtype=float)
        rel = m_out + (x - m_out) % 1.0  # continuous around both jumps
        return np.where(rel < split, fan1(t, rel, jump_position=x1u),
                        fan2(t, rel, jump_position=x2u))

    return solution
