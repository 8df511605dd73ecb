"""First-order rate functionals and control fields.

The building block is the moment optimization

    R(w, c) = inf { (nu(f) - c)^2 / nu(a^2) :
                    nu probability on [0,1], nu(identity) = w }

with the convention (c - c)^2 / 0 = 0.  Everything else is assembled from
it:

  * ``r_fun``             -- R with the minimizing measure, by a 3-atom
                             coordinate search (weights eliminated in
                             closed form on each feasible segment);
  * ``r_fun_bruteforce``  -- independent oracle: projected gradient over
                             measures on a 401-point support grid;
  * ``i_functional``      -- path cost inf_Phi (1/2) int R(u, Phi + c(t)),
                             the contraction of the Young-measure cost to
                             paths (grad Phi = -du/dt weakly);
  * ``young_i``           -- the Young-measure cost itself, evaluated per
                             time slice through the periodic elliptic
                             problem -div( mu(a^2) grad Psi ) = RHS and
                             summed as (1/2) << mu(a^2) grad Psi, grad Psi >>;
  * ``control_from_target`` -- the slice solves for a Dirac measure on a
                             target path; the resulting potential drives
                             the Girsanov-tilted simulations.

Time is discretized by interval-midpoint slices: the time derivative on
slice k is (frame_{k+1} - frame_k)/dt and the coefficient/flux moments are
frame averages.  With this pairing the discrete summation-by-parts
identity is exact, so no admissible test function can beat the elliptic
value (the duality check in the test suite holds to rounding, not to a
discretization tolerance).
"""

from __future__ import annotations

import math
import warnings
import weakref
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .core import GridField, TorusGrid, Trajectory
from .model import ModelCoefficients

__all__ = [
    "DiscreteMeasure",
    "YoungMeasureField",
    "ControlField",
    "r_fun",
    "r_fun_bruteforce",
    "i_functional",
    "young_i",
    "young_dual_objective",
    "control_from_target",
]

_ELLIPTIC_FLOOR = 1e-10
_MOMENT_GRID = 401


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure on [0, 1]."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        q = np.asarray(self.weights, dtype=float)
        if p.shape != q.shape or p.ndim != 1:
            raise ValueError("positions/weights must be matching 1-d arrays")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("atom positions must lie in [0, 1]")
        if np.any(q < -1e-12) or abs(q.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "positions", p.copy())
        object.__setattr__(self, "weights", q.copy())

    def moment(self, fn: Callable) -> float:
        return float(np.sum(self.weights
                            * np.asarray(fn(self.positions), dtype=float)))

    def mean(self) -> float:
        return float(np.sum(self.weights * self.positions))


@dataclass
class YoungMeasureField:
    """Per-(frame, cell) discrete measure on [0, 1] with cached moments."""

    grid: TorusGrid
    times: np.ndarray
    positions: np.ndarray  # (n_frames, n_cells, n_atoms)
    weights: np.ndarray
    _moment_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        m, n, k = self.positions.shape
        if self.weights.shape != (m, n, k) or m != self.times.size \
                or n != self.grid.n_cells:
            raise ValueError("inconsistent Young-measure field shapes")
        wsum = self.weights.sum(axis=2)
        if np.max(np.abs(wsum - 1.0)) > 1e-12:
            raise ValueError("cell measures must be normalized")

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "YoungMeasureField":
        """The Dirac lift delta_{u(t,x)} of a stored path."""
        pos = traj.data[:, :, None]
        return cls(grid=traj.grid, times=traj.times, positions=pos,
                   weights=np.ones_like(pos))

    @classmethod
    def constant_atoms(cls, grid: TorusGrid, times,
                       atoms: Sequence[tuple]) -> "YoungMeasureField":
        """Space-time constant measure from (position, weight) pairs."""
        times = np.asarray(times, dtype=float)
        pos = np.array([a[0] for a in atoms], dtype=float)
        wts = np.array([a[1] for a in atoms], dtype=float)
        m, n, k = times.size, grid.n_cells, pos.size
        return cls(grid=grid, times=times,
                   positions=np.broadcast_to(pos, (m, n, k)).copy(),
                   weights=np.broadcast_to(wts, (m, n, k)).copy())

    def moment(self, fn: Callable, key=None) -> np.ndarray:
        """(n_frames, n_cells) field of cell-measure integrals of fn."""
        if key is not None and key in self._moment_cache:
            return self._moment_cache[key]
        vals = np.sum(self.weights * np.asarray(fn(self.positions),
                                                dtype=float), axis=2)
        if key is not None:
            self._moment_cache[key] = vals
        return vals

    def mean_field(self) -> np.ndarray:
        return self.moment(lambda v: v, key="iota")

    def time_increments_h_minus1(self) -> np.ndarray:
        """Frame-to-frame H^{-1} increments of the mean field (diagnostic)."""
        from .core import GridField, h_minus1_distance
        m = self.mean_field()
        return np.array([
            h_minus1_distance(GridField(self.grid, m[k + 1]),
                              GridField(self.grid, m[k]))
            for k in range(m.shape[0] - 1)])


# ---------------------------------------------------------------------------
# the moment optimization R(w, c)
# ---------------------------------------------------------------------------

def _ratio_value(y: float, z: float, c: float) -> float:
    """(y - c)^2 / z with the degenerate convention (c - c)^2 / 0 = 0."""
    if z <= 1e-13:
        return 0.0 if (y - c) ** 2 <= 1e-18 else math.inf
    return (y - c) ** 2 / z


def _segment_min(y0, z0, y1, z1, c):
    """Exact minimum of (y-c)^2/z on the segment (y0,z0)-(y1,z1).

    y and z are affine in the parameter; the derivative vanishes at y = c
    or on one linear equation, so the candidates are both endpoints plus
    at most two interior roots.
    """
    dy, dz = y1 - y0, z1 - z0
    best = min(_ratio_value(y0, z0, c), _ratio_value(y1, z1, c))
    if dy != 0.0:
        s = (c - y0) / dy
        if 0.0 < s < 1.0:
            best = min(best, _ratio_value(c, z0 + s * dz, c))
    denom = dy * dz
    if denom != 0.0:
        s = (dz * (y0 - c) - 2.0 * dy * z0) / denom
        if 0.0 < s < 1.0:
            best = min(best,
                       _ratio_value(y0 + s * dy, z0 + s * dz, c))
    return best


def _feasible_vertices(v: np.ndarray, w: float):
    """Vertices (<= 2 atoms) of {p in simplex: positions v, mean w}."""
    n = v.size
    verts = []
    for i in range(n):
        if abs(v[i] - w) <= 1e-14:
            p = np.zeros(n)
            p[i] = 1.0
            verts.append(p)
    for i in range(n):
        for j in range(i + 1, n):
            lo, hi = min(v[i], v[j]), max(v[i], v[j])
            if lo - 1e-14 <= w <= hi + 1e-14 and hi > lo:
                lam = (v[j] - w) / (v[j] - v[i])
                if -1e-14 <= lam <= 1 + 1e-14:
                    p = np.zeros(n)
                    p[i] = min(max(lam, 0.0), 1.0)
                    p[j] = 1.0 - p[i]
                    verts.append(p)
    return verts


def _best_weights(v: np.ndarray, w: float, c: float, fv: np.ndarray,
                  av: np.ndarray):
    """Optimal weights for fixed atom positions; exact via segment minima."""
    verts = _feasible_vertices(v, w)
    if not verts:
        return math.inf, None
    best_val, best_p = math.inf, None
    for p in verts:
        val = _ratio_value(float(fv @ p), float(av @ p), c)
        if val < best_val:
            best_val, best_p = val, p
    for i in range(len(verts)):
        for j in range(i + 1, len(verts)):
            pa, pb = verts[i], verts[j]
            ya, za = float(fv @ pa), float(av @ pa)
            yb, zb = float(fv @ pb), float(av @ pb)
            val = _segment_min(ya, za, yb, zb, c)
            if val < best_val - 1e-18:
                # recover the minimizing parameter by a short refine
                ss = np.linspace(0.0, 1.0, 65)
                vals = [_ratio_value(ya + s * (yb - ya), za + s * (zb - za),
                                     c) for s in ss]
                s = ss[int(np.argmin(vals))]
                best_val, best_p = val, (1 - s) * pa + s * pb
    return best_val, best_p


def r_fun(model: ModelCoefficients, w: float, c: float,
          n_random_starts: int = 4, seed: int = 0):
    """R(w, c) and a minimizing measure with at most 3 atoms.

    Multi-start coordinate search on the atom positions; for fixed
    positions the weights are eliminated exactly (the feasible weight set
    is a segment and the objective restricted to it is rational with
    closed-form stationary points).  The 3-atom cap is validated against
    ``r_fun_bruteforce`` in the test suite rather than assumed.
    """
    if not -1e-12 <= w <= 1 + 1e-12:
        raise ValueError(f"mean w = {w} outside [0, 1]")
    w = min(max(w, 0.0), 1.0)
    f, a2 = model.f, model.a2

    def solve_positions(v):
        v = np.asarray(v, dtype=float)
        fv = np.asarray(f(v), dtype=float)
        av = np.maximum(np.asarray(a2(v), dtype=float), 0.0)
        return _best_weights(v, w, c, fv, av)

    rng = np.random.default_rng(seed)
    starts = [np.array([w, w, w]), np.array([0.0, w, 1.0]),
              np.array([0.0, 0.5, 1.0]),
              np.array([0.5 * w, w, 0.5 + 0.5 * w])]
    for _ in range(n_random_starts):
        starts.append(np.sort(rng.uniform(0.0, 1.0, 3)))

    best_val, best_pos, best_p = math.inf, None, None
    grid = np.linspace(0.0, 1.0, 33)
    for start in starts:
        pos = start.copy()
        val, p = solve_positions(pos)
        for _ in range(24):
            improved = False
            for jdx in range(3):
                cand_vals = []
                for g in grid:
                    trial = pos.copy()
                    trial[jdx] = g
                    cand_vals.append(solve_positions(trial)[0])
                k = int(np.argmin(cand_vals))
                lo = grid[max(k - 1, 0)]
                hi = grid[min(k + 1, grid.size - 1)]
                # golden refine on the bracket
                invphi = (math.sqrt(5.0) - 1.0) / 2.0
                a_, b_ = lo, hi
                for _ in range(40):
                    m1 = b_ - invphi * (b_ - a_)
                    m2 = a_ + invphi * (b_ - a_)
                    t1, t2 = pos.copy(), pos.copy()
                    t1[jdx], t2[jdx] = m1, m2
                    if solve_positions(t1)[0] <= solve_positions(t2)[0]:
                        b_ = m2
                    else:
                        a_ = m1
                gbest = 0.5 * (a_ + b_)
                trial = pos.copy()
                trial[jdx] = gbest
                tval, tp = solve_positions(trial)
                if tval < val - 1e-15:
                    pos, val, p = trial, tval, tp
                    improved = True
            if not improved:
                break
        if val < best_val:
            best_val, best_pos, best_p = val, pos, p
    if best_p is None:
        raise ValueError(f"no feasible measure with mean {w}")
    keep = best_p > 1e-12
    measure = DiscreteMeasure(best_pos[keep],
                              best_p[keep] / best_p[keep].sum())
    return best_val, measure


def _project_mean_simplex(y: np.ndarray, v: np.ndarray, w: float,
                          max_iter: int = 60) -> np.ndarray:
    """Batched projection onto {p >= 0, sum p = 1, v . p = w}.

    Active-set Newton on the two multipliers; falls back to a bisection
    on rows that fail to settle.
    """
    y = np.atleast_2d(y)
    B, n = y.shape
    mask = np.ones((B, n), dtype=bool)
    alpha = np.zeros(B)
    beta = np.zeros(B)
    prev = None
    for _ in range(max_iter):
        s0 = mask.sum(axis=1).astype(float)
        s1 = (mask * v).sum(axis=1)
        s2 = (mask * v**2).sum(axis=1)
        t0 = (y * mask).sum(axis=1)
        t1 = (y * v * mask).sum(axis=1)
        det = s0 * s2 - s1**2
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        alpha = ((t0 - 1.0) * s2 - (t1 - w) * s1) / det
        beta = ((t1 - w) * s0 - (t0 - 1.0) * s1) / det
        slack = y - alpha[:, None] - beta[:, None] * v
        new_mask = slack > 0
        # keep at least two support points alive
        dead = new_mask.sum(axis=1) < 2
        if np.any(dead):
            order = np.argsort(slack[dead], axis=1)[:, -2:]
            nm = new_mask[dead]
            np.put_along_axis(nm, order, True, axis=1)
            new_mask[dead] = nm
        if prev is not None and np.array_equal(new_mask, mask):
            break
        prev = mask
        mask = new_mask
    p = np.maximum(y - alpha[:, None] - beta[:, None] * v, 0.0)
    norm = p.sum(axis=1, keepdims=True)
    p = np.where(norm > 0, p / np.where(norm == 0, 1.0, norm), 1.0 / n)
    # final cheap repair of the mean constraint along the feasible segment
    mean = p @ v
    for b in range(B):
        if abs(mean[b] - w) > 1e-9:
            p[b] = _repair_mean(p[b], v, w)
    return p


def _repair_mean(p: np.ndarray, v: np.ndarray, w: float) -> np.ndarray:
    """Shift mass toward the closest endpoint until the mean matches."""
    mean = float(p @ v)
    if mean < w:
        target = np.argmax(v)
    else:
        target = np.argmin(v)
    lam_num = w - mean
    lam_den = v[target] - mean
    lam = min(max(lam_num / lam_den, 0.0), 1.0) if lam_den != 0 else 0.0
    q = (1 - lam) * p
    q[target] += lam
    return q


def r_fun_bruteforce(model: ModelCoefficients, w: float, c: float,
                     n_grid: int = _MOMENT_GRID, n_restarts: int = 50,
                     n_iters: int = 250, seed: int = 1234) -> float:
    """Brute-force oracle for R(w, c): projected gradient on the simplex.

    Measures supported on an n_grid uniform grid; n_restarts random
    feasible starts run as one batch.  The degenerate convention is
    checked separately on the zero set of a^2.
    """
    v = np.linspace(0.0, 1.0, n_grid)
    F = np.asarray(model.f(v), dtype=float)
    A = np.maximum(np.asarray(model.a2(v), dtype=float), 0.0)
    rng = np.random.default_rng(seed)
    starts = rng.dirichlet(np.ones(n_grid) * 0.05, size=n_restarts)
    p = _project_mean_simplex(starts, v, w)

    def objective(pb):
        y = pb @ F
        z = pb @ A
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (y - c) ** 2 / z
        return np.where(z > 1e-13, val,
                        np.where((y - c) ** 2 <= 1e-18, 0.0, np.inf))

    vals = objective(p)
    best = vals.copy()
    step = np.full(n_restarts, 0.05)
    for _ in range(n_iters):
        y = p @ F
        z = np.maximum(p @ A, 1e-13)
        grad = (2.0 * (y - c) / z)[:, None] * F \
            - ((y - c) ** 2 / z**2)[:, None] * A
        cand = _project_mean_simplex(p - step[:, None] * grad, v, w)
        cvals = objective(cand)
        improved = cvals < vals
        p = np.where(improved[:, None], cand, p)
        vals = np.where(improved, cvals, vals)
        step = np.where(improved, step * 1.2, step * 0.5)
        best = np.minimum(best, vals)
    out = float(np.min(best))
    # degenerate convention: measures living on {a^2 = 0} with mean w
    zero_idx = np.where(A <= 1e-13)[0]
    if zero_idx.size:
        vz = v[zero_idx]
        fz = F[zero_idx]
        verts = _feasible_vertices(vz, w)
        for q in verts:
            if abs(float(fz @ q) - c) <= 1e-9:
                out = 0.0
    return out


# ---------------------------------------------------------------------------
# fast R queries for the path functional: the moment-polygon table
# ---------------------------------------------------------------------------

def _upper_hull(points):
    """Upper concave hull of (y, z) points sorted by y."""
    hull = []
    for pt in points:
        while len(hull) >= 2:
            (y0, z0), (y1, z1) = hull[-2], hull[-1]
            if (y1 - y0) * (pt[1] - z0) - (z1 - z0) * (pt[0] - y0) >= 0:
                hull.pop()
            else:
                break
        hull.append(pt)
    return hull


class _MomentPolygonTable:
    """Per-w upper boundary of the attainable moment set.

    For each w on a uniform grid, the set K_w = {(nu(f), nu(a^2)) :
    nu(identity) = w} is a convex polygon; R(w, c) = 0 iff c lies between
    the convex and concave envelopes of f at w, otherwise it is the
    minimum of (y - c)^2 / z over the upper boundary.  The boundary is
    sampled by maximizing m*f + a^2 over the moment set for a fan of
    slopes m (each maximizer is a two-atom measure read off the concave
    envelope of m*F + A on the support grid).
    """

    N_SLOPES = 81

    def __init__(self, model: ModelCoefficients, n_grid: int = _MOMENT_GRID):
        v = np.linspace(0.0, 1.0, n_grid)
        F = np.asarray(model.f(v), dtype=float)
        A = np.maximum(np.asarray(model.a2(v), dtype=float), 0.0)
        self.w_grid = v
        self.y_max = self._envelope_moments(v, F, A, +1.0, 0.0)[0]
        self.y_min = -self._envelope_moments(v, -F, A, +1.0, 0.0)[0]
        pts_y = []
        pts_z = []
        slopes = np.tan(np.linspace(-0.49 * np.pi, 0.49 * np.pi,
                                    self.N_SLOPES))
        for m in slopes:
            ym, zm = self._envelope_moments(v, F, A, m, 1.0)
            pts_y.append(ym)
            pts_z.append(zm)
        # extreme-y points close the polygon on the sides
        for sgn in (+1.0, -1.0):
            ym, zm = self._envelope_moments(v, sgn * F, A, 1.0, 0.0)
            pts_y.append(sgn * ym)
            pts_z.append(zm)
        P_y = np.stack(pts_y, axis=1)  # (nw, n_pts)
        P_z = np.stack(pts_z, axis=1)
        hull_y, hull_z, max_len = [], [], 0
        for i in range(n_grid):
            order = np.argsort(P_y[i], kind="stable")
            pts = []
            for j in order:
                if pts and abs(P_y[i, j] - pts[-1][0]) < 1e-14:
                    if P_z[i, j] > pts[-1][1]:
                        pts[-1] = (P_y[i, j], P_z[i, j])
                else:
                    pts.append((P_y[i, j], P_z[i, j]))
            hull = _upper_hull(pts)
            hull_y.append([p[0] for p in hull])
            hull_z.append([p[1] for p in hull])
            max_len = max(max_len, len(hull))
        self.hull_y = np.zeros((n_grid, max_len))
        self.hull_z = np.zeros((n_grid, max_len))
        for i in range(n_grid):
            hy, hz = hull_y[i], hull_z[i]
            pad = max_len - len(hy)
            self.hull_y[i] = np.concatenate([hy, [hy[-1]] * pad])
            self.hull_z[i] = np.concatenate([hz, [hz[-1]] * pad])

    @staticmethod
    def _envelope_moments(v, F, A, mf, ma):
        """Maximize mf*nu(F) + ma*nu(A) under mean w, for every grid w.

        The maximum over mean-w measures of a linear functional h is the
        concave envelope of h(v) evaluated at w; the maximizer is the
        two-atom measure on the bracketing hull vertices.  Returns the
        (nu(F), nu(A)) moments of that maximizer for each grid w.
        """
        h = mf * F + ma * A
        n = v.size
        hull = [0]
        for i in range(1, n):
            while len(hull) >= 2:
                i0, i1 = hull[-2], hull[-1]
                if ((v[i1] - v[i0]) * (h[i] - h[i0])
                        - (h[i1] - h[i0]) * (v[i] - v[i0])) >= 0:
                    hull.pop()
                else:
                    break
            hull.append(i)
        hull = np.asarray(hull)
        vh = v[hull]
        seg = np.clip(np.searchsorted(vh, v, side="right") - 1, 0,
                      hull.size - 2)
        i0 = hull[seg]
        i1 = hull[seg + 1]
        span = np.where(v[i1] > v[i0], v[i1] - v[i0], 1.0)
        lam = np.where(v[i1] > v[i0], (v[i1] - v) / span, 1.0)
        ym = lam * F[i0] + (1 - lam) * F[i1]
        zm = lam * A[i0] + (1 - lam) * A[i1]
        return ym, zm

    def _query_at_nodes(self, idx: np.ndarray, c: np.ndarray) -> np.ndarray:
        inside = (c >= self.y_min[idx] - 1e-14) \
            & (c <= self.y_max[idx] + 1e-14)
        out = np.zeros(idx.shape)
        rem = ~inside
        if not np.any(rem):
            return out
        hy = self.hull_y[idx[rem]]           # (m, S)
        hz = self.hull_z[idx[rem]]
        cc = c[rem][:, None]
        y0, y1 = hy[:, :-1], hy[:, 1:]
        z0, z1 = hz[:, :-1], hz[:, 1:]
        dy, dz = y1 - y0, z1 - z0
        with np.errstate(divide="ignore", invalid="ignore"):
            end0 = np.where(z0 > 1e-13, (y0 - cc) ** 2 / z0, np.inf)
            end1 = np.where(z1 > 1e-13, (y1 - cc) ** 2 / z1, np.inf)
            best = np.minimum(end0, end1)
            denom = dy * dz
            s = np.where(denom != 0,
                         (dz * (y0 - cc) - 2.0 * dy * z0) / np.where(
                             denom == 0, 1.0, denom), -1.0)
            ys = y0 + s * dy
            zs = z0 + s * dz
            interior = (s > 0) & (s < 1) & (zs > 1e-13)
            best = np.minimum(best, np.where(
                interior, (ys - cc) ** 2 / np.where(zs > 1e-13, zs, 1.0),
                np.inf))
        out[rem] = best.min(axis=1)
        return out

    def query(self, w: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Vectorized R(w, c), linear in w between support-grid polygons.

        R is convex in w, so the interpolation never undershoots the true
        value; together with the inner polygon approximation every query
        is an upper bound on R.
        """
        w = np.asarray(w, dtype=float)
        c = np.broadcast_to(np.asarray(c, dtype=float), w.shape).astype(float)
        scale = self.w_grid.size - 1
        pos = np.clip(w, 0.0, 1.0) * scale
        lo = np.minimum(pos.astype(np.intp), scale - 1)
        lam = pos - lo
        r_lo = self._query_at_nodes(lo, c)
        r_hi = self._query_at_nodes(lo + 1, c)
        return (1.0 - lam) * r_lo + lam * r_hi


_TABLE_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _polygon_table(model: ModelCoefficients) -> _MomentPolygonTable:
    table = _TABLE_CACHE.get(model)
    if table is None:
        table = _MomentPolygonTable(model)
        _TABLE_CACHE[model] = table
    return table


# ---------------------------------------------------------------------------
# time-slice machinery shared by the path functionals
# ---------------------------------------------------------------------------

def _solve_slice(k_face: np.ndarray, rhs: np.ndarray, dx: float) -> np.ndarray:
    """Periodic variable-coefficient Poisson solve, zero-mean solution.

    -( k_{i+1/2} (Psi_{i+1} - Psi_i) - k_{i-1/2} (Psi_i - Psi_{i-1}) )/dx^2
    = rhs_i, with k_face[i] the coefficient at face i+1/2.  The one-cell
    gauge is fixed by pinning Psi_0 = 0 and dropping the (redundant)
    row 0; rhs must have zero mean.
    """
    n = rhs.size
    rhs = rhs - rhs.mean()  # kill rounding drift; solvability checked upstream
    scale = dx * dx
    b = rhs[1:] * scale
    diag = k_face[:-1] + k_face[1:]          # rows 1..n-1
    upper = -k_face[1:-1]                    # couples i to i+1, rows 1..n-2
    lower = -k_face[1:-1]
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    psi = np.empty(n)
    psi[0] = 0.0
    psi[1:] = solve_banded((1, 1), ab, b)
    return psi - psi.mean()


def _slice_cost(k_face: np.ndarray, psi: np.ndarray, dx: float) -> float:
    grad = (np.roll(psi, -1) - psi) / dx
    return 0.5 * float(np.sum(k_face * grad**2) * dx)


class _SliceProblem:
    """Midpoint-slice data of a Young-measure field (or Dirac path)."""

    def __init__(self, grid: TorusGrid, times, iota, f_mom, a2_mom):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.dts = np.diff(self.times)
        if np.any(self.dts <= 0):
            raise ValueError("times must be increasing")
        self.iota = iota
        dx = grid.dx
        self.w_mid = 0.5 * (iota[:-1] + iota[1:])
        g_mid = 0.5 * (f_mom[:-1] + f_mom[1:])
        k_mid = 0.5 * (a2_mom[:-1] + a2_mom[1:])
        self.g_face = 0.5 * (g_mid + np.roll(g_mid, -1, axis=1))
        self.k_face_raw = 0.5 * (k_mid + np.roll(k_mid, -1, axis=1))
        self.k_face = np.maximum(self.k_face_raw, _ELLIPTIC_FLOOR)
        self.w_face = 0.5 * (self.w_mid + np.roll(self.w_mid, -1, axis=1))
        self.dudt = (iota[1:] - iota[:-1]) / self.dts[:, None]
        self.div_g = (self.g_face - np.roll(self.g_face, 1, axis=1)) / dx
        self.rhs = self.dudt + self.div_g

    @property
    def n_slices(self) -> int:
        return self.dts.size


def _young_slices(mu: YoungMeasureField,
                  model: ModelCoefficients) -> _SliceProblem:
    iota = mu.moment(lambda v: v, key="iota")
    f_mom = mu.moment(model.f, key=("f", id(model)))
    a2_mom = mu.moment(model.a2, key=("a2", id(model)))
    return _SliceProblem(mu.grid, mu.times, iota, f_mom, a2_mom)


def young_i(mu: YoungMeasureField, model: ModelCoefficients,
            u0: GridField) -> float:
    """Young-measure action: (1/2) sum over slices of <k grad Psi, grad Psi>.

    Returns math.inf when the initial mean field does not match u0 (the
    boundary terms of the variational formula make the cost infinite) or
    when some slice has a right-hand side with nonzero mean (mass is not
    conserved, so no periodic potential exists).  Slices with degenerate
    coefficient are floored at 1e-10 and yield large finite costs.
    """
    if mu.grid != u0.grid:
        raise ValueError("Young measure field and u0 on different grids")
    sp = _young_slices(mu, model)
    if float(np.max(np.abs(sp.iota[0] - u0.values))) > 1e-8:
        warnings.warn("initial mean field differs from u0: cost is +inf",
                      stacklevel=2)
        return math.inf
    dx = mu.grid.dx
    total = 0.0
    for k in range(sp.n_slices):
        rhs = sp.rhs[k]
        if abs(float(rhs.mean())) * mu.grid.length > 1e-8:
            warnings.warn(f"slice {k}: nonzero-mean source (mass drift); "
                          "cost is +inf", stacklevel=2)
            return math.inf
        psi = _solve_slice(sp.k_face[k], rhs, dx)
        total += _slice_cost(sp.k_face[k], psi, dx) * sp.dts[k]
    return float(total)


def young_dual_objective(mu: YoungMeasureField, model: ModelCoefficients,
                         u0: GridField, phi_frames: np.ndarray) -> float:
    """Variational objective of an explicit test function (dual check).

    phi_frames has one row per stored frame.  Uses the same summation
    conventions as ``young_i``, so no test function can exceed the
    elliptic value (per-slice quadratic duality, exact in floats up to
    rounding).
    """
    sp = _young_slices(mu, model)
    phi = np.asarray(phi_frames, dtype=float)
    if phi.shape != sp.iota.shape:
        raise ValueError("phi_frames must match the frame stack shape")
    dx = mu.grid.dx
    total = float(np.sum(sp.iota[-1] * phi[-1]) * dx) \
        - float(np.sum(u0.values * phi[0]) * dx)
    for k in range(sp.n_slices):
        phi_mid = 0.5 * (phi[k] + phi[k + 1])
        dphi_dt = (phi[k + 1] - phi[k]) / sp.dts[k]
        grad_mid = (np.roll(phi_mid, -1) - phi_mid) / dx
        total -= sp.dts[k] * float(np.sum(sp.w_mid[k] * dphi_dt) * dx)
        total -= sp.dts[k] * float(np.sum(sp.g_face[k] * grad_mid) * dx)
        total -= sp.dts[k] * 0.5 * float(
            np.sum(sp.k_face[k] * grad_mid**2) * dx)
    return total


def i_functional(traj: Trajectory, model: ModelCoefficients,
                 n_coarse: int = 64) -> float:
    """Path cost: inf over potentials of (1/2) int R(u, Phi + c(t)) dx dt.

    The potential Phi with grad Phi = -du/dt is built by cumulative sums
    on each midpoint slice (mass conservation makes it periodic; checked
    to 1e-6 relative).  The per-slice additive constant is optimized by a
    coarse scan over the attainable flux-moment range, seeded with the
    weighted least-squares candidate, then golden refinement.  R queries
    go through the moment-polygon table, capped by the four-point-measure
    upper bound so the contraction inequality against ``young_i`` holds
    in exact arithmetic.
    """
    masses = traj.masses()
    drift = np.max(np.abs(masses - masses[0]))
    if drift > 1e-6 * max(abs(masses[0]), 1e-12):
        raise ValueError(f"mass drift {drift:.3e}: no periodic potential")
    dts = np.diff(traj.times)
    if np.max(dts) > traj.grid.dx + 1e-12:
        warnings.warn("frame stride exceeds dx: time derivative of the "
                      "path is under-resolved", stacklevel=2)
    mu = YoungMeasureField.from_trajectory(traj)
    sp = _young_slices(mu, model)
    table = _polygon_table(model)
    dx = traj.grid.dx
    total = 0.0
    for k in range(sp.n_slices):
        dudt = sp.dudt[k] - sp.dudt[k].mean()
        phi_face = -np.cumsum(dudt) * dx     # Phi at face i+1/2
        w_face = sp.w_face[k]
        g_face = sp.g_face[k]
        k_face = sp.k_face[k]

        def slice_value(c):
            shifted = phi_face + c
            r_poly = table.query(w_face, shifted)
            surrogate = (g_face - shifted) ** 2 / k_face
            return 0.5 * float(np.sum(np.minimum(r_poly, surrogate)) * dx)

        c_ls = float(np.sum((g_face - phi_face) / k_face)
                     / np.sum(1.0 / k_face))
        lo = float(np.min(g_face - phi_face)) - 0.1
        hi = float(np.max(g_face - phi_face)) + 0.1
        cands = list(np.linspace(lo, hi, n_coarse)) + [c_ls]
        vals = [slice_value(c) for c in cands]
        cbest = cands[int(np.argmin(vals))]
        span = (hi - lo) / (n_coarse - 1)
        a_, b_ = cbest - span, cbest + span
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        for _ in range(40):
            m1 = b_ - invphi * (b_ - a_)
            m2 = a_ + invphi * (b_ - a_)
            if slice_value(m1) <= slice_value(m2):
                b_ = m2
            else:
                a_ = m1
        c_star = 0.5 * (a_ + b_)
        best = min(slice_value(c_star), slice_value(c_ls), min(vals))
        total += best * dts[k]
    return float(total)


# ---------------------------------------------------------------------------
# control fields for targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ControlField:
    """Per-slice zero-mean potential driving a path toward a target.

    psi[k] is the potential on the midpoint slice [times[k], times[k+1]]
    of the target trajectory; cost = (1/2) << a^2(v) grad Psi, grad Psi >>
    is the first-order action of the target.
    """

    target: Trajectory
    slice_times: np.ndarray
    psi: np.ndarray
    cost: float

    def recompute_cost(self, model: ModelCoefficients) -> float:
        sp = _young_slices(YoungMeasureField.from_trajectory(self.target),
                           model)
        dx = self.target.grid.dx
        total = 0.0
        for k in range(sp.n_slices):
            total += _slice_cost(sp.k_face[k], self.psi[k], dx) * sp.dts[k]
        return total

    def psi_at(self, t: float) -> np.ndarray:
        """Piecewise-linear interpolation of the slice potentials."""
        st = self.slice_times
        if t <= st[0]:
            return self.psi[0]
        if t >= st[-1]:
            return self.psi[-1]
        k = int(np.searchsorted(st, t) - 1)
        lam = (t - st[k]) / (st[k + 1] - st[k])
        return (1 - lam) * self.psi[k] + lam * self.psi[k + 1]

    def target_at(self, t: float) -> np.ndarray:
        tt = self.target.times
        if t <= tt[0]:
            return self.target.data[0]
        if t >= tt[-1]:
            return self.target.data[-1]
        k = int(np.searchsorted(tt, t) - 1)
        lam = (t - tt[k]) / (tt[k + 1] - tt[k])
        return (1 - lam) * self.target.data[k] + lam * self.target.data[k + 1]


def control_from_target(target: Trajectory, model: ModelCoefficients,
                        a2_floor: float = 1e-6) -> ControlField:
    """Per-slice elliptic solves for the Dirac measure on the target.

    The target must keep a^2(v) >= a2_floor (the potential is otherwise
    meaningless as a drift; returns a ControlField with cost = +inf and
    zero potential in that case) and conserve mass to 1e-6.
    """
    a2_min = float(np.min(np.asarray(model.a2(target.data), dtype=float)))
    slice_times = 0.5 * (target.times[:-1] + target.times[1:])
    if a2_min < a2_floor:
        warnings.warn(f"target reaches a^2 = {a2_min:.3e} < floor "
                      f"{a2_floor:.1e}: control cost is +inf", stacklevel=2)
        return ControlField(target=target, slice_times=slice_times,
                            psi=np.zeros((target.n_frames - 1,
                                          target.grid.n_cells)),
                            cost=math.inf)
    masses = target.masses()
    if np.max(np.abs(masses - masses[0])) > 1e-6 * max(abs(masses[0]), 1e-12):
        raise ValueError("target does not conserve mass")
    sp = _young_slices(YoungMeasureField.from_trajectory(target), model)
    dx = target.grid.dx
    psi = np.empty((sp.n_slices, target.grid.n_cells))
    total = 0.0
    for k in range(sp.n_slices):
        rhs = sp.rhs[k]
        psi[k] = _solve_slice(sp.k_face[k], rhs, dx)
        total += _slice_cost(sp.k_face[k], psi[k], dx) * sp.dts[k]
    return ControlField(target=target, slice_times=slice_times, psi=psi,
                        cost=float(total))
