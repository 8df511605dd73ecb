"""Girsanov-tilted simulation, rare-event Monte Carlo and martingale checks.

The tilt toward a target path v adds the deterministic drift

    - div[ a(u) ( j * j * ( a(v) grad Psi ) ) ]

to the SPDE, where Psi is the control potential of the target (the
per-slice elliptic solves of :mod:`sclaw.ratefun`).  At the discrete level
this drift equals the noise term evaluated at the shifted increment
dW - eps^{-gamma} (j * (a(v) grad Psi)) dt, so the change of measure is an
exact Gaussian mean shift step by step and the log Radon-Nikodym weight

    log dQ/dP = M(T) - (1/2) [M, M](T)

is accumulated from the same draws that drive the path (bookkeeping
identity exact in float arithmetic).  Under the tilted measure the mean
log-weight is the relative entropy, whose eps^{2 gamma} rescaling should
match the deterministic control cost: that comparison is the empirical
face of the first-order rate functional.

Also here: reproducible ensemble probability estimates (one counter-keyed
stream per sample, so any parallel schedule gives bitwise-identical
results), the supermartingale tail bound check with a state-dependent
quadratic-variation budget F (admissible when F(x)/F(z) <= 2x/z - 1 for
x > z), and an Ito-formula residual that replays a stored trajectory's
noise and balances the sampled entropy production against the viscous,
noise-correction and martingale terms.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import BlowUpError, GridField, RngStream, Trajectory, TrajectoryMeta
from .model import EntropySampler, ModelCoefficients, make_kernel
from .ratefun import ControlField
from .spde import NoisePlan, SpdeParams, _face_mean, _NoiseFeeder, _StepKernel

__all__ = [
    "TiltedRun",
    "McEstimate",
    "MartingalePaths",
    "BernsteinReport",
    "simulate_tilted",
    "mc_probability",
    "brownian_paths",
    "bernstein_check",
    "ito_residual",
]


@dataclass(frozen=True)
class TiltedRun:
    """A tilted trajectory with its Girsanov bookkeeping.

    log_rn_weight = martingale_total - quadratic_variation / 2 (the log
    Radon-Nikodym derivative of the tilted w.r.t. the reference measure
    along the realized path); cost_estimate = eps^{2 gamma} *
    quadratic_variation / 2, directly comparable to the first-order
    action of the target.
    """

    trajectory: Trajectory
    log_rn_weight: float
    martingale_total: float
    quadratic_variation: float
    cost_estimate: float


@dataclass(frozen=True)
class McEstimate:
    """Ensemble probability estimate with a Wilson 95% interval."""

    n_samples: int
    hits: int
    errors: int
    estimate: float
    wilson_low: float
    wilson_high: float


def _wilson(hits: int, n: int, z: float = 1.959963984540054):
    if n == 0:
        return 0.0, 0.0, 1.0
    p = hits / n
    denom = 1.0 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return p, max(0.0, center - half), min(1.0, center + half)


def simulate_tilted(model: ModelCoefficients, params: SpdeParams,
                    plan: NoisePlan, control: ControlField, u0: GridField,
                    stream: RngStream) -> TiltedRun:
    """Integrate the tilted SPDE and accumulate the Girsanov weight.

    The control slices are interpolated linearly onto the stepping grid.
    With a zero potential the trajectory coincides bitwise with the
    untilted scheme under the same stream and the weight vanishes.
    """
    grid = u0.grid
    if np.min(u0.values) < 0.0 or np.max(u0.values) > 1.0:
        raise ValueError("u0 must take values in [0, 1]")
    if control.target.grid != grid:
        raise ValueError("control target lives on a different grid")
    if control.target.times[-1] < params.T - 1e-9:
        raise ValueError("control does not cover the time horizon")
    n_steps = params.n_steps
    stride = params.store_stride
    dt, dx = params.dt, grid.dx
    eps_gamma = params.epsilon ** params.gamma
    data = np.empty((n_steps // stride + 1, grid.n_cells))
    data[0] = u0.values
    u = u0.values.copy()
    kern = _StepKernel.from_params(model, params, plan)
    feeder = _NoiseFeeder(stream, grid.n_cells,
                          math.sqrt(plan.variance_per_cell(dt)))
    mart = 0.0
    qvar = 0.0
    for k in range(n_steps):
        t = k * dt
        psi = control.psi_at(t)
        v = control.target_at(t)
        a_v_face = np.sqrt(np.maximum(np.asarray(
            model.a2(np.clip(_face_mean(v), 0.0, 1.0)), dtype=float), 0.0))
        g_face = a_v_face * (np.roll(psi, -1) - psi) / dx
        jg = plan.convolve(g_face)
        jjg = plan.convolve(jg)
        a_u_face = np.sqrt(np.maximum(np.asarray(
            model.a2(np.clip(_face_mean(u), 0.0, 1.0)), dtype=float), 0.0))
        drift_flux = a_u_face * jjg
        xi = feeder.next()
        u = kern(u, u, xi, drift_flux=drift_flux)
        if not np.isfinite(u.sum()):
            raise BlowUpError(step=k + 1, time=(k + 1) * dt)
        dqv = dt * float(np.sum(jg**2) * dx) / eps_gamma**2
        dmart_tilted = -float(np.sum(jg * xi) * dx) / eps_gamma
        qvar += dqv
        mart += dmart_tilted + dqv  # the reference-measure martingale
        if (k + 1) % stride == 0:
            data[(k + 1) // stride] = u
    times = np.arange(data.shape[0]) * (stride * dt)
    meta = TrajectoryMeta(
        scheme="tilted-em", epsilon=params.epsilon, gamma=params.gamma,
        dt=dt, master_seed=stream.master_seed,
        stream_index=stream.stream_index, store_stride=stride,
        extra={"kernel_shape": plan.kernel.shape,
               "kernel_width": repr(plan.kernel.width),
               "model": model.name})
    traj = Trajectory(grid, times, data, meta)
    log_rn = mart - 0.5 * qvar
    return TiltedRun(trajectory=traj, log_rn_weight=log_rn,
                     martingale_total=mart, quadratic_variation=qvar,
                     cost_estimate=0.5 * qvar * eps_gamma**2)


# ---------------------------------------------------------------------------
# reproducible ensemble probabilities
# ---------------------------------------------------------------------------

_FORK_CONTEXT: dict = {}


def _mc_worker(indices):
    ctx = _FORK_CONTEXT
    from .spde import simulate
    out = []
    for i in indices:
        stream = RngStream(ctx["master_seed"], i)
        try:
            traj = simulate(ctx["model"], ctx["params"], ctx["plan"],
                            ctx["u0"], stream, scheme=ctx["scheme"],
                            n_dyadic=ctx["n_dyadic"])
            out.append((i, bool(ctx["event"](traj)), False))
        except Exception:
            out.append((i, False, True))
    return out


def mc_probability(event: Callable, model: ModelCoefficients,
                   params: SpdeParams, plan: NoisePlan, u0: GridField,
                   n: int, master_seed: int, scheme: str = "em",
                   n_dyadic: int = 0, n_workers: int = 1) -> McEstimate:
    """Probability of a trajectory event over n independent samples.

    Sample i runs on the (master_seed, i) stream, so the estimate is a
    deterministic function of master_seed no matter how the samples are
    scheduled; predicate failures are counted separately as errors, never
    as hits.  Parallel workers inherit the task by fork, keeping the same
    per-index streams.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    ctx = {"event": event, "model": model, "params": params, "plan": plan,
           "u0": u0, "scheme": scheme, "n_dyadic": n_dyadic,
           "master_seed": master_seed}
    results = {}
    if n_workers > 1:
        _FORK_CONTEXT.clear()
        _FORK_CONTEXT.update(ctx)
        chunks = [list(range(i, n, n_workers)) for i in range(n_workers)]
        try:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                for chunk_out in pool.map(_mc_worker, chunks):
                    for i, hit, err in chunk_out:
                        results[i] = (hit, err)
        finally:
            _FORK_CONTEXT.clear()
    else:
        for i, hit, err in _mc_worker_serial(ctx, range(n)):
            results[i] = (hit, err)
    hits = sum(1 for i in range(n) if results[i][0])
    errors = sum(1 for i in range(n) if results[i][1])
    est, lo, hi = _wilson(hits, n)
    return McEstimate(n_samples=n, hits=hits, errors=errors, estimate=est,
                      wilson_low=lo, wilson_high=hi)


def _mc_worker_serial(ctx, indices):
    from .spde import simulate
    for i in indices:
        stream = RngStream(ctx["master_seed"], i)
        try:
            traj = simulate(ctx["model"], ctx["params"], ctx["plan"],
                            ctx["u0"], stream, scheme=ctx["scheme"],
                            n_dyadic=ctx["n_dyadic"])
            yield i, bool(ctx["event"](traj)), False
        except Exception:
            yield i, False, True


# ---------------------------------------------------------------------------
# supermartingale tail bound with a quadratic-variation budget
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MartingalePaths:
    """Discrete sample paths with their quadratic variation."""

    times: np.ndarray
    paths: np.ndarray      # (n_paths, n_times)
    qv: np.ndarray         # (n_paths, n_times)


def brownian_paths(n_paths: int, n_steps: int, T: float,
                   stream: RngStream, chunk: int = 10_000) -> MartingalePaths:
    """Standard Brownian paths on [0, T]; [X, X](t) = t."""
    dt = T / n_steps
    times = np.linspace(0.0, T, n_steps + 1)
    paths = np.empty((n_paths, n_steps + 1))
    gen = stream.generator
    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        incr = gen.standard_normal((m, n_steps)) * math.sqrt(dt)
        paths[done:done + m, 0] = 0.0
        np.cumsum(incr, axis=1, out=paths[done:done + m, 1:])
        done += m
    qv = np.broadcast_to(times, paths.shape)
    return MartingalePaths(times=times, paths=paths, qv=qv)


@dataclass(frozen=True)
class BernsteinReport:
    zeta: float
    bound: float
    frequency: float
    n_paths: int
    stderr: float

    @property
    def margin(self) -> float:
        return self.bound - self.frequency

    @property
    def holds_within_3se(self) -> bool:
        return self.frequency <= self.bound + 3.0 * self.stderr


def bernstein_check(samples: MartingalePaths, F: Callable,
                    zeta: float) -> BernsteinReport:
    """Empirical tail frequency against exp(-zeta^2 / (2 F(zeta))).

    The event is { sup_t X >= zeta and [X,X](T) <= F(sup_t X) }.  F must
    satisfy F(x)/F(zeta) <= 2 x/zeta - 1 for x > zeta (any nonincreasing,
    affine or subaffine budget qualifies); checked on a grid before
    counting.
    """
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    fz = float(F(zeta))
    if fz <= 0:
        raise ValueError("F(zeta) must be positive")
    xs = np.linspace(zeta * (1 + 1e-9), zeta + 10.0, 400)
    ratio = np.asarray([float(F(x)) for x in xs]) / fz
    if np.any(ratio > 2 * xs / zeta - 1 + 1e-9):
        bad = xs[np.argmax(ratio - (2 * xs / zeta - 1))]
        raise ValueError(
            f"inadmissible budget: F(x)/F(zeta) > 2x/zeta - 1 at x = "
            f"{bad:.6g}")
    sup = samples.paths.max(axis=1)
    qv_end = samples.qv[:, -1]
    fsup = np.asarray([float(F(s)) for s in sup]) \
        if not _vectorized(F) else np.asarray(F(sup), dtype=float)
    event = (sup >= zeta) & (qv_end <= fsup)
    n = samples.paths.shape[0]
    freq = float(np.mean(event))
    bound = math.exp(-zeta**2 / (2.0 * fz))
    se = math.sqrt(max(freq * (1 - freq), 1e-12) / n)
    return BernsteinReport(zeta=zeta, bound=bound, frequency=freq,
                           n_paths=n, stderr=se)


def _vectorized(F) -> bool:
    try:
        out = F(np.array([1.0, 2.0]))
        return np.asarray(out).shape == (2,)
    except Exception:
        return False


# ---------------------------------------------------------------------------
# Ito-formula residual by noise replay
# ---------------------------------------------------------------------------

def ito_residual(traj: Trajectory, model: ModelCoefficients,
                 params: SpdeParams, sampler: EntropySampler) -> float:
    """Weak-consistency residual of the stochastic scheme.

    Replays the trajectory's noise from its seed metadata and balances
    the sampled entropy production (initial + time-flux terms) against
    the viscous dissipation, the two noise Ito corrections and the
    reconstructed martingale.  The residual is O(dt) + O(dx) for the
    explicit scheme; it reduces to pure quadrature error when the noise
    coefficient vanishes.
    """
    meta = traj.meta
    if meta.scheme != "em":
        raise ValueError("noise replay implemented for the plain scheme only")
    if meta.dt <= 0:
        raise ValueError("trajectory lacks seed/step metadata for replay")
    for key in ("kernel_shape", "kernel_width"):
        if key not in meta.extra:
            raise ValueError(f"trajectory metadata missing {key} for replay")
    if not (math.isclose(meta.epsilon, params.epsilon)
            and math.isclose(meta.gamma, params.gamma)
            and math.isclose(meta.dt, params.dt)):
        raise ValueError("params do not match the trajectory metadata")
    grid = traj.grid
    kernel = make_kernel(meta.extra["kernel_shape"],
                         float(meta.extra["kernel_width"]), grid)
    plan = NoisePlan(kernel)
    # the discrete noise quadratic variation realizes the forward-difference
    # kernel gradient norm (the stored centered norm converges to the same
    # continuum value but differs at kinks by O(dx/width))
    j = kernel.samples.values
    grad_fwd_sq = float(np.sum(((np.roll(j, -1) - j) / grid.dx) ** 2)
                        * grid.dx)
    stream = RngStream(meta.master_seed, meta.stream_index)
    dt, dx = params.dt, grid.dx
    eps = params.epsilon
    eps2g = eps ** (2 * params.gamma)
    x_cell = grid.cell_centers
    x_face = x_cell + 0.5 * dx
    kern = _StepKernel.from_params(model, params, plan)
    feeder = _NoiseFeeder(stream, grid.n_cells,
                          math.sqrt(plan.variance_per_cell(dt)))
    u = traj.data[0].copy()
    lhs_flux = 0.0
    visc = 0.0
    ito_flat = 0.0
    ito_grad = 0.0
    mart = 0.0
    n_steps = params.n_steps
    stride = meta.store_stride
    for k in range(n_steps):
        t = k * dt
        theta_t = np.asarray(sampler.theta_t(u, t, x_cell), dtype=float)
        q_x = np.asarray(sampler.Qx(u, t, x_cell), dtype=float)
        lhs_flux += dt * float(np.sum(theta_t + q_x) * dx)
        grad_u = (np.roll(u, -1) - u) / dx
        u_face = np.clip(_face_mean(u), 0.0, 1.0)
        tvv_f = np.asarray(sampler.theta_vv(u_face, t, x_face), dtype=float)
        tvx_f = np.asarray(sampler.theta_vx(u_face, t, x_face), dtype=float)
        d_f = np.asarray(model.D(u_face), dtype=float)
        a_f = model.a(u_face)
        ap_f = model.a_prime(u_face)
        visc += dt * float(np.sum(
            (tvv_f * grad_u + tvx_f) * d_f * grad_u) * dx)
        tvv_c = np.asarray(sampler.theta_vv(u, t, x_cell), dtype=float)
        a2_c = np.asarray(model.a2(u), dtype=float)
        ito_flat += dt * float(np.sum(tvv_c * a2_c) * dx)
        ito_grad += dt * float(np.sum(tvv_f * ap_f**2 * grad_u**2) * dx)
        integrand = a_f * (tvv_f * grad_u + tvx_f)
        xi = feeder.next()
        mart -= eps ** params.gamma * float(
            np.sum(plan.convolve(integrand) * xi) * dx)
        u = kern(u, u, xi)
        if (k + 1) % stride == 0:
            stored = traj.data[(k + 1) // stride]
            if not np.array_equal(stored, u):
                raise ValueError(
                    "replayed path deviates from the stored frames: "
                    "metadata and arguments are inconsistent")
    lhs = -float(np.sum(np.asarray(
        sampler.theta(traj.data[0], 0.0, x_cell), dtype=float)) * dx) \
        - lhs_flux
    rhs = (-0.5 * eps * visc
           + 0.5 * eps2g * grad_fwd_sq * ito_flat
           + 0.5 * eps2g * kernel.norm_l2**2 * ito_grad
           + mart)
    return abs(lhs - rhs)
