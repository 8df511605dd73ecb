"""Grids, fields, trajectories and deterministic random streams.

Everything in this package lives on the unit torus [0, 1) discretized into
N equal cells (finite-volume convention: a field value is the cell average,
attached to the cell center x_i = (i + 1/2) dx).  This module provides

  * ``TorusGrid`` / ``GridField`` / ``Trajectory`` containers,
  * the L1 and discrete H^{-1} distances between fields,
  * counter-based Gaussian streams (``RngStream``) that are reproducible
    across platforms and safe to hand out to parallel workers,
  * the binary trajectory container format and a CSV exporter.

All containers are immutable after construction and can be shared freely
between threads; an ``RngStream`` is stateful and must be owned by a single
consumer at a time.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "TorusGrid",
    "GridField",
    "TrajectoryMeta",
    "Trajectory",
    "RngStream",
    "GridMismatchError",
    "BlowUpError",
    "l1_distance",
    "h_minus1_distance",
    "h_minus1_distance_dense",
    "gaussian_field",
    "l1_space_time",
    "write_trajectory",
    "read_trajectory",
    "trajectory_to_csv",
]

TRAJECTORY_MAGIC = b"SCLW1"
_HEADER_STRUCT = struct.Struct("<5s3xIIdddQ16x")  # 64 bytes total
assert _HEADER_STRUCT.size == 64


class GridMismatchError(ValueError):
    """Raised when an operation mixes fields living on different grids."""


class BlowUpError(RuntimeError):
    """A time stepper produced a non-finite field.

    Carries the step index and physical time at which the overflow was
    detected; usually the signal of a violated stability bound.
    """

    def __init__(self, step: int, time: float, message: str = ""):
        self.step = step
        self.time = time
        super().__init__(
            message or f"solution blew up at step {step} (t = {time:.6g})"
        )


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the unit torus; ``dx`` is always derived."""

    n_cells: int
    length: float = 1.0

    def __post_init__(self):
        if self.n_cells < 8:
            raise ValueError(f"n_cells must be >= 8, got {self.n_cells}")
        if self.length != 1.0:
            raise ValueError("only the unit torus is supported")

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def cell_offsets(self) -> np.ndarray:
        """Signed offsets k*dx wrapped to [-1/2, 1/2); kernel sampling grid."""
        x = np.arange(self.n_cells) * self.dx
        return (x + 0.5 * self.length) % self.length - 0.5 * self.length


@dataclass(frozen=True)
class GridField:
    """A real field on a ``TorusGrid`` (one value per cell)."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.n_cells,):
            raise ValueError(
                f"values shape {v.shape} incompatible with grid of "
                f"{self.grid.n_cells} cells"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("GridField values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def mass(self) -> float:
        """Total mass, sum of cell averages times dx."""
        return float(np.sum(self.values) * self.grid.dx)


@dataclass(frozen=True)
class TrajectoryMeta:
    """Scheme and reproducibility metadata attached to a trajectory."""

    scheme: str
    epsilon: float = 0.0
    gamma: float = 0.0
    dt: float = 0.0
    master_seed: int = 0
    stream_index: int = 0
    store_stride: int = 1
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed stack of fields on a common grid.

    ``data[k]`` is the frame at ``times[k]``; frames may be strided (only
    every ``meta.store_stride``-th step of the generating scheme stored).
    """

    grid: TorusGrid
    times: np.ndarray
    data: np.ndarray
    meta: TrajectoryMeta

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        d = np.asarray(self.data, dtype=np.float64)
        if t.ndim != 1 or d.shape != (t.size, self.grid.n_cells):
            raise ValueError("times/data shapes inconsistent with grid")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing from 0")
        t = t.copy()
        d = d.copy()
        t.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "data", d)

    @property
    def n_frames(self) -> int:
        return self.times.size

    def frame(self, k: int) -> GridField:
        return GridField(self.grid, self.data[k])

    def masses(self) -> np.ndarray:
        return self.data.sum(axis=1) * self.grid.dx

    def with_meta(self, **kwargs) -> "Trajectory":
        return Trajectory(self.grid, self.times, self.data,
                          replace(self.meta, **kwargs))


@dataclass
class RngStream:
    """Counter-based Gaussian stream, keyed by (master_seed, stream_index).

    Two streams with the same key produce bit-identical draws on every
    platform (Philox is counter-based); distinct keys are statistically
    independent, so ensembles can hand stream ``i`` to trajectory ``i``
    and remain reproducible under any parallel schedule.
    """

    master_seed: int
    stream_index: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        if not 0 <= self.stream_index < 2**64:
            raise ValueError("stream_index must fit in 64 bits")

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = (self.master_seed << 64) | self.stream_index
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def normal(self, n: int) -> np.ndarray:
        """Next n standard Gaussian draws (advances the stream)."""
        return self.generator.standard_normal(n)

    def substream(self, index: int) -> "RngStream":
        return RngStream(self.master_seed, index)


def _check_same_grid(a: GridField, b: GridField):
    if a.grid != b.grid:
        raise GridMismatchError(
            f"fields on different grids: {a.grid} vs {b.grid}"
        )


def l1_distance(a: GridField, b: GridField) -> float:
    """L1(T) distance between two fields, sum |a_i - b_i| dx."""
    _check_same_grid(a, b)
    return float(np.sum(np.abs(a.values - b.values)) * a.grid.dx)


def h_minus1_distance(a: GridField, b: GridField) -> float:
    """Discrete H^{-1}(T) distance between two fields.

    Computed as the dual norm sup { <a-b, phi> : ||phi||_L2^2 +
    ||grad phi||_L2^2 <= 1 } over grid test functions, where the gradient
    is the forward difference.  Evaluated spectrally: with c = a - b and
    lambda_k = 4 sin^2(pi k / N) / dx^2 the discrete Laplacian symbol,

        d(a, b) = sqrt( dx/N * sum_k |c_hat_k|^2 / (1 + lambda_k) ).

    Exact for the discrete dual ball (the dense quadratic program solved
    by :func:`h_minus1_distance_dense` yields the same value).
    """
    _check_same_grid(a, b)
    n = a.grid.n_cells
    dx = a.grid.dx
    c_hat = np.fft.fft(a.values - b.values)
    k = np.arange(n)
    lam = 4.0 * np.sin(np.pi * k / n) ** 2 / dx**2
    return float(np.sqrt(dx / n * np.sum(np.abs(c_hat) ** 2 / (1.0 + lam))))


def h_minus1_distance_dense(a: GridField, b: GridField) -> float:
    """Dense linear-algebra evaluation of the same discrete dual norm.

    Builds the Gram matrix M = dx (I + G^T G) of the constraint quadratic
    form (G the forward-difference gradient) and returns
    sqrt(r^T M^{-1} r) with r_i = (a_i - b_i) dx.  O(N^3); kept as an
    independent test oracle for the spectral route.
    """
    _check_same_grid(a, b)
    n = a.grid.n_cells
    dx = a.grid.dx
    eye = np.eye(n)
    shift = np.roll(eye, -1, axis=1)
    grad = (shift - eye) / dx
    m = dx * (eye + grad.T @ grad)
    r = (a.values - b.values) * dx
    return float(np.sqrt(r @ np.linalg.solve(m, r)))


def gaussian_field(stream: RngStream, grid: TorusGrid,
                   variance_per_cell: float) -> GridField:
    """I.i.d. centered Gaussian field with the given per-cell variance.

    With variance dt/dx this realizes a time increment of the cylindrical
    noise: Var <dW, phi> = dt ||phi||_L2^2 up to O(dx) quadrature.
    """
    if variance_per_cell < 0:
        raise ValueError("variance_per_cell must be nonnegative")
    if variance_per_cell == 0.0:
        return GridField(grid, np.zeros(grid.n_cells))
    draws = stream.normal(grid.n_cells) * np.sqrt(variance_per_cell)
    return GridField(grid, draws)


def l1_space_time(traj: Trajectory, other) -> float:
    """L1([0,T] x T) distance between a trajectory and a reference.

    ``other`` is a second trajectory on the same grid and times, or a
    callable (t, x_centers) -> field values.  Trapezoid rule in time.
    """
    x = traj.grid.cell_centers
    if isinstance(other, Trajectory):
        if other.grid != traj.grid or not np.array_equal(other.times,
                                                         traj.times):
            raise GridMismatchError("trajectories not aligned")
        ref = other.data
    else:
        ref = np.stack([np.asarray(other(t, x), dtype=float)
                        for t in traj.times])
    spatial = np.sum(np.abs(traj.data - ref), axis=1) * traj.grid.dx
    return float(np.trapezoid(spatial, traj.times))


# ---------------------------------------------------------------------------
# on-disk format: 64-byte header + row-major float64 frames + text sidecar
# ---------------------------------------------------------------------------

def write_trajectory(traj: Trajectory, path) -> None:
    """Write the binary container and its key=value sidecar.

    Header (little endian): magic "SCLW1", n_cells, frame count, epsilon,
    gamma, dt, master seed.  Frames follow as row-major float64.  Times
    must be uniform (they always are for the schemes in this package) and
    are reconstructed from the sidecar on read.
    """
    path = Path(path)
    dt_frame = np.diff(traj.times)
    if traj.n_frames > 1 and not np.allclose(dt_frame, dt_frame[0],
                                             rtol=1e-12, atol=1e-15):
        raise ValueError("only uniformly-timed trajectories are serializable")
    header = _HEADER_STRUCT.pack(
        TRAJECTORY_MAGIC, traj.grid.n_cells, traj.n_frames,
        traj.meta.epsilon, traj.meta.gamma, traj.meta.dt,
        traj.meta.master_seed,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(traj.data, dtype="<f8").tobytes())
    lines = {
        "scheme": traj.meta.scheme,
        "stream_index": traj.meta.stream_index,
        "store_stride": traj.meta.store_stride,
        "frame_dt": repr(float(dt_frame[0]) if traj.n_frames > 1 else 0.0),
        "t_end": repr(float(traj.times[-1])),
    }
    lines.update({f"extra.{k}": v for k, v in sorted(traj.meta.extra.items())})
    sidecar = "".join(f"{k}={v}\n" for k, v in lines.items())
    path.with_suffix(path.suffix + ".meta").write_text(sidecar)


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    raw = path.read_bytes()
    magic, n_cells, n_frames, eps, gamma, dt, seed = _HEADER_STRUCT.unpack(
        raw[:_HEADER_STRUCT.size]
    )
    if magic != TRAJECTORY_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    data = np.frombuffer(raw[_HEADER_STRUCT.size:], dtype="<f8")
    data = data.reshape(n_frames, n_cells).astype(np.float64)
    meta_kv = {}
    sidecar = path.with_suffix(path.suffix + ".meta")
    if sidecar.exists():
        for line in sidecar.read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                meta_kv[k] = v
    frame_dt = float(meta_kv.get("frame_dt", "0") or 0.0)
    if n_frames > 1 and frame_dt <= 0:
        raise ValueError(f"{path}: sidecar missing frame_dt")
    times = np.arange(n_frames) * frame_dt
    extra = {k[len("extra."):]: v for k, v in meta_kv.items()
             if k.startswith("extra.")}
    meta = TrajectoryMeta(
        scheme=meta_kv.get("scheme", "unknown"),
        epsilon=eps, gamma=gamma, dt=dt, master_seed=seed,
        stream_index=int(meta_kv.get("stream_index", "0")),
        store_stride=int(meta_kv.get("store_stride", "1")),
        extra=extra,
    )
    return Trajectory(TorusGrid(n_cells), times, data, meta)


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """One row per (t, x, value)."""
    x = traj.grid.cell_centers
    with open(path, "w") as fh:
        fh.write("t,x,value\n")
        for k, t in enumerate(traj.times):
            for i in range(traj.grid.n_cells):
                fh.write(f"{t!r},{x[i]!r},{traj.data[k, i]!r}\n")
