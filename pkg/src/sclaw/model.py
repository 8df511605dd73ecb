"""Model coefficients, mollifier kernels and entropy machinery.

A model is the coefficient triple (f, D, a^2) on the state interval [0, 1]:
flux, diffusion and fluctuation.  The fluctuation coefficient is carried as
a^2 (all functionals downstream use a^2 or the ratio D/a^2); the amplitude
a = sqrt(a^2) and its derivative are derived with a guarded square root.

The module also builds the spatial mollifier kernels that regularize the
noise, conjugated entropy fluxes q' = eta' f', entropy samplers (space-time
modulated entropies), and a numeric validation report for the standing
hypotheses on the coefficients:

  H1  f Lipschitz on [0,1]
  H2  D Lipschitz and uniformly positive
  H3  a^2(0) = a^2(1) = 0 and a^2 > 0 inside (0,1)
  H4  kernels positive with unit mass

together with the scalar smallness indicators of the kernel family and the
coercivity margin D - (a')^2 ||j||_L2^2 used by the splitting scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import GridField, TorusGrid

__all__ = [
    "ModelCoefficients",
    "MollifierKernel",
    "EntropyPair",
    "EntropySampler",
    "ValidationReport",
    "preset",
    "polynomial_model",
    "make_kernel",
    "conjugate_flux",
    "entropy_pair",
    "kruzkov_pair",
    "product_sampler",
    "validate_hypotheses",
]

_VALIDATION_GRID = 10_001  # 10^4 intervals


def _poly(coeffs: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    c = tuple(float(x) for x in coeffs)

    def p(v):
        v = np.asarray(v, dtype=float)
        out = np.full_like(v, c[-1])
        for ck in c[-2::-1]:  # Horner
            out *= v
            out += ck
        return out

    return p


def _poly_derivative(coeffs: Sequence[float]):
    c = np.asarray(list(coeffs), dtype=float)
    dc = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1)

    def dp(v):
        return np.polynomial.polynomial.polyval(np.asarray(v, dtype=float), dc)

    return dp


@dataclass(eq=False)
class ModelCoefficients:
    """Coefficient triple (f, D, a2) with estimated regularity constants.

    ``f``, ``D`` and ``a2`` are vectorized callables on [0, 1].  ``df`` is
    the flux derivative when available (presets provide it exactly);
    otherwise it is estimated by central differences on a fine grid.
    Lipschitz constants and inf D are estimated on the same grid, since
    coefficients arrive as black-box functions.
    """

    f: Callable
    D: Callable
    a2: Callable
    df: Callable | None = None
    name: str = "custom"
    lip_f: float = field(init=False)
    lip_D: float = field(init=False)
    d_min: float = field(init=False)

    def __post_init__(self):
        v = np.linspace(0.0, 1.0, _VALIDATION_GRID)
        fv = np.asarray(self.f(v), dtype=float)
        dv = np.asarray(self.D(v), dtype=float)
        h = v[1] - v[0]
        with np.errstate(all="ignore"):
            self.lip_f = float(np.nanmax(np.abs(np.diff(fv)) / h))
            self.lip_D = float(np.nanmax(np.abs(np.diff(dv)) / h))
            self.d_min = float(np.nanmin(dv))
        if self.df is None:
            dense = np.linspace(0.0, 1.0, 4 * _VALIDATION_GRID - 3)
            fd = np.gradient(np.asarray(self.f(dense), dtype=float), dense)
            self.df = lambda u: np.interp(np.asarray(u, dtype=float),
                                          dense, fd)
        self._eo_tables = None
        # constant-coefficient fast paths for the hot stepping loops
        self.d_constant = float(dv[0]) if np.ptp(dv) == 0.0 else None
        a2v = np.asarray(self.a2(v), dtype=float)
        self.a2_constant = float(a2v[0]) if np.ptp(a2v) == 0.0 else None

    # -- derived fluctuation amplitude ------------------------------------

    def a(self, v):
        """a = sqrt(max(a2, 0)); H3 grants continuity, not smoothness."""
        return np.sqrt(np.maximum(np.asarray(self.a2(v), dtype=float), 0.0))

    def a_prime(self, v, h: float = 1e-5):
        """Difference-quotient derivative of a, one-sided at the endpoints."""
        v = np.asarray(v, dtype=float)
        lo = np.clip(v - h, 0.0, 1.0)
        hi = np.clip(v + h, 0.0, 1.0)
        return (self.a(hi) - self.a(lo)) / np.maximum(hi - lo, 1e-300)

    # -- Engquist-Osher splitting of the flux ------------------------------

    def _build_eo_tables(self, n: int = 4097):
        v = np.linspace(0.0, 1.0, n)
        df = np.asarray(self.df(v), dtype=float)
        pos = np.maximum(df, 0.0)
        neg = np.minimum(df, 0.0)
        h = v[1] - v[0]
        cum_pos = np.concatenate(
            ([0.0], np.cumsum(0.5 * (pos[1:] + pos[:-1]) * h)))
        cum_neg = np.concatenate(
            ([0.0], np.cumsum(0.5 * (neg[1:] + neg[:-1]) * h)))
        f0 = float(np.asarray(self.f(0.0), dtype=float))
        self._eo_tables = (n - 1, f0 + cum_pos, cum_neg)

    def _eo_lookup(self, table, u):
        # uniform-grid linear interpolation; out-of-range states clamp,
        # matching the constant extension of the coefficients
        scale, = (self._eo_tables[0],)
        pos = np.clip(np.asarray(u, dtype=float), 0.0, 1.0) * scale
        idx = np.minimum(pos.astype(np.intp), scale - 1)
        frac = pos - idx
        lo = table[idx]
        return lo + frac * (table[idx + 1] - lo)

    def flux_eo(self, u_left: np.ndarray, u_right: np.ndarray) -> np.ndarray:
        """Monotone Engquist-Osher numerical flux F(u_l, u_r).

        F = f^+(u_l) + f^-(u_r) with f^+/f^- the cumulative positive and
        negative parts of f'; handles non-convex Lipschitz fluxes.  States
        are clipped to [0, 1] (coefficients extend constantly outside).
        """
        if self._eo_tables is None:
            self._build_eo_tables()
        _, fplus, fminus = self._eo_tables
        return self._eo_lookup(fplus, u_left) + self._eo_lookup(fminus,
                                                                u_right)


def preset(name: str, **kwargs) -> ModelCoefficients:
    """Named coefficient presets addressable from configs.

    tasep    f = a2 = u(1-u), D = 1  (exclusion-process coefficients)
    burgers  f = u^2/2, D = 1, a2 = u(1-u)
    linear   f = c*u (c via keyword, default 1), D = 1, a2 = u(1-u)
    """
    if name == "tasep":
        return ModelCoefficients(
            f=_poly([0.0, 1.0, -1.0]), D=_poly([1.0]),
            a2=_poly([0.0, 1.0, -1.0]), df=_poly_derivative([0.0, 1.0, -1.0]),
            name="tasep")
    if name == "burgers":
        return ModelCoefficients(
            f=_poly([0.0, 0.0, 0.5]), D=_poly([1.0]),
            a2=_poly([0.0, 1.0, -1.0]), df=_poly_derivative([0.0, 0.0, 0.5]),
            name="burgers")
    if name == "linear":
        c = float(kwargs.get("c", 1.0))
        return ModelCoefficients(
            f=_poly([0.0, c]), D=_poly([1.0]),
            a2=_poly([0.0, 1.0, -1.0]), df=_poly_derivative([0.0, c]),
            name=f"linear(c={c})")
    raise KeyError(f"unknown model preset {name!r}")


def polynomial_model(f_coeffs, D_coeffs, a2_coeffs,
                     name: str = "custom") -> ModelCoefficients:
    """Model from polynomial coefficient lists (lowest degree first)."""
    return ModelCoefficients(
        f=_poly(f_coeffs), D=_poly(D_coeffs), a2=_poly(a2_coeffs),
        df=_poly_derivative(f_coeffs), name=name)


# ---------------------------------------------------------------------------
# mollifier kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MollifierKernel:
    """Sampled positive unit-mass kernel with its norms.

    ``samples`` holds kernel values on the signed-offset grid k*dx wrapped
    to [-1/2, 1/2), so circular convolution against cell fields is a plain
    product in Fourier space.  ``dist_w11`` is the W^{-1,1} distance of the
    kernel to the flat kernel 1 (infimum of ||J||_L1 over primitives J of
    j - 1; primitives differ by constants on the torus).
    """

    grid: TorusGrid
    samples: GridField
    width: float
    shape: str
    norm_l2: float
    norm_grad_l2: float
    dist_w11: float

    def fourier(self) -> np.ndarray:
        """rfft of the kernel scaled so convolution = irfft(fourier * rfft)."""
        return np.fft.rfft(self.samples.values) * self.grid.dx

    def convolve(self, values: np.ndarray) -> np.ndarray:
        """Circular convolution (j * g) on the grid."""
        return np.fft.irfft(self.fourier() * np.fft.rfft(values),
                            n=self.grid.n_cells)


def _kernel_profile(shape: str, width: float, x: np.ndarray) -> np.ndarray:
    half = width / 2.0
    if shape == "triangle":
        return np.maximum(0.0, (1.0 - np.abs(x) / half)) * (2.0 / width)
    if shape == "uniform":
        return np.where(np.abs(x) <= half, 1.0 / width, 0.0)
    if shape == "gaussian-truncated":
        sigma = width / 6.0  # 3-sigma truncation
        prof = np.exp(-0.5 * (x / sigma) ** 2)
        return np.where(np.abs(x) <= half, prof, 0.0)
    raise KeyError(f"unknown kernel shape {shape!r}")


def make_kernel(shape: str, width: float, grid: TorusGrid) -> MollifierKernel:
    """Sample, clip and renormalize a mollifier kernel on the grid.

    width must resolve the grid (>= 2 dx) and fit the torus (<= 1).  The
    samples are clipped to >= 0 and renormalized so sum(j) dx = 1 exactly;
    the L2 norm is computed by quadrature, the gradient norm by centered
    differences, and dist_w11 by minimizing sum |J_i + c| dx over the
    additive constant (optimal c is the median shift).
    """
    dx = grid.dx
    if width < 2 * dx:
        raise ValueError(f"kernel width {width} below grid resolution 2dx = "
                         f"{2 * dx}")
    if width > grid.length:
        raise ValueError(f"kernel width {width} exceeds the torus")
    x = grid.cell_offsets
    j = np.maximum(_kernel_profile(shape, width, x), 0.0)
    total = np.sum(j) * dx
    if total <= 0:
        raise ValueError("kernel sampled to zero mass")
    j = j / total
    norm_l2 = float(np.sqrt(np.sum(j**2) * dx))
    grad = (np.roll(j, -1) - np.roll(j, 1)) / (2 * dx)
    norm_grad_l2 = float(np.sqrt(np.sum(grad**2) * dx))
    primitive = np.cumsum(j - 1.0 / grid.length) * dx
    c = -float(np.median(primitive))
    dist_w11 = float(np.sum(np.abs(primitive + c)) * dx)
    return MollifierKernel(
        grid=grid, samples=GridField(grid, j), width=width, shape=shape,
        norm_l2=norm_l2, norm_grad_l2=norm_grad_l2, dist_w11=dist_w11)


# ---------------------------------------------------------------------------
# entropies, conjugated fluxes, samplers
# ---------------------------------------------------------------------------

def _piecewise_chebyshev_antiderivative(g: Callable, breakpoints,
                                        degree: int = 96):
    """Antiderivative of g on [0,1] as piecewise Chebyshev series, F(0) = 0.

    Spectrally accurate for piecewise-smooth g; kinks must be listed in
    breakpoints.
    """
    knots = sorted({0.0, 1.0, *(float(b) for b in breakpoints
                                if 0.0 < float(b) < 1.0)})
    pieces = []
    offset = 0.0
    cheb = np.polynomial.chebyshev.Chebyshev
    for lo, hi in zip(knots[:-1], knots[1:]):
        series = cheb.interpolate(lambda w: np.asarray(g(w), dtype=float),
                                  degree, domain=[lo, hi])
        anti = series.integ(lbnd=lo)
        pieces.append((lo, hi, anti, offset))
        offset += float(anti(hi))

    knot_arr = np.asarray(knots)

    def F(v):
        v = np.asarray(v, dtype=float)
        out = np.empty_like(v, dtype=float)
        idx = np.clip(np.searchsorted(knot_arr, v, side="right") - 1, 0,
                      len(pieces) - 1)
        for p, (lo, hi, anti, off) in enumerate(pieces):
            mask = idx == p
            if np.any(mask):
                out[mask] = anti(np.clip(v[mask], lo, hi)) + off
        return out

    return F


def conjugate_flux(eta_prime: Callable, model: ModelCoefficients,
                   breakpoints: Sequence[float] = ()) -> Callable:
    """Conjugated entropy flux q(v) = int_0^v eta'(w) f'(w) dw, q(0) = 0.

    The flux is defined up to a constant; this normalization pins q(0) = 0.
    breakpoints lists kinks of eta' (e.g. the corner of a Kruzkov entropy)
    so the quadrature stays spectrally accurate.
    """
    df = model.df

    def integrand(w):
        w = np.asarray(w, dtype=float)
        return np.asarray(eta_prime(w), dtype=float) * np.asarray(
            df(w), dtype=float)

    return _piecewise_chebyshev_antiderivative(integrand, breakpoints)


@dataclass(frozen=True)
class EntropyPair:
    """Entropy eta with its conjugated flux q (q' = eta' f').

    eta2 is the second derivative when the entropy is C^2; Kruzkov
    entropies |v - k| carry eta2 = None.
    """

    eta: Callable
    eta_prime: Callable
    q: Callable
    eta2: Callable | None = None


def entropy_pair(model: ModelCoefficients, eta: Callable, eta_prime: Callable,
                 eta2: Callable | None = None,
                 breakpoints: Sequence[float] = ()) -> EntropyPair:
    return EntropyPair(eta=eta, eta_prime=eta_prime,
                       q=conjugate_flux(eta_prime, model, breakpoints),
                       eta2=eta2)


def kruzkov_pair(model: ModelCoefficients, k: float) -> EntropyPair:
    """The Kruzkov family eta = |v - k| with its flux."""
    eta = lambda v: np.abs(np.asarray(v, dtype=float) - k)
    eta_p = lambda v: np.sign(np.asarray(v, dtype=float) - k)
    return EntropyPair(eta=eta, eta_prime=eta_p,
                       q=conjugate_flux(eta_p, model, breakpoints=(k,)),
                       eta2=None)


@dataclass(frozen=True)
class EntropySampler:
    """Space-time modulated entropy theta(v, t, x) with derived fields.

    Callables are vectorized in (t, x) for fixed-shape v arrays:
      theta, theta_t, theta_v, theta_vv, theta_vx  -- partial derivatives,
      Qx(v, t, x) = d/dx Q = int_0^v (d/dx theta')(w,t,x) f'(w) dw.
    Compact support in t < t_end is required (theta(., t_end, .) = 0).
    """

    theta: Callable
    theta_t: Callable
    theta_v: Callable
    theta_vv: Callable
    theta_vx: Callable
    Qx: Callable
    t_end: float


def product_sampler(model: ModelCoefficients, pair: EntropyPair,
                    chi: Callable, chi_dot: Callable,
                    psi: Callable, psi_prime: Callable,
                    t_end: float) -> EntropySampler:
    """Factorized sampler theta = eta(v) chi(t) psi(x).

    For this form Q(v,t,x) = q(v) chi(t) psi(x), so Qx = q(v) chi psi'.
    chi must vanish at t_end.
    """
    if abs(float(chi(t_end))) > 1e-12:
        raise ValueError("time factor must vanish at t_end")
    eta, eta_p, q = pair.eta, pair.eta_prime, pair.q
    eta_pp = pair.eta2
    if eta_pp is None:
        raise ValueError("product sampler needs a C^2 entropy (eta2)")
    return EntropySampler(
        theta=lambda v, t, x: eta(v) * chi(t) * psi(x),
        theta_t=lambda v, t, x: eta(v) * chi_dot(t) * psi(x),
        theta_v=lambda v, t, x: eta_p(v) * chi(t) * psi(x),
        theta_vv=lambda v, t, x: eta_pp(v) * chi(t) * psi(x),
        theta_vx=lambda v, t, x: eta_p(v) * chi(t) * psi_prime(x),
        Qx=lambda v, t, x: q(v) * chi(t) * psi_prime(x),
        t_end=t_end,
    )


# ---------------------------------------------------------------------------
# hypothesis validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    """Numeric check of H1-H3 plus kernel smallness indicators.

    The smallness indicators are the scalar quantities whose vanishing (as
    the regularization is refined) is assumed by the limit theorems; they
    are reported, not gated.  ``coercivity_margin`` is min over [0,1] of
    D - (a')^2 ||j||_L2^2, the splitting-scheme condition D >= Q + c; it
    can be very negative when a = sqrt(a2) is not smooth at the endpoints
    (e.g. a2 = u(1-u)), which is informational, not an H-failure.
    whether a2 admits a C^2 square root is not checked (see c2_sqrt_note).
    """

    h1_f_lipschitz: bool
    h2_d_positive: bool
    h3_a2_boundary: bool
    lip_f: float
    lip_D: float
    d_min: float
    a2_at_0: float
    a2_at_1: float
    a2_interior_min: float
    smallness_l2: float          # eps^(2 gamma - 1) ||j||_L2^2
    smallness_parabolic: float   # eps^(2(gamma-1)) (||j||^2 + eps ||grad j||^2)
    smallness_w11: float         # eps^(-3/2) ||j - 1||_W^-1,1
    coercivity_margin: float
    failures: tuple
    c2_sqrt_note: str = ("C^2 regularity of sqrt(a2) is assumed, not "
                         "verified")

    @property
    def passed(self) -> bool:
        return (self.h1_f_lipschitz and self.h2_d_positive
                and self.h3_a2_boundary and not self.failures)

    def summary(self) -> str:
        flag = {True: "pass", False: "FAIL"}
        lines = [
            f"H1 flux Lipschitz: {flag[self.h1_f_lipschitz]}"
            f" (lip_f = {self.lip_f:.6g})",
            f"H2 diffusion positive: {flag[self.h2_d_positive]}"
            f" (d_min = {self.d_min:.6g}, lip_D = {self.lip_D:.6g})",
            f"H3 fluctuation boundary: {flag[self.h3_a2_boundary]}"
            f" (a2(0) = {self.a2_at_0:.3g}, a2(1) = {self.a2_at_1:.3g},"
            f" interior min = {self.a2_interior_min:.3g})",
            f"smallness: eps^(2g-1)|j|^2 = {self.smallness_l2:.6g}, "
            f"parabolic = {self.smallness_parabolic:.6g}, "
            f"w-1,1 = {self.smallness_w11:.6g}",
            f"coercivity margin min(D - (a')^2 |j|^2) = "
            f"{self.coercivity_margin:.6g}",
        ]
        for fail in self.failures:
            lines.append(f"failure: {fail}")
        lines.append(f"overall: {flag[self.passed]}")
        return "\n".join(lines)


def validate_hypotheses(model: ModelCoefficients, kernel: MollifierKernel,
                        epsilon: float, gamma: float) -> ValidationReport:
    """Evaluate the standing hypotheses numerically.

    Pure function of its inputs: same arguments, same report.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if gamma <= 0.5:
        raise ValueError("gamma must exceed 1/2")
    v = np.linspace(0.0, 1.0, _VALIDATION_GRID)
    failures = []
    with np.errstate(all="ignore"):
        fv = np.asarray(model.f(v), dtype=float)
        dv = np.asarray(model.D(v), dtype=float)
        a2v = np.asarray(model.a2(v), dtype=float)
    for label, arr in (("f", fv), ("D", dv), ("a2", a2v)):
        bad = ~np.isfinite(arr)
        if np.any(bad):
            failures.append(
                f"{label} non-finite at v = {v[bad][0]:.6g}")
    a2_0 = float(a2v[0]) if np.isfinite(a2v[0]) else math.nan
    a2_1 = float(a2v[-1]) if np.isfinite(a2v[-1]) else math.nan
    interior = a2v[1:-1]
    interior_min = float(np.nanmin(interior))
    h1 = bool(np.all(np.isfinite(fv)) and np.isfinite(model.lip_f))
    h2 = bool(np.all(np.isfinite(dv)) and model.d_min > 0)
    h3 = bool(abs(a2_0) <= 1e-12 and abs(a2_1) <= 1e-12
              and interior_min > 0)
    j2 = kernel.norm_l2**2
    gj2 = kernel.norm_grad_l2**2
    s_l2 = epsilon ** (2 * gamma - 1) * j2
    s_par = epsilon ** (2 * (gamma - 1)) * (j2 + epsilon * gj2)
    s_w11 = epsilon ** (-1.5) * kernel.dist_w11
    ap = model.a_prime(v)
    with np.errstate(all="ignore"):
        margin = float(np.nanmin(dv - ap**2 * j2))
    return ValidationReport(
        h1_f_lipschitz=h1, h2_d_positive=h2, h3_a2_boundary=h3,
        lip_f=model.lip_f, lip_D=model.lip_D, d_min=model.d_min,
        a2_at_0=a2_0, a2_at_1=a2_1, a2_interior_min=interior_min,
        smallness_l2=s_l2, smallness_parabolic=s_par, smallness_w11=s_w11,
        coercivity_margin=margin, failures=tuple(failures))
