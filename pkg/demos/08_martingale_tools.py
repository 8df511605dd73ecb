"""Martingale diagnostics: the tail bound and the Ito-formula residual.

The tail bound covers events where the running maximum is large while the
quadratic variation stays under a budget F; Brownian motion provides a
closed-form oracle (reflection principle).  The Ito residual replays a
stored trajectory's noise and balances the entropy-sampler production
against viscous, noise-correction and martingale terms; it shrinks under
step refinement.
"""

import math

import numpy as np
import scipy.stats

from sclaw import (GridField, NoisePlan, RngStream, SpdeParams, TorusGrid,
                   bernstein_check, brownian_paths, entropy_pair,
                   ito_residual, make_kernel, polynomial_model,
                   product_sampler, simulate, stable_dt)

print("== tail bound vs the Brownian oracle ==")
paths = brownian_paths(50_000, 1000, 1.0, RngStream(1, 0))
for zeta in (0.5, 1.0, 2.0):
    rep = bernstein_check(paths, lambda v: 1.0, zeta)
    exact = 2 * scipy.stats.norm.sf(zeta)
    print(f"zeta = {zeta:3.1f}: frequency {rep.frequency:.4f} "
          f"(exact {exact:.4f}) <= bound {rep.bound:.4f}")
rep = bernstein_check(paths, lambda v: 1.0 + v, 1.0)
print(f"affine budget F = 1 + x, zeta = 1: frequency {rep.frequency:.4f} "
      f"<= bound {rep.bound:.4f}")

print("\n== Ito residual under step refinement ==")
# smooth amplitude a = v(1 - v) (bounded a'), flux u(1 - u)
model = polynomial_model([0, 1, -1], [1.0], [0, 0, 1, -2, 1])
grid = TorusGrid(128)
kernel = make_kernel("triangle", 0.1, grid)
T = 0.5
pair = entropy_pair(model, eta=lambda v: np.asarray(v, float) ** 2,
                    eta_prime=lambda v: 2.0 * np.asarray(v, float),
                    eta2=lambda v: 2.0 + 0.0 * np.asarray(v, float))
sampler = product_sampler(
    model, pair, chi=lambda t: 1.0 - t / T,
    chi_dot=lambda t: -1.0 / T + 0.0 * np.asarray(t),
    psi=lambda s: 1.0 + 0.5 * np.sin(2 * np.pi * np.asarray(s)),
    psi_prime=lambda s: np.pi * np.cos(2 * np.pi * np.asarray(s)),
    t_end=T)
x = grid.cell_centers
u0 = GridField(grid, 0.5 + 0.2 * np.sin(2 * np.pi * x))
base = stable_dt(model, grid, kernel, 0.1, 1.5)
for mult in (1, 2):
    n = int(math.ceil(T / base)) * mult
    params = SpdeParams(0.1, 1.5, T / n, T, store_stride=n)
    vals = [ito_residual(simulate(model, params, NoisePlan(kernel), u0,
                                  RngStream(100, s)), model, params, sampler)
            for s in range(3)]
    print(f"dt = {T / n:.2e}: mean |residual| = {np.mean(vals):.6f}")
