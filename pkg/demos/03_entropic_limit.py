"""The vanishing-noise-and-viscosity limit selects the entropic solution.

Two-jump initial data: one admissible standing shock and one rarefaction.
The exact solution comes from the flux-envelope construction; the viscous
and stochastic solutions approach it as eps decreases (with dx = eps/4 so
the physical viscosity stays resolved).
"""

import math

import numpy as np

from sclaw import (NoisePlan, RiemannProblem, RngStream, SpdeParams,
                   TorusGrid, cfl_dt, l1_space_time, make_kernel, preset,
                   riemann_exact, simulate, solve_kruzkov, stable_dt,
                   two_jump_exact, two_jump_initial)

model = preset("tasep")
T = 0.5

print("== exact Riemann fans ==")
print(riemann_exact(model, RiemannProblem(0.2, 0.8)).describe())
print(riemann_exact(model, RiemannProblem(0.8, 0.2)).describe())

print("\n== monotone scheme converges first order ==")
exact = two_jump_exact(model, 0.8, 0.2)
for n_cells in (128, 256, 512):
    grid = TorusGrid(n_cells)
    u0 = two_jump_initial(grid, 0.8, 0.2)
    dt = cfl_dt(model, grid, T)
    n = int(round(T / dt))
    traj = solve_kruzkov(model, u0, T, dt, store_stride=n)
    err = float(np.sum(np.abs(traj.data[-1]
                              - exact(T, grid.cell_centers))) * grid.dx)
    print(f"N = {n_cells:4d}: L1 error at T {err:.5f}")

print("\n== stochastic samples approach the entropic solution ==")
exact = two_jump_exact(model, 0.2, 0.8)
for eps in (0.2, 0.1, 0.05):
    grid = TorusGrid(int(round(4 / eps)))
    kernel = make_kernel("triangle", 0.1, grid)
    dt = stable_dt(model, grid, kernel, eps, 1.5)
    n = ((int(math.ceil(T / dt)) + 15) // 16) * 16
    params = SpdeParams(eps, 1.5, T / n, T, store_stride=n // 16)
    u0 = two_jump_initial(grid, 0.2, 0.8)
    plan = NoisePlan(kernel)
    dists = [l1_space_time(simulate(model, params, plan, u0,
                                    RngStream(7, i)), exact)
             for i in range(20)]
    print(f"eps = {eps:4.2f} (N = {grid.n_cells:3d}): mean space-time L1 "
          f"distance {np.mean(dists):.4f} +- {np.std(dists):.4f}")
