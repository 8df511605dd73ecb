"""First-order rate functionals: moment optimization, path costs, duality.

R(w, c) relaxes the flux over mean-w probability measures; the path cost I
contracts the Young-measure cost.  Entropic solutions cost nothing, the
time-reversed solution of a convex flux costs something, and no test
function ever beats the per-slice elliptic value.
"""

import numpy as np

from sclaw import (GridField, TorusGrid, Trajectory, TrajectoryMeta, cfl_dt,
                   control_from_target, i_functional, preset, r_fun,
                   r_fun_bruteforce, solve_kruzkov, two_jump_initial,
                   young_dual_objective, young_i)
from sclaw.ratefun import YoungMeasureField

model = preset("tasep")

print("== moment optimization R(w, c) ==")
for w, c in [(0.3, float(model.f(0.3))), (0.5, 0.0), (0.5, 0.4),
             (0.25, -0.2)]:
    value, measure = r_fun(model, w, c)
    brute = r_fun_bruteforce(model, w, c, n_restarts=20, n_iters=120)
    atoms = ", ".join(f"{p:.3f}:{q:.2f}" for p, q in
                      zip(measure.positions, measure.weights))
    print(f"R({w:.2f}, {c:+.2f}) = {value:.6f} (brute force {brute:.6f}); "
          f"argmin atoms {atoms}")

print("\n== path costs ==")
grid = TorusGrid(256)
T = 0.25
for name in ("tasep", "burgers"):
    m = preset(name)
    u0 = two_jump_initial(grid, 0.8, 0.2)
    dt = cfl_dt(m, grid, T)
    n = int(round(T / dt))
    stride = max(1, int(np.floor(grid.dx / dt)))
    while n % stride:
        stride -= 1
    traj = solve_kruzkov(m, u0, T, dt, store_stride=stride)
    rev = Trajectory(grid, traj.times, traj.data[::-1],
                     TrajectoryMeta("reversed"))
    print(f"{name:8s}: I(entropic) = {i_functional(traj, m):.6f}   "
          f"I(time-reversed) = {i_functional(rev, m):.6f}")

print("\n== Young-measure cost and duality ==")
mu = YoungMeasureField.constant_atoms(TorusGrid(64), np.linspace(0, 1, 17),
                                      [(0.0, 0.5), (1.0, 0.5)])
u0c = GridField(TorusGrid(64), np.full(64, 0.5))
print("cost of the (delta_0 + delta_1)/2 measure-valued solution:",
      young_i(mu, model, u0c))

u0 = two_jump_initial(grid, 0.2, 0.8)
dt = cfl_dt(model, grid, T)
n = int(round(T / dt))
stride = max(1, int(np.floor(grid.dx / dt)))
while n % stride:
    stride -= 1
traj = solve_kruzkov(model, u0, T, dt, store_stride=stride)
mu = YoungMeasureField.from_trajectory(traj)
value = young_i(mu, model, u0)
rng = np.random.default_rng(0)
x = grid.cell_centers
best = -np.inf
for _ in range(20):
    amp = rng.normal(size=4)
    phi = np.stack([amp[0] * np.sin(2 * np.pi * x) * (1 - t)
                    + amp[1] * np.cos(2 * np.pi * x) * t
                    + amp[2] * np.sin(4 * np.pi * x) + amp[3]
                    for t in traj.times])
    best = max(best, young_dual_objective(mu, model, u0, phi))
print(f"elliptic value {value:.3e}; best of 20 random test functions "
      f"{best:.3e} (never larger)")

print("\n== control potential of a non-solution target ==")
times = np.linspace(0, 0.5, 65)
frames = np.stack([0.5 + 0.2 * np.sin(2 * np.pi * (x - 0.5 * t))
                   for t in times])
target = Trajectory(grid, times, frames, TrajectoryMeta("target"))
field = control_from_target(target, model)
print(f"first-order action of the moving sinusoid: {field.cost:.6f}")
