"""Coefficient presets, mollifier kernels and the hypothesis report.

Builds the exclusion-process coefficient triple f = a^2 = u(1-u), D = 1,
samples a few mollifier kernels and prints the numeric validation report:
Lipschitz estimates, fluctuation boundary values, the kernel smallness
indicators and the splitting-scheme coercivity margin.
"""

import numpy as np

from sclaw import TorusGrid, make_kernel, polynomial_model, preset, \
    validate_hypotheses

grid = TorusGrid(512)

print("== kernels on a 512-cell torus ==")
for shape, width in [("triangle", 0.1), ("uniform", 0.2),
                     ("gaussian-truncated", 0.15)]:
    k = make_kernel(shape, width, grid)
    print(f"{shape:18s} width {width:4.2f}:  |j|_L2^2 = {k.norm_l2**2:8.3f}"
          f"   |grad j|_L2^2 = {k.norm_grad_l2**2:10.1f}"
          f"   W^-1,1 dist to flat = {k.dist_w11:.4f}")
print("triangle closed form |j|_L2^2 = 4/(3 w) =", 4 / (3 * 0.1))

print("\n== exclusion-process coefficients ==")
model = preset("tasep")
kernel = make_kernel("triangle", 0.1, grid)
report = validate_hypotheses(model, kernel, epsilon=0.1, gamma=1.5)
print(report.summary())

print("\n== a designed violation: a2 = v^2 does not vanish at v = 1 ==")
bad = polynomial_model([0, 1, -1], [1.0], [0, 0, 1])
print(validate_hypotheses(bad, kernel, epsilon=0.1, gamma=1.5).summary())

print("\n== smallness indicators along an epsilon sweep ==")
for eps in (0.2, 0.1, 0.05, 0.025):
    rep = validate_hypotheses(model, kernel, epsilon=eps, gamma=1.5)
    print(f"eps = {eps:5.3f}:  eps^(2g-1)|j|^2 = {rep.smallness_l2:8.4f}   "
          f"parabolic = {rep.smallness_parabolic:8.4f}")
