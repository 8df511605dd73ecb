"""The second-order cost of non-entropic shocks and splittability.

H integrates the positive production part against D/a^2.  For the
anti-entropic standing shock of the exclusion coefficients the value is
closed form: int_{0.2}^{0.8} (1 - 0.16/(v(1-v))) dv = 0.6 - 0.32 ln 4.
Admissible shocks cost nothing; costs add over time windows; a shock
whose positive part touches a fast zero of a^2 costs +infinity.
"""

import math
import warnings

from sclaw import (classify_splittable, h_functional,
                   piecewise_constant_profile, polynomial_model, preset,
                   standing_shock_profile)

model = preset("tasep")

anti = standing_shock_profile(model, 0.8, 0.2, t_end=1.0)
mirror = standing_shock_profile(model, 0.2, 0.8, t_end=1.0)
print(f"anti-entropic shock: H = {h_functional(anti, model):.9f}")
print(f"closed form        : H = {0.6 - 0.32 * math.log(4):.9f}")
print(f"entropic mirror    : H = {h_functional(mirror, model):.2e}")

short = standing_shock_profile(model, 0.8, 0.2, t_end=0.25)
print(f"quarter horizon    : H = {h_functional(short, model):.9f} "
      f"(= H/4)")

ratio_one = polynomial_model([0, 1, -1], [0, 1, -1], [0, 1, -1])
print(f"D = a^2 (ratio 1)  : H = "
      f"{h_functional(standing_shock_profile(ratio_one, 0.8, 0.2), ratio_one):.6f}"
      " (= bare positive mass 0.036)")

degenerate = polynomial_model([0, 1, -1], [1.0], [0, 0, 1, -2, 1])
sigma = float((degenerate.f(0.6) - degenerate.f(0.0)) / 0.6)
touching = piecewise_constant_profile(
    degenerate, positions=[0.5], speeds=[sigma], states=[0.6, 0.0],
    t_end=0.1, closed=False)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    print(f"a^2 ~ v^2 at a 0-touching shock: H = "
          f"{h_functional(touching, degenerate)}")

print("\n== splittability ==")
windows = piecewise_constant_profile(
    model, positions=[0.25, 0.75], speeds=[0.0, 0.0],
    states=[0.8, 0.2, 0.8], t_end=1.0, closed=True,
    time_windows=[(0.0, 0.4), (0.6, 1.0)])
print(classify_splittable(windows, model).summary())
