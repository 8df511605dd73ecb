"""Smooth bump and plateau constructions with exact derivatives.

Used to build the compactly supported test functions phi(t, x) that the
entropy-production and rate-functional quadratures pair against.  All
ramps are the C^2 quintic smoothstep 10 y^3 - 15 y^4 + 6 y^5.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["smoothstep", "smoothstep_prime", "ramp_profile", "plateau",
           "TestFunction", "product_test_function"]


def smoothstep(y):
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    return y**3 * (10.0 + y * (-15.0 + 6.0 * y))


def smoothstep_prime(y):
    y = np.asarray(y, dtype=float)
    inside = (y > 0.0) & (y < 1.0)
    yc = np.clip(y, 0.0, 1.0)
    return np.where(inside, 30.0 * yc**2 * (1.0 - yc) ** 2, 0.0)


def ramp_profile(a: float, b: float, up: bool = True):
    """C^2 ramp from 0 at a to 1 at b (or 1 to 0 when up=False)."""
    span = b - a
    if span <= 0:
        raise ValueError("need a < b")

    def value(s):
        r = smoothstep((np.asarray(s, dtype=float) - a) / span)
        return r if up else 1.0 - r

    def deriv(s):
        d = smoothstep_prime((np.asarray(s, dtype=float) - a) / span) / span
        return d if up else -d

    return value, deriv


def plateau(rise_start: float, rise_end: float, fall_start: float,
            fall_end: float):
    """C^2 plateau: 0 before rise_start, 1 on [rise_end, fall_start], 0 after.

    Returns (value, derivative) callables.  The integral of the value over
    the whole line is (fall_end + fall_start - rise_end - rise_start) / 2
    (each smoothstep ramp integrates to half its width).
    """
    if not rise_start < rise_end <= fall_start < fall_end:
        raise ValueError("plateau breakpoints must be increasing")
    up, dup = ramp_profile(rise_start, rise_end, up=True)
    down, ddown = ramp_profile(fall_start, fall_end, up=False)

    def value(s):
        s = np.asarray(s, dtype=float)
        return np.where(s < fall_start, up(s), down(s))

    def deriv(s):
        s = np.asarray(s, dtype=float)
        return np.where(s < fall_start, dup(s), ddown(s))

    return value, deriv


@dataclass(frozen=True)
class TestFunction:
    """phi(t, x) with its partial derivatives, compactly supported in t < t_end."""

    phi: Callable
    phi_t: Callable
    phi_x: Callable
    t_end: float


def product_test_function(chi: Callable, chi_dot: Callable, psi: Callable,
                          psi_prime: Callable, t_end: float) -> TestFunction:
    """phi(t, x) = chi(t) psi(x); chi must vanish at t_end."""
    if abs(float(chi(t_end))) > 1e-12:
        raise ValueError("time factor must vanish at t_end")
    return TestFunction(
        phi=lambda t, x: chi(t) * psi(x),
        phi_t=lambda t, x: chi_dot(t) * psi(x),
        phi_x=lambda t, x: chi(t) * psi_prime(x),
        t_end=t_end,
    )
