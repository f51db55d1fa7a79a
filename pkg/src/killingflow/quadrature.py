"""Adaptive Simpson quadrature used throughout the package.

All geometric integrals here have smooth integrands (the one genuinely
singular integral, the radial CMC profile, is regularized by substitution
before it reaches this routine), so plain interval-bisection Simpson with
an absolute tolerance is enough and keeps the error model simple.
"""

from __future__ import annotations

import math
from typing import Callable


class QuadratureError(RuntimeError):
    """Raised when the adaptive scheme cannot reach the tolerance."""


def _simpson(f: Callable[[float], float], a: float, fa: float, b: float,
             fb: float, fm: float) -> float:
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _adaptive(f, a, fa, b, fb, m, fm, whole, tol, depth, span):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = f(lm)
    frm = f(rm)
    left = _simpson(f, a, fa, m, fm, flm)
    right = _simpson(f, m, fm, b, fb, frm)
    err = left + right - whole
    # floors: below ~1e-16 the local estimate is rounding churn, and once a
    # subinterval shrinks to 1e-12 of the original span its worst-case
    # contribution is noise * width, negligible for any caller here; both
    # guards stop the recursion from chasing integrand noise to max depth
    if (abs(err) <= 15.0 * tol or abs(err) <= 1e-16
            or (b - a) <= 1e-12 * span):
        return left + right + err / 15.0
    if depth <= 0:
        raise QuadratureError(
            f"adaptive Simpson did not converge on [{a}, {b}] "
            f"(remaining error estimate {abs(err):.3e})")
    half = 0.5 * tol
    return (_adaptive(f, a, fa, m, fm, lm, flm, left, half, depth - 1, span)
            + _adaptive(f, m, fm, b, fb, rm, frm, right, half, depth - 1,
                        span))


def composite_simpson(f: Callable[[float], float], a: float, b: float,
                      panels: int = 512) -> float:
    """Fixed composite Simpson rule with ``panels`` even subintervals.

    No error control: meant for smooth integrands whose evaluations carry
    noise an adaptive rule would chase forever.  Error is O((b-a)/panels)^4
    from smoothness plus O(noise * (b-a)) from the noise itself.
    """
    if a == b:
        return 0.0
    if panels < 1:
        raise QuadratureError("panels must be >= 1")
    x = a
    h = (b - a) / panels
    total = 0.0
    fa = f(a)
    for i in range(panels):
        x1 = a + (i + 1) * h if i < panels - 1 else b
        fm = f(0.5 * (x + x1))
        fb = f(x1)
        if not (math.isfinite(fm) and math.isfinite(fb)):
            raise QuadratureError(f"non-finite integrand on [{x}, {x1}]")
        total += (x1 - x) / 6.0 * (fa + 4.0 * fm + fb)
        x, fa = x1, fb
    return total


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 48) -> float:
    """Integrate ``f`` over [a, b] to absolute tolerance ``tol``."""
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    fa = f(a)
    fb = f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson(f, a, fa, b, fb, fm)
    if not (math.isfinite(fa) and math.isfinite(fb) and math.isfinite(fm)):
        raise QuadratureError(f"non-finite integrand on [{a}, {b}]")
    return sign * _adaptive(f, a, fa, b, fb, m, fm, whole, tol, max_depth,
                            b - a)
