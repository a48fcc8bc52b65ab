"""Angle wrapping helpers."""

import math

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi].

    The fast path returns the input bit-exactly when already in range, so
    wrapping an exact zero difference stays an exact zero.
    """
    if -math.pi < a <= math.pi:
        return a
    w = (a + math.pi) % TWO_PI - math.pi
    if w <= -math.pi:
        w += TWO_PI
    return w


def unwrap_near(a: float, reference: float) -> float:
    """Return the representative of `a` (mod 2*pi) closest to `reference`."""
    return reference + wrap_angle(a - reference)
