"""Small shared numerics helpers."""

from __future__ import annotations


def rel_err(x: float, y: float) -> float:
    """|x - y| scaled by the larger magnitude; 0 when both vanish."""
    scale = max(abs(x), abs(y))
    if scale == 0.0:
        return 0.0
    return abs(x - y) / scale


def falling_ratio(k: int, n: int, i: int) -> float:
    """k-falling-factorial(i) / n-falling-factorial(i), computed factor-wise.

    Equals the probability of drawing i marked items in i draws without
    replacement from n items of which k are marked; 0 when i > k.
    """
    out = 1.0
    for j in range(i):
        out *= (k - j) / (n - j)
        if out == 0.0:
            break
    return out
