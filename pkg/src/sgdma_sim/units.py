"""Time units.

Every timestamp inside the simulator is an integer number of picoseconds so
that cycle arithmetic, refresh alignment and trace comparison are exact.
Public dataclasses take nanoseconds and convert at the boundary.
"""

from __future__ import annotations

from fractions import Fraction

PS_PER_NS = 1000


def ns_to_ps(ns: float) -> int:
    return int(round(ns * PS_PER_NS))


def ps_to_ns(ps: int) -> float:
    return ps / PS_PER_NS


def clock_period(mhz: float) -> Fraction:
    """Exact clock period in picoseconds for a frequency given in MHz."""
    if mhz <= 0:
        raise ValueError("clock frequency must be positive")
    return Fraction(10**6) / Fraction(str(mhz))


def cycles_to_ps(n: int, period: Fraction) -> int:
    """Duration of ``n`` clocks of ``period`` ps, rounded up to whole ps."""
    return -((-n * period.numerator) // period.denominator)


def ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def snap_up(t_ps: int, cycle_ps: int) -> int:
    """First clock edge at or after ``t_ps`` (edges at multiples of the cycle)."""
    return ceil_div(t_ps, cycle_ps) * cycle_ps
