from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from sgdma_sim.units import ceil_div, clock_period, cycles_to_ps, ns_to_ps, ps_to_ns, snap_up


class TestConversions:
    def test_ns_ps_round_trip(self):
        assert ns_to_ps(3.003) == 3003
        assert ps_to_ns(3003) == pytest.approx(3.003)

    def test_controller_period_is_exact(self):
        assert clock_period(300) == Fraction(10_000, 3)
        assert cycles_to_ps(3, clock_period(300)) == 10_000
        assert cycles_to_ps(1, clock_period(300)) == 3334  # rounded up

    def test_rejects_non_positive_clock(self):
        with pytest.raises(ValueError):
            clock_period(0)

    @given(st.integers(-10**12, 10**12), st.integers(1, 10**6))
    def test_ceil_div(self, a, b):
        q = ceil_div(a, b)
        assert (q - 1) * b < a <= q * b

    @given(st.integers(0, 10**12), st.integers(1, 10**5))
    def test_snap_up_is_next_edge(self, t, cyc):
        e = snap_up(t, cyc)
        assert e % cyc == 0 and t <= e < t + cyc
