import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgdma_sim.errors import ConfigInvalid
from sgdma_sim.memmodel import DdrConfig, DdrState
from sgdma_sim.psmodel import (APU_STALLS, CpuKind, CpuModel, HandshakeModel, Mechanism,
                               StallScope, apu_model, gpio_handshake, handshake_latency,
                               rpmsg_handshake, rpu_model, simulate_ring_creation)

QUIET = DdrConfig(refresh_phase_ns=7000.0)


class TestCpuModel:
    def test_defaults(self):
        apu, rpu = apu_model(), rpu_model()
        assert apu.kind is CpuKind.APU and rpu.kind is CpuKind.RPU
        assert 100.0 <= apu.best_case_ns <= 250.0
        assert 5.0 <= rpu.best_case_ns / apu.best_case_ns <= 9.0
        assert max(s for _, s in apu.stall_model) + apu.per_bd_base_ns > 30_000

    @pytest.mark.parametrize("kw", [
        {"stall_model": ((0.5, 0.0), (0.4, 10.0))},
        {"stall_model": ((1.2, 0.0), (-0.2, 10.0))},
        {"stall_model": ()},
        {"per_bd_base_ns": -1.0},
        {"stall_model": ((1.0, -5.0),)},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigInvalid):
            apu_model(**kw)

    def test_handshake_needs_positive_hop(self):
        with pytest.raises(ConfigInvalid):
            HandshakeModel(Mechanism.GPIO, 0.0)


class TestRingCreation:
    def test_sample_formula_without_stalls(self):
        cpu = CpuModel(CpuKind.RPU, 500.0, ((1.0, 0.0),))
        np.testing.assert_array_equal(simulate_ring_creation(cpu, 16, 5), [500.0] * 5)

    def test_per_run_scope_draws_once(self):
        cpu = CpuModel(CpuKind.APU, 100.0, ((0.5, 0.0), (0.5, 1600.0)),
                       stall_scope=StallScope.PER_RUN)
        xs = simulate_ring_creation(cpu, 16, 2000, np.random.default_rng(1))
        assert set(np.unique(xs)) == {100.0, 200.0}

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            simulate_ring_creation(apu_model(), 0, 10)
        with pytest.raises(ValueError):
            simulate_ring_creation(apu_model(), 1, 0)

    def test_seeded(self):
        a = simulate_ring_creation(apu_model(seed=9), 4, 1000)
        b = simulate_ring_creation(apu_model(seed=9), 4, 1000)
        np.testing.assert_array_equal(a, b)

    def test_apu_worst_case_appears_in_100k(self):
        xs = simulate_ring_creation(apu_model(), 1, 100_000, np.random.default_rng(0))
        assert xs.min() == pytest.approx(120.0)
        assert (xs > 30_000).sum() > 0

    def test_stall_frequencies_within_binomial_bounds(self):
        n = 100_000
        cpu = apu_model()
        xs = simulate_ring_creation(cpu, 1, n, np.random.default_rng(5))
        for p, stall in APU_STALLS:
            k = int(np.sum(np.isclose(xs, cpu.per_bd_base_ns + stall)))
            assert abs(k - n * p) <= 4.5 * np.sqrt(n * p * (1 - p)), (stall, k)

    @pytest.mark.parametrize("n_bds", [1, 16, 256, 4096])
    def test_rpu_spread_below_apu(self, n_bds):
        rng = np.random.default_rng(n_bds)
        apu = simulate_ring_creation(apu_model(), n_bds, 100, rng)
        rpu = simulate_ring_creation(rpu_model(), n_bds, 100, rng)
        assert np.ptp(rpu) < np.ptp(apu)

    def test_per_bd_mean_does_not_grow_with_ring(self):
        cpu = apu_model()
        expected = cpu.per_bd_base_ns + float(cpu.probabilities @ cpu.stall_values_ns)
        rng = np.random.default_rng(3)
        for n_bds in (1, 16, 256):
            xs = simulate_ring_creation(cpu, n_bds, 20_000, rng)
            sem = xs.std() / np.sqrt(len(xs))
            assert abs(xs.mean() - expected) <= 5 * sem


class TestHandshake:
    @given(st.floats(0, 1e6))
    def test_gpio_is_fixed(self, t0):
        assert handshake_latency(gpio_handshake(150.0), DdrState(DdrConfig()), t0) == 300.0

    def test_rpmsg_refresh_free(self):
        ddr = DdrState(QUIET)
        assert handshake_latency(rpmsg_handshake(100.0), ddr, 0.0) == pytest.approx(2 * (100.0 + QUIET.base_access_ns))

    def test_rpmsg_with_refresh(self):
        ddr = DdrState(DdrConfig(refresh_phase_ns=150.0))
        d = handshake_latency(rpmsg_handshake(100.0), ddr, 0.0)
        assert d == pytest.approx(2 * (100.0 + QUIET.base_access_ns) + 210.0)
        assert d > handshake_latency(gpio_handshake(150.0), DdrState(DdrConfig()), 0.0)

    def test_coupling_flags(self):
        assert rpmsg_handshake().ddr_coupled and not gpio_handshake().ddr_coupled
