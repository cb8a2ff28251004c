"""Waveform-layer tests: symbol statistics, modulation identities, pilots."""

import numpy as np
import pytest

from skynoma.operators import CpOperators, FourierOperators
from skynoma.waveform import (
    BPSK,
    QPSK,
    TxWindow,
    delta_matrix,
    draw_symbols,
    make_pilot_schedule,
    modulate_block,
    precoder_matrix,
    quantize,
    symbol_bit_errors,
)


class TestSymbolStreams:
    def test_bpsk_is_noncircular(self):
        rng = np.random.default_rng(0)
        s = draw_symbols(BPSK, 10**5, rng)
        assert np.abs(np.mean(s**2) - 1.0) < 0.01
        assert np.abs(np.mean(np.abs(s) ** 2) - 1.0) < 1e-12

    def test_qpsk_is_circular(self):
        rng = np.random.default_rng(1)
        s = draw_symbols(QPSK, 10**5, rng)
        assert np.abs(np.mean(s**2)) < 0.02
        assert np.abs(np.mean(np.abs(s) ** 2) - 1.0) < 1e-12

    def test_deterministic_under_seed(self):
        a = draw_symbols(QPSK, (4, 8), np.random.default_rng(42))
        b = draw_symbols(QPSK, (4, 8), np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_quantize_roundtrip(self):
        rng = np.random.default_rng(3)
        for c in (BPSK, QPSK):
            s = draw_symbols(c, 500, rng)
            noisy = s + 0.05 * (rng.standard_normal(500) + 1j * rng.standard_normal(500))
            assert np.allclose(quantize(noisy, c), s)

    def test_bit_error_counting(self):
        s = np.array([1 + 1j, 1 - 1j, -1 + 1j]) / np.sqrt(2)
        d = np.array([1 + 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)
        assert symbol_bit_errors(d, s, QPSK) == 3
        assert symbol_bit_errors(np.array([1.0]), np.array([-1.0]), BPSK) == 1


class TestDeltaMatrix:
    def test_bpsk_identity(self):
        d = delta_matrix(BPSK, 5)
        assert np.array_equal(d, np.eye(5))
        rng = np.random.default_rng(5)
        s = draw_symbols(BPSK, 5, rng)
        assert np.allclose(np.conj(s), d @ s)

    def test_involution(self):
        d = delta_matrix(BPSK, 4)
        assert np.allclose(d @ np.conj(d), np.eye(4))

    def test_qpsk_rejected(self):
        with pytest.raises(ValueError):
            delta_matrix(QPSK, 4)


@pytest.fixture
def geometry():
    m, l_cp = 16, 4
    cp = CpOperators.build(m, l_cp)
    fourier = FourierOperators.build(m)
    window = TxWindow.rectangular(cp.p_total)
    return cp, fourier, window


class TestModulation:
    def test_dc_only_block_is_constant(self, geometry):
        cp, fourier, window = geometry
        s = np.zeros(16, dtype=complex)
        s[0] = np.sqrt(16)
        u = modulate_block(s, window, cp, fourier)
        assert np.allclose(u, np.ones(20))

    def test_zero_in_zero_out(self, geometry):
        cp, fourier, window = geometry
        assert np.allclose(modulate_block(np.zeros(16), window, cp, fourier), 0.0)

    def test_energy_accounting(self, geometry):
        cp, fourier, window = geometry
        rng = np.random.default_rng(9)
        s = draw_symbols(QPSK, 16, rng)
        u = modulate_block(s, window, cp, fourier)
        time = fourier.idft @ s
        want = np.sum(np.abs(time) ** 2) + np.sum(np.abs(time[-4:]) ** 2)
        assert np.sum(np.abs(u) ** 2) == pytest.approx(want)

    def test_linearity(self, geometry):
        cp, fourier, window = geometry
        rng = np.random.default_rng(10)
        s1 = draw_symbols(QPSK, 16, rng)
        s2 = draw_symbols(QPSK, 16, rng)
        a, b = 0.3 - 1.1j, 2.2 + 0.4j
        lhs = modulate_block(a * s1 + b * s2, window, cp, fourier)
        rhs = a * modulate_block(s1, window, cp, fourier) + b * modulate_block(
            s2, window, cp, fourier
        )
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_cp_property(self, geometry):
        cp, fourier, window = geometry
        rng = np.random.default_rng(11)
        s = draw_symbols(QPSK, 16, rng)
        u = modulate_block(s, window, cp, fourier)
        assert np.allclose(u[:4], u[16:20])

    def test_precoder_matrix_matches_block_path(self, geometry):
        cp, fourier, window = geometry
        rng = np.random.default_rng(12)
        s = draw_symbols(QPSK, (3, 16), rng)
        omega = precoder_matrix(window, cp, fourier)
        assert np.allclose(s @ omega.T, modulate_block(s, window, cp, fourier))

    def test_dimension_mismatch_rejected(self, geometry):
        cp, fourier, window = geometry
        with pytest.raises(ValueError):
            modulate_block(np.zeros(8), window, cp, fourier)


class TestPilotSchedule:
    def test_injection_recoverable(self):
        rng = np.random.default_rng(20)
        sched = make_pilot_schedule("tu", QPSK, m=16, q=8, n_coh=64, n_train=5, rng=rng)
        data = draw_symbols(QPSK, (64, 16), rng)
        mixed = sched.inject(data)
        assert np.array_equal(sched.extract(mixed), sched.values)
        untouched = np.ones(64, dtype=bool)
        untouched[sched.blocks] = False
        assert np.array_equal(mixed[untouched], data[untouched])

    def test_full_band_au_schedule(self):
        rng = np.random.default_rng(21)
        sched = make_pilot_schedule("au", BPSK, m=16, q=16, n_coh=128, n_train=4, rng=rng)
        assert np.array_equal(sched.subcarriers, np.arange(16))
        assert sched.n_train == 4

    def test_offset_keeps_schedules_disjoint(self):
        rng = np.random.default_rng(22)
        a = make_pilot_schedule("au", BPSK, 16, 16, 256, 10, rng)
        t = make_pilot_schedule("tu", QPSK, 16, 16, 256, 10, rng, block_offset=12)
        assert not set(a.blocks.tolist()) & set(t.blocks.tolist())
