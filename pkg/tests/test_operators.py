"""Structured-operator unit tests, checked against brute-force constructions."""

import numpy as np
import pytest

from skynoma.operators import (
    CpOperators,
    FourierOperators,
    circulant,
    circulant_eigenvalues,
    dirichlet,
    make_pulse,
    shift_matrices,
    split_delay,
    toeplitz_from_pulse,
)


def dirichlet_bruteforce(n, x):
    """Independent oracle: explicit sum of n unit phasors."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(np.atleast_1d(x), k)).sum(axis=1)


class TestDirichlet:
    def test_limit_at_zero(self):
        assert dirichlet(4, 0.0) == pytest.approx(4 + 0j)

    def test_order_one(self):
        assert dirichlet(1, 0.37) == pytest.approx(1 + 0j)

    def test_half_period_null(self):
        assert abs(dirichlet(4, 0.5)) < 1e-12

    def test_matches_bruteforce_on_grid(self):
        x = np.linspace(-1.5, 1.5, 1000)
        for n in (1, 2, 4, 7):
            got = dirichlet(n, x)
            want = dirichlet_bruteforce(n, x)
            assert np.max(np.abs(got - want)) < 1e-12

    def test_bounded_by_n(self):
        x = np.linspace(-1, 1, 501)
        for n in (2, 3, 8):
            assert np.all(np.abs(dirichlet(n, x)) <= n + 1e-12)

    def test_integer_arguments_give_n(self):
        for n in (2, 3, 5):
            for m in (-2, -1, 0, 1, 2):
                assert dirichlet(n, float(m)) == pytest.approx(n + 0j, abs=1e-9)

    def test_periodic_with_period_one(self):
        x = np.linspace(-0.5, 0.5, 101)
        assert np.allclose(dirichlet(5, x + 1.0), dirichlet(5, x), atol=1e-10)


class TestFourierOperators:
    @pytest.mark.parametrize("n", [1, 2, 8, 20])
    def test_unitary_and_symmetric(self, n):
        f = FourierOperators.build(n)
        assert np.max(np.abs(f.idft @ f.dft - np.eye(n))) < 1e-12
        assert np.max(np.abs(f.idft - f.idft.T)) < 1e-13

    def test_entry_convention(self):
        f = FourierOperators.build(4)
        assert f.idft[1, 1] == pytest.approx(np.exp(2j * np.pi / 4) / 2)


class TestCpOperators:
    @pytest.mark.parametrize("m,l_cp", [(2, 1), (8, 2), (16, 4), (5, 3)])
    def test_remove_insert_identity(self, m, l_cp):
        ops = CpOperators.build(m, l_cp)
        assert np.array_equal(ops.remove @ ops.insert, np.eye(m))

    def test_insert_structure(self):
        ops = CpOperators.build(6, 2)
        assert np.array_equal(ops.insert[2:], np.eye(6))
        assert np.array_equal(ops.insert[:2], np.eye(6)[-2:])

    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            CpOperators.build(4, 5)


class TestShiftMatrices:
    def test_structure_and_nilpotency(self):
        f, b = shift_matrices(5)
        assert np.array_equal(b, f.T)
        assert np.array_equal(f, np.eye(5, k=-1))
        assert np.array_equal(np.linalg.matrix_power(f, 5), np.zeros((5, 5)))


class TestCirculant:
    def test_unit_first_entry_gives_identity_spectrum(self):
        c = np.zeros(6)
        c[0] = 1.0
        assert np.allclose(circulant_eigenvalues(c), np.ones(6))

    def test_cyclic_shift_spectrum(self):
        p = 6
        c = np.zeros(p)
        c[1] = 1.0
        want = np.exp(-2j * np.pi * np.arange(p) / p)
        assert np.allclose(circulant_eigenvalues(c), want, atol=1e-12)

    def test_reconstruction_matches_direct_circulant(self):
        rng = np.random.default_rng(7)
        p = 8
        c = rng.standard_normal(p) + 1j * rng.standard_normal(p)
        v = circulant_eigenvalues(c)
        w = FourierOperators.build(p)
        rebuilt = w.idft @ np.diag(v) @ w.dft
        assert np.max(np.abs(rebuilt - circulant(c))) < 1e-10

    def test_parseval(self):
        rng = np.random.default_rng(11)
        c = rng.standard_normal(9) + 1j * rng.standard_normal(9)
        v = circulant_eigenvalues(c)
        assert np.sum(np.abs(v) ** 2) == pytest.approx(9 * np.sum(np.abs(c) ** 2))


class TestPulseModels:
    def test_hann_support_and_peak(self):
        pulse = make_pulse("hann")
        assert pulse.l_filter == 2
        t = np.linspace(-1, 3, 801)
        vals = pulse(t)
        assert np.all(vals[(t < 0) | (t >= 2)] == 0.0)
        assert pulse(1.0) == pytest.approx(1.0)

    def test_hann_taps_partition_unity(self):
        pulse = make_pulse("hann")
        for x in (0.0, 0.25, 0.5, 0.9):
            taps = pulse.taps(x)
            assert taps.shape == (3,)
            assert np.sum(taps) == pytest.approx(1.0)

    def test_delayed_spectrum_is_circulant_spectrum(self):
        pulse = make_pulse("hann")
        p = 12
        tau = 1.3
        col = pulse(np.arange(p) - tau)
        assert np.allclose(
            pulse.delayed_spectrum(p, tau), circulant_eigenvalues(col), atol=1e-12
        )

    def test_known_spectrum_is_zero_offset_case(self):
        pulse = make_pulse("hann")
        assert np.allclose(pulse.known_spectrum(10), pulse.delayed_spectrum(10, 0.0))

    def test_rrc_peak_normalised(self):
        pulse = make_pulse("rrc")
        assert pulse(1.0) == pytest.approx(1.0)
        assert pulse(-0.1) == 0.0

    def test_unknown_pulse_rejected(self):
        with pytest.raises(ValueError):
            make_pulse("gauss")


class TestSplitDelay:
    def test_exact_integer(self):
        d, chi = split_delay(2.0, 1.0)
        assert d == 2 and chi == pytest.approx(0.0)

    def test_fractional(self):
        d, chi = split_delay(1.7e-6, 1e-6)
        assert d == 1 and chi == pytest.approx(0.7e-6)


class TestToeplitzFromPulse:
    def test_delta_zero_delay_is_identity(self):
        pulse = make_pulse("delta")
        t = toeplitz_from_pulse(pulse, 0.0, 0, p_total=6, l_cp=2, t_chip=1.0)
        assert np.array_equal(t, np.eye(6))

    def test_delta_one_chip_delay_is_forward_shift(self):
        pulse = make_pulse("delta")
        t = toeplitz_from_pulse(pulse, 1.0, 0, p_total=6, l_cp=2, t_chip=1.0)
        f, _ = shift_matrices(6)
        assert np.array_equal(t, f)

    def test_sum_of_blocks_is_circulant(self):
        pulse = make_pulse("hann")
        p, l_cp, t_chip = 8, 3, 1.0
        tau = 1.5
        t0 = toeplitz_from_pulse(pulse, tau, 0, p, l_cp, t_chip)
        t1 = toeplitz_from_pulse(pulse, tau, 1, p, l_cp, t_chip)
        col = pulse(np.arange(p) - tau)
        assert np.max(np.abs((t0 + t1) - circulant(col))) < 1e-12
        w = FourierOperators.build(p)
        diag = w.dft @ (t0 + t1) @ w.idft
        off = diag - np.diag(np.diag(diag))
        assert np.max(np.abs(off)) < 1e-10
        assert np.allclose(np.diag(diag), circulant_eigenvalues(col), atol=1e-10)

    @pytest.mark.parametrize("name", ["hann", "rect", "rrc"])
    @pytest.mark.parametrize("tau", [0.0, 0.4, 1.0, 1.9])
    def test_diagonalisation_invariant(self, name, tau):
        pulse = make_pulse(name)
        p, l_cp = 10, 4
        t0 = toeplitz_from_pulse(pulse, tau, 0, p, l_cp, 1.0)
        t1 = toeplitz_from_pulse(pulse, tau, 1, p, l_cp, 1.0)
        w = FourierOperators.build(p)
        diag = w.dft @ (t0 + t1) @ w.idft
        off = diag - np.diag(np.diag(diag))
        assert np.max(np.abs(off)) < 1e-10

    def test_cp_violation_rejected(self):
        pulse = make_pulse("hann")
        with pytest.raises(ValueError, match="CP condition"):
            toeplitz_from_pulse(pulse, 3.2, 0, p_total=8, l_cp=4, t_chip=1.0)
        with pytest.raises(ValueError, match="outside"):
            toeplitz_from_pulse(pulse, 5.0, 0, p_total=8, l_cp=4, t_chip=1.0)
