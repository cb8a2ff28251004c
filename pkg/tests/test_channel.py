"""Channel-layer tests, anchored by a per-sample scalar recomputation oracle."""

import numpy as np
import pytest

from skynoma.channel import (
    AuChannelState,
    CpViolationError,
    TuChannelState,
    aggregate_tu_taps,
    apply_min_delay_lock,
    au_channel_stack,
    au_freq_basis,
    draw_au_channel,
    draw_tu_channel,
    effective_matrices,
    exponential_delay_transform,
    make_geometry,
    steering_vector,
    synthesize_frame,
    synthesize_interval,
    tu_channel_stack,
    tu_diagonals,
)
from skynoma.operators import split_delay
from skynoma.waveform import BPSK, QPSK, draw_symbols


def scalar_form_oracle(au, tu, sym_au, sym_tu, geom):
    """Direct per-sample evaluation of the received signal.

    Recomputes every sample from the raw double sum over blocks and chips,
    with no structured matrices anywhere, as an independent oracle for the
    vectorised synthesis.
    """
    n_blocks, m = sym_au.shape
    p_total = geom.p_total
    j_ant = geom.j_antennas
    t_chip = geom.t_chip

    def precoded(sym, window):
        time = sym @ geom.fourier_m.idft.T
        return np.hstack([time[:, m - geom.l_cp :], time]) * window.weights

    u_au = precoded(sym_au, geom.window_au)
    u_tu = precoded(sym_tu, geom.window_tu)

    def x_path(u_blocks, tau, n, p):
        d, chi = split_delay(tau, t_chip)
        total = 0.0 + 0j
        for ell in (n - 1, n):
            if ell < 0:
                continue
            for q in range(p_total):
                h = (n - ell) * p_total + (p - q) - d
                total += u_blocks[ell, q] * geom.pulse(h - chi / t_chip)
        return total

    out = np.zeros((j_ant, n_blocks, p_total), dtype=complex)
    for j in range(j_ant):
        for n in range(n_blocks):
            for p in range(p_total):
                acc = 0.0 + 0j
                for g, nu, tau, theta in zip(au.gains, au.nus, au.delays, au.aoas):
                    acc += (
                        g
                        * np.exp(2j * np.pi * nu * (n + p / p_total))
                        * x_path(u_au, tau, n, p)
                        * np.exp(1j * np.pi * j * np.sin(theta))
                    )
                for g, tau, theta in zip(tu.gains, tu.delays, tu.aoas):
                    acc += g * x_path(u_tu, tau, n, p) * np.exp(
                        1j * np.pi * j * np.sin(theta)
                    )
                out[j, n, p] = acc
    return out


def small_geometry():
    return make_geometry(m=4, l_cp=3, j_antennas=2, chip_rate=1e6, pulse="hann")


def manual_au(geom, gains, delays, nus, aoas):
    return AuChannelState(
        gains=np.asarray(gains, dtype=complex),
        delays=np.asarray(delays, dtype=float),
        nus=np.asarray(nus, dtype=float),
        aoas=np.asarray(aoas, dtype=float),
        aods=np.zeros(len(gains)),
        f_max=900.0,
        k_factor=4.0,
    )


def manual_tu(geom, gains, delays, aoas):
    gains = np.asarray(gains, dtype=complex)
    delays = np.asarray(delays, dtype=float)
    aoas = np.asarray(aoas, dtype=float)
    return TuChannelState(
        gains=gains,
        delays=delays,
        aoas=aoas,
        taps=aggregate_tu_taps(gains, delays, aoas, geom),
    )


class TestDelayProfile:
    def test_formula_endpoints(self):
        assert exponential_delay_transform(0.0, 3.0, 2.0) == pytest.approx(0.0)
        assert exponential_delay_transform(1.0, 3.0, 2.0) == pytest.approx(3.0)

    def test_midpoint_closed_form(self):
        # independently evaluated closed form at u = 0.5, delta = 3Tc, slope = 2Tc
        assert exponential_delay_transform(0.5, 3.0, 2.0) == pytest.approx(
            0.9834678051543858, abs=1e-12
        )


class TestChannelDraws:
    def test_rician_power_split(self):
        geom = make_geometry()
        k_lin = 10 ** 0.6
        rng = np.random.default_rng(0)
        draws = [
            draw_au_channel(geom, k_lin, 900.0, 3 * geom.t_chip, 2 * geom.t_chip, rng)
            for _ in range(4000)
        ]
        los = np.array([np.abs(d.gains[0]) ** 2 for d in draws])
        scatter = np.array([np.abs(d.gains[1]) ** 2 for d in draws])
        assert np.allclose(los, 0.7992399910868981, atol=1e-12)
        assert np.mean(scatter) == pytest.approx(0.20076000891310175, rel=0.05)

    def test_doppler_law(self):
        geom = make_geometry()
        rng = np.random.default_rng(1)
        au = draw_au_channel(geom, 4.0, 900.0, 3 * geom.t_chip, 2 * geom.t_chip, rng)
        assert np.allclose(au.nus, 900.0 * geom.t_symbol * np.cos(au.aods))
        assert np.all(np.abs(au.nus) <= 0.5)

    def test_huge_rician_factor_kills_scatter(self):
        geom = make_geometry()
        rng = np.random.default_rng(2)
        au = draw_au_channel(geom, 1e12, 900.0, 3 * geom.t_chip, 2 * geom.t_chip, rng)
        assert np.abs(au.gains[1]) ** 2 < 1e-9

    def test_tu_power_budget(self):
        geom = make_geometry()
        rng = np.random.default_rng(3)
        power = np.mean(
            [
                np.sum(
                    np.abs(
                        draw_tu_channel(
                            geom, 2, 2 * geom.t_chip, 2 * geom.t_chip, rng, 0.5
                        ).gains
                    )
                    ** 2
                )
                for _ in range(4000)
            ]
        )
        assert power == pytest.approx(0.5, rel=0.05)

    def test_tu_delay_spread_rejected(self):
        geom = make_geometry()  # hann pulse: l_filter = 2, so spread caps at 2 chips
        rng = np.random.default_rng(4)
        with pytest.raises(CpViolationError):
            draw_tu_channel(geom, 2, 3 * geom.t_chip, 2 * geom.t_chip, rng)

    def test_min_delay_lock(self):
        geom = make_geometry()
        rng = np.random.default_rng(5)
        au = draw_au_channel(geom, 4.0, 900.0, 3 * geom.t_chip, 2 * geom.t_chip, rng)
        tu = draw_tu_channel(geom, 2, 2 * geom.t_chip, 2 * geom.t_chip, rng)
        au2, tu2 = apply_min_delay_lock(au, tu, geom)
        all_delays = np.concatenate([au2.delays, tu2.delays])
        assert all_delays.min() == pytest.approx(0.0, abs=1e-18)
        assert np.all(all_delays >= -1e-18)


class TestSynthesis:
    def test_scalar_form_oracle(self):
        geom = small_geometry()
        rng = np.random.default_rng(7)
        au = manual_au(
            geom,
            gains=[0.9 * np.exp(0.3j), 0.4 * np.exp(-1.1j)],
            delays=[0.0, 1.4 * geom.t_chip],
            nus=[0.013, -0.021],
            aoas=[0.4, -0.7],
        )
        tu = manual_tu(
            geom,
            gains=[0.8 * np.exp(0.9j)],
            delays=[0.3 * geom.t_chip],
            aoas=[0.2],
        )
        sym_au = draw_symbols(BPSK, (3, 4), rng)
        sym_tu = draw_symbols(QPSK, (3, 4), rng)
        frames = synthesize_interval(au, tu, sym_au, sym_tu, 0.0, geom)
        want = scalar_form_oracle(au, tu, sym_au, sym_tu, geom)
        assert np.max(np.abs(frames.y_bar - want)) < 1e-10

    def test_zero_symbols_zero_noise(self):
        geom = small_geometry()
        au = manual_au(geom, [1, 1], [0, 0], [0.01, 0.02], [0.1, 0.2])
        tu = manual_tu(geom, [1], [0], [0.0])
        frames = synthesize_interval(
            au, tu, np.zeros((2, 4)), np.zeros((2, 4)), 0.0, geom
        )
        assert np.all(frames.y_bar == 0)

    def test_two_coincident_rays_double_the_block(self):
        geom = make_geometry(m=4, l_cp=1, j_antennas=1, chip_rate=1e6, pulse="delta")
        au = manual_au(geom, [1, 1], [0, 0], [0.0, 0.0], [0.0, 0.0])
        tu = manual_tu(geom, [0], [0], [0.0])
        rng = np.random.default_rng(8)
        sym_au = draw_symbols(BPSK, (1, 4), rng)
        frames = synthesize_interval(au, tu, sym_au, np.zeros((1, 4)), 0.0, geom)
        u = sym_au @ (geom.omega_au).T
        assert np.max(np.abs(frames.y_bar[0] - 2 * u)) < 1e-12

    def test_single_frame_matches_interval(self):
        geom = small_geometry()
        rng = np.random.default_rng(9)
        au = manual_au(
            geom, [0.7, 0.3j], [0.0, 0.9 * geom.t_chip], [0.017, -0.008], [0.5, -0.2]
        )
        tu = manual_tu(geom, [0.5], [0.2 * geom.t_chip], [0.3])
        sym_au = draw_symbols(BPSK, (4, 4), rng)
        sym_tu = draw_symbols(QPSK, (4, 4), rng)
        frames = synthesize_interval(au, tu, sym_au, sym_tu, 0.0, geom)
        single = synthesize_frame(
            2, sym_au[2], sym_au[1], sym_tu[2], sym_tu[1], au, tu, 0.0, geom
        )
        assert np.max(np.abs(single.y_bar[:, 0, :] - frames.y_bar[:, 2, :])) < 1e-12

    def test_interblock_interference_removed_by_cp(self):
        geom = small_geometry()
        rng = np.random.default_rng(10)
        au = manual_au(
            geom, [0.8, 0.4], [0.3 * geom.t_chip, 1.2 * geom.t_chip], [0.02, -0.01], [0.1, 0.9]
        )
        tu = manual_tu(geom, [0.9], [0.7 * geom.t_chip], [-0.4])
        sym_au = draw_symbols(BPSK, (3, 4), rng)
        sym_tu = draw_symbols(QPSK, (3, 4), rng)
        with_prev = synthesize_interval(au, tu, sym_au, sym_tu, 0.0, geom)
        wiped_au, wiped_tu = sym_au.copy(), sym_tu.copy()
        wiped_au[:2] = 0.0
        wiped_tu[:2] = 0.0
        without_prev = synthesize_interval(au, tu, wiped_au, wiped_tu, 0.0, geom)
        # pre-DFT samples differ (IBI is present) but post-DFT block 2 does not
        assert np.max(np.abs(with_prev.y_bar[:, 2] - without_prev.y_bar[:, 2])) > 1e-6
        assert np.max(np.abs(with_prev.y[:, 2] - without_prev.y[:, 2])) < 1e-10


class TestEffectiveMatrices:
    def test_end_to_end_post_dft_model(self):
        geom = small_geometry()
        rng = np.random.default_rng(11)
        au = manual_au(
            geom, [0.7, 0.2 + 0.5j], [0.0, 1.3 * geom.t_chip], [0.02, -0.013], [0.6, -0.9]
        )
        tu = manual_tu(
            geom, [0.6, 0.3j], [0.0, 0.8 * geom.t_chip], [0.2, -0.5]
        )
        sym_au = draw_symbols(BPSK, (5, 4), rng)
        sym_tu = draw_symbols(QPSK, (5, 4), rng)
        frames = synthesize_interval(au, tu, sym_au, sym_tu, 0.0, geom)
        m_tu = tu_channel_stack(tu_diagonals(tu, geom), geom)
        for n in (0, 3, 4):
            h_au = au_channel_stack(
                geom, au.gains, au.etas, au.nus, au.delays, np.array([n])
            )[0]
            got = frames.stacked(np.array([n]))[0]
            want = h_au @ sym_au[n] + m_tu @ sym_tu[n]
            assert np.max(np.abs(got - want)) < 1e-9

    def test_tu_diagonal_matches_dft_of_effective_matrix(self):
        geom = small_geometry()
        tu = manual_tu(geom, [0.5, 0.8j], [0.0, 0.6 * geom.t_chip], [0.1, 0.7])
        from skynoma.channel import ray_time_bases

        for j in range(geom.j_antennas):
            h_eff = np.zeros((geom.m, geom.m), dtype=complex)
            for g, tau, theta in zip(tu.gains, tu.delays, tu.aoas):
                b0, _ = ray_time_bases(geom, 0.0, tau, geom.omega_tu)
                eta = np.exp(1j * np.pi * np.sin(theta))
                h_eff += g * eta**j * (geom.fourier_m.dft @ geom.cp.remove @ b0)
            off = h_eff - np.diag(np.diag(h_eff))
            assert np.max(np.abs(off)) < 1e-10
            assert np.max(np.abs(np.diag(h_eff) - tu_diagonals(tu, geom)[j])) < 1e-10

    def test_flat_channel_identity(self):
        geom = make_geometry(m=4, l_cp=1, j_antennas=1, chip_rate=1e6, pulse="delta")
        tu = manual_tu(geom, [1.0], [0.0], [0.0])
        assert np.allclose(tu_diagonals(tu, geom), np.ones((1, 4)))

    def test_integer_delay_phase_ramp(self):
        geom = make_geometry(m=8, l_cp=3, j_antennas=1, chip_rate=1e6, pulse="delta")
        g = 0.7 - 0.2j
        tu = manual_tu(geom, [g], [2 * geom.t_chip], [0.0])
        want = g * np.exp(-2j * np.pi * np.arange(8) * 2 / 8)
        assert np.allclose(tu_diagonals(tu, geom)[0], want, atol=1e-12)

    def test_doppler_introduces_ici(self):
        geom = small_geometry()
        basis = au_freq_basis(geom, nu=0.05, tau=0.0)
        off = basis - np.diag(np.diag(basis))
        assert np.max(np.abs(off)) > 1e-3

    def test_per_ray_steering_factorisation(self):
        geom = small_geometry()
        au = manual_au(geom, [0.9, 0.0], [0.4 * geom.t_chip, 0.0], [0.02, 0.0], [0.7, 0.0])
        h_au, _ = effective_matrices(au, manual_tu(geom, [0], [0], [0]), geom, n=3)
        eta = au.etas[0]
        for j in range(1, geom.j_antennas):
            assert np.max(np.abs(h_au[j] - eta**j * h_au[0])) < 1e-12

    def test_steering_vector_convention(self):
        v = steering_vector(0.3, 4)
        assert v[0] == 1.0
        assert np.allclose(np.abs(v), 1.0)
        assert v[2] == pytest.approx(np.exp(2j * np.pi * np.sin(0.3)))
