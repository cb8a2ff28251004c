"""Random channel realisation and exact synthesis of the received blocks.

The aerial user sees a two-ray Rician channel with per-ray Doppler shifts;
the terrestrial user sees a static Rayleigh multipath channel.  Synthesis
works on the pre-DFT sample grid (cyclic prefix included) because the blind
estimator consumes exactly those samples; the post-DFT model falls out of it
by CP removal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import (
    CpOperators,
    FourierOperators,
    PulseModel,
    make_pulse,
    split_delay,
    toeplitz_from_pulse,
)
from .waveform import TxWindow, precoder_matrix


class CpViolationError(ValueError):
    """A delay/pulse combination would leak inter-block interference."""


@dataclass(frozen=True)
class LinkGeometry:
    """Static link dimensions plus the derived operator kit."""

    m: int
    l_cp: int
    j_antennas: int
    chip_rate: float
    pulse: PulseModel
    window_au: TxWindow
    window_tu: TxWindow
    cp: CpOperators = field(repr=False)
    fourier_m: FourierOperators = field(repr=False)
    fourier_p: FourierOperators = field(repr=False)
    omega_au: np.ndarray = field(repr=False)   # (P, M) precoder, AU window
    omega_tu: np.ndarray = field(repr=False)   # (P, M) precoder, TU window

    @property
    def p_total(self) -> int:
        return self.m + self.l_cp

    @property
    def t_chip(self) -> float:
        return 1.0 / self.chip_rate

    @property
    def t_symbol(self) -> float:
        return self.p_total / self.chip_rate


def make_geometry(
    m: int = 16,
    l_cp: int = 4,
    j_antennas: int = 4,
    chip_rate: float = 625e3,
    pulse: str | PulseModel = "hann",
    window_au: TxWindow | None = None,
    window_tu: TxWindow | None = None,
) -> LinkGeometry:
    if isinstance(pulse, str):
        pulse = make_pulse(pulse)
    cp = CpOperators.build(m, l_cp)
    p_total = cp.p_total
    window_au = window_au or TxWindow.rectangular(p_total)
    window_tu = window_tu or TxWindow.rectangular(p_total)
    fourier_m = FourierOperators.build(m)
    fourier_p = FourierOperators.build(p_total)
    return LinkGeometry(
        m=m,
        l_cp=l_cp,
        j_antennas=j_antennas,
        chip_rate=chip_rate,
        pulse=pulse,
        window_au=window_au,
        window_tu=window_tu,
        cp=cp,
        fourier_m=fourier_m,
        fourier_p=fourier_p,
        omega_au=precoder_matrix(window_au, cp, fourier_m),
        omega_tu=precoder_matrix(window_tu, cp, fourier_m),
    )


def steering_vector(theta: float, j_antennas: int) -> np.ndarray:
    """Half-wavelength ULA response: entries exp(1j*pi*(j-1)*sin(theta))."""
    return np.exp(1j * np.pi * np.arange(j_antennas) * np.sin(theta))


def steering_phases(eta: complex, j_antennas: int) -> np.ndarray:
    """Powers eta^(j-1) of a unit-modulus inter-antenna phase factor."""
    return eta ** np.arange(j_antennas)


def exponential_delay_transform(u, delta: float, tau_slope: float):
    """Map uniform u in [0, 1] to a delay with one-sided exponential profile."""
    return -tau_slope * np.log1p(-np.asarray(u) * (1.0 - np.exp(-delta / tau_slope)))


def exponential_delays(
    count: int, delta: float, tau_slope: float, rng: np.random.Generator
) -> np.ndarray:
    """One-sided exponentially decreasing delay power spectrum on [0, delta)."""
    u = rng.uniform(0.0, 1.0, size=count)
    u = np.minimum(u, 1.0 - 1e-12)   # keep tau strictly below delta
    return exponential_delay_transform(u, delta, tau_slope)


@dataclass
class AuChannelState:
    """Two-ray aerial channel: line-of-sight plus one scattered ray."""

    gains: np.ndarray        # (2,) complex
    delays: np.ndarray       # (2,) seconds
    nus: np.ndarray          # (2,) normalised Doppler shifts f*T_s
    aoas: np.ndarray         # (2,) arrival angles at the array, radians
    aods: np.ndarray         # (2,) departure angles vs. motion, radians
    f_max: float
    k_factor: float

    @property
    def etas(self) -> np.ndarray:
        return np.exp(1j * np.pi * np.sin(self.aoas))


@dataclass
class TuChannelState:
    """Static terrestrial multipath channel with aggregated per-antenna taps."""

    gains: np.ndarray        # (K_T,) complex
    delays: np.ndarray       # (K_T,) seconds
    aoas: np.ndarray         # (K_T,) radians
    taps: np.ndarray         # (J, L_cp) aggregated complex taps

    @property
    def stacked_taps(self) -> np.ndarray:
        return self.taps.reshape(-1)


def aggregate_tu_taps(
    gains: np.ndarray,
    delays: np.ndarray,
    aoas: np.ndarray,
    geom: LinkGeometry,
) -> np.ndarray:
    """Fold path gains, steering and pulse samples into (J, L_cp) taps.

    Raises CpViolationError when a nonzero pulse sample would land at or
    beyond tap L_cp, because the diagonal post-DFT model then breaks.
    """
    j_ant, l_cp = geom.j_antennas, geom.l_cp
    taps = np.zeros((j_ant, l_cp), dtype=complex)
    for g, tau, theta in zip(gains, delays, aoas):
        d, chi = split_delay(tau, geom.t_chip)
        pulse_taps = geom.pulse.taps(chi / geom.t_chip)
        phases = steering_vector(theta, j_ant)
        for ell, a in enumerate(pulse_taps):
            if a == 0.0:
                continue
            if not 0 <= d + ell < l_cp:
                raise CpViolationError(
                    f"terrestrial tap at index {d + ell} exceeds L_cp={l_cp}"
                )
            taps[:, d + ell] += g * phases * a
    return taps


def draw_au_channel(
    geom: LinkGeometry,
    k_factor: float,
    f_max: float,
    delta_a: float,
    tau_slope: float,
    rng: np.random.Generator,
    total_power: float = 1.0,
) -> AuChannelState:
    """Rician two-ray aerial draw with the configured total received power."""
    if k_factor <= 0.0:
        raise ValueError("Rician factor must be positive (linear scale)")
    los_power = total_power * k_factor / (1.0 + k_factor)
    scatter_var = total_power / (1.0 + k_factor)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    g0 = np.sqrt(los_power) * np.exp(1j * phase)
    g1 = np.sqrt(scatter_var / 2.0) * (rng.standard_normal() + 1j * rng.standard_normal())
    delays = exponential_delays(2, delta_a, tau_slope, rng)
    aods = rng.uniform(0.0, np.pi, size=2)
    nus = f_max * geom.t_symbol * np.cos(aods)
    aoas = rng.uniform(-np.pi / 2, np.pi / 2, size=2)
    if delays.max() * f_max >= 0.01:
        raise ValueError("channel is not underspread: delay*Doppler too large")
    return AuChannelState(
        gains=np.array([g0, g1]),
        delays=delays,
        nus=nus,
        aoas=aoas,
        aods=aods,
        f_max=f_max,
        k_factor=k_factor,
    )


def draw_tu_channel(
    geom: LinkGeometry,
    k_paths: int,
    delta_t: float,
    tau_slope: float,
    rng: np.random.Generator,
    total_power: float = 1.0,
) -> TuChannelState:
    """Rayleigh multipath draw with equal per-path variance split."""
    if delta_t > (geom.l_cp - geom.pulse.l_filter) * geom.t_chip + 1e-15:
        raise CpViolationError(
            "terrestrial delay spread exceeds (L_cp - L_filter) chips"
        )
    var = total_power / k_paths
    gains = np.sqrt(var / 2.0) * (
        rng.standard_normal(k_paths) + 1j * rng.standard_normal(k_paths)
    )
    delays = exponential_delays(k_paths, delta_t, tau_slope, rng)
    aoas = rng.uniform(-np.pi / 2, np.pi / 2, size=k_paths)
    taps = aggregate_tu_taps(gains, delays, aoas, geom)
    return TuChannelState(gains=gains, delays=delays, aoas=aoas, taps=taps)


def apply_min_delay_lock(
    au: AuChannelState, tu: TuChannelState, geom: LinkGeometry
) -> tuple[AuChannelState, TuChannelState]:
    """Shift the joint delay origin so the earliest path of either user is 0."""
    t_min = min(au.delays.min(), tu.delays.min())
    au_locked = AuChannelState(
        gains=au.gains,
        delays=au.delays - t_min,
        nus=au.nus,
        aoas=au.aoas,
        aods=au.aods,
        f_max=au.f_max,
        k_factor=au.k_factor,
    )
    tu_locked = TuChannelState(
        gains=tu.gains,
        delays=tu.delays - t_min,
        aoas=tu.aoas,
        taps=aggregate_tu_taps(tu.gains, tu.delays - t_min, tu.aoas, geom),
    )
    return au_locked, tu_locked


# ---------------------------------------------------------------------------
# Per-ray bases and effective post-DFT matrices
# ---------------------------------------------------------------------------

def ray_time_bases(
    geom: LinkGeometry, nu: float, tau: float, omega: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(P, M) current-block and previous-block maps D * T^(b) * Omega."""
    p_total = geom.p_total
    doppler = np.exp(2j * np.pi * nu * np.arange(p_total) / p_total)
    t0 = toeplitz_from_pulse(geom.pulse, tau, 0, p_total, geom.l_cp, geom.t_chip)
    t1 = toeplitz_from_pulse(geom.pulse, tau, 1, p_total, geom.l_cp, geom.t_chip)
    return doppler[:, None] * (t0 @ omega), doppler[:, None] * (t1 @ omega)


def au_freq_basis(geom: LinkGeometry, nu: float, tau: float) -> np.ndarray:
    """(M, M) post-DFT single-ray aerial map (unit gain, first antenna)."""
    b0, _ = ray_time_bases(geom, nu, tau, geom.omega_au)
    return geom.fourier_m.dft @ geom.cp.remove @ b0


def au_channel_stack(
    geom: LinkGeometry,
    gains: np.ndarray,
    etas: np.ndarray,
    nus: np.ndarray,
    taus: np.ndarray,
    blocks: np.ndarray,
) -> np.ndarray:
    """Exact (B, J*M, M) aerial channel matrices for the given block indices.

    Parameterised by raw ray values so estimated and true channels share the
    same construction.
    """
    blocks = np.atleast_1d(blocks)
    j_ant, m = geom.j_antennas, geom.m
    out = np.zeros((blocks.size, j_ant * m, m), dtype=complex)
    for g, eta, nu, tau in zip(gains, etas, nus, taus):
        base = au_freq_basis(geom, nu, tau)                       # (M, M)
        ant = g * steering_phases(eta, j_ant)                     # (J,)
        phases = np.exp(2j * np.pi * nu * blocks)                 # (B,)
        ray = np.einsum("b,j,mk->bjmk", phases, ant, base)
        out += ray.reshape(blocks.size, j_ant * m, m)
    return out


def tu_diagonals(tu: TuChannelState, geom: LinkGeometry) -> np.ndarray:
    """(J, M) per-antenna diagonal entries of the terrestrial channel."""
    sel = geom.fourier_m.dft[:, : geom.l_cp]        # W_M^H restricted to CP taps
    return np.sqrt(geom.m) * tu.taps @ sel.T


def tu_diagonals_from_taps(taps: np.ndarray, geom: LinkGeometry) -> np.ndarray:
    sel = geom.fourier_m.dft[:, : geom.l_cp]
    return np.sqrt(geom.m) * taps.reshape(geom.j_antennas, geom.l_cp) @ sel.T


def tu_channel_stack(diagonals: np.ndarray, geom: LinkGeometry) -> np.ndarray:
    """(J*M, M) stacked diagonal blocks from the (J, M) diagonal entries."""
    j_ant, m = geom.j_antennas, geom.m
    out = np.zeros((j_ant * m, m), dtype=complex)
    for j in range(j_ant):
        out[j * m : (j + 1) * m, :] = np.diag(diagonals[j])
    return out


def effective_matrices(
    au: AuChannelState, tu: TuChannelState, geom: LinkGeometry, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Post-DFT aerial matrices (J, M, M) and terrestrial diagonals (J, M)."""
    stack = au_channel_stack(geom, au.gains, au.etas, au.nus, au.delays, np.array([n]))[0]
    h_au = stack.reshape(geom.j_antennas, geom.m, geom.m)
    return h_au, tu_diagonals(tu, geom)


# ---------------------------------------------------------------------------
# Frame synthesis
# ---------------------------------------------------------------------------

@dataclass
class FrameSet:
    """All received blocks of one coherence interval."""

    y_bar: np.ndarray      # (J, N, P) pre-DFT samples, CP included
    y: np.ndarray          # (J, N, M) post-DFT samples
    noise_var: float

    @property
    def n_blocks(self) -> int:
        return self.y_bar.shape[1]

    def stacked(self, blocks: np.ndarray) -> np.ndarray:
        """(B, J*M) post-DFT observation vectors for the given block indices."""
        j_ant, _, m = self.y.shape
        return self.y[:, blocks, :].transpose(1, 0, 2).reshape(len(blocks), j_ant * m)


def _shift_prev(blocks: np.ndarray) -> np.ndarray:
    prev = np.zeros_like(blocks)
    prev[1:] = blocks[:-1]
    return prev


def synthesize_interval(
    au: AuChannelState,
    tu: TuChannelState,
    sym_au: np.ndarray,
    sym_tu: np.ndarray,
    noise_var: float,
    geom: LinkGeometry,
    rng: np.random.Generator | None = None,
) -> FrameSet:
    """Exact received samples for a whole coherence interval.

    sym_* are (N, M) subcarrier symbols; block -1 is taken as silence.  The
    previous-block pulse tail is included, so the output carries genuine
    inter-block interference on the CP samples.
    """
    n_blocks, m = sym_au.shape
    if sym_tu.shape != (n_blocks, m) or m != geom.m:
        raise ValueError("symbol arrays must both be (N, M) with the geometry's M")
    j_ant, p_total = geom.j_antennas, geom.p_total
    prev_au = _shift_prev(sym_au)
    prev_tu = _shift_prev(sym_tu)
    n_idx = np.arange(n_blocks)

    y_bar = np.zeros((j_ant, n_blocks, p_total), dtype=complex)
    for g, eta, nu, tau in zip(au.gains, au.etas, au.nus, au.delays):
        b0, b1 = ray_time_bases(geom, nu, tau, geom.omega_au)
        ray = sym_au @ b0.T + prev_au @ b1.T                      # (N, P)
        ray *= (g * np.exp(2j * np.pi * nu * n_idx))[:, None]
        y_bar += steering_phases(eta, j_ant)[:, None, None] * ray[None, :, :]
    for g, tau, theta in zip(tu.gains, tu.delays, tu.aoas):
        b0, b1 = ray_time_bases(geom, 0.0, tau, geom.omega_tu)
        path = sym_tu @ b0.T + prev_tu @ b1.T
        path *= g
        eta = np.exp(1j * np.pi * np.sin(theta))
        y_bar += steering_phases(eta, j_ant)[:, None, None] * path[None, :, :]

    if noise_var > 0.0:
        if rng is None:
            raise ValueError("noise_var > 0 requires an rng")
        noise = rng.standard_normal((j_ant, n_blocks, p_total)) + 1j * rng.standard_normal(
            (j_ant, n_blocks, p_total)
        )
        y_bar += np.sqrt(noise_var / 2.0) * noise

    y = y_bar[:, :, geom.l_cp :] @ geom.fourier_m.idft.conj()
    return FrameSet(y_bar=y_bar, y=y, noise_var=noise_var)


def synthesize_frame(
    n: int,
    sym_au_n: np.ndarray,
    sym_au_prev: np.ndarray,
    sym_tu_n: np.ndarray,
    sym_tu_prev: np.ndarray,
    au: AuChannelState,
    tu: TuChannelState,
    noise_var: float,
    geom: LinkGeometry,
    rng: np.random.Generator | None = None,
) -> FrameSet:
    """Single received block at absolute index n."""
    j_ant, p_total = geom.j_antennas, geom.p_total
    y_bar = np.zeros((j_ant, 1, p_total), dtype=complex)
    for g, eta, nu, tau in zip(au.gains, au.etas, au.nus, au.delays):
        b0, b1 = ray_time_bases(geom, nu, tau, geom.omega_au)
        ray = g * np.exp(2j * np.pi * nu * n) * (b0 @ sym_au_n + b1 @ sym_au_prev)
        y_bar[:, 0, :] += np.outer(steering_phases(eta, j_ant), ray)
    for g, tau, theta in zip(tu.gains, tu.delays, tu.aoas):
        b0, b1 = ray_time_bases(geom, 0.0, tau, geom.omega_tu)
        path = g * (b0 @ sym_tu_n + b1 @ sym_tu_prev)
        eta = np.exp(1j * np.pi * np.sin(theta))
        y_bar[:, 0, :] += np.outer(steering_phases(eta, j_ant), path)
    if noise_var > 0.0:
        if rng is None:
            raise ValueError("noise_var > 0 requires an rng")
        noise = rng.standard_normal(y_bar.shape) + 1j * rng.standard_normal(y_bar.shape)
        y_bar = y_bar + np.sqrt(noise_var / 2.0) * noise
    y = y_bar[:, :, geom.l_cp :] @ geom.fourier_m.idft.conj()
    return FrameSet(y_bar=y_bar, y=y, noise_var=noise_var)
