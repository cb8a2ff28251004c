"""Structured-matrix kit: DFT/CP/shift operators, circulants, and pulse models.

Everything in here is small and dense on purpose: block sizes in this
simulator stay in the tens, so clarity beats asymptotics.  FFT shortcuts are
used only where they are bit-compatible with the dense definitions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


def dirichlet(n: int, x) -> complex | np.ndarray:
    """Periodic sinc D_n(x) = sin(pi*x*n)/sin(pi*x) * exp(-1j*pi*(n-1)*x).

    Equals the geometric sum of n unit phasors exp(-2j*pi*k*x), so the
    removable singularities at integer x evaluate to n.  Near-singular
    arguments (|sin(pi*x)| < 1e-9) are routed through the explicit sum.

    Parameters
    ----------
    n : int
        Number of phasors (n >= 1); here typically the array size.
    x : float or ndarray
        Dimensionless argument (a direction cosine in the array context).
    """
    if n < 1:
        raise ValueError("dirichlet order must be >= 1")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty(x.shape, dtype=complex)
    sin_den = np.sin(np.pi * x)
    near = np.abs(sin_den) < 1e-9
    ok = ~near
    out[ok] = (np.sin(np.pi * x[ok] * n) / sin_den[ok]) * np.exp(
        -1j * np.pi * (n - 1) * x[ok]
    )
    if np.any(near):
        k = np.arange(n)
        out[near] = np.exp(-2j * np.pi * np.outer(x[near], k)).sum(axis=1)
    return out[0] if scalar else out


@dataclass(frozen=True)
class FourierOperators:
    """Unitary symmetric n-point IDFT matrix and its inverse (the DFT)."""

    n: int
    idft: np.ndarray = field(repr=False)
    dft: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, n: int) -> "FourierOperators":
        if n < 1:
            raise ValueError("transform size must be >= 1")
        m = np.arange(n)
        w = np.exp(2j * np.pi * np.outer(m, m) / n) / np.sqrt(n)
        w.setflags(write=False)
        wh = w.conj().T.copy()
        wh.setflags(write=False)
        return cls(n=n, idft=w, dft=wh)


@dataclass(frozen=True)
class CpOperators:
    """Cyclic-prefix insertion/removal matrices for an M-point block."""

    m: int
    l_cp: int
    insert: np.ndarray = field(repr=False)   # (P, M)
    remove: np.ndarray = field(repr=False)   # (M, P)

    @property
    def p_total(self) -> int:
        return self.m + self.l_cp

    @classmethod
    def build(cls, m: int, l_cp: int) -> "CpOperators":
        if m < 1 or l_cp < 0 or l_cp > m:
            raise ValueError(f"bad CP geometry m={m}, l_cp={l_cp}")
        eye = np.eye(m)
        insert = np.vstack([eye[m - l_cp:], eye])
        remove = np.hstack([np.zeros((m, l_cp)), eye])
        insert.setflags(write=False)
        remove.setflags(write=False)
        return cls(m=m, l_cp=l_cp, insert=insert, remove=remove)


def shift_matrices(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Forward shift F (ones on the first subdiagonal) and backward B = F^T."""
    f = np.eye(p, k=-1)
    b = f.T.copy()
    f.setflags(write=False)
    b.setflags(write=False)
    return f, b


def circulant_eigenvalues(first_column: np.ndarray) -> np.ndarray:
    """Eigenvalues v of the circulant C with the given first column.

    v = sqrt(P) * W_P^H c, ordered so that C = W_P diag(v) W_P^H; this is
    exactly the unnormalised DFT of the first column.
    """
    c = np.asarray(first_column)
    if c.ndim != 1 or c.size < 1:
        raise ValueError("first_column must be a nonempty vector")
    return np.fft.fft(c)


def circulant(first_column: np.ndarray) -> np.ndarray:
    """Dense circulant matrix from its first column (test/oracle helper)."""
    c = np.asarray(first_column)
    p = c.size
    idx = (np.arange(p)[:, None] - np.arange(p)[None, :]) % p
    return c[idx]


# ---------------------------------------------------------------------------
# Transmit/receive pulse models
# ---------------------------------------------------------------------------

def _hann_2chip(t: np.ndarray) -> np.ndarray:
    # raised-cosine interpolation lobe, peak 1 at t = 1 chip
    return np.where((t >= 0.0) & (t < 2.0), 0.5 * (1.0 - np.cos(np.pi * t)), 0.0)


def _rect_1chip(t: np.ndarray) -> np.ndarray:
    return np.where((t >= 0.0) & (t < 1.0), 1.0, 0.0)


def _delta_chip(t: np.ndarray) -> np.ndarray:
    return np.where(t == 0.0, 1.0, 0.0)


def _rrc_2chip(t: np.ndarray, beta: float = 0.5) -> np.ndarray:
    # root-raised-cosine truncated to [0, 2) chips, centred at t = 1
    x = np.asarray(t, dtype=float) - 1.0
    out = np.zeros_like(x)
    inside = (t >= 0.0) & (t < 2.0)
    xx = x[inside]
    num = np.sin(np.pi * xx * (1 - beta)) + 4 * beta * xx * np.cos(np.pi * xx * (1 + beta))
    den = np.pi * xx * (1 - (4 * beta * xx) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = num / den
    val = np.where(np.abs(xx) < 1e-9, 1 - beta + 4 * beta / np.pi, val)
    sing = np.abs(np.abs(4 * beta * xx) - 1.0) < 1e-9
    if np.any(sing):
        s = (beta / np.sqrt(2)) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
            + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
        )
        val = np.where(sing, s, val)
    peak = 1 - beta + 4 * beta / np.pi
    out[inside] = val / peak
    return out


@dataclass(frozen=True)
class PulseModel:
    """Cascade of the DAC interpolation and ADC anti-aliasing responses.

    The pulse is supported on [0, l_filter) chips and known at the receiver.
    ``taps`` returns the l_filter+1 samples psi((ell - x)*T_c) that a path
    with fractional chip offset x in [0, 1) produces on the sampling grid.
    """

    name: str
    l_filter: int
    _func: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __call__(self, t_chips) -> np.ndarray:
        return self._func(np.asarray(t_chips, dtype=float))

    def taps(self, frac_chips: float) -> np.ndarray:
        if not 0.0 <= frac_chips < 1.0:
            raise ValueError("fractional offset must lie in [0, 1) chips")
        ell = np.arange(self.l_filter + 1, dtype=float)
        return self._func(ell - frac_chips)

    def known_spectrum(self, p_total: int) -> np.ndarray:
        """P-point DFT of the chip-grid samples psi(ell*T_c) (offset zero)."""
        samples = np.zeros(p_total)
        ell = np.arange(min(self.l_filter + 1, p_total))
        samples[ell] = self._func(ell.astype(float))
        return np.fft.fft(samples)

    def delayed_spectrum(self, p_total: int, tau_chips: float) -> np.ndarray:
        """Exact circulant eigenvalues of the pulse delayed by tau chips.

        Entry p is sum_h psi((h - tau)*T_c) exp(-2j*pi*p*h/P): the spectrum
        the receiver predicts for a candidate delay, valid for any pulse
        (no band-limitation approximation).
        """
        h = np.arange(p_total, dtype=float)
        col = self._func(h - tau_chips)
        return np.fft.fft(col)


_PULSES: dict[str, tuple[int, Callable]] = {
    "hann": (2, _hann_2chip),
    "rect": (1, _rect_1chip),
    "delta": (1, _delta_chip),
    "rrc": (2, _rrc_2chip),
}


def make_pulse(name: str = "hann") -> PulseModel:
    try:
        l_filter, func = _PULSES[name]
    except KeyError:
        raise ValueError(f"unknown pulse {name!r}; choose from {sorted(_PULSES)}")
    return PulseModel(name=name, l_filter=l_filter, _func=func)


def split_delay(tau: float, t_chip: float) -> tuple[int, float]:
    """Split a delay into integer chips d and fractional remainder chi in [0, T_c)."""
    d = int(np.floor(tau / t_chip + 1e-12))
    chi = tau - d * t_chip
    if chi < 0.0:
        d -= 1
        chi = tau - d * t_chip
    return d, chi


def toeplitz_from_pulse(
    pulse: PulseModel,
    tau: float,
    block: int,
    p_total: int,
    l_cp: int,
    t_chip: float,
) -> np.ndarray:
    """Banded Toeplitz channel block for a path of delay tau (seconds).

    Entry (p, q) equals psi((block*P + p - q - d)*T_c - chi) with
    tau = d*T_c + chi.  block=0 carries the current OFDM symbol, block=1 the
    tail of the previous one.  Delays whose sampled support would spill past
    the cyclic prefix are rejected: inter-block interference could then leak
    through CP removal.
    """
    if block not in (0, 1):
        raise ValueError("block index must be 0 or 1")
    if tau < 0.0 or tau >= l_cp * t_chip + 1e-15:
        raise ValueError(f"delay {tau:g} s outside [0, L_cp*T_c)")
    d, chi = split_delay(tau, t_chip)
    if pulse.l_filter + d > l_cp:
        raise ValueError(
            f"CP condition violated: l_filter={pulse.l_filter} + d={d} > l_cp={l_cp}"
        )
    idx = np.arange(p_total)
    h = block * p_total + (idx[:, None] - idx[None, :]) - d
    vals = np.zeros((p_total, p_total))
    inband = (h >= 0) & (h <= pulse.l_filter)
    if np.any(inband):
        taps = pulse.taps(chi / t_chip)
        vals[inband] = taps[h[inband]]
    return vals
