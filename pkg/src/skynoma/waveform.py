"""Symbol sources, OFDM block modulation, pilot scheduling, and windows.

The aerial user transmits noncircular BPSK (E[s^2] = 1) while the terrestrial
user transmits circular QPSK (E[s^2] = 0); the receiver leans on exactly this
asymmetry, so the generators here are the ground truth the rest of the chain
is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import CpOperators, FourierOperators

BPSK = "bpsk"
QPSK = "qpsk"

_BPSK_POINTS = np.array([1.0 + 0j, -1.0 + 0j])
_QPSK_POINTS = (np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])) / np.sqrt(2)


def constellation_points(constellation: str) -> np.ndarray:
    if constellation == BPSK:
        return _BPSK_POINTS
    if constellation == QPSK:
        return _QPSK_POINTS
    raise ValueError(f"unknown constellation {constellation!r}")


def draw_symbols(constellation: str, size, rng: np.random.Generator) -> np.ndarray:
    """Equiprobable i.i.d. unit-variance symbols of the requested shape."""
    points = constellation_points(constellation)
    return points[rng.integers(0, len(points), size=size)]


def quantize(z: np.ndarray, constellation: str) -> np.ndarray:
    """Minimum-distance hard decision, vectorised over z."""
    if constellation == BPSK:
        return np.where(np.real(z) >= 0.0, 1.0 + 0j, -1.0 + 0j)
    if constellation == QPSK:
        return (np.sign(np.real(z)) + np.where(np.real(z) == 0, 1, 0)
                + 1j * (np.sign(np.imag(z)) + np.where(np.imag(z) == 0, 1, 0))) / np.sqrt(2)
    raise ValueError(f"unknown constellation {constellation!r}")


def bits_per_symbol(constellation: str) -> int:
    return 1 if constellation == BPSK else 2


def symbol_bit_errors(decided: np.ndarray, sent: np.ndarray, constellation: str) -> int:
    """Gray-mapped bit errors between two symbol arrays of equal shape."""
    if constellation == BPSK:
        return int(np.count_nonzero(np.real(decided) * np.real(sent) < 0))
    if constellation == QPSK:
        errs = np.count_nonzero(np.real(decided) * np.real(sent) < 0)
        errs += np.count_nonzero(np.imag(decided) * np.imag(sent) < 0)
        return int(errs)
    raise ValueError(f"unknown constellation {constellation!r}")


def delta_matrix(constellation: str, m: int) -> np.ndarray:
    """Diagonal conjugation map: s* = Delta @ s for every constellation point.

    Exists only for constellations with a deterministic conjugation rule;
    BPSK is real so the map is the identity.  Circular families (QPSK) have
    no such map and are rejected.
    """
    if constellation == BPSK:
        return np.eye(m, dtype=complex)
    raise ValueError(f"no deterministic conjugation map for {constellation!r}")


@dataclass(frozen=True)
class TxWindow:
    """Per-sample transmit gains applied after CP insertion."""

    weights: np.ndarray

    @classmethod
    def rectangular(cls, p_total: int) -> "TxWindow":
        w = np.ones(p_total)
        w.setflags(write=False)
        return cls(weights=w)


def modulate_block(
    s: np.ndarray,
    window: TxWindow,
    cp: CpOperators,
    fourier: FourierOperators,
) -> np.ndarray:
    """One OFDM block: unitary IDFT, CP insertion, then windowing.

    Accepts a single M-vector or an (N, M) stack of blocks; returns the
    matching (..., P) samples.
    """
    s = np.asarray(s)
    if s.shape[-1] != cp.m or fourier.n != cp.m:
        raise ValueError("block length must match the CP/Fourier geometry")
    time = s @ fourier.idft.T            # W_M s, batched over leading axes
    samples = time @ cp.insert.T
    return samples * window.weights


def precoder_matrix(window: TxWindow, cp: CpOperators, fourier: FourierOperators) -> np.ndarray:
    """The (P, M) map from subcarrier symbols to windowed time samples."""
    return (cp.insert * window.weights[:, None]) @ fourier.idft


@dataclass(frozen=True)
class PilotSchedule:
    """Known pilot symbols at fixed subcarriers/blocks for one user."""

    user: str                      # "au" | "tu"
    constellation: str
    subcarriers: np.ndarray        # (Q,) distinct indices in [0, M)
    blocks: np.ndarray             # (N_train,) distinct block indices
    values: np.ndarray             # (N_train, Q) known symbols

    def __post_init__(self):
        if len(set(self.subcarriers.tolist())) != self.subcarriers.size:
            raise ValueError("pilot subcarriers must be distinct")
        if len(set(self.blocks.tolist())) != self.blocks.size:
            raise ValueError("pilot blocks must be distinct")
        if self.values.shape != (self.blocks.size, self.subcarriers.size):
            raise ValueError("pilot value array shape mismatch")

    @property
    def q(self) -> int:
        return self.subcarriers.size

    @property
    def n_train(self) -> int:
        return self.blocks.size

    def inject(self, blocks: np.ndarray) -> np.ndarray:
        """Overwrite pilot positions in an (N, M) symbol stream (returns a copy)."""
        out = blocks.copy()
        out[np.ix_(self.blocks, self.subcarriers)] = self.values
        return out

    def extract(self, blocks: np.ndarray) -> np.ndarray:
        return blocks[np.ix_(self.blocks, self.subcarriers)]


def comb_subcarriers(m: int, q: int) -> np.ndarray:
    """Uniform comb of q pilot subcarriers out of m (full band when q == m)."""
    if not 1 <= q <= m:
        raise ValueError("pilot count must lie in [1, M]")
    return np.unique(np.round(np.arange(q) * m / q).astype(int))


def spread_blocks(n_coh: int, n_train: int, offset: int = 0) -> np.ndarray:
    """n_train block indices spread evenly over the coherence interval."""
    if not 1 <= n_train <= n_coh:
        raise ValueError("training length must lie in [1, N_coh]")
    gap = n_coh / n_train
    idx = (np.floor(np.arange(n_train) * gap).astype(int) + offset) % n_coh
    return np.unique(idx)


def make_pilot_schedule(
    user: str,
    constellation: str,
    m: int,
    q: int,
    n_coh: int,
    n_train: int,
    rng: np.random.Generator,
    block_offset: int = 0,
) -> PilotSchedule:
    """Draw a schedule whose values both ends can regenerate from the seed."""
    subs = comb_subcarriers(m, q)
    blocks = spread_blocks(n_coh, n_train, offset=block_offset)
    values = draw_symbols(constellation, (blocks.size, subs.size), rng)
    return PilotSchedule(
        user=user,
        constellation=constellation,
        subcarriers=subs,
        blocks=blocks,
        values=values,
    )
