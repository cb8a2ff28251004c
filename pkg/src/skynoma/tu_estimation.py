"""Pilot-aided terrestrial-channel estimation: plain LS and the BWLU.

The terrestrial channel is static and diagonal after the DFT, so the whole
link is summarised by one aggregated tap vector per antenna.  The plain LS
estimator ignores the aerial interference; the best widely-linear unbiased
(BWLU) estimator whitens it using the previously acquired aerial CSI and the
noncircularity of the aerial symbols, at the cost of working on the
conjugate-augmented observation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import LinkGeometry, tu_diagonals_from_taps
from .waveform import PilotSchedule, delta_matrix


@dataclass
class TuPilotModel:
    """Stacked pilot observations and the maps that explain them."""

    y_stack: np.ndarray          # (J*Q*T,) observations at pilot positions
    pilot_matrix: np.ndarray     # (Q*T, L_cp), shared by all antennas
    m_au: np.ndarray             # (J*Q*T, M*T) aerial interference map
    delta_stack: np.ndarray      # (M*T,) diagonal conjugation map of AU symbols
    noise_var: float
    j_antennas: int
    l_cp: int

    @property
    def y_aug(self) -> np.ndarray:
        return np.concatenate([self.y_stack, np.conj(self.y_stack)])

    @property
    def m_au_aug(self) -> np.ndarray:
        return np.vstack([self.m_au, np.conj(self.m_au) * self.delta_stack[None, :]])

    def regression_matrix(self) -> np.ndarray:
        """(J*Q*T, J*L_cp) block-diagonal map from stacked taps to y_stack."""
        return np.kron(np.eye(self.j_antennas), self.pilot_matrix)

    def constrained_maps(self) -> tuple[np.ndarray, np.ndarray]:
        """Augmented regression map Pi and the unbiasedness selector Theta."""
        big = self.regression_matrix()
        rows, cols = big.shape
        pi = np.zeros((2 * rows, 2 * cols), dtype=complex)
        pi[:rows, :cols] = big
        pi[rows:, cols:] = np.conj(big)
        theta = np.hstack([np.eye(cols), np.zeros((cols, cols))])
        return pi, theta


@dataclass
class TuEstimate:
    """Aggregated tap estimate with the estimator's reported variance."""

    taps_stacked: np.ndarray     # (J*L_cp,)
    kind: str                    # "ls" | "bwlu"
    reported_variance: float

    def diagonals(self, geom: LinkGeometry) -> np.ndarray:
        return tu_diagonals_from_taps(self.taps_stacked, geom)


def build_pilot_model(
    y_pilot: np.ndarray,
    schedule: PilotSchedule,
    h_au_stacks: np.ndarray,
    noise_var: float,
    geom: LinkGeometry,
    constellation_au: str = "bpsk",
) -> TuPilotModel:
    """Assemble the stacked pilot regression for the terrestrial user.

    y_pilot is (J, T, M) post-DFT data at the schedule's blocks; h_au_stacks
    is (T, J*M, M) aerial channel matrices (exact or estimated) at the same
    blocks.  The aerial interference map keeps its block structure: one
    (Q, M) slab per antenna and training block, acting on that block's
    aerial symbol vector.
    """
    j_ant, m, l_cp = geom.j_antennas, geom.m, geom.l_cp
    subs = schedule.subcarriers
    q, t = schedule.q, schedule.n_train
    if y_pilot.shape != (j_ant, t, m):
        raise ValueError("pilot observation shape mismatch")
    if q * t < l_cp:
        raise ValueError("pilot grid too small to identify the taps")

    sel = np.sqrt(m) * geom.fourier_m.dft[:, :l_cp]     # (M, L_cp)
    blocks_p = schedule.values[:, :, None] * sel[subs][None, :, :]   # (T, Q, L)
    pilot_matrix = blocks_p.reshape(q * t, l_cp)
    if np.linalg.matrix_rank(pilot_matrix) < l_cp:
        raise ValueError("pilot matrix is rank deficient")

    y_stack = y_pilot[:, :, subs].reshape(j_ant, t * q).reshape(-1)

    m_au = np.zeros((j_ant * q * t, m * t), dtype=complex)
    h_blocks = h_au_stacks.reshape(t, j_ant, m, m)
    for j in range(j_ant):
        for ti in range(t):
            rows = slice((j * t + ti) * q, (j * t + ti) * q + q)
            cols = slice(ti * m, (ti + 1) * m)
            m_au[rows, cols] = h_blocks[ti, j][subs, :]

    delta = np.diag(delta_matrix(constellation_au, m))
    return TuPilotModel(
        y_stack=y_stack,
        pilot_matrix=pilot_matrix,
        m_au=m_au,
        delta_stack=np.tile(delta, t),
        noise_var=noise_var,
        j_antennas=j_ant,
        l_cp=l_cp,
    )


def ls_estimate(model: TuPilotModel) -> TuEstimate:
    """Per-antenna least squares, blind to the aerial interference.

    The reported variance evaluates the LS map against the true disturbance
    covariance (aerial interference plus noise), so it is comparable with
    the BWLU's reported variance.
    """
    p = model.pilot_matrix
    gram_inv = np.linalg.inv(p.conj().T @ p)
    solver = gram_inv @ p.conj().T                        # (L, Q*T)
    j_ant = model.j_antennas
    qt = p.shape[0]
    taps = np.concatenate(
        [solver @ model.y_stack[j * qt : (j + 1) * qt] for j in range(j_ant)]
    )
    big_solver = np.kron(np.eye(j_ant), solver)
    bm = big_solver @ model.m_au
    var = model.noise_var * np.sum(np.abs(big_solver) ** 2) + np.sum(np.abs(bm) ** 2)
    return TuEstimate(taps_stacked=taps, kind="ls", reported_variance=float(var))


def _whitened(model: TuPilotModel, x: np.ndarray) -> np.ndarray:
    """Apply the inverse augmented disturbance covariance to the columns of x.

    The covariance is sigma^2 I plus a low-rank term from the aerial map, so
    the inverse goes through the small inner Gram instead of the full
    augmented dimension.
    """
    m_aug = model.m_au_aug
    inner = m_aug.conj().T @ m_aug
    core = model.noise_var * np.eye(inner.shape[0]) + inner
    return (x - m_aug @ np.linalg.solve(core, m_aug.conj().T @ x)) / model.noise_var


def bwlu_estimate(model: TuPilotModel) -> TuEstimate:
    """Minimum-variance widely-linear unbiased estimator of the taps."""
    pi, theta = model.constrained_maps()
    r_inv_pi = _whitened(model, pi)
    core = pi.conj().T @ r_inv_pi
    core_inv = np.linalg.inv(core)
    weights = core_inv @ r_inv_pi.conj().T                # (2JL, 2JQT)
    g_aug = weights @ model.y_aug
    taps = (theta @ g_aug).astype(complex)
    var = float(np.trace(theta @ core_inv @ theta.conj().T).real)
    return TuEstimate(taps_stacked=taps, kind="bwlu", reported_variance=var)


def bwlu_gain_matrix(model: TuPilotModel) -> np.ndarray:
    """Explicit (J*L_cp, 2*J*Q*T) estimator matrix (for unbiasedness checks)."""
    pi, theta = model.constrained_maps()
    r_inv_pi = _whitened(model, pi)
    core = pi.conj().T @ r_inv_pi
    return theta @ np.linalg.solve(core, r_inv_pi.conj().T)


def bwlu_covariance(model: TuPilotModel) -> np.ndarray:
    """(J*L_cp, J*L_cp) error covariance of the BWLU tap estimate."""
    pi, theta = model.constrained_maps()
    core = pi.conj().T @ _whitened(model, pi)
    core_inv = np.linalg.inv(core)
    return theta @ core_inv @ theta.conj().T
