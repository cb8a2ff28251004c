"""Time-varying widely-linear MMSE-SIC detection and its linear baselines.

Two implementations live here.  ``sls_sic_detect`` is the readable per-block
reference: explicit column deflation, full filters, one step per detected
symbol.  The ``*_batch`` functions vectorise the same recursion over many
blocks by keeping all quantities in the symbol-domain Gram matrices; zeroed
rows/columns stand in for deflation so shapes stay fixed.  The batch path is
tested to agree with the reference decision for decision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .waveform import BPSK, QPSK, delta_matrix, quantize

DETECTOR_KINDS = ("wl-mmse-sic", "l-mmse-sic", "wl-mmse", "l-mmse")

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class AugmentedModel:
    """Conjugate-augmented one-block observation model.

    y_aug stacks the received vector over its conjugate; h_au_aug and
    m_tu_aug are the matching augmented channel blocks; k_conj maps the
    conjugated terrestrial symbols (the conjugate self-interference term).
    """

    y_aug: np.ndarray        # (2JM,)
    h_au_aug: np.ndarray     # (2JM, M)
    m_tu_aug: np.ndarray     # (2JM, M)
    k_conj: np.ndarray       # (2JM, M)
    noise_var: float

    @property
    def m(self) -> int:
        return self.h_au_aug.shape[1]

    @property
    def h_all(self) -> np.ndarray:
        return np.hstack([self.h_au_aug, self.m_tu_aug])


def exchange_matrix(m: int) -> np.ndarray:
    """Block exchange swapping the top and bottom halves of a 2m vector."""
    j = np.zeros((2 * m, 2 * m))
    j[:m, m:] = np.eye(m)
    j[m:, :m] = np.eye(m)
    return j


def build_augmented_model(
    y: np.ndarray,
    h_au: np.ndarray,
    m_tu: np.ndarray,
    noise_var: float,
    constellation_au: str = BPSK,
) -> AugmentedModel:
    """Stack a (JM,) observation and its channel blocks into augmented form."""
    m = h_au.shape[1]
    delta = delta_matrix(constellation_au, m)
    zeros = np.zeros_like(m_tu)
    return AugmentedModel(
        y_aug=np.concatenate([y, np.conj(y)]),
        h_au_aug=np.vstack([h_au, np.conj(h_au) @ delta]),
        m_tu_aug=np.vstack([m_tu, zeros]),
        k_conj=np.vstack([zeros, np.conj(m_tu)]),
        noise_var=noise_var,
    )


def regularize_covariance(r: np.ndarray) -> tuple[np.ndarray, bool]:
    """Add a tiny ridge when the covariance is numerically close to singular."""
    eigs = np.linalg.eigvalsh(r)
    lo, hi = eigs[0], eigs[-1]
    if lo <= 0.0 or hi / max(lo, np.finfo(float).tiny) > _COND_LIMIT:
        scale = np.trace(r).real / r.shape[0]
        ridge = 1e-12 * scale if scale > 0.0 else 1e-12
        return r + ridge * np.eye(r.shape[0]), True
    return r, False


def wl_mmse_filter(h: np.ndarray, r_dd: np.ndarray) -> np.ndarray:
    """MMSE filter H^H (H H^H + R)^-1 for unit-variance symbols."""
    cov = h @ h.conj().T + r_dd
    return np.linalg.solve(cov.conj().T, h).conj().T


def wl_mmse_filter_lemma(h: np.ndarray, r_dd: np.ndarray) -> np.ndarray:
    """Equivalent inversion-lemma form (I + H^H R^-1 H)^-1 H^H R^-1."""
    rinv_h = np.linalg.solve(r_dd, h)
    gram = np.eye(h.shape[1]) + h.conj().T @ rinv_h
    return np.linalg.solve(gram, rinv_h.conj().T)


def sdr_per_symbol(h: np.ndarray, r_dd: np.ndarray, method: str = "direct") -> np.ndarray:
    """Post-filtering signal-to-disturbance ratio of every remaining symbol.

    Both paths evaluate 1/[(I + H^H R^-1 H)^-1]_mm - 1; the QR variant goes
    through a stacked factorisation of the whitened channel, which behaves
    better when the model matrices are sample estimates.
    """
    n_sym = h.shape[1]
    if method == "direct":
        gram = np.eye(n_sym) + h.conj().T @ np.linalg.solve(r_dd, h)
        diag = np.diag(np.linalg.inv(gram)).real
    elif method == "qr":
        chol = np.linalg.cholesky(r_dd)
        whitened = np.linalg.solve(chol, h)
        stacked = np.vstack([whitened, np.eye(n_sym)])
        r_up = np.linalg.qr(stacked, mode="r")
        r_inv = np.linalg.solve(r_up, np.eye(n_sym))
        diag = np.sum(np.abs(r_inv) ** 2, axis=1)
    else:
        raise ValueError(f"unknown SDR method {method!r}")
    diag = np.maximum(diag, np.finfo(float).tiny)
    return np.maximum(1.0 / diag - 1.0, 0.0)


@dataclass
class DetectionReport:
    """Hard decisions plus the per-step bookkeeping of the sorted SIC run."""

    au_decisions: np.ndarray    # (M,) BPSK points
    tu_decisions: np.ndarray    # (M,) QPSK points
    order: np.ndarray           # (2M,) original symbol index decided at each step
    sdrs: np.ndarray            # (2M,) SDR of the chosen symbol at each step
    conditioning_flagged: bool = False

    @property
    def decisions(self) -> np.ndarray:
        return np.concatenate([self.au_decisions, self.tu_decisions])


def _symbol_constellation(index: int, m: int) -> str:
    return BPSK if index < m else QPSK


def sls_sic_detect(
    model: AugmentedModel,
    sdr_method: str = "direct",
    column_perm: np.ndarray | None = None,
) -> DetectionReport:
    """Symbol-level-sorted SIC over the augmented model (reference path).

    At every step the remaining symbols are MMSE-filtered, the one with the
    largest SDR is hard-decided (ties to the lowest index), its contribution
    is cancelled, and when it belongs to the terrestrial user the matching
    conjugate self-interference column is cancelled too.  Decision errors
    propagate; they never abort the run.
    """
    m = model.m
    n_sym = 2 * m
    h_all = model.h_all
    if column_perm is not None:
        to_original = np.asarray(column_perm)
        h_all = h_all[:, to_original]
    else:
        to_original = np.arange(n_sym)

    y = model.y_aug.copy()
    remaining = list(range(n_sym))             # positions into h_all
    tu_remaining = [True] * m                  # conjugate columns still present
    decisions = np.zeros(n_sym, dtype=complex)
    order = np.zeros(n_sym, dtype=int)
    sdr_trace = np.zeros(n_sym)
    flagged = False

    for step in range(n_sym):
        h_i = h_all[:, remaining]
        k_cols = [t for t in range(m) if tu_remaining[t]]
        k_i = model.k_conj[:, k_cols]
        r_dd = k_i @ k_i.conj().T + model.noise_var * np.eye(model.y_aug.size)
        r_dd, flag = regularize_covariance(r_dd)
        flagged = flagged or flag
        sdrs = sdr_per_symbol(h_i, r_dd, method=sdr_method)
        local = int(np.argmax(sdrs))
        pos = remaining[local]
        original = int(to_original[pos])
        filt = wl_mmse_filter(h_i, r_dd)
        soft = filt[local] @ y
        hard = quantize(np.array([soft]), _symbol_constellation(original, m))[0]
        y = y - hard * h_all[:, pos]
        if original >= m:
            tu_idx = original - m
            y = y - np.conj(hard) * model.k_conj[:, tu_idx]
            tu_remaining[tu_idx] = False
        decisions[original] = hard
        order[step] = original
        sdr_trace[step] = sdrs[local]
        remaining.pop(local)

    return DetectionReport(
        au_decisions=decisions[:m],
        tu_decisions=decisions[m:],
        order=order,
        sdrs=sdr_trace,
        conditioning_flagged=flagged,
    )


def wl_mmse_detect(model: AugmentedModel) -> DetectionReport:
    """One-shot widely-linear MMSE detection of all symbols (no cancellation)."""
    m = model.m
    r_dd = model.k_conj @ model.k_conj.conj().T + model.noise_var * np.eye(
        model.y_aug.size
    )
    r_dd, flagged = regularize_covariance(r_dd)
    soft = wl_mmse_filter(model.h_all, r_dd) @ model.y_aug
    sdrs = sdr_per_symbol(model.h_all, r_dd)
    return DetectionReport(
        au_decisions=quantize(soft[:m], BPSK),
        tu_decisions=quantize(soft[m:], QPSK),
        order=np.arange(2 * m),
        sdrs=sdrs,
        conditioning_flagged=flagged,
    )


def lin_mmse_detect(y: np.ndarray, h_au: np.ndarray, m_tu: np.ndarray, noise_var: float) -> DetectionReport:
    """One-shot linear MMSE on the plain (non-augmented) observation."""
    m = h_au.shape[1]
    h = np.hstack([h_au, m_tu])
    r_dd = noise_var * np.eye(y.size)
    soft = wl_mmse_filter(h, r_dd) @ y
    sdrs = sdr_per_symbol(h, r_dd)
    return DetectionReport(
        au_decisions=quantize(soft[:m], BPSK),
        tu_decisions=quantize(soft[m:], QPSK),
        order=np.arange(2 * m),
        sdrs=sdrs,
    )


def lin_mmse_sic_detect(
    y: np.ndarray,
    h_au: np.ndarray,
    m_tu: np.ndarray,
    noise_var: float,
    sdr_method: str = "direct",
) -> DetectionReport:
    """Symbol-level-sorted SIC on the plain observation (linear counterpart)."""
    m = h_au.shape[1]
    n_sym = 2 * m
    h_all = np.hstack([h_au, m_tu])
    y = y.copy()
    remaining = list(range(n_sym))
    decisions = np.zeros(n_sym, dtype=complex)
    order = np.zeros(n_sym, dtype=int)
    sdr_trace = np.zeros(n_sym)
    r_dd = noise_var * np.eye(y.size)
    for step in range(n_sym):
        h_i = h_all[:, remaining]
        sdrs = sdr_per_symbol(h_i, r_dd, method=sdr_method)
        local = int(np.argmax(sdrs))
        pos = remaining[local]
        filt = wl_mmse_filter(h_i, r_dd)
        soft = filt[local] @ y
        hard = quantize(np.array([soft]), _symbol_constellation(pos, m))[0]
        y = y - hard * h_all[:, pos]
        decisions[pos] = hard
        order[step] = pos
        sdr_trace[step] = sdrs[local]
        remaining.pop(local)
    return DetectionReport(
        au_decisions=decisions[:m],
        tu_decisions=decisions[m:],
        order=order,
        sdrs=sdr_trace,
    )


# ---------------------------------------------------------------------------
# Batched fast path (Gram-domain recursion over many blocks)
# ---------------------------------------------------------------------------

def _batched_quantize(z: np.ndarray, is_au: np.ndarray) -> np.ndarray:
    bpsk = quantize(z, BPSK)
    qpsk = quantize(z, QPSK)
    return np.where(is_au, bpsk, qpsk)


def _augmented_grams(y, h_au, m_tu, delta_diag):
    """Symbol-domain Grams of the augmented model, no 2JM-sized per-block arrays.

    Returns (s_hh (B,2M,2M), s_hk (B,2M,M), s_kk (M,M), q (B,2M), k (B,M)).
    """
    b, _, m = h_au.shape
    g_a = np.einsum("bji,bjk->bik", h_au.conj(), h_au)      # A^H A
    c_at = np.einsum("bji,jk->bik", h_au.conj(), m_tu)      # A^H Mt
    g_t = m_tu.conj().T @ m_tu                              # Mt^H Mt
    v = np.einsum("bji,bj->bi", h_au.conj(), y)             # A^H y
    w = np.einsum("ji,bj->bi", m_tu.conj(), y)              # Mt^H y

    dconj = delta_diag.conj()
    s_hh = np.zeros((b, 2 * m, 2 * m), dtype=complex)
    # AU/AU block: A^H A + Delta^H (A^H A)* Delta
    s_hh[:, :m, :m] = g_a + dconj[:, None] * np.conj(g_a) * delta_diag[None, :]
    s_hh[:, :m, m:] = c_at
    s_hh[:, m:, :m] = np.conj(np.swapaxes(c_at, 1, 2))
    s_hh[:, m:, m:] = g_t[None, :, :]

    s_hk = np.zeros((b, 2 * m, m), dtype=complex)
    s_hk[:, :m, :] = dconj[:, None] * np.conj(c_at)         # Delta^H (A^H Mt)*
    s_kk = np.conj(g_t)

    q = np.concatenate([v + dconj * np.conj(v), w], axis=1)
    k = np.conj(w)
    return s_hh, s_hk, s_kk, q, k


def wl_mmse_sic_batch(
    y: np.ndarray,
    h_au: np.ndarray,
    m_tu: np.ndarray,
    noise_var: float,
    delta_diag: np.ndarray | None = None,
) -> np.ndarray:
    """Batched widely-linear MMSE-SIC; returns (B, 2M) hard decisions.

    y is (B, JM), h_au is (B, JM, M), m_tu is (JM, M).  Works entirely on
    symbol-domain Grams: cancelling a symbol becomes a rank-1 update and
    deflation becomes row/column masking, so per-step cost is independent
    of the antenna dimension.
    """
    b, _, m = h_au.shape
    n_sym = 2 * m
    if delta_diag is None:
        delta_diag = np.ones(m, dtype=complex)
    s_hh, s_hk, s_kk, q, k = _augmented_grams(y, h_au, m_tu, delta_diag)
    # keep pristine copies for the cancellation updates, then deflate the
    # working Grams in place by zeroing decided rows/columns
    s_hh0 = s_hh.copy()
    s_hk0 = s_hk.copy()
    s_kk_b = np.broadcast_to(s_kk, (b, m, m)).copy()

    sym_active = np.ones((b, n_sym), dtype=bool)
    decisions = np.zeros((b, n_sym), dtype=complex)
    eye_sym = np.eye(n_sym)
    eye_tu = np.eye(m)
    rows = np.arange(b)

    for _ in range(n_sym):
        t_inv = np.linalg.inv(noise_var * eye_tu[None, :, :] + s_kk_b)
        ct = s_hk @ t_inv
        gram = (s_hh - ct @ np.conj(np.swapaxes(s_hk, 1, 2))) / noise_var
        inv = np.linalg.inv(eye_sym[None, :, :] + gram)
        diag = np.maximum(np.diagonal(inv, axis1=1, axis2=2).real, np.finfo(float).tiny)
        sdr = np.where(sym_active, 1.0 / diag - 1.0, -np.inf)
        pick = np.argmax(sdr, axis=1)                        # (B,)

        u = (q - np.einsum("bim,bm->bi", ct, k)) / noise_var
        soft = np.einsum("bi,bi->b", inv[rows, pick, :], u)
        is_au = pick < m
        hard = _batched_quantize(soft, is_au)
        decisions[rows, pick] = hard

        # cancel the decided symbol from the maintained inner products
        q = q - hard[:, None] * s_hh0[rows, :, pick]
        k = k - hard[:, None] * np.conj(s_hk0[rows, pick, :])
        tu_pick = np.where(is_au, 0, pick - m)
        tu_sel = (~is_au).astype(complex) * np.conj(hard)
        q = q - tu_sel[:, None] * s_hk0[rows, :, tu_pick]
        k = k - tu_sel[:, None] * s_kk[:, tu_pick].T
        # deflate: zero the decided symbol everywhere; drop the conjugate
        # column too when it was a terrestrial symbol
        sym_active[rows, pick] = False
        s_hh[rows, pick, :] = 0.0
        s_hh[rows, :, pick] = 0.0
        s_hk[rows, pick, :] = 0.0
        q[rows, pick] = 0.0
        tu_rows = rows[~is_au]
        tu_cols = tu_pick[~is_au]
        s_hk[tu_rows, :, tu_cols] = 0.0
        s_kk_b[tu_rows, tu_cols, :] = 0.0
        s_kk_b[tu_rows, :, tu_cols] = 0.0
        k[tu_rows, tu_cols] = 0.0

    return decisions


def lin_mmse_sic_batch(
    y: np.ndarray, h_au: np.ndarray, m_tu: np.ndarray, noise_var: float
) -> np.ndarray:
    """Batched linear MMSE-SIC on the plain observation; (B, 2M) decisions."""
    b, _, m = h_au.shape
    n_sym = 2 * m
    g_a = np.einsum("bji,bjk->bik", h_au.conj(), h_au)
    c_at = np.einsum("bji,jk->bik", h_au.conj(), m_tu)
    g_t = m_tu.conj().T @ m_tu
    s_hh = np.zeros((b, n_sym, n_sym), dtype=complex)
    s_hh[:, :m, :m] = g_a
    s_hh[:, :m, m:] = c_at
    s_hh[:, m:, :m] = np.conj(np.swapaxes(c_at, 1, 2))
    s_hh[:, m:, m:] = g_t[None, :, :]
    q = np.concatenate(
        [np.einsum("bji,bj->bi", h_au.conj(), y), np.einsum("ji,bj->bi", m_tu.conj(), y)],
        axis=1,
    )

    s_hh0 = s_hh.copy()
    sym_active = np.ones((b, n_sym), dtype=bool)
    decisions = np.zeros((b, n_sym), dtype=complex)
    eye_sym = np.eye(n_sym)
    rows = np.arange(b)
    for _ in range(n_sym):
        inv = np.linalg.inv(eye_sym[None, :, :] + s_hh / noise_var)
        diag = np.maximum(np.diagonal(inv, axis1=1, axis2=2).real, np.finfo(float).tiny)
        sdr = np.where(sym_active, 1.0 / diag - 1.0, -np.inf)
        pick = np.argmax(sdr, axis=1)
        soft = np.einsum("bi,bi->b", inv[rows, pick, :], q) / noise_var
        hard = _batched_quantize(soft, pick < m)
        decisions[rows, pick] = hard
        q = q - hard[:, None] * s_hh0[rows, :, pick]
        sym_active[rows, pick] = False
        s_hh[rows, pick, :] = 0.0
        s_hh[rows, :, pick] = 0.0
        q[rows, pick] = 0.0
    return decisions


def wl_mmse_batch(
    y: np.ndarray,
    h_au: np.ndarray,
    m_tu: np.ndarray,
    noise_var: float,
    delta_diag: np.ndarray | None = None,
) -> np.ndarray:
    """Batched one-shot widely-linear MMSE (no cancellation)."""
    b, _, m = h_au.shape
    if delta_diag is None:
        delta_diag = np.ones(m, dtype=complex)
    s_hh, s_hk, s_kk, q, k = _augmented_grams(y, h_au, m_tu, delta_diag)
    n_sym = 2 * m
    t_inv = np.linalg.inv(noise_var * np.eye(m)[None, :, :] + s_kk[None, :, :])
    ct = s_hk @ t_inv
    gram = (s_hh - ct @ np.conj(np.swapaxes(s_hk, 1, 2))) / noise_var
    inv = np.linalg.inv(np.eye(n_sym)[None, :, :] + gram)
    u = (q - np.einsum("bim,bm->bi", ct, k)) / noise_var
    soft = np.einsum("bij,bj->bi", inv, u)
    is_au = np.arange(n_sym) < m
    return _batched_quantize(soft, is_au[None, :])


def lin_mmse_batch(
    y: np.ndarray, h_au: np.ndarray, m_tu: np.ndarray, noise_var: float
) -> np.ndarray:
    """Batched one-shot linear MMSE."""
    b, _, m = h_au.shape
    n_sym = 2 * m
    h = np.concatenate([h_au, np.broadcast_to(m_tu, (b,) + m_tu.shape)], axis=2)
    gram = np.einsum("bji,bjk->bik", h.conj(), h) / noise_var
    inv = np.linalg.inv(np.eye(n_sym)[None, :, :] + gram)
    u = np.einsum("bji,bj->bi", h.conj(), y) / noise_var
    soft = np.einsum("bij,bj->bi", inv, u)
    is_au = np.arange(n_sym) < m
    return _batched_quantize(soft, is_au[None, :])


def detect_batch(
    kind: str,
    y: np.ndarray,
    h_au: np.ndarray,
    m_tu: np.ndarray,
    noise_var: float,
    delta_diag: np.ndarray | None = None,
) -> np.ndarray:
    """Dispatch a named detector over a block batch; returns (B, 2M) decisions."""
    if kind == "wl-mmse-sic":
        return wl_mmse_sic_batch(y, h_au, m_tu, noise_var, delta_diag)
    if kind == "l-mmse-sic":
        return lin_mmse_sic_batch(y, h_au, m_tu, noise_var)
    if kind == "wl-mmse":
        return wl_mmse_batch(y, h_au, m_tu, noise_var, delta_diag)
    if kind == "l-mmse":
        return lin_mmse_batch(y, h_au, m_tu, noise_var)
    raise ValueError(f"unknown detector kind {kind!r}; choose from {DETECTOR_KINDS}")
