"""Semi-blind acquisition of the aerial user's channel parameters.

The aerial user's motion makes the received pre-DFT blocks almost-
cyclostationary, and because only that user transmits noncircular symbols,
the conjugate cyclic statistics are asymptotically free of both the
terrestrial signal and the noise.  Doppler shifts come from peaks of a 1-D
cyclic objective, delays from a 1-D matched cost in the circulant spectral
domain, and gains/arrival angles from a pilot least-squares fit with a
unit-modulus outer search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .channel import LinkGeometry, au_channel_stack, au_freq_basis


class EstimationFailure(RuntimeError):
    """Raised when a blind scan finds no usable structure in the data."""


# ---------------------------------------------------------------------------
# Conjugate cyclic correlation matrices
# ---------------------------------------------------------------------------

def estimate_cccm(y_bar: np.ndarray, alpha: float, lag: int) -> np.ndarray:
    """Empirical conjugate cyclic correlation matrices at one cycle frequency.

    y_bar is (J, N, P); the result is (J, P, P) with entries
    (1/N) sum_n y[n] y[n-lag]^T exp(-2j*pi*alpha*n).  Blocks whose lagged
    partner falls outside the interval contribute zero, but the average
    still divides by the full N.
    """
    j_ant, n_blocks, p_total = y_bar.shape
    if lag >= 0:
        cur = y_bar[:, lag:, :]
        lagged = y_bar[:, : n_blocks - lag, :]
        n_idx = np.arange(lag, n_blocks)
    else:
        cur = y_bar[:, : n_blocks + lag, :]
        lagged = y_bar[:, -lag:, :]
        n_idx = np.arange(0, n_blocks + lag)
    phase = np.exp(-2j * np.pi * alpha * n_idx)
    out = np.einsum("jnp,jnq->jpq", cur * phase[None, :, None], lagged)
    return out / n_blocks


def doppler_objective(
    y_bar: np.ndarray, grid_factor: int = 8, lags: tuple[int, ...] = (-1, 0, 1)
) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic objective on a dense frequency grid.

    Returns (alphas, values) where values[k] is the summed squared Frobenius
    norm of the conjugate cyclic correlation matrices over antennas and lags
    at cycle frequency alphas[k].  Evaluated exactly on a grid of
    grid_factor * N points via zero-padded FFTs of the lagged sample
    products.
    """
    j_ant, n_blocks, p_total = y_bar.shape
    n_grid = grid_factor * n_blocks
    values = np.zeros(n_grid)
    for j in range(j_ant):
        blocks = y_bar[j]
        for lag in lags:
            if lag >= 0:
                cur = blocks[lag:, :]
                lagged = blocks[: n_blocks - lag, :]
                start = lag
            else:
                cur = blocks[: n_blocks + lag, :]
                lagged = blocks[-lag:, :]
                start = 0
            for p in range(p_total):
                prod = np.zeros((n_blocks, p_total), dtype=complex)
                prod[start : start + cur.shape[0]] = cur[:, p : p + 1] * lagged
                spec = np.fft.fft(prod, n=n_grid, axis=0)
                values += np.sum(np.abs(spec) ** 2, axis=1)
    values /= n_blocks**2
    alphas = np.fft.fftfreq(n_grid)
    order = np.argsort(alphas)
    return alphas[order], values[order]


def _parabolic_refine(x: np.ndarray, y: np.ndarray, k: int) -> float:
    """Vertex of the parabola through grid points k-1, k, k+1 (circular)."""
    n = len(x)
    ym, y0, yp = y[(k - 1) % n], y[k], y[(k + 1) % n]
    denom = ym - 2 * y0 + yp
    if denom == 0.0:
        return x[k]
    delta = 0.5 * (ym - yp) / denom
    step = x[1] - x[0]
    return x[k] + np.clip(delta, -1.0, 1.0) * step


def _objective_floor(values: np.ndarray) -> tuple[float, float]:
    """Median floor and a robust estimate of its spread.

    Off-peak objective values average a large number of squared correlation
    entries, so the floor is extremely flat; its MAD-based sigma gives a
    meaningful significance scale for small bumps.
    """
    med = float(np.median(values))
    sigma = 1.4826 * float(np.median(np.abs(values - med)))
    return med, max(sigma, np.finfo(float).tiny)


def candidate_threshold(values: np.ndarray) -> float:
    """Significance bar for candidate bumps over the flat objective floor."""
    med, sigma = _objective_floor(values)
    return med + max(8.0 * sigma, 0.25 * med)


def _sidelobe_bound(height: float, offset: float, n_data: int) -> float:
    """Upper envelope of the leakage a peak of this height casts at offset."""
    s = abs(np.sin(np.pi * offset))
    if s <= 0.0:
        return np.inf
    return height / (n_data * s) ** 2


def find_cyclic_peaks(
    alphas: np.ndarray,
    values: np.ndarray,
    threshold: float,
    n_data: int | None = None,
    exclusion_bins: int | None = None,
    max_peaks: int = 12,
    refine: bool = False,
) -> list[tuple[float, float]]:
    """Local maxima above threshold, non-maximum suppressed.

    Returns (location, height) pairs ordered by descending height.  The
    suppression window spans several main lobes; when the unpadded record
    length n_data is given, candidates that fit under the spectral-leakage
    envelope of an already-kept stronger peak are discarded too (the
    sidelobes of a dominant peak otherwise masquerade as extra maxima).
    """
    n = len(values)
    is_max = (values > np.roll(values, 1)) & (values >= np.roll(values, -1))
    candidates = np.nonzero(is_max & (values > threshold))[0]
    if candidates.size == 0:
        return []
    if exclusion_bins is None:
        exclusion_bins = max(16, n // 1024)
    kept: list[int] = []
    suppressed = np.zeros(n, dtype=bool)
    for k in candidates[np.argsort(values[candidates])[::-1]]:
        if suppressed[k]:
            continue
        if n_data is not None and kept:
            explained = False
            for k2 in kept:
                off = (alphas[k] - alphas[k2] + 0.5) % 1.0 - 0.5
                if values[k] <= 4.0 * _sidelobe_bound(values[k2], off, n_data):
                    explained = True
                    break
            if explained:
                continue
        kept.append(k)
        window = np.arange(k - exclusion_bins, k + exclusion_bins + 1) % n
        suppressed[window] = True
        if len(kept) >= max_peaks:
            break
    if refine:
        return [(_parabolic_refine(alphas, values, k), float(values[k])) for k in kept]
    return [(float(alphas[k]), float(values[k])) for k in kept]


def _value_near(alphas: np.ndarray, values: np.ndarray, x: float) -> float:
    """Largest objective value within a couple of bins of location x."""
    n = len(alphas)
    step = alphas[1] - alphas[0]
    k = int(round((x - alphas[0]) / step)) % n
    idx = np.arange(k - 2, k + 3) % n
    return float(values[idx].max())


def resolve_doppler_pair(
    alphas: np.ndarray,
    values: np.ndarray,
    n_data: int | None = None,
    peak_ratio: float = 5.0,
) -> tuple[float, float]:
    """Extract the two normalised Doppler shifts from the cyclic objective.

    The objective carries up to three maxima: at twice each shift and at
    their sum (which always sits midway between the other two, and for
    unequal ray strengths usually dominates the weaker ray's own peak).
    Candidates are collected down to a significance floor and reconciled
    against that arithmetic structure:

    * a candidate triple (x, (x+y)/2, y) fixes the pair as (x/2, y/2);
    * two candidates whose midpoint shows no mass are read as the strong
      ray's peak plus the cross peak, because a genuine second ray peak
      would force a visible midpoint;
    * a single candidate means the shifts coincide (or one ray is silent).
    """
    med, sigma = _objective_floor(values)
    peaks = find_cyclic_peaks(alphas, values, candidate_threshold(values), n_data=n_data)
    if not peaks or peaks[0][1] <= peak_ratio * med:
        raise EstimationFailure("no cyclic-frequency peaks above the noise floor")
    bump_bar = med + 6.0 * sigma
    if len(peaks) == 1:
        nu = peaks[0][0] / 2.0
        return nu, nu

    locs = np.array([p[0] for p in peaks])
    heights = np.array([p[1] for p in peaks])
    tol = 10.0 * (alphas[1] - alphas[0])   # a couple of unpadded resolution bins

    best_triple, best_score = None, -np.inf
    for i in range(len(peaks)):
        for j in range(len(peaks)):
            if i == j:
                continue
            mid = (locs[i] + locs[j]) / 2.0
            k = np.argmin(np.abs(locs - mid))
            if k == i or k == j or np.abs(locs[k] - mid) > tol:
                continue
            score = heights[i] + heights[j] + heights[k]
            if score > best_score:
                best_score, best_triple = score, (locs[i], locs[j])
    if best_triple is not None:
        x, y = best_triple
        return x / 2.0, y / 2.0

    strong, other = locs[0], locs[1]
    midpoint = (strong + other) / 2.0
    if _value_near(alphas, values, midpoint) > bump_bar:
        return strong / 2.0, other / 2.0          # both are ray peaks
    return strong / 2.0, other - strong / 2.0     # other is the cross peak


def doppler_scan(
    y_bar: np.ndarray, grid_factor: int = 8, peak_ratio: float = 5.0
) -> tuple[float, float]:
    """Blind normalised-Doppler pair from the cyclic objective.

    Peak locations are reported at the grid resolution (no sub-bin
    interpolation): with the heavily zero-padded grid the quantisation floor
    sits far below the accuracy target and, unlike interpolation noise, it
    does not scale with the interference-plus-noise power, which keeps the
    estimator's accuracy flat across operating points.
    """
    alphas, values = doppler_objective(y_bar, grid_factor=grid_factor)
    nu_a, nu_b = resolve_doppler_pair(
        alphas, values, n_data=y_bar.shape[1], peak_ratio=peak_ratio
    )
    return min(nu_a, nu_b), max(nu_a, nu_b)


# ---------------------------------------------------------------------------
# Delay scan
# ---------------------------------------------------------------------------

def upsilon_diag(geom: LinkGeometry, omega: np.ndarray | None = None) -> np.ndarray:
    """Diagonal of W_P^H (Omega Omega^T) W_P^* for the transmit precoder."""
    if omega is None:
        omega = geom.omega_au
    w_conj = geom.fourier_p.idft.conj()
    full = w_conj.T @ (omega @ omega.T) @ w_conj
    return np.diag(full)


def derotated_spectral_diag(
    y_bar: np.ndarray, nu: float, geom: LinkGeometry
) -> np.ndarray:
    """Diagonal of the de-rotated conjugate statistic in the circulant domain.

    Builds the lag-compensated sum of the conjugate cyclic correlation
    matrices at cycle frequency 2*nu, strips the intra-block Doppler
    progression, and returns the P-point spectral diagonal that carries the
    pulse-and-delay signature of the matching ray.
    """
    p_total = geom.p_total
    alpha = 2.0 * nu
    d_conj = np.exp(-2j * np.pi * nu * np.arange(p_total) / p_total)
    phi = np.zeros((p_total, p_total), dtype=complex)
    for lag, rot in ((-1, np.exp(-2j * np.pi * nu)), (0, 1.0), (1, np.exp(2j * np.pi * nu))):
        ccm = estimate_cccm(y_bar, alpha, lag).sum(axis=0)
        phi += rot * (d_conj[:, None] * ccm * d_conj[None, :])
    w_conj = geom.fourier_p.idft.conj()
    return np.diag(w_conj.T @ phi @ w_conj)


def delay_objective(
    spectral_diag: np.ndarray,
    geom: LinkGeometry,
    betas: np.ndarray,
) -> np.ndarray:
    """Matched 1-D delay cost at the requested candidate delays (seconds).

    For each candidate delay the known pulse model predicts the spectral
    diagonal up to one complex scale; the cost is the magnitude of the
    normalised correlation over the lower half-spectrum, where the pulse
    DFT coefficients are offset-independent.
    """
    p_total = geom.p_total
    half = p_total // 2
    ups = upsilon_diag(geom)[:half]
    data = spectral_diag[:half]
    scores = np.empty(len(betas))
    for i, beta in enumerate(np.asarray(betas, dtype=float)):
        v_model = geom.pulse.delayed_spectrum(p_total, beta / geom.t_chip)[:half]
        model = (v_model**2) * ups
        energy = np.sum(np.abs(model) ** 2)
        if energy < 1e-300:
            scores[i] = 0.0
            continue
        scores[i] = np.abs(np.vdot(model, data)) ** 2 / energy
    return scores


def _admissible_delay(tau: float, geom: LinkGeometry, delta_max: float) -> float:
    """Clamp an estimate into the reconstructible (CP-respecting) domain.

    The scan grid may touch delta_max itself, but a delay whose integer part
    reaches l_cp - l_filter + 1 chips cannot be mapped back into the banded
    channel blocks, so estimates are pulled a hair inside the boundary.
    """
    upper = min(
        delta_max, (geom.l_cp - geom.pulse.l_filter + 1) * geom.t_chip
    ) - 1e-6 * geom.t_chip
    return float(np.clip(tau, 0.0, max(upper, 0.0)))


def delay_scan(
    y_bar: np.ndarray,
    nu: float,
    geom: LinkGeometry,
    delta_max: float,
    n_grid: int = 1024,
) -> float:
    """Delay estimate for the ray whose normalised Doppler is nu."""
    diag = derotated_spectral_diag(y_bar, nu, geom)
    betas = np.linspace(0.0, delta_max, n_grid)
    scores = delay_objective(diag, geom, betas)
    if not np.any(scores > 0.0):
        raise EstimationFailure("delay objective degenerate (all-zero spectrum)")
    k = int(np.argmax(scores))
    if 0 < k < len(betas) - 1:
        return _admissible_delay(_parabolic_refine(betas, scores, k), geom, delta_max)
    return _admissible_delay(float(betas[k]), geom, delta_max)


def derotated_cross_diag(
    y_bar: np.ndarray, nu_k: float, nu_h: float, geom: LinkGeometry
) -> np.ndarray:
    """Spectral diagonal of the de-rotated cross-cycle conjugate statistic.

    At cycle frequency nu_k + nu_h the conjugate statistic carries the
    product of the two rays' circulant spectra; stripping each ray's
    intra-block progression on its own side exposes it on the diagonal.
    """
    p_total = geom.p_total
    alpha = nu_k + nu_h
    left = np.exp(-2j * np.pi * nu_k * np.arange(p_total) / p_total)
    right = np.exp(-2j * np.pi * nu_h * np.arange(p_total) / p_total)
    phi = np.zeros((p_total, p_total), dtype=complex)
    for lag, rot in ((-1, np.exp(-2j * np.pi * nu_h)), (0, 1.0), (1, np.exp(2j * np.pi * nu_h))):
        ccm = estimate_cccm(y_bar, alpha, lag).sum(axis=0)
        phi += rot * (left[:, None] * ccm * right[None, :])
    w_conj = geom.fourier_p.idft.conj()
    return np.diag(w_conj.T @ phi @ w_conj)


def _cross_delay_objective(
    spectral_diag: np.ndarray,
    geom: LinkGeometry,
    tau_known: float,
    betas: np.ndarray,
) -> np.ndarray:
    """Matched cost for one unknown delay given the partner ray's delay."""
    p_total = geom.p_total
    half = p_total // 2
    ups = upsilon_diag(geom)[:half]
    data = spectral_diag[:half]
    v_known = geom.pulse.delayed_spectrum(p_total, tau_known / geom.t_chip)[:half]
    scores = np.empty(len(betas))
    for i, beta in enumerate(np.asarray(betas, dtype=float)):
        v_beta = geom.pulse.delayed_spectrum(p_total, beta / geom.t_chip)[:half]
        model = v_known * v_beta * ups
        energy = np.sum(np.abs(model) ** 2)
        scores[i] = 0.0 if energy < 1e-300 else np.abs(np.vdot(model, data)) ** 2 / energy
    return scores


def _peak_delay(betas: np.ndarray, scores: np.ndarray, delta_max: float) -> tuple[float, float]:
    """Argmax with parabolic refinement plus a fit-quality coefficient."""
    k = int(np.argmax(scores))
    if 0 < k < len(betas) - 1:
        loc = float(np.clip(_parabolic_refine(betas, scores, k), 0.0, delta_max))
    else:
        loc = float(betas[k])
    return loc, float(scores[k])


def _two_peak_delays(
    betas: np.ndarray, scores: np.ndarray, geom: LinkGeometry, delta_max: float
) -> tuple[float, float]:
    """Two strongest separated maxima of a delay cost (merged-cycle case)."""
    first, _ = _peak_delay(betas, scores, delta_max)
    masked = scores.copy()
    masked[np.abs(betas - first) < 0.7 * geom.t_chip] = 0.0
    if np.any(masked > 0.25 * scores.max()):
        k = int(np.argmax(masked))
        second = (
            float(np.clip(_parabolic_refine(betas, masked, k), 0.0, delta_max))
            if 0 < k < len(betas) - 1
            else float(betas[k])
        )
    else:
        second = first
    return first, second


def delay_scan_pair(
    y_bar: np.ndarray,
    nus: np.ndarray,
    geom: LinkGeometry,
    delta_max: float,
    n_grid: int = 1024,
) -> np.ndarray:
    """Delays for both rays, robust to weak rays and merged cycle frequencies.

    When the two cycle frequencies sit within a few resolution bins their
    conjugate statistics overlap, so one scan is run and its two strongest
    maxima are taken.  Otherwise the stronger ray (larger cyclic energy) is
    scanned on its own cycle, and the weaker ray takes whichever of its own
    cycle or the cross cycle explains the data with the better normalised
    fit, the cross statistic being quadratically more sensitive for faint
    rays.
    """
    n_blocks = y_bar.shape[1]
    betas = np.linspace(0.0, delta_max, n_grid)

    if abs(nus[0] - nus[1]) * 2.0 * n_blocks < 4.0:
        diag = derotated_spectral_diag(y_bar, float(np.mean(nus)), geom)
        scores = delay_objective(diag, geom, betas)
        if not np.any(scores > 0.0):
            raise EstimationFailure("delay objective degenerate (all-zero spectrum)")
        pair = _two_peak_delays(betas, scores, geom, delta_max)
        return np.array([_admissible_delay(t, geom, delta_max) for t in pair])

    diags = [derotated_spectral_diag(y_bar, float(nu), geom) for nu in nus]
    energies = [np.sum(np.abs(d) ** 2) for d in diags]
    strong = int(np.argmax(energies))
    weak = 1 - strong

    scores_s = delay_objective(diags[strong], geom, betas)
    if not np.any(scores_s > 0.0):
        raise EstimationFailure("delay objective degenerate (all-zero spectrum)")
    tau_strong, peak_s = _peak_delay(betas, scores_s, delta_max)

    half = geom.p_total // 2
    scores_w = delay_objective(diags[weak], geom, betas)
    tau_auto, peak_auto = _peak_delay(betas, scores_w, delta_max)
    fit_auto = peak_auto / max(np.sum(np.abs(diags[weak][:half]) ** 2), 1e-300)

    cross = derotated_cross_diag(y_bar, nus[strong], nus[weak], geom)
    scores_x = _cross_delay_objective(cross, geom, tau_strong, betas)
    tau_cross, peak_x = _peak_delay(betas, scores_x, delta_max)
    fit_cross = peak_x / max(np.sum(np.abs(cross[:half]) ** 2), 1e-300)

    tau_weak = tau_auto if fit_auto >= 0.6 * fit_cross else tau_cross
    out = np.empty(2)
    out[strong] = _admissible_delay(tau_strong, geom, delta_max)
    out[weak] = _admissible_delay(tau_weak, geom, delta_max)
    return out


# ---------------------------------------------------------------------------
# Pilot-aided gains and arrival angles
# ---------------------------------------------------------------------------

def pilot_ray_matrices(
    geom: LinkGeometry,
    nus: np.ndarray,
    taus: np.ndarray,
    pilot_blocks: np.ndarray,
    pilot_symbols: np.ndarray,
) -> np.ndarray:
    """Known per-ray pilot responses, stacked as (rays, M, N_train)."""
    out = np.empty((len(nus), geom.m, len(pilot_blocks)), dtype=complex)
    for k, (nu, tau) in enumerate(zip(nus, taus)):
        basis = au_freq_basis(geom, nu, tau)
        phases = np.exp(2j * np.pi * nu * pilot_blocks)
        out[k] = (pilot_symbols @ basis.T * phases[:, None]).T
    return out


def _gain_system(a_jk, gram, etas, j_ant):
    """Closed-form per-ray gains for fixed unit-modulus antenna factors."""
    j_idx = np.arange(j_ant)
    lam0 = np.array(
        [np.sum(a_jk[:, k] * np.conj(etas[k]) ** j_idx) for k in range(2)]
    )
    lam1 = j_ant * np.array([gram[0, 0].real, gram[1, 1].real])
    cross = np.sum((etas[1] * np.conj(etas[0])) ** j_idx)
    a01 = gram[0, 1] * cross            # tr(P1 P0^H) * sum (eta1 eta0*)^(j-1)
    a10 = np.conj(a01)
    det = lam1[0] * lam1[1] - a01 * a10
    scale = max(lam1[0] * lam1[1], 1e-300)
    if np.abs(det) < 1e-10 * scale:
        return None, None
    g0 = (lam0[0] * lam1[1] - a01 * lam0[1]) / det
    g1 = (lam1[0] * lam0[1] - a10 * lam0[0]) / det
    cost_drop = np.real(np.conj(g0) * lam0[0] + np.conj(g1) * lam0[1])
    return np.array([g0, g1]), cost_drop


def ls_gains_aoas(
    y_pilot: np.ndarray,
    p_mats: np.ndarray,
    grid: int = 64,
    polish: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Joint LS fit of two complex gains and two unit-modulus antenna factors.

    y_pilot is (J, M, N_train), p_mats is (2, M, N_train).  The gains are
    closed-form for fixed antenna factors, so the search runs over the two
    direction cosines with a coarse grid followed by a quasi-Newton polish.
    Returns (gains (2,), etas (2,)).
    """
    j_ant = y_pilot.shape[0]
    a_jk = np.array(
        [[np.vdot(p_mats[k], y_pilot[j]) for k in range(2)] for j in range(j_ant)]
    )
    gram = np.array(
        [[np.vdot(p_mats[k], p_mats[l]) for l in range(2)] for k in range(2)]
    )
    base_cost = np.sum(np.abs(y_pilot) ** 2)

    if gram[1, 1].real < 1e-12 * max(gram[0, 0].real, 1e-300):
        # second ray carries no pilot energy: single-ray matched-filter fit
        j_idx = np.arange(j_ant)

        def single_drop(u):
            lam0 = np.sum(a_jk[:, 0] * np.exp(-1j * np.pi * u) ** j_idx)
            return -np.abs(lam0) ** 2

        grid_u = np.linspace(-1.0, 1.0, 4 * grid, endpoint=False)
        u0 = grid_u[int(np.argmin([single_drop(u) for u in grid_u]))]
        res = minimize(lambda v: single_drop(v[0]), np.array([u0]), method="BFGS")
        u_best = float(res.x[0])
        eta = np.exp(1j * np.pi * u_best)
        lam0 = np.sum(a_jk[:, 0] * np.conj(eta) ** j_idx)
        g0 = lam0 / (j_ant * gram[0, 0].real)
        return np.array([g0, 0.0]), np.array([eta, eta])

    def cost(u):
        etas = np.exp(1j * np.pi * np.asarray(u))
        gains, drop = _gain_system(a_jk, gram, etas, j_ant)
        if gains is None:
            return base_cost
        return base_cost - drop

    grid_pts = np.linspace(-1.0, 1.0, grid, endpoint=False)
    best_list: list[tuple[float, tuple[float, float]]] = []
    for u0 in grid_pts:
        for u1 in grid_pts:
            c = cost((u0, u1))
            best_list.append((c, (u0, u1)))
    best_list.sort(key=lambda t: t[0])

    starts = []
    for c, u in best_list:
        if all(
            min(abs(u[0] - s[0]), 2 - abs(u[0] - s[0])) > 0.08
            or min(abs(u[1] - s[1]), 2 - abs(u[1] - s[1])) > 0.08
            for s in starts
        ) or not starts:
            starts.append(u)
        if len(starts) >= 4:
            break

    best_u, best_c = None, np.inf
    for u_start in starts:
        if polish:
            res = minimize(cost, np.asarray(u_start), method="BFGS",
                           options={"gtol": 1e-12, "maxiter": 200})
            u_fin, c_fin = res.x, res.fun
        else:
            u_fin, c_fin = np.asarray(u_start), cost(u_start)
        if c_fin < best_c:
            best_u, best_c = u_fin, c_fin

    wrapped = (np.asarray(best_u) + 1.0) % 2.0 - 1.0
    etas = np.exp(1j * np.pi * wrapped)
    gains, _ = _gain_system(a_jk, gram, etas, j_ant)
    if gains is None:
        raise EstimationFailure("gain system ill-posed (near-collinear rays)")
    return gains, etas


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

@dataclass
class AuEstimate:
    """Estimated two-ray aerial channel parameters."""

    nus: np.ndarray
    taus: np.ndarray
    gains: np.ndarray
    etas: np.ndarray
    aoas: np.ndarray = field(init=False)

    def __post_init__(self):
        sines = np.clip(np.angle(self.etas) / np.pi, -1.0, 1.0)
        self.aoas = np.arcsin(sines)

    def channel_stack(self, geom: LinkGeometry, blocks: np.ndarray) -> np.ndarray:
        return au_channel_stack(geom, self.gains, self.etas, self.nus, self.taus, blocks)

    def swapped(self) -> "AuEstimate":
        order = np.array([1, 0])
        return AuEstimate(
            nus=self.nus[order],
            taus=self.taus[order],
            gains=self.gains[order],
            etas=self.etas[order],
        )


def estimate_au_channel(
    y_bar: np.ndarray,
    pilot_blocks: np.ndarray,
    pilot_symbols: np.ndarray,
    geom: LinkGeometry,
    delta_max: float,
    grid_factor: int = 8,
    beta_grid: int = 1024,
) -> AuEstimate:
    """Blind Doppler/delay acquisition followed by pilot-aided gains/angles.

    y_bar is the full (J, N, P) pre-DFT record; pilot_symbols is
    (N_train, M) with rows matching pilot_blocks.  The two rays come back in
    scan order (most negative cyclic peak first); the labelling is arbitrary
    and downstream consumers must treat it as such.
    """
    nu0, nu1 = doppler_scan(y_bar, grid_factor=grid_factor)
    nus = np.array([nu0, nu1])
    taus = delay_scan_pair(y_bar, nus, geom, delta_max, n_grid=beta_grid)
    p_mats = pilot_ray_matrices(geom, nus, taus, pilot_blocks, pilot_symbols)
    y_pilot = np.transpose(
        y_bar[:, pilot_blocks, geom.l_cp :] @ geom.fourier_m.idft.conj(), (0, 2, 1)
    )
    gains, etas = ls_gains_aoas(y_pilot, p_mats)
    return AuEstimate(nus=nus, taus=taus, gains=gains, etas=etas)
