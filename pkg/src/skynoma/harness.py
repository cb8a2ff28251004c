"""Monte Carlo experiment driver: seeded trials, aggregation, persistence.

A trial draws fresh channels, symbols and noise, runs the configured
receiver chain, and reports bit errors plus estimator squared errors.  The
grid runner aggregates trials per (SNR, ATR, detector, CSI-mode) cell and
persists a CSV table with a JSON sidecar; reruns with the same configuration
hash resume and accumulate instead of starting over.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .au_estimation import AuEstimate, EstimationFailure, estimate_au_channel
from .channel import (
    LinkGeometry,
    apply_min_delay_lock,
    au_channel_stack,
    draw_au_channel,
    draw_tu_channel,
    make_geometry,
    synthesize_interval,
    tu_channel_stack,
    tu_diagonals,
)
from .config import SimulationConfig
from .detector import detect_batch
from .tu_estimation import build_pilot_model, bwlu_estimate, ls_estimate
from .waveform import (
    BPSK,
    QPSK,
    draw_symbols,
    make_pilot_schedule,
    symbol_bit_errors,
)

CSV_HEADER = (
    "snr_db,atr_db,detector,csi_mode,trials,bits_a,errs_a,ber_a,"
    "bits_t,errs_t,ber_t,mse_doppler_db,mse_delay_db,mse_gain_db,"
    "mse_dircos_db,var_gT_db,seconds"
)


def geometry_from_config(config: SimulationConfig) -> LinkGeometry:
    return make_geometry(
        m=config.m,
        l_cp=config.l_cp,
        j_antennas=config.j_antennas,
        chip_rate=config.chip_rate,
        pulse=config.pulse,
    )


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


@dataclass
class EstimatorErrors:
    """Per-trial normalised squared errors of the channel estimators."""

    doppler: float = np.nan
    delay: float = np.nan
    gain: float = np.nan
    dircos: float = np.nan
    var_gt: float = np.nan
    emp_gt: float = np.nan


@dataclass
class TrialReport:
    """Outcome of one Monte Carlo trial at one (SNR, ATR) point."""

    trial: int
    snr_db: float
    atr_db: float
    bits_a: int
    bits_t: int
    errs_a: dict
    errs_t: dict
    estimator: EstimatorErrors
    failed: bool = False
    failure_reason: str = ""
    seconds: float = 0.0


def best_ray_permutation(nu_est: np.ndarray, nu_true: np.ndarray) -> list[int]:
    """Ray labelling that minimises the Doppler error (permutation ambiguity)."""
    perms = ([0, 1], [1, 0])
    errs = [np.sum(np.abs(nu_est - nu_true[list(p)]) ** 2) for p in perms]
    return list(perms[int(np.argmin(errs))])


def estimator_error_metrics(
    est: AuEstimate,
    au,
    tu_reported_var: float,
    tu_power: float,
    config: SimulationConfig,
    geom: LinkGeometry,
) -> EstimatorErrors:
    order = best_ray_permutation(est.nus, au.nus)
    nu_max = config.doppler_max * geom.t_symbol
    doppler = float(np.mean((est.nus - au.nus[order]) ** 2)) / nu_max**2
    delay = float(np.mean((est.taus - au.delays[order]) ** 2)) / config.delta_a**2
    gain = float(np.mean(np.abs(est.gains - au.gains[order]) ** 2)) / np.abs(
        au.gains[0]
    ) ** 2
    dircos = float(
        np.mean((np.sin(est.aoas) - np.sin(au.aoas[order])) ** 2)
    )
    return EstimatorErrors(
        doppler=doppler,
        delay=delay,
        gain=gain,
        dircos=dircos,
        var_gt=tu_reported_var / tu_power,
    )


def run_trial(
    config: SimulationConfig,
    trial: int,
    snr_db: float,
    atr_db: float,
    geom: LinkGeometry | None = None,
) -> TrialReport:
    """One seeded trial: draw, synthesise, estimate (if configured), detect.

    The random substream depends only on (master seed, trial index), so the
    same trial shares its channel/symbol/noise draws across every grid cell;
    cells differ only through the power scalings applied to those draws.
    """
    start = time.perf_counter()
    geom = geom or geometry_from_config(config)
    rng = trial_rng(config.seed, trial)
    n_coh, m = config.n_coh, config.m

    tu_power = 10.0 ** (-atr_db / 10.0)
    noise_var = 10.0 ** (-snr_db / 10.0)
    k_a = 10.0 ** (config.k_a_db / 10.0)

    au = draw_au_channel(
        geom, k_a, config.doppler_max, config.delta_a, config.tau_slope, rng
    )
    tu = draw_tu_channel(
        geom, config.k_t_paths, config.delta_t, config.tau_slope, rng, tu_power
    )
    au, tu = apply_min_delay_lock(au, tu, geom)

    gap = max(2, n_coh // max(config.n_a_train, config.n_t_train) // 2)
    sched_au = make_pilot_schedule("au", BPSK, m, m, n_coh, config.n_a_train, rng)
    sched_tu = make_pilot_schedule(
        "tu", QPSK, m, config.pilot_q_t, n_coh, config.n_t_train, rng, block_offset=gap
    )

    sym_au = sched_au.inject(draw_symbols(BPSK, (n_coh, m), rng))
    sym_tu_data = draw_symbols(QPSK, (n_coh, m), rng)
    sym_tu = sched_tu.inject(sym_tu_data)

    frames = synthesize_interval(au, tu, sym_au, sym_tu, noise_var, geom, rng)

    estimator = EstimatorErrors()
    if config.csi_mode == "exact":
        def au_stack(blocks):
            return au_channel_stack(
                geom, au.gains, au.etas, au.nus, au.delays, blocks
            )

        m_tu_stack = tu_channel_stack(tu_diagonals(tu, geom), geom)
    else:
        try:
            est = estimate_au_channel(
                frames.y_bar,
                sched_au.blocks,
                sym_au[sched_au.blocks],
                geom,
                config.delta_a,
                grid_factor=config.doppler_grid_factor,
                beta_grid=config.beta_grid,
            )
        except EstimationFailure as exc:
            return TrialReport(
                trial=trial,
                snr_db=snr_db,
                atr_db=atr_db,
                bits_a=0,
                bits_t=0,
                errs_a={d: 0 for d in config.detectors},
                errs_t={d: 0 for d in config.detectors},
                estimator=estimator,
                failed=True,
                failure_reason=str(exc),
                seconds=time.perf_counter() - start,
            )
        tu_model = build_pilot_model(
            frames.y[:, sched_tu.blocks, :],
            sched_tu,
            est.channel_stack(geom, sched_tu.blocks),
            noise_var,
            geom,
        )
        tu_est = (
            bwlu_estimate(tu_model)
            if config.tu_estimator == "bwlu"
            else ls_estimate(tu_model)
        )
        estimator = estimator_error_metrics(
            est, au, tu_est.reported_variance, tu_power, config, geom
        )
        estimator.emp_gt = float(
            np.sum(np.abs(tu_est.taps_stacked - tu.stacked_taps) ** 2) / tu_power
        )

        def au_stack(blocks):
            return est.channel_stack(geom, blocks)

        m_tu_stack = tu_channel_stack(tu_est.diagonals(geom), geom)

    pilot_blocks = set(sched_au.blocks.tolist()) | set(sched_tu.blocks.tolist())
    data_blocks = np.array(sorted(set(range(n_coh)) - pilot_blocks))
    bits_a = data_blocks.size * m
    bits_t = data_blocks.size * m * 2

    errs_a = {d: 0 for d in config.detectors}
    errs_t = {d: 0 for d in config.detectors}
    for lo in range(0, data_blocks.size, config.batch_blocks):
        chunk = data_blocks[lo : lo + config.batch_blocks]
        y = frames.stacked(chunk)
        h_au = au_stack(chunk)
        for det in config.detectors:
            decided = detect_batch(det, y, h_au, m_tu_stack, noise_var)
            errs_a[det] += symbol_bit_errors(decided[:, :m], sym_au[chunk], BPSK)
            errs_t[det] += symbol_bit_errors(decided[:, m:], sym_tu[chunk], QPSK)

    return TrialReport(
        trial=trial,
        snr_db=snr_db,
        atr_db=atr_db,
        bits_a=bits_a,
        bits_t=bits_t,
        errs_a=errs_a,
        errs_t=errs_t,
        estimator=estimator,
        seconds=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# Aggregation and persistence
# ---------------------------------------------------------------------------

def wilson_interval(errors: int, bits: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial error proportion."""
    if bits == 0:
        return 0.0, 1.0
    p = errors / bits
    denom = 1.0 + z**2 / bits
    centre = (p + z**2 / (2 * bits)) / denom
    half = (z / denom) * np.sqrt(p * (1 - p) / bits + z**2 / (4 * bits**2))
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class CellAccumulator:
    """Commutative accumulator for one (SNR, ATR, detector) cell."""

    trials: int = 0
    bits_a: int = 0
    errs_a: int = 0
    bits_t: int = 0
    errs_t: int = 0
    sq_doppler: list = field(default_factory=list)
    sq_delay: list = field(default_factory=list)
    sq_gain: list = field(default_factory=list)
    sq_dircos: list = field(default_factory=list)
    sq_var_gt: list = field(default_factory=list)
    seconds: float = 0.0

    def add(self, report: TrialReport, detector: str) -> None:
        self.trials += 1
        self.bits_a += report.bits_a
        self.errs_a += report.errs_a[detector]
        self.bits_t += report.bits_t
        self.errs_t += report.errs_t[detector]
        est = report.estimator
        for bucket, value in (
            (self.sq_doppler, est.doppler),
            (self.sq_delay, est.delay),
            (self.sq_gain, est.gain),
            (self.sq_dircos, est.dircos),
            (self.sq_var_gt, est.var_gt),
        ):
            if np.isfinite(value):
                bucket.append(value)
        self.seconds += report.seconds

    def to_state(self) -> dict:
        return {
            "trials": self.trials,
            "bits_a": self.bits_a,
            "errs_a": self.errs_a,
            "bits_t": self.bits_t,
            "errs_t": self.errs_t,
            "sq_doppler": self.sq_doppler,
            "sq_delay": self.sq_delay,
            "sq_gain": self.sq_gain,
            "sq_dircos": self.sq_dircos,
            "sq_var_gt": self.sq_var_gt,
            "seconds": self.seconds,
        }

    @classmethod
    def from_state(cls, state: dict) -> "CellAccumulator":
        return cls(**state)


def _db_or_nan(values: list) -> float:
    if not values:
        return float("nan")
    mean = float(np.mean(values))
    if mean <= 0.0:
        return float("-inf")
    return 10.0 * np.log10(mean)


def _format_cell_row(key: tuple, cell: CellAccumulator, csi_mode: str) -> str:
    snr, atr, det = key
    ber_a = cell.errs_a / cell.bits_a if cell.bits_a else float("nan")
    ber_t = cell.errs_t / cell.bits_t if cell.bits_t else float("nan")
    fields = [
        f"{snr:g}",
        f"{atr:g}",
        det,
        csi_mode,
        str(cell.trials),
        str(cell.bits_a),
        str(cell.errs_a),
        f"{ber_a:.6e}",
        str(cell.bits_t),
        str(cell.errs_t),
        f"{ber_t:.6e}",
        f"{_db_or_nan(cell.sq_doppler):.4f}",
        f"{_db_or_nan(cell.sq_delay):.4f}",
        f"{_db_or_nan(cell.sq_gain):.4f}",
        f"{_db_or_nan(cell.sq_dircos):.4f}",
        f"{_db_or_nan(cell.sq_var_gt):.4f}",
        f"{cell.seconds / max(cell.trials, 1):.3f}",
    ]
    return ",".join(fields)


class GridRunner:
    """Executes the configured grid and persists resumable results."""

    def __init__(self, config: SimulationConfig, out_dir: str | Path):
        self.config = config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.csv_path = self.out_dir / "results.csv"
        self.json_path = self.out_dir / "results.json"
        self.cells: dict[tuple, CellAccumulator] = {}
        self.failures: list[dict] = []
        self.trials_done = 0
        self._load_existing()

    def _load_existing(self) -> None:
        if not self.json_path.exists():
            return
        state = json.loads(self.json_path.read_text())
        if state["config_hash"] != self.config.config_hash():
            raise SystemExit(
                f"refusing to merge into {self.out_dir}: existing results were "
                f"produced by a different configuration "
                f"({state['config_hash']} != {self.config.config_hash()})"
            )
        self.trials_done = state["trials_done"]
        self.failures = state["failures"]
        for key_str, cell_state in state["cells"].items():
            snr, atr, det = key_str.split("|")
            self.cells[(float(snr), float(atr), det)] = CellAccumulator.from_state(
                cell_state
            )

    def run(self, extra_trials: int | None = None) -> None:
        config = self.config
        n_new = extra_trials if extra_trials is not None else config.trials
        trial_ids = range(self.trials_done, self.trials_done + n_new)
        points = list(product(config.snr_db, config.atr_db))
        jobs = [(trial, snr, atr) for trial in trial_ids for (snr, atr) in points]

        if config.threads > 1:
            with ProcessPoolExecutor(max_workers=config.threads) as pool:
                reports = list(
                    pool.map(_trial_worker, [(config, t, s, a) for t, s, a in jobs])
                )
        else:
            geom = geometry_from_config(config)
            reports = [run_trial(config, t, s, a, geom) for t, s, a in jobs]

        for report in reports:
            if report.failed:
                self.failures.append(
                    {
                        "trial": report.trial,
                        "snr_db": report.snr_db,
                        "atr_db": report.atr_db,
                        "reason": report.failure_reason,
                    }
                )
                continue
            for det in config.detectors:
                key = (report.snr_db, report.atr_db, det)
                self.cells.setdefault(key, CellAccumulator()).add(report, det)
        self.trials_done += n_new
        self.write()

    def write(self) -> None:
        rows = [CSV_HEADER]
        for key in sorted(self.cells):
            rows.append(_format_cell_row(key, self.cells[key], self.config.csi_mode))
        self.csv_path.write_text("\n".join(rows) + "\n")

        state = {
            "config": {
                k: list(v) if isinstance(v, tuple) else v
                for k, v in self.config.to_dict().items()
            },
            "config_hash": self.config.config_hash(),
            "trials_done": self.trials_done,
            "failures": sorted(
                self.failures, key=lambda f: (f["snr_db"], f["atr_db"], f["trial"])
            ),
            "cells": {
                f"{k[0]:g}|{k[1]:g}|{k[2]}": cell.to_state()
                for k, cell in sorted(self.cells.items())
            },
            "wilson": {
                f"{k[0]:g}|{k[1]:g}|{k[2]}": {
                    "ber_a": wilson_interval(c.errs_a, c.bits_a),
                    "ber_t": wilson_interval(c.errs_t, c.bits_t),
                }
                for k, c in sorted(self.cells.items())
            },
        }
        self.json_path.write_text(json.dumps(state, indent=2, sort_keys=True) + "\n")


def _trial_worker(args) -> TrialReport:
    config, trial, snr, atr = args
    return run_trial(config, trial, snr, atr)


def run_grid(config: SimulationConfig, out_dir: str | Path) -> GridRunner:
    runner = GridRunner(config, out_dir)
    runner.run()
    return runner
