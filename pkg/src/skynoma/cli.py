"""Command-line interface: grid runs, diagnostic scans, tables, selftest."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .au_estimation import (
    delay_objective,
    derotated_spectral_diag,
    doppler_objective,
    doppler_scan,
)
from .channel import (
    apply_min_delay_lock,
    au_channel_stack,
    draw_au_channel,
    draw_tu_channel,
    make_geometry,
    synthesize_interval,
    tu_channel_stack,
    tu_diagonals,
)
from .config import SimulationConfig, load_config
from .detector import sdr_per_symbol
from .harness import geometry_from_config, run_grid, run_trial, trial_rng
from .operators import (
    CpOperators,
    FourierOperators,
    circulant_eigenvalues,
    make_pulse,
    toeplitz_from_pulse,
)
from .waveform import BPSK, QPSK, draw_symbols, make_pilot_schedule


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--trials", type=int, default=None, help="trials per grid cell")
    parser.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    parser.add_argument("--threads", type=int, default=None, help="worker processes")
    parser.add_argument("--csi", choices=("exact", "estimated"), default=None)


def _config_from_args(args) -> SimulationConfig:
    return load_config(
        args.config,
        seed=args.seed,
        trials=args.trials,
        threads=args.threads,
        csi_mode=args.csi,
    )


def cmd_run(args) -> int:
    config = _config_from_args(args)
    runner = run_grid(config, args.out)
    print(f"wrote {runner.csv_path} ({runner.trials_done} trials/cell, "
          f"{len(runner.failures)} failures)")
    return 0


def cmd_scan(args) -> int:
    config = _config_from_args(args)
    geom = geometry_from_config(config)
    rng = trial_rng(config.seed, 0)
    snr_db = args.snr if args.snr is not None else config.snr_db[0]
    atr_db = args.atr if args.atr is not None else config.atr_db[0]
    tu_power = 10.0 ** (-atr_db / 10.0)
    noise_var = 10.0 ** (-snr_db / 10.0)
    k_a = 10.0 ** (config.k_a_db / 10.0)

    au = draw_au_channel(geom, k_a, config.doppler_max, config.delta_a,
                         config.tau_slope, rng)
    tu = draw_tu_channel(geom, config.k_t_paths, config.delta_t,
                         config.tau_slope, rng, tu_power)
    au, tu = apply_min_delay_lock(au, tu, geom)
    sym_au = draw_symbols(BPSK, (config.n_coh, config.m), rng)
    sym_tu = draw_symbols(QPSK, (config.n_coh, config.m), rng)
    frames = synthesize_interval(au, tu, sym_au, sym_tu, noise_var, geom, rng)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    alphas, values = doppler_objective(frames.y_bar, config.doppler_grid_factor)
    step = max(1, len(alphas) // args.points)
    lines = ["x,y"] + [f"{a:.9g},{v:.9g}" for a, v in zip(alphas[::step], values[::step])]
    (out / "doppler_objective.csv").write_text("\n".join(lines) + "\n")

    nus = doppler_scan(frames.y_bar, config.doppler_grid_factor)
    betas = np.linspace(0.0, config.delta_a, config.beta_grid)
    for k, nu in enumerate(nus):
        diag = derotated_spectral_diag(frames.y_bar, nu, geom)
        scores = delay_objective(diag, geom, betas)
        lines = ["x,y"] + [f"{b:.9g},{s:.9g}" for b, s in zip(betas, scores)]
        (out / f"delay_objective_ray{k}.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote diagnostic scans to {out} "
          f"(doppler pair estimate: {nus[0]:+.6f}, {nus[1]:+.6f})")
    return 0


def cmd_table(args) -> int:
    config = _config_from_args(args)
    snr_db = args.snr if args.snr is not None else 10.0
    atr_db = args.atr if args.atr is not None else 0.0
    sweep = args.lengths or [1, 5, 10, 15, 20, 25, 30]
    sweep_field = "n_a_train" if args.which == 1 else "n_t_train"
    geom = geometry_from_config(config)

    def ber_for(cfg: SimulationConfig) -> tuple[float, float]:
        det = "wl-mmse-sic"
        errs_a = errs_t = bits_a = bits_t = 0
        for trial in range(cfg.trials):
            report = run_trial(cfg, trial, snr_db, atr_db, geom)
            if report.failed:
                continue
            errs_a += report.errs_a[det]
            errs_t += report.errs_t[det]
            bits_a += report.bits_a
            bits_t += report.bits_t
        return errs_a / max(bits_a, 1), errs_t / max(bits_t, 1)

    exact_cfg = config.with_overrides(csi_mode="exact", detectors=("wl-mmse-sic",))
    exact_a, exact_t = ber_for(exact_cfg)
    rows = [("exact", exact_a, exact_t)]
    for length in sweep:
        cfg = config.with_overrides(
            csi_mode="estimated",
            detectors=("wl-mmse-sic",),
            **{sweep_field: int(length)},
        )
        ber_a, ber_t = ber_for(cfg)
        rows.append((str(length), ber_a, ber_t))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{sweep_field},ber_a,ber_t"]
    header = f"{sweep_field:>10s} {'BER_A':>12s} {'BER_T':>12s}"
    print(header)
    for name, ber_a, ber_t in rows:
        print(f"{name:>10s} {ber_a:12.4e} {ber_t:12.4e}")
        lines.append(f"{name},{ber_a:.6e},{ber_t:.6e}")
    (out / f"table{args.which}.csv").write_text("\n".join(lines) + "\n")
    return 0


def _selftest_cp() -> bool:
    for m, l_cp in ((2, 1), (8, 2), (16, 4)):
        ops = CpOperators.build(m, l_cp)
        if not np.array_equal(ops.remove @ ops.insert, np.eye(m)):
            return False
    return True


def _selftest_circulant() -> bool:
    rng = np.random.default_rng(0)
    for name, tau in (("hann", 1.3), ("rect", 0.4), ("hann", 0.0)):
        pulse = make_pulse(name)
        p, l_cp = 12, 4
        t0 = toeplitz_from_pulse(pulse, tau, 0, p, l_cp, 1.0)
        t1 = toeplitz_from_pulse(pulse, tau, 1, p, l_cp, 1.0)
        w = FourierOperators.build(p)
        diag = w.dft @ (t0 + t1) @ w.idft
        if np.max(np.abs(diag - np.diag(np.diag(diag)))) >= 1e-10:
            return False
        col = pulse(np.arange(p) - tau)
        if np.max(np.abs(np.diag(diag) - circulant_eigenvalues(col))) >= 1e-10:
            return False
    return True


def _selftest_end_to_end() -> bool:
    geom = make_geometry(m=8, l_cp=3, j_antennas=2, chip_rate=1e6)
    rng = np.random.default_rng(1)
    au = draw_au_channel(geom, 4.0, 900.0, 1.8 * geom.t_chip, geom.t_chip, rng)
    tu = draw_tu_channel(geom, 2, 0.9 * geom.t_chip, geom.t_chip, rng)
    au, tu = apply_min_delay_lock(au, tu, geom)
    sym_au = draw_symbols(BPSK, (6, 8), rng)
    sym_tu = draw_symbols(QPSK, (6, 8), rng)
    frames = synthesize_interval(au, tu, sym_au, sym_tu, 0.0, geom)
    m_tu = tu_channel_stack(tu_diagonals(tu, geom), geom)
    for n in range(6):
        h_au = au_channel_stack(
            geom, au.gains, au.etas, au.nus, au.delays, np.array([n])
        )[0]
        got = frames.stacked(np.array([n]))[0]
        want = h_au @ sym_au[n] + m_tu @ sym_tu[n]
        if np.max(np.abs(got - want)) >= 1e-9:
            return False
    return True


def _selftest_sdr() -> bool:
    rng = np.random.default_rng(2)
    for _ in range(50):
        rows = int(rng.integers(6, 12))
        cols = int(rng.integers(2, rows))
        h = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
        a = rng.standard_normal((rows, rows)) + 1j * rng.standard_normal((rows, rows))
        r = a @ a.conj().T + rows * np.eye(rows)
        direct = sdr_per_symbol(h, r, "direct")
        via_qr = sdr_per_symbol(h, r, "qr")
        if np.max(np.abs(direct - via_qr) / np.maximum(direct, 1e-12)) >= 1e-8:
            return False
    return True


def _selftest_cccm_slope() -> bool:
    from .au_estimation import estimate_cccm

    geom = make_geometry(m=16, l_cp=4, j_antennas=1, chip_rate=625e3)
    rng = np.random.default_rng(3)
    tu = draw_tu_channel(geom, 2, 2 * geom.t_chip, 2 * geom.t_chip, rng)
    sizes = [2**k for k in range(8, 15)]
    norms = []
    for n_blocks in sizes:
        sym_tu = draw_symbols(QPSK, (n_blocks, geom.m), rng)
        au_silent = draw_au_channel(
            geom, 4.0, 900.0, geom.t_chip, geom.t_chip, rng, total_power=1e-30
        )
        frames = synthesize_interval(
            au_silent, tu, np.zeros((n_blocks, geom.m)), sym_tu, 0.5, geom, rng
        )
        vals = [
            np.linalg.norm(estimate_cccm(frames.y_bar, alpha, 0))
            for alpha in (0.03, 0.11, 0.27)
        ]
        norms.append(np.median(vals))
    slope = np.polyfit(np.log2(sizes), np.log2(norms), 1)[0]
    return bool(abs(slope + 0.5) < 0.1)


def cmd_selftest(args) -> int:
    checks = [
        ("cyclic prefix removal/insertion identity", _selftest_cp),
        ("pulse circulant diagonalisation", _selftest_circulant),
        ("post-DFT end-to-end model", _selftest_end_to_end),
        ("SDR direct/QR path agreement", _selftest_sdr),
        ("conjugate statistics 1/sqrt(N) decay", _selftest_cccm_slope),
    ]
    failures = 0
    for name, check in checks:
        ok = check()
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += not ok
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skynoma",
        description="Aerial/terrestrial uplink NOMA link simulator and receiver suite",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the configured Monte Carlo grid")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_scan = sub.add_parser("scan", help="dump Doppler/delay objective curves as CSV")
    _add_common(p_scan)
    p_scan.add_argument("--snr", type=float, default=None)
    p_scan.add_argument("--atr", type=float, default=None)
    p_scan.add_argument("--points", type=int, default=8192, help="max CSV rows")
    p_scan.set_defaults(func=cmd_scan)

    p_table = sub.add_parser("table", help="training-length BER tables")
    _add_common(p_table)
    p_table.add_argument("--which", type=int, choices=(1, 2), default=1)
    p_table.add_argument("--snr", type=float, default=None)
    p_table.add_argument("--atr", type=float, default=None)
    p_table.add_argument("--lengths", type=int, nargs="*", default=None)
    p_table.set_defaults(func=cmd_table)

    p_self = sub.add_parser("selftest", help="structural invariant suite")
    _add_common(p_self)
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
