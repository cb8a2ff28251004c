"""Scenario configuration: defaults, file parsing, validation, hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .detector import DETECTOR_KINDS
from .operators import make_pulse

SPEED_OF_LIGHT = 299_792_458.0

CSI_MODES = ("exact", "estimated")


@dataclass
class SimulationConfig:
    """Every scenario knob of the Monte Carlo harness.

    Defaults reproduce the reference operating point: 16 subcarriers over a
    625 kHz chip rate at a 27 GHz carrier, a two-path static terrestrial
    link, a 6 dB Rician two-ray aerial link at 10 m/s, and full-band pilot
    schedules of 20 blocks per user inside a 2^14-block coherence interval.
    """

    m: int = 16
    l_cp: int = 4
    j_antennas: int = 4
    chip_rate: float = 625e3
    f_carrier: float = 27e9
    k_t_paths: int = 2
    k_a_db: float = 6.0
    n_coh: int = 2**14
    speed: float = 10.0
    f_max: float = 0.0              # 0 -> derived from speed and carrier
    delta_a_chips: float = 3.0
    delta_t_chips: float = 2.0
    tau_slope_chips: float = 2.0
    q_a: int = 0                    # 0 -> full band
    q_t: int = 0
    n_a_train: int = 20
    n_t_train: int = 20
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    atr_db: tuple = (0.0,)
    detectors: tuple = DETECTOR_KINDS
    csi_mode: str = "exact"
    trials: int = 10
    seed: int = 1234
    pulse: str = "hann"
    tu_estimator: str = "bwlu"
    batch_blocks: int = 2048
    doppler_grid_factor: int = 8
    beta_grid: int = 1024
    threads: int = 1

    def __post_init__(self):
        self.validate()

    # -- derived quantities -------------------------------------------------

    @property
    def t_chip(self) -> float:
        return 1.0 / self.chip_rate

    @property
    def doppler_max(self) -> float:
        if self.f_max > 0.0:
            return self.f_max
        return self.f_carrier * self.speed / SPEED_OF_LIGHT

    @property
    def delta_a(self) -> float:
        return self.delta_a_chips * self.t_chip

    @property
    def delta_t(self) -> float:
        return self.delta_t_chips * self.t_chip

    @property
    def tau_slope(self) -> float:
        return self.tau_slope_chips * self.t_chip

    @property
    def pilot_q_a(self) -> int:
        return self.q_a if self.q_a > 0 else self.m

    @property
    def pilot_q_t(self) -> int:
        return self.q_t if self.q_t > 0 else self.m

    def validate(self) -> None:
        pulse = make_pulse(self.pulse)
        if self.l_cp < 1 or self.l_cp > self.m:
            raise ValueError("l_cp must lie in [1, m]")
        if self.delta_t_chips > self.l_cp - pulse.l_filter + 1e-12:
            raise ValueError(
                "delta_t_chips exceeds l_cp - l_filter: the terrestrial "
                "channel would spill past the aggregated tap window"
            )
        if self.delta_a_chips > self.l_cp - pulse.l_filter + 1 + 1e-12:
            raise ValueError("delta_a_chips violates the cyclic-prefix condition")
        p_total = self.m + self.l_cp
        if self.delta_a_chips >= p_total / 2:
            raise ValueError("delta_a_chips must stay below half an OFDM symbol")
        if self.csi_mode not in CSI_MODES:
            raise ValueError(f"csi_mode must be one of {CSI_MODES}")
        for det in self.detectors:
            if det not in DETECTOR_KINDS:
                raise ValueError(f"unknown detector {det!r}")
        if self.tu_estimator not in ("bwlu", "ls"):
            raise ValueError("tu_estimator must be 'bwlu' or 'ls'")
        if self.pilot_q_a != self.m:
            raise ValueError("aerial pilots must span the full band (q_a = m or 0)")
        if self.pilot_q_t * self.n_t_train < self.l_cp:
            raise ValueError("terrestrial pilot grid too small to identify taps")
        if self.n_a_train < 1 or self.n_a_train >= self.n_coh:
            raise ValueError("n_a_train must lie in [1, n_coh)")
        if self.n_t_train < 1 or self.n_t_train >= self.n_coh:
            raise ValueError("n_t_train must lie in [1, n_coh)")
        if self.trials < 1:
            raise ValueError("trials must be positive")

    # -- serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        payload = {k: list(v) if isinstance(v, tuple) else v
                   for k, v in sorted(self.to_dict().items())
                   if k not in ("threads",)}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]

    def with_overrides(self, **kwargs) -> "SimulationConfig":
        return replace(self, **kwargs)


_TUPLE_KEYS = {"snr_db", "atr_db", "detectors"}
_INT_KEYS = {
    "m", "l_cp", "j_antennas", "k_t_paths", "n_coh", "q_a", "q_t",
    "n_a_train", "n_t_train", "trials", "seed", "batch_blocks",
    "doppler_grid_factor", "beta_grid", "threads",
}
_FLOAT_KEYS = {
    "chip_rate", "f_carrier", "k_a_db", "speed", "f_max", "delta_a_chips",
    "delta_t_chips", "tau_slope_chips",
}
_STR_KEYS = {"csi_mode", "pulse", "tu_estimator"}


def parse_config_file(path: str | Path) -> dict:
    """Flat key=value file; '#' starts a comment; unknown keys are errors."""
    overrides: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _TUPLE_KEYS:
            items = [v.strip() for v in value.split(",") if v.strip()]
            overrides[key] = (
                tuple(items) if key == "detectors" else tuple(float(v) for v in items)
            )
        elif key in _INT_KEYS:
            overrides[key] = int(value)
        elif key in _FLOAT_KEYS:
            overrides[key] = float(value)
        elif key in _STR_KEYS:
            overrides[key] = value
        else:
            raise ValueError(f"{path}:{lineno}: unknown configuration key {key!r}")
    return overrides


def load_config(path: str | Path | None = None, **overrides) -> SimulationConfig:
    merged: dict = {}
    if path is not None:
        merged.update(parse_config_file(path))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return SimulationConfig(**merged)
