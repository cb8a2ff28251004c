"""Render Monte Carlo result CSVs into publication-style figures.

Input is strictly the documented harness output schema (plus the
two-column ``x,y`` diagnostic dumps); rendering never mutates the inputs
and identical inputs produce identical image bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

RESULT_COLUMNS = (
    "snr_db,atr_db,detector,csi_mode,trials,bits_a,errs_a,ber_a,"
    "bits_t,errs_t,ber_t,mse_doppler_db,mse_delay_db,mse_gain_db,"
    "mse_dircos_db,var_gT_db,seconds"
).split(",")

FIGURE_KINDS = ("ber_au", "ber_tu", "mse_gains", "mse_dircos", "mse_gT", "scan_curve")

BER_FLOOR = 1e-7

_MSE_COLUMN = {
    "mse_gains": "mse_gain_db",
    "mse_dircos": "mse_dircos_db",
    "mse_gT": "var_gT_db",
}


def apply_house_style() -> None:
    plt.rcParams.update(
        {
            "font.family": "serif",
            "font.size": 9,
            "axes.labelsize": 10,
            "legend.fontsize": 7,
            "figure.figsize": (4.2, 3.2),
            "figure.dpi": 120,
            "axes.grid": True,
            "grid.alpha": 0.35,
            "grid.linestyle": "--",
            "lines.linewidth": 1.2,
            "lines.markersize": 4,
            "savefig.dpi": 200,
            "savefig.bbox": "tight",
            "svg.hashsalt": "skynoma-plots",
        }
    )


class RenderError(ValueError):
    """Bad specification, malformed CSV, or an empty data selection."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure: inputs, kind, row filters, output path."""

    csv_paths: tuple[str, ...]
    kind: str
    out_path: str
    atr_db: float | None = None
    detectors: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise RenderError(f"unknown figure kind {self.kind!r}; choose from {FIGURE_KINDS}")
        if not self.csv_paths:
            raise RenderError("at least one input CSV is required")


@dataclass
class RenderResult:
    """What was drawn: for tests and for the CLI summary line."""

    out_path: str
    series: list[str] = field(default_factory=list)
    annotations: list[tuple[float, float]] = field(default_factory=list)


def read_result_rows(paths) -> list[dict]:
    rows: list[dict] = []
    for path in paths:
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            header = reader.fieldnames or []
            missing = [c for c in RESULT_COLUMNS if c not in header]
            if missing:
                raise RenderError(f"{path}: missing result columns {missing}")
            rows.extend(reader)
    if not rows:
        raise RenderError("no data rows in the input CSVs")
    return rows


def read_curve(paths) -> tuple[np.ndarray, np.ndarray]:
    xs: list[float] = []
    ys: list[float] = []
    for path in paths:
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames != ["x", "y"]:
                raise RenderError(f"{path}: expected an 'x,y' curve dump")
            for row in reader:
                xs.append(float(row["x"]))
                ys.append(float(row["y"]))
    if not xs:
        raise RenderError("empty curve dump")
    return np.asarray(xs), np.asarray(ys)


def _select(rows, spec: FigureSpec) -> list[dict]:
    out = []
    for row in rows:
        if spec.atr_db is not None and float(row["atr_db"]) != spec.atr_db:
            continue
        if spec.detectors and row["detector"] not in spec.detectors:
            continue
        out.append(row)
    if not out:
        raise RenderError("selection matched no rows (check --atr / --detectors)")
    return out


def _save(fig, out_path: str) -> None:
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, metadata={"Date": None} if out_path.endswith(".svg") else None)
    plt.close(fig)


def _render_ber(rows, spec: FigureSpec, user: str) -> RenderResult:
    column = "ber_a" if user == "au" else "ber_t"
    selected = _select(rows, spec)
    series: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for row in selected:
        key = (row["detector"], row["csi_mode"])
        series.setdefault(key, []).append(
            (float(row["snr_db"]), max(float(row[column]), BER_FLOOR))
        )
    apply_house_style()
    fig, ax = plt.subplots()
    labels = []
    for (det, csi) in sorted(series):
        pts = sorted(series[(det, csi)])
        label = f"{det} ({csi})"
        labels.append(label)
        ax.semilogy([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("bit error rate")
    title_user = "aerial user" if user == "au" else "terrestrial user"
    suffix = f", ATR {spec.atr_db:g} dB" if spec.atr_db is not None else ""
    ax.set_title(f"BER vs SNR, {title_user}{suffix}")
    ax.legend()
    _save(fig, spec.out_path)
    return RenderResult(out_path=spec.out_path, series=labels)


def _render_mse(rows, spec: FigureSpec) -> RenderResult:
    column = _MSE_COLUMN[spec.kind]
    selected = _select(rows, spec)
    series: dict[float, dict[float, float]] = {}
    for row in selected:
        value = float(row[column])
        if not np.isfinite(value):
            continue
        series.setdefault(float(row["atr_db"]), {})[float(row["snr_db"])] = value
    if not series:
        raise RenderError(
            f"no finite {column} values in the selection (exact-CSI runs carry none)"
        )
    apply_house_style()
    fig, ax = plt.subplots()
    labels = []
    for atr in sorted(series):
        pts = sorted(series[atr].items())
        label = f"ATR {atr:g} dB"
        labels.append(label)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="s", label=label)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel(f"{column} [dB]")
    ax.set_title(spec.kind.replace("_", " "))
    ax.legend()
    _save(fig, spec.out_path)
    return RenderResult(out_path=spec.out_path, series=labels)


def _find_curve_peaks(x: np.ndarray, y: np.ndarray) -> list[tuple[float, float]]:
    """Separated local maxima that stand clearly above the curve median."""
    floor = np.median(y)
    bar = floor + 0.2 * (y.max() - floor)
    inner = (y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]) & (y[1:-1] > bar)
    idx = np.nonzero(inner)[0] + 1
    window = max(3, len(x) // 200)
    peaks: list[int] = []
    for k in idx[np.argsort(y[idx])[::-1]]:
        if all(abs(k - kept) > window for kept in peaks):
            peaks.append(int(k))
    return sorted((float(x[k]), float(y[k])) for k in peaks)


def _render_scan(spec: FigureSpec) -> RenderResult:
    x, y = read_curve(spec.csv_paths)
    peaks = _find_curve_peaks(x, y)
    apply_house_style()
    fig, ax = plt.subplots()
    ax.plot(x, y, linewidth=1.0)
    for px, py in peaks:
        ax.plot([px], [py], marker="v", color="crimson")
        ax.annotate(f"{px:.4g}", (px, py), textcoords="offset points",
                    xytext=(0, 6), ha="center", fontsize=6)
    ax.set_xlabel("scan variable")
    ax.set_ylabel("objective")
    ax.set_title("scan objective")
    _save(fig, spec.out_path)
    return RenderResult(out_path=spec.out_path, series=["objective"], annotations=peaks)


def render(spec: FigureSpec) -> RenderResult:
    """Render one figure to spec.out_path and report what was drawn."""
    if spec.kind == "scan_curve":
        return _render_scan(spec)
    rows = read_result_rows(spec.csv_paths)
    if spec.kind in ("ber_au", "ber_tu"):
        return _render_ber(rows, spec, "au" if spec.kind == "ber_au" else "tu")
    return _render_mse(rows, spec)
