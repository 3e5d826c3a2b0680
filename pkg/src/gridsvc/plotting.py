"""Figures rendered next to the CSV outputs (PNG, no display needed)."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.figure import Figure

from .harness import RunReport

_STYLE = {"linewidth": 1.2}


def _save(fig: Figure, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    return path


def _sibling(csv_path: str | Path, suffix: str) -> Path:
    p = Path(csv_path)
    return p.with_name(f"{p.stem}_{suffix}.png")


def plot_run(report: RunReport, csv_path: str | Path) -> list[Path]:
    """Load-bus voltages, x_rms and load-bus entropy over time."""
    rows = report.rows
    t = np.array([float(r[0]) for r in rows])
    area = np.array([int(r[1]) for r in rows])
    bus = np.array([int(r[2]) for r in rows])
    v = np.array([float(r[3]) for r in rows])
    ent = np.array([float(r[5]) for r in rows])
    watched = ~np.isnan(ent)

    fig = Figure(figsize=(7, 7))
    ax_v, ax_x, ax_e = fig.subplots(3, 1, sharex=True)
    for b in np.unique(bus[watched & (area == 1)]):
        sel = bus == b
        ax_v.plot(t[sel], v[sel], label=f"bus {b}", **_STYLE)
        ax_e.plot(t[sel], ent[sel], label=f"bus {b}", **_STYLE)
    ax_v.set_ylabel("V (p.u.), area 1")
    ax_v.legend(loc="best", fontsize="small")
    ax_x.plot(report.times, report.x_rms, color="k", **_STYLE)
    ax_x.set_ylabel("x_rms (p.u.)")
    for e in report.alarm_events:
        ax_e.axvline(e.time_s, color="r", linestyle=":", linewidth=1)
    ax_e.set_ylabel("entropy (nat)")
    ax_e.set_xlabel("time (s)")
    return [_save(fig, _sibling(csv_path, "timeseries"))]


def plot_rho_sweep(table: Sequence[tuple[float, float]], csv_path: str | Path) -> list[Path]:
    rho = [r for r, s in table if math.isfinite(s)]
    snr = [s for r, s in table if math.isfinite(s)]
    fig = Figure(figsize=(5, 3.5))
    ax = fig.subplots()
    ax.plot(rho, snr, marker="o", **_STYLE)
    ax.set_xlabel("compression ratio")
    ax.set_ylabel("median SNR (dB)")
    ax.grid(alpha=0.3)
    return [_save(fig, _sibling(csv_path, "snr"))]


def plot_pilot_sweep(table: Sequence[tuple[int, float]], csv_path: str | Path) -> list[Path]:
    fig = Figure(figsize=(5, 3.5))
    ax = fig.subplots()
    ax.plot([c for c, _ in table], [x for _, x in table], marker="s", **_STYLE)
    ax.set_xlabel("pilot buses")
    ax.set_ylabel("final x_rms (p.u.)")
    ax.set_yscale("log")
    ax.grid(alpha=0.3, which="both")
    return [_save(fig, _sibling(csv_path, "pilots"))]
