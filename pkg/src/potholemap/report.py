"""Registry reports: delimited summary plus rendered overview figures.

Writes potholes.csv next to two PNG figures (a severity-colored map scatter
and count charts) so a registry can be reviewed without running the web UI.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")  # file rendering only, no display server
import matplotlib.pyplot as plt

from .detection import Severity
from .store import STATUSES, PotholeRecord, isoformat_utc

REPORT_CSV_FIELDS = ("id", "lat", "lon", "severity", "status", "first_seen",
                     "last_seen", "observation_count", "road_type")

SEVERITY_COLORS = {
    Severity.LOW: "#4caf50",
    Severity.MEDIUM: "#ff9800",
    Severity.HIGH: "#d32f2f",
}

STATUS_MARKERS = {"open": "o", "reopened": "^", "fixed": "x"}


def write_report(records: Sequence[PotholeRecord], out_dir: str | Path) -> list[Path]:
    """Write potholes.csv, map.png, and counts.png into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        _write_csv(records, out / "potholes.csv"),
        _write_map(records, out / "map.png"),
        _write_counts(records, out / "counts.png"),
    ]
    return written


def _write_csv(records: Sequence[PotholeRecord], path: Path) -> Path:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_FIELDS)
        for r in records:
            writer.writerow([
                r.id, f"{r.coordinate[0]:.5f}", f"{r.coordinate[1]:.5f}",
                r.severity.label, r.status, isoformat_utc(r.first_seen),
                isoformat_utc(r.last_seen), r.observation_count,
                r.road_meta.get("road_type", ""),
            ])
    return path


def _write_map(records: Sequence[PotholeRecord], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 8))
    if records:
        for status, marker in STATUS_MARKERS.items():
            for severity, color in SEVERITY_COLORS.items():
                pts = [r.coordinate for r in records
                       if r.status == status and r.severity == severity]
                if not pts:
                    continue
                ax.scatter([p[1] for p in pts], [p[0] for p in pts],
                           c=color, marker=marker, s=60,
                           label=f"{severity.label} / {status}")
        ax.legend(loc="best", fontsize=8)
    else:
        ax.text(0.5, 0.5, "no records", ha="center", va="center",
                transform=ax.transAxes)
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title("Pothole registry")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _write_counts(records: Sequence[PotholeRecord], path: Path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))

    severities = list(Severity)
    sev_counts = [sum(1 for r in records if r.severity == s) for s in severities]
    ax1.bar([s.label for s in severities], sev_counts,
            color=[SEVERITY_COLORS[s] for s in severities])
    ax1.set_title("By severity")
    ax1.set_ylabel("potholes")

    status_counts = [sum(1 for r in records if r.status == s) for s in STATUSES]
    ax2.bar(list(STATUSES), status_counts, color="#607d8b")
    ax2.set_title("By status")

    for ax in (ax1, ax2):
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
