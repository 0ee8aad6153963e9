"""Static SVG line plots of logged channels."""
from __future__ import annotations

import re
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .engine import TrajectoryLog  # noqa: E402
from .errors import EmptyLog  # noqa: E402

LABELS = {"omega": "frequency", "p": "active power", "v_dc": "dc voltage", "q": "reactive power"}
UNITS = {"omega": "rad/s", "p": "W", "q": "var", "v_dc": "V"}


def _series(log: TrajectoryLog, channel: str) -> list[str]:
    if channel in log.columns:
        return [channel]
    found = [c for c in log.columns if re.fullmatch(rf"{re.escape(channel)}_\d+", c)]
    if not found:
        raise KeyError(channel)
    return found


def emit_plots(log: TrajectoryLog, channels: Sequence[str], out_dir: str | Path,
               prefix: str = "run") -> list[Path]:
    """Write one SVG per channel; per-unit axes where the log has a base for it.

    Channels missing from a multi-converter log are matched against their
    ``<channel>_<k>`` columns and drawn together.
    """
    if len(log) < 2:
        raise EmptyLog(f"log has {len(log)} sample(s); at least two are needed to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t = log.t
    paths = []
    for ch in channels:
        fig, ax = plt.subplots(figsize=(6, 3.2))
        per_unit = False
        for col in _series(log, ch):
            base = log.pu_bases.get(col)
            y = log.column(col)
            if base:
                y = y / base
                per_unit = True
            ax.plot(t, y, label=col, linewidth=1.2)
        ax.set_xlabel("time (s)")
        ax.set_ylabel(f"{LABELS.get(ch, ch)} ({'p.u.' if per_unit else UNITS.get(ch, '')})")
        ax.grid(True, alpha=0.3)
        if len(ax.lines) > 1:
            ax.legend()
        fig.tight_layout()
        path = out_dir / f"{prefix}_{ch}.svg"
        fig.savefig(path, format="svg")
        plt.close(fig)
        paths.append(path)
    return paths
