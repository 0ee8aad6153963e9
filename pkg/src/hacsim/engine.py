"""
Fixed-step simulation of plant + controller systems.

The plant is integrated with classical RK4. Controllers either run in
continuous time (their states are appended to the plant state) or at a fixed
rate with zero-order hold on their outputs, mimicking execution on a control
card. Events are snapped to the step grid and applied before the step that
starts at their timestamp.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .errors import ConfigError, NonFiniteDerivative

logger = logging.getLogger(__name__)

EVENT_ACTIONS = ("set_load", "set_p_ref", "set_grid_freq", "set_v_dc_ref", "set_gain")


def rk4_step(rhs: Callable[[float, Any], Sequence], x, t: float, h: float):
    """One classical Runge-Kutta step of ``dx/dt = rhs(t, x)``.

    ``x`` may be a list of floats (fast scalar path) or a numpy array of any
    shape (batched states).
    """
    if isinstance(x, np.ndarray):
        k1 = np.asarray(rhs(t, x))
        k2 = np.asarray(rhs(t + 0.5 * h, x + 0.5 * h * k1))
        k3 = np.asarray(rhs(t + 0.5 * h, x + 0.5 * h * k2))
        k4 = np.asarray(rhs(t + h, x + h * k3))
        x_next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(x_next).all():
            raise NonFiniteDerivative(f"non-finite state after RK4 step at t={t:.6g}")
        return x_next
    hh = 0.5 * h
    k1 = rhs(t, x)
    k2 = rhs(t + hh, [a + hh * b for a, b in zip(x, k1)])
    k3 = rhs(t + hh, [a + hh * b for a, b in zip(x, k2)])
    k4 = rhs(t + h, [a + h * b for a, b in zip(x, k3)])
    h6 = h / 6.0
    x_next = [a + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
              for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)]
    if not math.isfinite(math.fsum(x_next)):
        raise NonFiniteDerivative(f"non-finite state after RK4 step at t={t:.6g}")
    return x_next


@dataclass(frozen=True, order=True)
class Event:
    """Parameter change applied atomically between two integration steps.

    ``action`` is one of :data:`EVENT_ACTIONS`; ``value`` is the new value in SI
    units. ``target`` names the gain path for ``set_gain`` and the converter
    index (``"1"``, ``"2"``) for per-converter actions in multi-converter runs.
    """

    t: float
    action: str = field(compare=False)
    value: float = field(compare=False)
    target: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.t < 0:
            raise ConfigError("event time must be >= 0", key="t")
        if self.action not in EVENT_ACTIONS:
            raise ConfigError(f"unknown event action {self.action!r}", key="action")


class TrajectoryLog:
    """Uniformly sampled record of a simulation.

    Rows are appended during the run; :meth:`column` returns numpy arrays.
    ``pu_bases`` maps column names to the base used for their per-unit copies
    in the CSV output.
    """

    def __init__(self, columns: Sequence[str], sample_period: float,
                 pu_bases: dict[str, float] | None = None):
        if columns[0] != "t":
            raise ValueError("first column must be 't'")
        self.columns = list(columns)
        self.sample_period = sample_period
        self.pu_bases = dict(pu_bases or {})
        self._rows: list[Sequence[float]] = []
        self._data: np.ndarray | None = None

    def append(self, row: Sequence[float]) -> None:
        self._rows.append(row)
        self._data = None

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def data(self) -> np.ndarray:
        if self._data is None:
            self._data = np.array(self._rows, dtype=float).reshape(len(self._rows), len(self.columns))
        return self._data

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(name) from None

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 0]

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        pu = [c for c in self.columns if c in self.pu_bases]
        header = self.columns + [f"{c}_pu" for c in pu]
        idx = [self.columns.index(c) for c in pu]
        bases = [self.pu_bases[c] for c in pu]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in self.data:
                vals = list(row) + [row[i] / b for i, b in zip(idx, bases)]
                w.writerow([f"{v:.9g}" for v in vals])
        return path


class ClosedLoop:
    """Interface of a plant + controller composition understood by :func:`simulate`.

    Subclasses provide initial states ``x0`` (plant) and ``xc0`` (controller),
    the log ``columns`` and the hooks below. Plant states are lists of floats.
    """

    columns: Sequence[str] = ("t",)
    pu_bases: dict[str, float] = {}

    def initial_state(self) -> tuple[list[float], list[float]]:
        raise NotImplementedError

    def measure(self, t: float, x: Sequence[float]) -> Any:
        raise NotImplementedError

    def control(self, t: float, xc: Sequence[float], meas: Any) -> Sequence[float]:
        raise NotImplementedError

    def control_rates(self, t: float, xc: Sequence[float], meas: Any, u) -> list[float]:
        raise NotImplementedError

    def control_update(self, t: float, xc: Sequence[float], meas: Any, u, period: float) -> list[float]:
        """Discrete controller step; forward Euler unless overridden."""
        rates = self.control_rates(t, xc, meas, u)
        return [a + period * b for a, b in zip(xc, rates)]

    def plant_rhs(self, t: float, x: Sequence[float], u) -> list[float]:
        raise NotImplementedError

    def record(self, t: float, x: Sequence[float], xc: Sequence[float], meas: Any, u) -> Sequence[float]:
        raise NotImplementedError

    def apply_event(self, event: Event) -> None:
        raise ConfigError(f"event {event.action!r} not supported by {type(self).__name__}",
                          key=event.action)


def simulate(system: ClosedLoop, events: Sequence[Event], t_span: tuple[float, float],
             h: float = 20e-6, ctrl_rate: float = 5e3, decimation: int = 10,
             mode: str = "discrete", x0=None, xc0=None) -> TrajectoryLog:
    """Integrate ``system`` over ``t_span`` and return the decimated log.

    In ``discrete`` mode the controller runs every ``1/ctrl_rate`` seconds,
    which must be an integer multiple of ``h``; its outputs are held in
    between. In ``continuous`` mode the controller states are integrated with
    the plant.
    """
    t0, t1 = t_span
    if not t1 > t0:
        raise ConfigError("t_span must be increasing", key="t_span")
    if not h > 0:
        raise ConfigError("step size must be > 0", key="h")
    if decimation < 1:
        raise ConfigError("decimation must be >= 1", key="decimation")
    if mode not in ("discrete", "continuous"):
        raise ConfigError(f"unknown control mode {mode!r}", key="ctrl_mode")
    n_steps = int(round((t1 - t0) / h))
    if abs(n_steps * h - (t1 - t0)) > 1e-9 * max(1.0, abs(t1)):
        raise ConfigError("h must divide the simulated interval", key="h")
    sub = 1
    if mode == "discrete":
        period = 1.0 / ctrl_rate
        sub = int(round(period / h))
        if sub < 1 or abs(sub * h - period) > 1e-9 * period:
            raise ConfigError(f"h={h:g} does not divide the controller period {period:g}", key="h")

    schedule: dict[int, list[Event]] = {}
    for ev in sorted(events):
        k = int(round((ev.t - t0) / h))
        if k > n_steps or ev.t < t0:
            logger.warning("event %s at t=%g outside the simulated interval; dropped", ev.action, ev.t)
            continue
        schedule.setdefault(k, []).append(ev)

    init_x, init_xc = system.initial_state()
    x = list(init_x if x0 is None else x0)
    xc = list(init_xc if xc0 is None else xc0)
    log = TrajectoryLog(system.columns, decimation * h, system.pu_bases)
    nx = len(x)

    if mode == "continuous":
        def rhs(t, z):
            xp = z[:nx]
            xcp = z[nx:]
            meas = system.measure(t, xp)
            u = system.control(t, xcp, meas)
            return system.plant_rhs(t, xp, u) + system.control_rates(t, xcp, meas, u)
        z = x + xc
        for k in range(n_steps + 1):
            t = t0 + k * h
            for ev in schedule.get(k, ()):
                system.apply_event(ev)
            if k % decimation == 0:
                xp, xcp = z[:nx], z[nx:]
                meas = system.measure(t, xp)
                log.append(system.record(t, xp, xcp, meas, system.control(t, xcp, meas)))
            if k < n_steps:
                z = rk4_step(rhs, z, t, h)
        return log

    u = None
    meas = None
    f = None
    for k in range(n_steps + 1):
        t = t0 + k * h
        for ev in schedule.get(k, ()):
            system.apply_event(ev)
        if k % sub == 0:
            meas = system.measure(t, x)
            u = system.control(t, xc, meas)
            xc = system.control_update(t, xc, meas, u, sub * h)
            f = _held(system.plant_rhs, u)
        if k % decimation == 0:
            log.append(system.record(t, x, xc, meas if k % sub == 0 else system.measure(t, x), u))
        if k < n_steps:
            x = rk4_step(f, x, t, h)
    return log


def _held(plant_rhs, u):
    def f(t, x):
        return plant_rhs(t, x, u)
    return f
