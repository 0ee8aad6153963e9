"""
Closed-loop compositions runnable by :func:`hacsim.engine.simulate`.

* :class:`StiffGridHac` - L filter on a stiff grid, angle-form HAC, constant
  modulation magnitude. State ``(delta, zeta, v_dc, i_d, i_q)``; no controller
  states.
* :class:`AbcStiffGridHac` - the same system with three-phase currents and a
  stationary-frame grid, for frame-equivalence checks.
* :class:`SingleConverterLC` - LC filter with cascaded voltage/current PI
  loops and power-form HAC, islanded or grid-connected.
* :class:`TwoConverterLC` - two such converters sharing a resistive load.

Converter controllers work in their own frame, rotated by ``delta`` from the
network frame in which the plant is integrated.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy.optimize import root

from . import analysis
from .analysis import Equilibrium, LyapCoeffs, StiffGridSetup
from .control import (CascadeGains, DcPidGains, HacGains, Lpf1, hac_frequency, integrate_clamped,
                      lpf_step, pi_ac_voltage, pi_current)
from .engine import ClosedLoop, Event
from .errors import ConfigError, NoConvergence
from .frames import K_POWER, Dq, PerUnitBase, balanced, rotate
from .plant import Line, PlantParams, rhs_abc_L, rhs_dq_LC, abc_state_to_dq

COLUMNS = ("t", "delta", "zeta", "v_dc", "i_d", "i_q", "omega", "p", "q", "V")


def _pu_bases(base: PerUnitBase | None, suffix: str = "") -> dict[str, float]:
    if base is None:
        return {}
    out = {"omega": base.omega_b, "p": base.p_b, "q": base.p_b, "i_d": base.i_base, "i_q": base.i_base}
    return {k + suffix: v for k, v in out.items()}


def _set_path(obj, path: str, value: float):
    """Return ``obj`` with the dotted attribute ``path`` replaced (frozen dataclasses)."""
    head, _, rest = path.partition(".")
    if not hasattr(obj, head):
        raise ConfigError(f"unknown gain path {path!r}", key=path)
    if rest:
        return replace(obj, **{head: _set_path(getattr(obj, head), rest, value)})
    return replace(obj, **{head: value})


class StiffGridHac(ClosedLoop):
    """L-filter converter on a stiff grid under the angle form of HAC.

    The grid frame rotates at the grid frequency; a grid frequency event
    changes it together with the inductive coupling.
    """

    columns = COLUMNS

    def __init__(self, setup: StiffGridSetup, x0=None, base: PerUnitBase | None = None):
        self.setup = setup
        self.eq = analysis.newton_equilibrium(setup)
        try:
            self.coeffs = LyapCoeffs.for_setup(setup)
        except ArithmeticError:
            self.coeffs = None
        self._x0 = list(self.eq.x if x0 is None else x0)
        self.pu_bases = _pu_bases(base)

    def initial_state(self):
        return list(self._x0), []

    def rhs(self, t, x):
        """Continuous closed-loop field (batched states allowed)."""
        return analysis.closed_loop_rhs(x, self.setup)

    def measure(self, t, x):
        return x

    def control(self, t, xc, meas):
        return (float(analysis.hac_frequency_array(self.setup, meas[2], meas[0])),)

    def control_rates(self, t, xc, meas, u):
        return []

    def plant_rhs(self, t, x, u):
        s = self.setup
        i_dc = -s.dc.kappa_p * (x[2] - s.plant.v_dc_r) - s.dc.kappa_i * x[1]
        from .plant import rhs_dq_L
        return list(rhs_dq_L(x, s.mu, i_dc, s.plant, u[0], s.grid_frequency, k_s=s.k_s,
                             kappa_d=s.dc.kappa_d))

    def record(self, t, x, xc, meas, u):
        v0 = self.setup.plant.v0
        p = K_POWER * v0 * x[3]
        q = -K_POWER * v0 * x[4]
        V = float(analysis.lyapunov_value(x, self.eq, self.coeffs)) if self.coeffs else math.nan
        return [t, *x, u[0], p, q, V]

    def apply_event(self, ev: Event):
        s = self.setup
        if ev.action == "set_grid_freq":
            self.setup = replace(s, omega_g=ev.value)
        elif ev.action == "set_v_dc_ref":
            self.setup = replace(s, plant=replace(s.plant, v_dc_r=ev.value),
                                 hac=replace(s.hac, v_dc_r=ev.value))
        elif ev.action == "set_gain":
            self.setup = _set_path(s, ev.target or "", ev.value)
        else:
            super().apply_event(ev)


class AbcStiffGridHac(ClosedLoop):
    """Three-phase counterpart of :class:`StiffGridHac`.

    State ``(theta, zeta, v_dc, i_a, i_b, i_c, theta_g)`` with stationary-frame
    phase currents. The relative angle is ``theta - theta_g``.
    """

    columns = ("t", "delta", "zeta", "v_dc", "i_d", "i_q", "i_a", "i_b", "i_c")

    def __init__(self, setup: StiffGridSetup, x0_dq):
        self.setup = setup
        delta, zeta, v_dc, i_d, i_q = x0_dq
        from .frames import dq_to_abc
        i_abc = dq_to_abc(Dq(i_d, i_q), 0.0)
        self._x0 = [delta, zeta, v_dc, *i_abc, 0.0]

    def initial_state(self):
        return list(self._x0), []

    def measure(self, t, x):
        return x

    def control(self, t, xc, meas):
        return (float(analysis.hac_frequency_array(self.setup, meas[2], meas[0] - meas[6])),)

    def control_rates(self, t, xc, meas, u):
        return []

    def plant_rhs(self, t, x, u):
        s = self.setup
        theta, zeta, v_dc = x[0], x[1], x[2]
        m = balanced(s.mu, theta)
        i_dc = -s.dc.kappa_p * (v_dc - s.plant.v_dc_r) - s.dc.kappa_i * zeta
        d_vdc, d_i = rhs_abc_L(v_dc, x[3:6], m, i_dc, s.plant, x[6], kappa_d=s.dc.kappa_d)
        return [u[0], v_dc - s.plant.v_dc_r, d_vdc, *d_i, s.grid_frequency]

    def record(self, t, x, xc, meas, u):
        i_d, i_q = abc_state_to_dq(x[3:6], x[6])
        return [t, x[0] - x[6], x[1], x[2], i_d, i_q, *x[3:6]]


class ConverterController:
    """Power-form HAC with cascaded voltage and current PI loops.

    Controller state ``(p_f, xv_d, xv_q, xi_d, xi_q)``: filtered active power
    and the four PI integrators, all in the converter frame.
    """

    def __init__(self, plant: PlantParams, hac: HacGains, cascade: CascadeGains,
                 dc: DcPidGains, lpf_cutoff: float, v_r: float):
        if hac.variant == "exact":
            raise ConfigError("the LC cascade needs a power-based HAC variant", key="variant")
        if hac.variant == "energy" and hac.energy_ac == "exact":
            raise ConfigError("the LC cascade needs the power ac term", key="energy_ac")
        self.plant = plant
        self.hac = hac
        self.cascade = cascade
        self.dc = dc
        self.lpf_cutoff = lpf_cutoff
        self.v_r = v_r

    def measure(self, x, i_od, i_oq):
        """Converter-frame measurements of one converter's plant state.

        ``(i_od, i_oq)`` is its output current in the network frame.
        """
        delta = x[0]
        c = math.cos(delta)
        s = math.sin(delta)
        # network -> converter frame: rotation by -delta
        v_cd, v_cq = c * x[5] + s * x[6], -s * x[5] + c * x[6]
        i_fd, i_fq = c * x[3] + s * x[4], -s * x[3] + c * x[4]
        i_d, i_q = c * i_od + s * i_oq, -s * i_od + c * i_oq
        p = K_POWER * (v_cd * i_d + v_cq * i_q)
        q = K_POWER * (v_cq * i_d - v_cd * i_q)
        return (x[2], v_cd, v_cq, i_fd, i_fq, i_d, i_q, p, q, c, s)

    def control(self, xc, meas):
        v_dc, v_cd, v_cq, i_fd, i_fq, i_d, i_q = meas[:7]
        cas = self.cascade
        omega = hac_frequency(self.hac, v_dc, p_filt=xc[0])
        i_ref, dxv = pi_ac_voltage(Dq(v_cd, v_cq), Dq(self.v_r, 0.0), Dq(xc[1], xc[2]), cas,
                                   omega, self.plant.C_f, Dq(i_d, i_q))
        v_ref, dxi = pi_current(Dq(i_fd, i_fq), i_ref, Dq(xc[3], xc[4]), cas, omega,
                                self.plant.L, Dq(v_cd, v_cq))
        c, s = meas[9], meas[10]
        m_d = v_ref[0] / v_dc
        m_q = v_ref[1] / v_dc
        # back to the network frame
        return (omega, c * m_d - s * m_q, s * m_d + c * m_q, dxv[0], dxv[1], dxi[0], dxi[1])

    def rates(self, xc, meas, u):
        return [self.lpf_cutoff * (meas[7] - xc[0]), u[3], u[4], u[5], u[6]]

    def update(self, xc, meas, u, h):
        cas = self.cascade
        p_f = lpf_step(Lpf1(xc[0], self.lpf_cutoff), meas[7], h).state
        return [p_f,
                integrate_clamped(xc[1], u[3], h, cas.xv_limit),
                integrate_clamped(xc[2], u[4], h, cas.xv_limit),
                integrate_clamped(xc[3], u[5], h, cas.xi_limit),
                integrate_clamped(xc[4], u[6], h, cas.xi_limit)]

    def i_dc(self, x):
        return -self.dc.kappa_p * (x[2] - self.plant.v_dc_r) - self.dc.kappa_i * x[1]

    def with_event(self, ev: Event) -> "ConverterController":
        if ev.action == "set_p_ref":
            return self._replace(hac=replace(self.hac, p_r=ev.value))
        if ev.action == "set_v_dc_ref":
            return self._replace(hac=replace(self.hac, v_dc_r=ev.value),
                                 plant=replace(self.plant, v_dc_r=ev.value))
        if ev.action == "set_gain":
            path = ev.target or ""
            head, _, rest = path.partition(".")
            if head not in ("hac", "cascade", "dc", "plant") or not rest:
                raise ConfigError(f"unknown gain path {path!r}", key=path)
            return self._replace(**{head: _set_path(getattr(self, head), rest, ev.value)})
        raise ConfigError(f"unsupported converter event {ev.action!r}", key=ev.action)

    def _replace(self, **kw) -> "ConverterController":
        args = dict(plant=self.plant, hac=self.hac, cascade=self.cascade, dc=self.dc,
                    lpf_cutoff=self.lpf_cutoff, v_r=self.v_r)
        args.update(kw)
        return ConverterController(**args)


def _conv_initial(ctrl: ConverterController, v_c: complex, i_o: complex, omega: float):
    """Steady-state guess of one converter with PCC phasor ``v_c`` and output current ``i_o``.

    Phasors are in the network frame; the converter angle is that of ``v_c``.
    """
    p = ctrl.plant
    i_f = i_o + 1j * omega * p.C_f * v_c
    delta = math.atan2(v_c.imag, v_c.real)
    rot = complex(math.cos(-delta), math.sin(-delta))
    i_fc = i_f * rot
    power = K_POWER * (v_c * i_o.conjugate()).real
    i_s = K_POWER * ((v_c + (p.R + 1j * omega * p.L) * i_f) * i_f.conjugate()).real / p.v_dc_r
    zeta = (-p.G_dc * p.v_dc_r - i_s) / ctrl.dc.kappa_i if ctrl.dc.kappa_i > 0 else 0.0
    cas = ctrl.cascade
    v_cc = v_c * rot
    i_oc = i_o * rot
    # integrators carry whatever the feedforward paths do not
    ff_i = i_oc + 1j * omega * p.C_f * v_cc if cas.ff_voltage else 0j
    xv = (i_fc - ff_i) / cas.ki_ac if cas.ki_ac > 0 else 0j
    v_sc = v_cc + (p.R + 1j * omega * p.L) * i_fc
    ff_v = (v_cc if cas.ff_pcc else 0j) + (1j * omega * p.L * i_fc if cas.ff_current else 0j)
    xi = (v_sc - ff_v) / cas.ki_cc if cas.ki_cc > 0 else 0j
    x = [delta, zeta, p.v_dc_r, i_f.real, i_f.imag, v_c.real, v_c.imag]
    xc = [power, xv.real, xv.imag, xi.real, xi.imag]
    return x, xc


class SingleConverterLC(ClosedLoop):
    """LC-filtered converter with the cascaded controller.

    Parameters
    ----------
    plant, hac, cascade, dc :
        Electrical parameters and controller gains.
    grid : bool
        Grid-connected through ``L_g``/``R_g`` when true, islanded otherwise.
    r_load : float
        Resistive load at the filter capacitor (``inf`` for none).
    lpf_cutoff : float
        Power filter cutoff (rad/s).
    v_r : float, optional
        Capacitor voltage amplitude reference; defaults to ``plant.v0``.
    """

    columns = COLUMNS

    def __init__(self, plant: PlantParams, hac: HacGains, cascade: CascadeGains, dc: DcPidGains,
                 grid: bool = True, r_load: float = math.inf, lpf_cutoff: float = 2 * math.pi * 10,
                 v_r: float | None = None, base: PerUnitBase | None = None):
        self.ctrl = ConverterController(plant, hac, cascade, dc, lpf_cutoff,
                                        plant.v0 if v_r is None else v_r)
        self.grid = grid
        self.r_load = r_load
        if not grid and not r_load < math.inf:
            raise ConfigError("islanded operation needs a finite load", key="r_load")
        self.omega_grid = plant.omega0
        self.omega_frame = plant.omega0
        self.pu_bases = _pu_bases(base)
        self._init: tuple[list[float], list[float]] | None = None

    @property
    def plant(self) -> PlantParams:
        return self.ctrl.plant

    def _output_current(self, x):
        i_od, i_oq = (x[7], x[8]) if self.grid else (0.0, 0.0)
        if self.r_load < math.inf:
            i_od += x[5] / self.r_load
            i_oq += x[6] / self.r_load
        return i_od, i_oq

    def measure(self, t, x):
        return self.ctrl.measure(x, *self._output_current(x))

    def control(self, t, xc, meas):
        return self.ctrl.control(xc, meas)

    def control_rates(self, t, xc, meas, u):
        return self.ctrl.rates(xc, meas, u)

    def control_update(self, t, xc, meas, u, period):
        return self.ctrl.update(xc, meas, u, period)

    def plant_rhs(self, t, x, u):
        return rhs_dq_LC(x, u[0], u[1], u[2], self.ctrl.i_dc(x), self.plant, self.omega_frame,
                         self.plant.v0, 0.0, grid=self.grid, r_load=self.r_load,
                         kappa_d=self.ctrl.dc.kappa_d)

    def record(self, t, x, xc, meas, u):
        return [t, x[0], x[1], x[2], meas[3], meas[4], u[0], meas[7], meas[8], math.nan]

    def apply_event(self, ev: Event):
        if ev.action == "set_load":
            if not ev.value > 0:
                raise ConfigError("load resistance must be > 0", key="set_load")
            self.r_load = ev.value
        elif ev.action == "set_grid_freq":
            if not self.grid:
                raise ConfigError("grid frequency event in islanded operation", key="set_grid_freq")
            self.omega_grid = ev.value
            self.omega_frame = ev.value
        else:
            self.ctrl = self.ctrl.with_event(ev)

    # --- initialization -------------------------------------------------

    def _guess(self, omega):
        p = self.plant
        v_r = self.ctrl.v_r
        if self.grid:
            z = complex(p.R_g, omega * p.L_g)
            i_g = (v_r - p.v0) / z if self.r_load == math.inf else 0j
            # rotate so that the grid voltage phasor is real: solve for the PCC angle
            v_c = v_r
            # angle of the PCC voltage that injects p_r into the grid branch
            best = None
            for k in range(721):
                ang = -math.pi / 2 + k * math.pi / 720
                vc = v_r * complex(math.cos(ang), math.sin(ang))
                ig = (vc - p.v0) / z
                pw = K_POWER * (vc * ig.conjugate()).real
                if self.r_load < math.inf:
                    pw += K_POWER * v_r**2 / self.r_load
                err = abs(pw - self.ctrl.hac.p_r)
                if best is None or err < best[0]:
                    best = (err, vc, ig)
            _, v_c, i_g = best
            i_o = i_g + (v_c / self.r_load if self.r_load < math.inf else 0j)
            x, xc = _conv_initial(self.ctrl, v_c, i_o, omega)
            return x + [i_g.real, i_g.imag], xc
        v_c = complex(v_r, 0.0)
        x, xc = _conv_initial(self.ctrl, v_c, v_c / self.r_load, omega)
        return x + [0.0, 0.0], xc

    def initial_state(self):
        if self._init is None:
            self._init = self.steady_state()
        return list(self._init[0]), list(self._init[1])

    def steady_state(self, tol: float = 1e-10):
        """Stationary plant and controller states for the current configuration.

        Grid-connected runs solve in the grid frame. Islanded runs have a free
        rotation, so the angle is pinned to zero and the common frequency is
        solved for instead; the frame then rotates at that frequency.
        """
        omega_f0 = self.omega_frame
        x, xc = self._guess(omega_f0)
        nx = len(x)
        free = not self.grid
        scale = _state_scale(self.plant, nx, len(xc))

        def unpack(y):
            z = list(y * scale)
            if free:
                w = z.pop(0) + omega_f0
                z.insert(0, 0.0)
                return z, w
            return z, omega_f0

        def residual(y):
            z, w = unpack(y)
            self.omega_frame = w
            xp, xcp = z[:nx], z[nx:]
            meas = self.measure(0.0, xp)
            u = self.control(0.0, xcp, meas)
            f = self.plant_rhs(0.0, xp, u) + self.control_rates(0.0, xcp, meas, u)
            if not self.grid:
                f[7] = xp[7]
                f[8] = xp[8]
            return np.array(f) / _rate_scale(self.plant, nx, len(xc))

        z0 = np.array(x + xc, dtype=float)
        if free:
            z0[0] = 0.0  # placeholder for the frequency offset
        y0 = z0 / scale
        try:
            sol = root(residual, y0, method="hybr", options={"xtol": 1e-13})
            if not sol.success and np.max(np.abs(sol.fun)) > tol:
                raise NoConvergence(f"steady-state solve failed: {sol.message}")
            z, w = unpack(sol.x)
        finally:
            self.omega_frame = omega_f0
        if free:
            self.omega_frame = w
        return z[:nx], z[nx:]


def _state_scale(p: PlantParams, nx: int, nc: int) -> np.ndarray:
    i_b = 1000.0
    per_conv = [1.0, 1.0, p.v_dc_r, i_b, i_b, p.v0, p.v0, i_b, i_b]
    ctrl = [1e5, 1.0, 1.0, 1.0, 1.0]
    n_conv = nx // 9
    return np.array(per_conv * n_conv + ctrl * n_conv)


def _rate_scale(p: PlantParams, nx: int, nc: int) -> np.ndarray:
    return 1e3 * _state_scale(p, nx, nc)


class TwoConverterLC(ClosedLoop):
    """Two LC converters with identical hardware feeding a resistive load bus.

    Plant state: both 9-element converter states; controller state: both
    5-element controller states. Log columns are the single-converter set
    suffixed with ``_1`` and ``_2``.
    """

    def __init__(self, plant: PlantParams, hacs: tuple[HacGains, HacGains], cascade: CascadeGains,
                 dc: DcPidGains, lines: tuple[Line, Line], r_load: float,
                 lpf_cutoff: float = 2 * math.pi * 10, base: PerUnitBase | None = None):
        if not r_load > 0:
            raise ConfigError("load resistance must be > 0", key="r_load")
        self.ctrls = [ConverterController(plant, h, cascade, dc, lpf_cutoff, plant.v0) for h in hacs]
        self.lines = lines
        self.r_load = r_load
        self.omega_frame = plant.omega0
        self.columns = ["t"] + [f"{c}_{k}" for k in (1, 2) for c in COLUMNS[1:]]
        self.pu_bases = {**_pu_bases(base, "_1"), **_pu_bases(base, "_2")}
        self._init = None

    @property
    def plant(self) -> PlantParams:
        return self.ctrls[0].plant

    def measure(self, t, x):
        x1, x2 = x[:9], x[9:]
        return (self.ctrls[0].measure(x1, x1[7], x1[8]), self.ctrls[1].measure(x2, x2[7], x2[8]))

    def control(self, t, xc, meas):
        return (self.ctrls[0].control(xc[:5], meas[0]), self.ctrls[1].control(xc[5:], meas[1]))

    def control_rates(self, t, xc, meas, u):
        return self.ctrls[0].rates(xc[:5], meas[0], u[0]) + self.ctrls[1].rates(xc[5:], meas[1], u[1])

    def control_update(self, t, xc, meas, u, period):
        return (self.ctrls[0].update(xc[:5], meas[0], u[0], period)
                + self.ctrls[1].update(xc[5:], meas[1], u[1], period))

    def plant_rhs(self, t, x, u):
        x1, x2 = x[:9], x[9:]
        v_md = self.r_load * (x1[7] + x2[7])
        v_mq = self.r_load * (x1[8] + x2[8])
        out = []
        for xk, uk, line, ctrl in zip((x1, x2), u, self.lines, self.ctrls):
            out += rhs_dq_LC(xk, uk[0], uk[1], uk[2], ctrl.i_dc(xk), ctrl.plant, self.omega_frame,
                             v_md, v_mq, grid=True, l_line=line.L, r_line=line.R,
                             kappa_d=ctrl.dc.kappa_d)
        return out

    def record(self, t, x, xc, meas, u):
        row = [t]
        for k in range(2):
            xk, mk, uk = x[9 * k:9 * k + 9], meas[k], u[k]
            row += [xk[0], xk[1], xk[2], mk[3], mk[4], uk[0], mk[7], mk[8], math.nan]
        return row

    def apply_event(self, ev: Event):
        if ev.action == "set_load":
            if not ev.value > 0:
                raise ConfigError("load resistance must be > 0", key="set_load")
            self.r_load = ev.value
        elif ev.action in ("set_p_ref", "set_v_dc_ref", "set_gain"):
            idx = {None: (0, 1), "1": (0,), "2": (1,), "both": (0, 1)}.get(ev.target)
            if ev.action == "set_gain":
                # target "1:hac.kappa_dc" or plain "hac.kappa_dc" for both
                conv, sep, path = (ev.target or "").partition(":")
                idx = {"1": (0,), "2": (1,)}.get(conv, (0, 1)) if sep else (0, 1)
                ev = Event(ev.t, ev.action, ev.value, path if sep else ev.target)
            if idx is None:
                raise ConfigError(f"unknown converter target {ev.target!r}", key="target")
            for k in idx:
                self.ctrls[k] = self.ctrls[k].with_event(ev)
        else:
            super().apply_event(ev)

    def initial_state(self):
        if self._init is None:
            self._init = self.steady_state()
        return list(self._init[0]), list(self._init[1])

    def steady_state(self, tol: float = 1e-10):
        """Synchronous operating point; converter 1 angle pinned, common frequency solved."""
        p = self.plant
        omega_f0 = self.omega_frame
        z_l = complex(self.lines[0].R, omega_f0 * self.lines[0].L)
        i_l = p.v0 / (2 * self.r_load + z_l)
        v_m = 2 * self.r_load * i_l
        x, xc = [], []
        for ctrl in self.ctrls:
            xk, xck = _conv_initial(ctrl, complex(p.v0, 0.0), i_l, omega_f0)
            x += xk + [i_l.real, i_l.imag]
            xc += xck
        del v_m
        nx = len(x)
        scale = _state_scale(p, nx, len(xc))

        def unpack(y):
            z = list(y * scale)
            w = z[0] + omega_f0
            z[0] = 0.0
            return z, w

        def residual(y):
            z, w = unpack(y)
            self.omega_frame = w
            xp, xcp = z[:nx], z[nx:]
            meas = self.measure(0.0, xp)
            u = self.control(0.0, xcp, meas)
            f = self.plant_rhs(0.0, xp, u) + self.control_rates(0.0, xcp, meas, u)
            return np.array(f) / _rate_scale(p, nx, len(xc))

        z0 = np.array(x + xc, dtype=float)
        z0[0] = 0.0
        try:
            sol = root(residual, z0 / scale, method="hybr", options={"xtol": 1e-13})
            if not sol.success and np.max(np.abs(sol.fun)) > tol:
                raise NoConvergence(f"steady-state solve failed: {sol.message}")
            z, w = unpack(sol.x)
        finally:
            self.omega_frame = omega_f0
        self.omega_frame = w
        return z[:nx], z[nx:]
