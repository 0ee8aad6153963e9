"""
Averaged electrical models of a two-level dc-ac converter.

All dq models are written in a frame rotating counter-clockwise at the frame
frequency ``omega_f`` using the amplitude-invariant transform of
:mod:`hacsim.frames`. Three configurations are covered:

* L filter to a stiff (or merged weak) grid, state ``(delta, zeta, v_dc, i_d, i_q)``;
* LC filter with an optional R-L grid branch and an optional resistive load at
  the filter capacitor (the point of common coupling);
* two LC-filtered converters joined by R-L lines at a resistive load bus.

The dc-source PI controller runs on the plant side (its integrator ``zeta`` is a
plant state) because the source is part of the simulated hardware.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NonPhysicalState
from .frames import K_POWER, TWO_PI, ThreePhase, abc_to_dq, balanced


@dataclass(frozen=True)
class PlantParams:
    """Electrical constants of converter, filter and grid (SI units).

    Defaults reproduce the baseline hardware-in-the-loop parameter table. The
    filter series resistance ``R`` is not part of that table; 4.5 mOhm gives an
    X/R ratio of 10 at 60 Hz for the 0.12 mH filter inductance.
    """

    C_dc: float = 0.01
    G_dc: float = 0.01
    L: float = 0.12e-3
    R: float = 4.5e-3
    C_f: float = 0.13e-3
    L_g: float = 0.56e-3
    R_g: float = 0.064
    omega0: float = TWO_PI * 60.0
    v0: float = 326.59
    v_dc_r: float = 3 * 326.59

    def __post_init__(self):
        positive = ("C_dc", "L", "R", "omega0", "v0", "v_dc_r")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("G_dc", "L_g", "R_g", "C_f"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    def merged(self) -> "PlantParams":
        """Series filter and grid impedances lumped into one R-L branch."""
        return replace(self, L=self.L + self.L_g, R=self.R + self.R_g, L_g=0.0, R_g=0.0)

    @property
    def r_load_unit_power(self) -> float:
        """Resistance that absorbs one watt at rated phase-peak voltage."""
        return K_POWER * self.v0**2


class EnergyReport(NamedTuple):
    E_p: float
    dE_p: float
    p_dc: float
    p_ac: float
    loss: float


def averaged_switch(m: ThreePhase, i: ThreePhase, v_dc: float) -> tuple[float, ThreePhase]:
    """Lossless averaged switch: ``i_s = m^T i`` and ``v_s = v_dc m``."""
    i_s = m[0] * i[0] + m[1] * i[1] + m[2] * i[2]
    v_s = ThreePhase(v_dc * m[0], v_dc * m[1], v_dc * m[2])
    return i_s, v_s


def _check_dc(v_dc):
    if np.any(np.asarray(v_dc) <= 0.0):
        raise NonPhysicalState(f"dc-link voltage collapsed (v_dc={np.min(v_dc):.6g} V)")


def rhs_dq_L(x: Sequence, mu, i_dc, p: PlantParams, omega_cmd, omega_g,
             v_gd: float | None = None, k_s: float = K_POWER, kappa_d: float = 0.0):
    """Time derivative of the L-filter converter state in the grid frame.

    Parameters
    ----------
    x : sequence
        ``(delta, zeta, v_dc, i_d, i_q)``; entries may be numpy arrays to
        evaluate a batch of states at once.
    mu, i_dc :
        Modulation magnitude and dc-source current (PI part).
    omega_cmd, omega_g : float
        Converter and grid angular frequencies (rad/s).
    v_gd : float, optional
        Grid d-axis voltage, defaults to ``p.v0``.
    k_s : float
        Power factor of the dq frame (3/2 amplitude invariant, 1 for the
        power-invariant textbook form).
    kappa_d : float
        Derivative gain of the dc source; the algebraic loop is resolved by
        adding it to the dc capacitance.

    Returns
    -------
    tuple
        ``(d delta, d zeta, d v_dc, d i_d, d i_q)``.
    """
    delta, zeta, v_dc, i_d, i_q = x
    _check_dc(v_dc)
    vg = p.v0 if v_gd is None else v_gd
    c = np.cos(delta)
    s = np.sin(delta)
    d_delta = omega_cmd - omega_g
    if isinstance(delta, np.ndarray):
        d_delta = np.broadcast_to(d_delta, delta.shape).copy()
    d_zeta = v_dc - p.v_dc_r
    i_s = k_s * mu * (i_d * c + i_q * s)
    d_vdc = (i_dc - p.G_dc * v_dc - i_s) / (p.C_dc + kappa_d)
    wl = omega_g * p.L
    d_id = (mu * v_dc * c - p.R * i_d + wl * i_q - vg) / p.L
    d_iq = (mu * v_dc * s - p.R * i_q - wl * i_d) / p.L
    return d_delta, d_zeta, d_vdc, d_id, d_iq


def rhs_abc_L(v_dc: float, i_abc: Sequence[float], m: ThreePhase, i_dc: float,
              p: PlantParams, theta_g: float, kappa_d: float = 0.0):
    """Three-phase counterpart of :func:`rhs_dq_L` (dc voltage and phase currents).

    The grid is a balanced positive-sequence source of amplitude ``p.v0`` at
    angle ``theta_g``.
    """
    _check_dc(v_dc)
    i_s, v_s = averaged_switch(m, i_abc, v_dc)
    v_g = balanced(p.v0, theta_g)
    d_vdc = (i_dc - p.G_dc * v_dc - i_s) / (p.C_dc + kappa_d)
    d_i = tuple((v_s[k] - p.R * i_abc[k] - v_g[k]) / p.L for k in range(3))
    return d_vdc, d_i


def rhs_dq_LC(x: Sequence[float], omega_cmd: float, m_d: float, m_q: float, i_dc: float,
              p: PlantParams, omega_f: float, v_gd: float = 0.0, v_gq: float = 0.0,
              grid: bool = True, r_load: float = math.inf,
              l_line: float | None = None, r_line: float | None = None,
              kappa_d: float = 0.0) -> list[float]:
    """Time derivative of the LC-filter converter state.

    ``x = (delta, zeta, v_dc, i_fd, i_fq, v_cd, v_cq, i_gd, i_gq)`` in a frame
    rotating at ``omega_f``; ``(m_d, m_q)`` is the modulation vector expressed
    in the same frame. The grid-side branch (``l_line``/``r_line``, defaulting
    to the grid impedance) connects the capacitor to the source ``v_g``; with
    ``grid=False`` the branch is open and its current stays frozen.
    """
    delta, zeta, v_dc, i_fd, i_fq, v_cd, v_cq, i_gd, i_gq = x
    if v_dc <= 0.0:
        raise NonPhysicalState(f"dc-link voltage collapsed (v_dc={v_dc:.6g} V)")
    i_s = K_POWER * (m_d * i_fd + m_q * i_fq)
    d_vdc = (i_dc - p.G_dc * v_dc - i_s) / (p.C_dc + kappa_d)

    wl = omega_f * p.L
    d_ifd = (v_dc * m_d - p.R * i_fd - v_cd + wl * i_fq) / p.L
    d_ifq = (v_dc * m_q - p.R * i_fq - v_cq - wl * i_fd) / p.L

    i_od = i_gd
    i_oq = i_gq
    if r_load != math.inf:
        i_od += v_cd / r_load
        i_oq += v_cq / r_load
    wc = omega_f * p.C_f
    d_vcd = (i_fd - i_od + wc * v_cq) / p.C_f
    d_vcq = (i_fq - i_oq - wc * v_cd) / p.C_f

    if grid:
        lg = p.L_g if l_line is None else l_line
        rg = p.R_g if r_line is None else r_line
        wlg = omega_f * lg
        d_igd = (v_cd - rg * i_gd - v_gd + wlg * i_gq) / lg
        d_igq = (v_cq - rg * i_gq - v_gq - wlg * i_gd) / lg
    else:
        d_igd = d_igq = 0.0
    return [omega_cmd - omega_f, v_dc - p.v_dc_r, d_vdc, d_ifd, d_ifq, d_vcd, d_vcq, d_igd, d_igq]


@dataclass(frozen=True)
class Line:
    R: float
    L: float


def load_bus_voltage(i_l1: tuple[float, float], i_l2: tuple[float, float],
                     r_load: float) -> tuple[float, float]:
    """Voltage of the resistive load bus fed by two line currents."""
    return r_load * (i_l1[0] + i_l2[0]), r_load * (i_l1[1] + i_l2[1])


def rhs_two_converter(x1: Sequence[float], x2: Sequence[float], u1: Sequence[float],
                      u2: Sequence[float], lines: tuple[Line, Line], r_load: float,
                      params: tuple[PlantParams, PlantParams], omega_f: float,
                      kappa_d: tuple[float, float] = (0.0, 0.0)) -> tuple[list[float], list[float]]:
    """Two LC converters feeding a resistive load through R-L lines.

    Each state follows :func:`rhs_dq_LC` with the grid branch replaced by the
    converter's line; ``u = (omega_cmd, m_d, m_q, i_dc)`` in the common frame
    rotating at ``omega_f``.
    """
    if not r_load > 0:
        raise ValueError("load resistance must be > 0")
    v_m = load_bus_voltage((x1[7], x1[8]), (x2[7], x2[8]), r_load)
    out = []
    for x, u, line, p, kd in zip((x1, x2), (u1, u2), lines, params, kappa_d):
        out.append(rhs_dq_LC(x, u[0], u[1], u[2], u[3], p, omega_f, v_m[0], v_m[1],
                             grid=True, l_line=line.L, r_line=line.R, kappa_d=kd))
    return out[0], out[1]


def pcc_power(v, i) -> tuple[float, float]:
    """Active and reactive power of amplitude-invariant dq voltage and current."""
    p = K_POWER * (v[0] * i[0] + v[1] * i[1])
    q = K_POWER * (v[1] * i[0] - v[0] * i[1])
    return p, q


def energy_report(x: Sequence[float], i_dc: float, mu: float, p: PlantParams,
                  k_s: float = K_POWER) -> EnergyReport:
    """dc-link energy bookkeeping for the L-filter state ``x``.

    ``dE_p`` is evaluated through the dc-link voltage derivative so that the
    balance ``dE_p = p_dc - loss - p_ac`` is a check on the model, not a
    definition.
    """
    delta, _, v_dc, i_d, i_q = x
    i_s = k_s * mu * (i_d * math.cos(delta) + i_q * math.sin(delta))
    d_vdc = (i_dc - p.G_dc * v_dc - i_s) / p.C_dc
    return EnergyReport(
        E_p=0.5 * p.C_dc * v_dc**2,
        dE_p=p.C_dc * v_dc * d_vdc,
        p_dc=v_dc * i_dc,
        p_ac=v_dc * i_s,
        loss=p.G_dc * v_dc**2,
    )


def lc_stored_energy(x: Sequence[float], p: PlantParams, l_line: float | None = None) -> float:
    """Total energy in dc link, filter and grid-branch inductance of an LC state."""
    _, _, v_dc, i_fd, i_fq, v_cd, v_cq, i_gd, i_gq = x
    lg = p.L_g if l_line is None else l_line
    ac = 0.5 * p.L * (i_fd**2 + i_fq**2) + 0.5 * p.C_f * (v_cd**2 + v_cq**2) \
        + 0.5 * lg * (i_gd**2 + i_gq**2)
    return 0.5 * p.C_dc * v_dc**2 + K_POWER * ac


def abc_state_to_dq(i_abc: Sequence[float], theta_g: float) -> tuple[float, float]:
    """Currents of the three-phase model expressed in the grid frame."""
    return tuple(abc_to_dq(ThreePhase(*i_abc), theta_g))
