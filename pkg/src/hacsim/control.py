"""
Controller laws: dc-source PID, hybrid angle control (HAC) and its variants,
modulation magnitude, cascaded PI voltage/current loops and measurement filters.

Every law is a pure function of (measurements, controller state, gains).
Controller states are plain floats advanced by the caller, either continuously
(through the returned derivatives) or by explicit discrete steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DegenerateGridVoltage, ModulationOverflow
from .frames import K_POWER, TWO_PI, Dq, ThreePhase, abc_to_alphabeta

VARIANTS = ("exact", "power", "arctan", "energy")


@dataclass(frozen=True)
class HacGains:
    """Gains and references of the hybrid angle control.

    Parameters
    ----------
    kappa_dc : float
        dc matching gain (rad/s per V).
    kappa_ac : float
        ac synchronization gain of the angle form (rad/s).
    kappa_ac_bar : float
        ac gain of the power form (rad/s per W).
    delta_r, p_r, v_dc_r, omega0 : float
        Angle (rad), power (W), dc voltage (V) and frequency (rad/s) references.
    variant : str
        One of ``exact``, ``power``, ``arctan``, ``energy``.
    kappa_ac1, kappa_ac2 : float
        Saturation level (rad/s) and slope (1/W) of the arctan variant.
    kappa_dc_e : float, optional
        Gain on ``v_dc**2 - v_dc_r**2`` for the energy variant; defaults to
        ``kappa_dc / (2 v_dc_r)`` which matches the linear dc term to first order.
    energy_ac : str
        ac term used by the energy variant, ``exact`` (angle) or ``power``.
    """

    kappa_dc: float = 0.18
    kappa_ac: float = 0.0
    kappa_ac_bar: float = 18.84 / 500e3
    delta_r: float = 0.0
    p_r: float = 0.0
    v_dc_r: float = 3 * 326.59
    omega0: float = TWO_PI * 60.0
    variant: str = "power"
    kappa_ac1: float = 0.0
    kappa_ac2: float = 0.0
    kappa_dc_e: float | None = None
    energy_ac: str = "exact"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown HAC variant {self.variant!r}", key="variant")
        for name in ("kappa_dc", "kappa_ac", "kappa_ac_bar", "kappa_ac1", "kappa_ac2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0", key=name)
        if self.kappa_dc == 0 and self.ac_gain == 0:
            raise ConfigError("kappa_dc and the ac gain cannot both be zero", key="kappa_dc")

    @property
    def ac_gain(self) -> float:
        if self.variant == "exact":
            return self.kappa_ac
        if self.variant == "power":
            return self.kappa_ac_bar
        if self.variant == "arctan":
            return self.kappa_ac1 * self.kappa_ac2
        return self.kappa_ac if self.energy_ac == "exact" else self.kappa_ac_bar

    @property
    def dc_energy_gain(self) -> float:
        if self.kappa_dc_e is not None:
            return self.kappa_dc_e
        return self.kappa_dc / (2.0 * self.v_dc_r)


@dataclass(frozen=True)
class DcPidGains:
    kappa_p: float = 10.0
    kappa_i: float = 500.0
    kappa_d: float = 0.0

    def __post_init__(self):
        for name in ("kappa_p", "kappa_i", "kappa_d"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0", key=name)


# impedance base of the default rating (500 kVA, 326.59 V phase peak)
Z_BASE_DEFAULT = K_POWER * 326.59**2 / 500e3


@dataclass(frozen=True)
class CascadeGains:
    """PI gains of the ac-voltage (outer) and filter-current (inner) loops.

    The voltage gains are the tabulated per-unit values 0.1 and 20 converted
    to A/V and A/(V s) with the default impedance base. The current loop
    (0.5 ohm, 150 ohm/s) keeps cross-coupling decoupling but leaves out the
    capacitor-voltage feedforward (``ff_pcc``): fed straight through at a 5 kHz
    sampling rate that term excites the LCL resonance of the grid-connected
    filter. Integrators are clamped at ``xv_limit`` (V s) and ``xi_limit`` (A s).
    """

    kp_ac: float = 0.1 / Z_BASE_DEFAULT
    ki_ac: float = 20.0 / Z_BASE_DEFAULT
    kp_cc: float = 0.5
    ki_cc: float = 150.0
    ff_voltage: bool = True
    ff_current: bool = True
    ff_pcc: bool = False
    xv_limit: float = 100.0
    xi_limit: float = 20.0

    def __post_init__(self):
        for name in ("kp_ac", "ki_ac", "kp_cc", "ki_cc", "xv_limit", "xi_limit"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0", key=name)
        if self.kp_ac == 0 and self.ki_ac == 0:
            raise ConfigError("ac-voltage loop has zero gain", key="kp_ac")
        if self.kp_cc == 0 and self.ki_cc == 0:
            raise ConfigError("current loop has zero gain", key="kp_cc")


@dataclass(frozen=True)
class Lpf1:
    """First-order low-pass filter state with cutoff ``omega_c`` (rad/s)."""

    state: float
    omega_c: float

    def __post_init__(self):
        if not self.omega_c > 0:
            raise ConfigError("filter cutoff must be > 0", key="omega_c")


def lpf_step(f: Lpf1, u: float, h: float, method: str = "zoh") -> Lpf1:
    """Advance the filter by ``h`` seconds with the input held constant.

    ``method="zoh"`` is the exact discretization; ``"euler"`` is the forward
    Euler fallback, which is only stable for ``omega_c h < 2``.
    """
    if not h > 0:
        raise ConfigError("filter step must be > 0", key="h")
    if method == "zoh":
        gain = -math.expm1(-f.omega_c * h)
    elif method == "euler":
        if f.omega_c * h >= 2.0:
            raise ConfigError(f"omega_c*h = {f.omega_c * h:.3g} >= 2 is unstable with Euler",
                              key="omega_c")
        gain = f.omega_c * h
    else:
        raise ConfigError(f"unknown filter discretization {method!r}", key="method")
    return replace(f, state=f.state + gain * (u - f.state))


def lpf_derivative(f: Lpf1, u: float) -> float:
    return f.omega_c * (u - f.state)


def dc_source_pid(v_dc: float, v_dc_r: float, zeta: float, dv_dc: float, g: DcPidGains) -> float:
    """dc-source current; the source injects when the link voltage sags."""
    return -g.kappa_p * (v_dc - v_dc_r) - g.kappa_i * zeta - g.kappa_d * dv_dc


def hac_exact(v_dc, delta, g: HacGains):
    """Angle form of the HAC frequency law (works elementwise on arrays)."""
    return g.omega0 + g.kappa_dc * (v_dc - g.v_dc_r) - g.kappa_ac * np.sin(0.5 * (delta - g.delta_r))


def hac_power(v_dc: float, p_filt: float, g: HacGains) -> float:
    """Power form: angle error replaced by the filtered active-power error."""
    return g.omega0 + g.kappa_dc * (v_dc - g.v_dc_r) - g.kappa_ac_bar * (p_filt - g.p_r)


def hac_arctan(v_dc: float, p_filt: float, g: HacGains) -> float:
    return g.omega0 + g.kappa_dc * (v_dc - g.v_dc_r) \
        - g.kappa_ac1 * math.atan(g.kappa_ac2 * (p_filt - g.p_r))


def hac_energy(v_dc: float, g: HacGains, delta: float | None = None,
               p_filt: float | None = None) -> float:
    """dc term on the squared-voltage (stored energy) error; ac term per ``g.energy_ac``."""
    dc = g.dc_energy_gain * (v_dc * v_dc - g.v_dc_r * g.v_dc_r)
    if g.energy_ac == "exact":
        ac = g.kappa_ac * math.sin(0.5 * (delta - g.delta_r))
    else:
        ac = g.kappa_ac_bar * (p_filt - g.p_r)
    return g.omega0 + dc - ac


def hac_frequency(g: HacGains, v_dc: float, delta: float | None = None,
                  p_filt: float | None = None) -> float:
    """Dispatch on ``g.variant``."""
    if g.variant == "exact":
        return float(hac_exact(v_dc, delta, g))
    if g.variant == "power":
        return hac_power(v_dc, p_filt, g)
    if g.variant == "arctan":
        return hac_arctan(v_dc, p_filt, g)
    return hac_energy(v_dc, g, delta=delta, p_filt=p_filt)


class HalfAngleTracker:
    """Measurement-based evaluation of ``sin((delta - delta_r)/2)``.

    The relative angle is rebuilt from the unit phasors of the modulation
    signal and the grid voltage. ``sin(delta/2)`` and ``cos(delta/2)`` live on
    a double cover of the circle, so the sign pair is chosen at every call to
    stay continuous with the previous one; calls must therefore be made often
    enough that delta moves by less than pi between them.
    """

    def __init__(self, delta_r: float, v0: float, min_fraction: float = 0.01):
        self.sin_r = math.sin(0.5 * delta_r)
        self.cos_r = math.cos(0.5 * delta_r)
        self.v_min = min_fraction * v0
        self._half: tuple[float, float] | None = None

    def __call__(self, m_abc: ThreePhase, v_g_abc: ThreePhase) -> float:
        ma, mb = abc_to_alphabeta(m_abc)
        mag_m = math.hypot(ma, mb)
        ga, gb = abc_to_alphabeta(v_g_abc)
        mag_g = math.hypot(ga, gb)
        if mag_g < self.v_min:
            raise DegenerateGridVoltage(f"grid voltage magnitude {mag_g:.4g} V below threshold")
        if mag_m == 0.0:
            raise DegenerateGridVoltage("zero modulation signal carries no angle")
        cos_t, sin_t = ma / mag_m, mb / mag_m
        cos_g, sin_g = ga / mag_g, gb / mag_g
        cos_d = cos_t * cos_g + sin_t * sin_g
        sin_d = sin_t * cos_g - cos_t * sin_g
        s_h, c_h = _half_angle(sin_d, cos_d)
        if self._half is not None:
            ps, pc = self._half
            if s_h * ps + c_h * pc < 0.0:
                s_h, c_h = -s_h, -c_h
        self._half = (s_h, c_h)
        return s_h * self.cos_r - c_h * self.sin_r


def _half_angle(sin_d: float, cos_d: float) -> tuple[float, float]:
    """Principal half-angle pair (cos(delta/2) >= 0) without cancellation."""
    c_h = math.sqrt(max(0.0, 0.5 * (1.0 + cos_d)))
    s_h = math.copysign(math.sqrt(max(0.0, 0.5 * (1.0 - cos_d))), sin_d)
    # sin(delta) = 2 s_h c_h; recover the smaller factor from it
    if c_h >= abs(s_h):
        s_h = sin_d / (2.0 * c_h)
    else:
        c_h = abs(sin_d / (2.0 * s_h))
    return s_h, c_h


def hac_sync_term_from_measurements(tracker: HalfAngleTracker, m_abc: ThreePhase,
                                    v_g_abc: ThreePhase) -> float:
    return tracker(m_abc, v_g_abc)


def feedforward_mu(v_r: float, v_dc_r: float) -> float:
    """Constant modulation magnitude that maps the dc reference onto ``v_r``."""
    if not v_dc_r > 0:
        raise ConfigError("dc voltage reference must be > 0", key="v_dc_r")
    mu = v_r / v_dc_r
    if mu > 1.0:
        raise ModulationOverflow(f"modulation magnitude {mu:.4g} exceeds 1")
    if mu < 0.0:
        raise ConfigError("ac voltage reference must be >= 0", key="v_r")
    return mu


def delta_r_from_power(p_r: float, x_total: float, v_s: float, v_g: float,
                       k_s: float = K_POWER) -> float:
    """Small-angle map between power and relative angle, ``delta_r = alpha p_r``.

    ``x_total`` is the merged filter plus grid reactance (ohm).
    """
    return droop_alpha(x_total, v_s, v_g, k_s) * p_r


def droop_alpha(x_total: float, v_s: float, v_g: float, k_s: float = K_POWER) -> float:
    return x_total / (k_s * v_s * v_g)


def kappa_ac_from_droop(kappa_ac_bar: float, alpha: float) -> float:
    """Angle-form gain equivalent to a power droop gain, ``kappa_ac = 2 kappa_ac_bar / alpha``."""
    return 2.0 * kappa_ac_bar / alpha


def pi_ac_voltage(v_meas: Dq, v_ref: Dq, integ: Dq, gains: CascadeGains, omega: float,
                  c_f: float, i_out: Dq) -> tuple[Dq, Dq]:
    """Outer loop: capacitor-voltage PI plus output-current and capacitor feedforward.

    Returns the filter-current reference and the integrator derivative (zero
    along any axis whose integrator sits at its clamp and is pushed outward).
    """
    ed = v_ref[0] - v_meas[0]
    eq = v_ref[1] - v_meas[1]
    id_ref = gains.kp_ac * ed + gains.ki_ac * integ[0]
    iq_ref = gains.kp_ac * eq + gains.ki_ac * integ[1]
    if gains.ff_voltage:
        id_ref += i_out[0] - omega * c_f * v_meas[1]
        iq_ref += i_out[1] + omega * c_f * v_meas[0]
    lim = gains.xv_limit
    return Dq(id_ref, iq_ref), Dq(_clamped_rate(integ[0], ed, lim), _clamped_rate(integ[1], eq, lim))


def pi_current(i_meas: Dq, i_ref: Dq, integ: Dq, gains: CascadeGains, omega: float,
               l_f: float, v_pcc: Dq) -> tuple[Dq, Dq]:
    """Inner loop: filter-current PI plus optional decoupling and PCC-voltage feedforward."""
    ed = i_ref[0] - i_meas[0]
    eq = i_ref[1] - i_meas[1]
    vd = gains.kp_cc * ed + gains.ki_cc * integ[0]
    vq = gains.kp_cc * eq + gains.ki_cc * integ[1]
    if gains.ff_current:
        vd -= omega * l_f * i_meas[1]
        vq += omega * l_f * i_meas[0]
    if gains.ff_pcc:
        vd += v_pcc[0]
        vq += v_pcc[1]
    lim = gains.xi_limit
    return Dq(vd, vq), Dq(_clamped_rate(integ[0], ed, lim), _clamped_rate(integ[1], eq, lim))


def _clamped_rate(x: float, rate: float, limit: float) -> float:
    if (x >= limit and rate > 0.0) or (x <= -limit and rate < 0.0):
        return 0.0
    return rate


def integrate_clamped(x: float, rate: float, h: float, limit: float) -> float:
    """Forward-Euler integrator update with clamping anti-windup."""
    return min(limit, max(-limit, x + h * rate))
