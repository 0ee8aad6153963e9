"""
Coordinate transforms between abc, alpha-beta and dq, plus per-unit bases.

The Clarke transform is amplitude invariant (2/3 scaling): a balanced set with
phase amplitude M maps onto a circle of radius M. Instantaneous three-phase
power therefore reads p = 3/2 (v_d i_d + v_q i_q), see :data:`K_POWER`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

SQRT3 = math.sqrt(3.0)
TWO_PI = 2.0 * math.pi

#: power factor between abc and amplitude-invariant dq quantities
K_POWER = 1.5


class ThreePhase(NamedTuple):
    a: float
    b: float
    c: float


class TwoAxis(NamedTuple):
    alpha: float
    beta: float


class Dq(NamedTuple):
    d: float
    q: float


@dataclass(frozen=True)
class PerUnitBase:
    """Per-unit base built from rated power, frequency and phase-peak voltage.

    Parameters
    ----------
    p_b : float
        Base power (VA).
    f_b : float
        Base frequency (Hz).
    v_base : float
        Base voltage, phase peak (V).
    """

    p_b: float
    f_b: float
    v_base: float

    def __post_init__(self):
        if not (self.p_b > 0 and self.f_b > 0 and self.v_base > 0):
            raise ValueError("per-unit base quantities must be strictly positive")

    @property
    def i_base(self) -> float:
        return (2.0 / 3.0) * self.p_b / self.v_base

    @property
    def omega_b(self) -> float:
        return TWO_PI * self.f_b

    @property
    def z_base(self) -> float:
        return self.v_base / self.i_base


def abc_to_alphabeta(x: ThreePhase) -> TwoAxis:
    """Amplitude-invariant Clarke transform; the zero sequence is discarded."""
    a, b, c = x
    alpha = (2.0 / 3.0) * (a - 0.5 * b - 0.5 * c)
    beta = (2.0 / 3.0) * (0.5 * SQRT3) * (b - c)
    return TwoAxis(alpha, beta)


def alphabeta_to_abc(x: TwoAxis) -> ThreePhase:
    alpha, beta = x
    return ThreePhase(
        alpha,
        -0.5 * alpha + 0.5 * SQRT3 * beta,
        -0.5 * alpha - 0.5 * SQRT3 * beta,
    )


def alphabeta_to_dq(x: TwoAxis, theta: float) -> Dq:
    """Park rotation onto a frame at angle ``theta`` (rad)."""
    c = math.cos(theta)
    s = math.sin(theta)
    alpha, beta = x
    return Dq(alpha * c + beta * s, -alpha * s + beta * c)


def dq_to_alphabeta(x: Dq, theta: float) -> TwoAxis:
    c = math.cos(theta)
    s = math.sin(theta)
    d, q = x
    return TwoAxis(d * c - q * s, d * s + q * c)


def abc_to_dq(x: ThreePhase, theta: float) -> Dq:
    return alphabeta_to_dq(abc_to_alphabeta(x), theta)


def dq_to_abc(x: Dq, theta: float) -> ThreePhase:
    return alphabeta_to_abc(dq_to_alphabeta(x, theta))


def balanced(amplitude: float, theta: float) -> ThreePhase:
    """Positive-sequence balanced set ``amplitude * cos(theta - k 2pi/3)``."""
    return ThreePhase(
        amplitude * math.cos(theta),
        amplitude * math.cos(theta - TWO_PI / 3.0),
        amplitude * math.cos(theta + TWO_PI / 3.0),
    )


def rotate(d: float, q: float, angle: float) -> tuple[float, float]:
    """Rotate a dq pair by ``angle`` (multiplication by exp(j angle))."""
    c = math.cos(angle)
    s = math.sin(angle)
    return c * d - s * q, s * d + c * q


def wrap_angle(theta: float) -> float:
    """Wrap to the half-open interval [-pi, pi)."""
    return (theta + math.pi) % TWO_PI - math.pi
