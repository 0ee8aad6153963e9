from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hacsim.frames import (K_POWER, PerUnitBase, ThreePhase, TwoAxis, abc_to_alphabeta, abc_to_dq,
                           alphabeta_to_dq, balanced, dq_to_abc, rotate, wrap_angle)

angles = st.floats(-20.0, 20.0, allow_nan=False)
amps = st.floats(1e-3, 1e4, allow_nan=False)

# independent oracle: the 2x3 Clarke matrix written out
CLARKE = (2.0 / 3.0) * np.array([[1.0, -0.5, -0.5], [0.0, math.sqrt(3) / 2, -math.sqrt(3) / 2]])


def test_clarke_balanced_at_zero():
    assert abc_to_alphabeta(ThreePhase(1.0, -0.5, -0.5)) == pytest.approx((1.0, 0.0), abs=1e-15)


def test_clarke_zero():
    assert abc_to_alphabeta(ThreePhase(0.0, 0.0, 0.0)) == (0.0, 0.0)


def test_clarke_matches_matrix_oracle():
    x = np.array([0.3, -0.9, 0.6])
    expected = CLARKE @ x
    # frozen hand values: alpha = 0.3, beta = -sqrt(3)/2
    assert expected == pytest.approx([0.3, -math.sqrt(3) / 2], rel=1e-15)
    assert abc_to_alphabeta(ThreePhase(*x)) == pytest.approx(tuple(expected), rel=1e-14)


def test_park_examples():
    assert alphabeta_to_dq(TwoAxis(1.0, 0.0), 0.0) == pytest.approx((1.0, 0.0))
    assert alphabeta_to_dq(TwoAxis(1.0, 0.0), math.pi / 2) == pytest.approx((0.0, -1.0), abs=1e-15)


def test_park_composes_rotations():
    x = TwoAxis(0.6, 0.8)
    once = alphabeta_to_dq(x, 0.3)
    twice = alphabeta_to_dq(alphabeta_to_dq(x, 0.1), 0.2)
    assert once == pytest.approx(twice, rel=1e-14)
    c, s = math.cos(0.3), math.sin(0.3)
    assert once == pytest.approx((0.6 * c + 0.8 * s, -0.6 * s + 0.8 * c), rel=1e-14)


def test_inverse_examples():
    assert dq_to_abc((1.0, 0.0), 0.0) == pytest.approx((1.0, -0.5, -0.5))
    assert dq_to_abc((0.0, 0.0), 1.234) == (0.0, 0.0, 0.0)


@given(amps, angles, angles)
def test_roundtrip_balanced(m, phase, theta):
    x = balanced(m, phase)
    back = dq_to_abc(abc_to_dq(x, theta), theta)
    assert max(abs(a - b) for a, b in zip(x, back)) < 1e-12 * m


@given(amps, angles, angles)
def test_rotation_preserves_magnitude(m, phase, theta):
    ab = abc_to_alphabeta(balanced(m, phase))
    dq = alphabeta_to_dq(ab, theta)
    assert math.hypot(*dq) == pytest.approx(math.hypot(*ab), rel=1e-12)
    assert math.hypot(*ab) == pytest.approx(m, rel=1e-12)


@given(amps, angles)
def test_balanced_dq_is_constant_in_synchronous_frame(m, theta):
    assert abc_to_dq(balanced(m, theta), theta) == pytest.approx((m, 0.0), abs=1e-12 * m)


@given(amps, amps, angles, angles, angles)
def test_instantaneous_power_factor(v, i, tv, ti, theta):
    va, ia = balanced(v, tv), balanced(i, ti)
    p_abc = sum(a * b for a, b in zip(va, ia))
    vd, id_ = abc_to_dq(va, theta), abc_to_dq(ia, theta)
    assert K_POWER * (vd[0] * id_[0] + vd[1] * id_[1]) == pytest.approx(p_abc, rel=1e-9, abs=1e-9 * v * i)


def test_rotate_and_wrap():
    assert rotate(1.0, 0.0, math.pi / 2) == pytest.approx((0.0, 1.0), abs=1e-15)
    assert wrap_angle(math.pi) == pytest.approx(-math.pi)
    assert wrap_angle(3 * math.pi + 0.1) == pytest.approx(-math.pi + 0.1)


def test_per_unit_base():
    b = PerUnitBase(500e3, 60.0, 326.59)
    assert b.i_base == pytest.approx(2 / 3 * 500e3 / 326.59)
    assert b.omega_b == pytest.approx(2 * math.pi * 60)
    assert b.z_base == pytest.approx(1.5 * 326.59**2 / 500e3)
    with pytest.raises(ValueError):
        PerUnitBase(0.0, 60.0, 1.0)
