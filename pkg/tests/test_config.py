from __future__ import annotations

import math

import pytest

from hacsim import config as cfgmod
from hacsim.config import DEFAULTS, parse_config, parse_override
from hacsim.errors import ConfigError


def test_empty_config_is_baseline():
    c = parse_config("")
    assert c.values == DEFAULTS
    assert c["base.p_b_VA"] == 500e3
    assert c["hac.kappa_dc_rad_per_Vs"] == 0.18
    assert c["hac.kappa_ac_bar_rad_per_s_pu"] == 18.84
    assert c["dc_source.kappa_i_A_per_Vs"] == 500.0
    assert c["plant.C_dc_F"] == 0.01 and c["plant.C_f_F"] == 0.13e-3
    assert c["plant.L_g_H"] == 0.56e-3 and c["plant.R_g_Ohm"] == 0.064
    assert c["sim.ctrl_rate_Hz"] == 5000.0


def test_override_values():
    c = parse_config("[hac]\nkappa_dc_rad_per_Vs = 0\n")
    assert c["hac.kappa_dc_rad_per_Vs"] == 0.0
    assert isinstance(c["hac.kappa_dc_rad_per_Vs"], float)
    assert cfgmod.hac_gains(c).kappa_dc == 0.0


def test_unknown_key_names_key_and_line():
    text = "[hac]\nkappa_dc_rad_per_Vs = 0.2\nkappa_xx = 1\n"
    with pytest.raises(ConfigError) as ei:
        parse_config(text)
    assert ei.value.key == "hac.kappa_xx" and ei.value.line == 3
    assert "kappa_xx" in str(ei.value) and "line 3" in str(ei.value)


def test_unknown_section():
    with pytest.raises(ConfigError) as ei:
        parse_config("\n[bogus]\nx = 1\n")
    assert ei.value.key == "bogus" and ei.value.line == 2


@pytest.mark.parametrize("text", [
    "[sim]\ndecimation = 2.5\n",
    "[sim]\ndecimation = true\n",
    "[plant]\nL_H = \"big\"\n",
    "[cascade]\nff_pcc = 1\n",
    "[hac]\nvariant = \"fancy\"\n",
    "[plant]\nR_Ohm = nan\n",
])
def test_type_errors(text):
    with pytest.raises(ConfigError) as ei:
        parse_config(text)
    assert ei.value.line == 2


def test_malformed_toml_reports_line():
    with pytest.raises(ConfigError) as ei:
        parse_config("[sim]\nh_s = = 1\n")
    assert ei.value.line == 2


@pytest.mark.parametrize("path", ["plant.L_H", "sim.h_s", "base.p_b_VA"])
def test_non_positive_rejected(path):
    section, key = path.split(".")
    with pytest.raises(ConfigError) as ei:
        parse_config(f"[{section}]\n{key} = 0.0\n")
    assert ei.value.key == path


def test_integer_accepted_for_float():
    c = parse_config("[plant]\nv0_V = 300\n")
    assert c["plant.v0_V"] == 300.0 and isinstance(c["plant.v0_V"], float)


def test_parse_override():
    assert parse_override("hac.kappa_dc_rad_per_Vs=0") == ("hac.kappa_dc_rad_per_Vs", 0)
    assert parse_override(" cascade.ff_pcc = true") == ("cascade.ff_pcc", True)
    assert parse_override("hac.variant=exact") == ("hac.variant", "exact")
    with pytest.raises(ConfigError):
        parse_override("hac.variant")


def test_with_overrides(cfg):
    c = cfg.with_overrides({"sim.t_stop_s": 1})
    assert c["sim.t_stop_s"] == 1.0 and cfg["sim.t_stop_s"] == 2.0
    with pytest.raises(ConfigError):
        cfg.with_overrides({"sim.nope": 1})
    with pytest.raises(ConfigError):
        cfg["sim.nope"]


def test_builders_units(cfg):
    base = cfgmod.per_unit_base(cfg)
    z_b = 1.5 * 326.59 ** 2 / 500e3
    assert base.z_base == pytest.approx(z_b)
    g = cfgmod.hac_gains(cfg, p_r=1.0)
    assert g.kappa_ac_bar == pytest.approx(18.84 / 500e3)
    assert g.p_r == 1.0 and g.omega0 == pytest.approx(2 * math.pi * 60)
    cg = cfgmod.cascade_gains(cfg)
    assert cg.kp_ac == pytest.approx(0.1 / z_b) and cg.ki_ac == pytest.approx(20 / z_b)
    assert cfgmod.lpf_cutoff(cfg) == pytest.approx(2 * math.pi * 10)
    p = cfgmod.plant_params(cfg)
    assert (p.L, p.R, p.v_dc_r) == (0.12e-3, 4.5e-3, 979.77)


def test_flat_roundtrip(cfg):
    flat = cfg.flat()
    assert flat["sim.seed"] == 0
    assert cfg.with_overrides(flat).values == cfg.values
