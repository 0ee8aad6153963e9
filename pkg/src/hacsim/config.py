"""
Configuration: TOML text with unit-suffixed keys, resolved against the
packaged baseline, plus builders that turn it into model and gain objects.
"""
from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass
from importlib import resources
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .control import CascadeGains, DcPidGains, HacGains
from .errors import ConfigError
from .frames import TWO_PI, PerUnitBase
from .plant import PlantParams

_CHOICES = {
    ("hac", "variant"): ("exact", "power", "arctan", "energy"),
    ("hac", "energy_ac"): ("exact", "power"),
    ("sim", "ctrl_mode"): ("discrete", "continuous"),
}


def _load_defaults() -> dict[str, dict[str, Any]]:
    text = resources.files("hacsim").joinpath("baseline.toml").read_text()
    return tomllib.loads(text)


DEFAULTS: dict[str, dict[str, Any]] = _load_defaults()


def _line_of(text: str, key: str, section: str | None = None) -> int | None:
    """1-based line where ``key`` (or ``[section]`` when key is None) is written."""
    pat = re.compile(rf"^\s*\[\s*{re.escape(section)}\s*\]" if key is None
                     else rf"^\s*\"?{re.escape(key)}\"?\s*=")
    for n, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return n
    return None


def _check_value(section: str, key: str, value: Any, line: int | None = None) -> Any:
    default = DEFAULTS[section][key]
    path = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", key=path, line=line)
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("expected an integer", key=path, line=line)
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("expected a number", key=path, line=line)
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError("value must be finite", key=path, line=line)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError("expected a string", key=path, line=line)
        allowed = _CHOICES.get((section, key))
        if allowed and value not in allowed:
            raise ConfigError(f"expected one of {', '.join(allowed)}", key=path, line=line)
    return value


@dataclass
class Config:
    """Fully resolved configuration (section -> key -> value)."""

    values: dict[str, dict[str, Any]]

    def __getitem__(self, path: str) -> Any:
        section, _, key = path.partition(".")
        try:
            return self.values[section][key]
        except KeyError:
            raise ConfigError("unknown configuration key", key=path) from None

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Config":
        values = copy.deepcopy(self.values)
        for path, value in overrides.items():
            section, _, key = path.partition(".")
            if section not in DEFAULTS or key not in DEFAULTS[section]:
                raise ConfigError("unknown configuration key", key=path)
            values[section][key] = _check_value(section, key, value)
        return Config(values)

    def flat(self) -> dict[str, Any]:
        return {f"{s}.{k}": v for s, sec in self.values.items() for k, v in sec.items()}


def parse_config(text: str = "") -> Config:
    """Resolve TOML ``text`` against the baseline; unknown keys are rejected."""
    try:
        user = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed config: {exc}", line=int(m.group(1)) if m else None) from None
    values = copy.deepcopy(DEFAULTS)
    for section, body in user.items():
        if section not in DEFAULTS:
            raise ConfigError("unknown section", key=section, line=_line_of(text, None, section))
        if not isinstance(body, dict):
            raise ConfigError("expected a section table", key=section, line=_line_of(text, section))
        for key, value in body.items():
            path = f"{section}.{key}"
            if key not in DEFAULTS[section]:
                raise ConfigError("unknown key", key=path, line=_line_of(text, key))
            values[section][key] = _check_value(section, key, value, _line_of(text, key))
    cfg = Config(values)
    validate(cfg)
    return cfg


def parse_override(item: str) -> tuple[str, Any]:
    """``"section.key=value"`` with the value read as a TOML literal."""
    path, sep, raw = item.partition("=")
    if not sep:
        raise ConfigError(f"override {item!r} is not of the form section.key=value", key=item)
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return path.strip(), value


def validate(cfg: Config) -> None:
    """Physical plausibility checks that do not depend on the scenario."""
    for path in ("base.p_b_VA", "base.f_b_Hz", "plant.v0_V", "plant.v_dc_r_V", "plant.C_dc_F",
                 "plant.L_H", "plant.R_Ohm", "sim.h_s", "sim.ctrl_rate_Hz", "sim.t_stop_s",
                 "hac.p_cutoff_Hz"):
        if not cfg[path] > 0:
            raise ConfigError("must be > 0", key=path)
    if cfg["sim.decimation"] < 1:
        raise ConfigError("must be >= 1", key="sim.decimation")
    if cfg["sim.event_time_s"] < 0:
        raise ConfigError("must be >= 0", key="sim.event_time_s")
    if cfg["scenario.lyap_samples"] < 1:
        raise ConfigError("must be >= 1", key="scenario.lyap_samples")


# --- builders --------------------------------------------------------------

def per_unit_base(cfg: Config) -> PerUnitBase:
    return PerUnitBase(cfg["base.p_b_VA"], cfg["base.f_b_Hz"], cfg["plant.v0_V"])


def plant_params(cfg: Config) -> PlantParams:
    try:
        return PlantParams(
            C_dc=cfg["plant.C_dc_F"], G_dc=cfg["plant.G_dc_S"], L=cfg["plant.L_H"],
            R=cfg["plant.R_Ohm"], C_f=cfg["plant.C_f_F"], L_g=cfg["plant.L_g_H"],
            R_g=cfg["plant.R_g_Ohm"], omega0=TWO_PI * cfg["base.f_b_Hz"], v0=cfg["plant.v0_V"],
            v_dc_r=cfg["plant.v_dc_r_V"])
    except ValueError as exc:
        raise ConfigError(str(exc), key="plant") from None


def dc_gains(cfg: Config) -> DcPidGains:
    return DcPidGains(cfg["dc_source.kappa_p_A_per_V"], cfg["dc_source.kappa_i_A_per_Vs"],
                      cfg["dc_source.kappa_d_As_per_V"])


def hac_gains(cfg: Config, **refs) -> HacGains:
    """HAC gains in SI units; ``refs`` sets references or overrides fields."""
    p_b = cfg["base.p_b_VA"]
    fields = dict(
        kappa_dc=cfg["hac.kappa_dc_rad_per_Vs"],
        kappa_ac=cfg["hac.kappa_ac_rad_per_s"],
        kappa_ac_bar=cfg["hac.kappa_ac_bar_rad_per_s_pu"] / p_b,
        v_dc_r=cfg["plant.v_dc_r_V"],
        omega0=TWO_PI * cfg["base.f_b_Hz"],
        variant=cfg["hac.variant"],
        kappa_ac1=cfg["hac.kappa_ac1_rad_per_s"],
        kappa_ac2=cfg["hac.kappa_ac2_per_pu"] / p_b,
        energy_ac=cfg["hac.energy_ac"],
    )
    fields.update(refs)
    return HacGains(**fields)


def cascade_gains(cfg: Config) -> CascadeGains:
    z_b = per_unit_base(cfg).z_base
    return CascadeGains(
        kp_ac=cfg["cascade.kp_ac_pu"] / z_b, ki_ac=cfg["cascade.ki_ac_pu_per_s"] / z_b,
        kp_cc=cfg["cascade.kp_cc_Ohm"], ki_cc=cfg["cascade.ki_cc_Ohm_per_s"],
        ff_voltage=cfg["cascade.ff_voltage"], ff_current=cfg["cascade.ff_current"],
        ff_pcc=cfg["cascade.ff_pcc"], xv_limit=cfg["cascade.xv_limit_Vs"],
        xi_limit=cfg["cascade.xi_limit_As"])


def lpf_cutoff(cfg: Config) -> float:
    return TWO_PI * cfg["hac.p_cutoff_Hz"]
