from __future__ import annotations

import re
import subprocess
import sys

import numpy as np
import pytest

from hacsim.cli import main
from hacsim.engine import TrajectoryLog
from hacsim.errors import ConfigError, EmptyLog
from hacsim.plots import emit_plots
from hacsim.scenarios import (SCENARIOS, ScenarioSpec, read_report_metrics, run_scenario,
                              settling_instant, steady_value)

LC = ("islanded_load_step", "grid_connected_setpoint", "grid_freq_step", "two_converter_sharing",
      "matching_only", "droop_only")


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """Every scenario from the shipped defaults, written to disk."""
    out = tmp_path_factory.mktemp("runs")
    reports = {}
    for name in SCENARIOS:
        reports[name] = run_scenario(ScenarioSpec(name, out_dir=out, plots=name == "islanded_load_step"))
    return out, reports


# --- independent recomputation from the CSV -----------------------------------

def _read_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {n: data[n] for n in data.dtype.names}


def _settle(t, y, te):
    """Last entry into the 2% band around the final-10% mean (written without the package)."""
    n = len(t)
    tail = y[int(n * 0.9):]
    final = tail.mean()
    start = y[t < te][-1] if np.any(t < te) else y[0]
    step = abs(final - start)
    band = 0.02 * step if step > 1e-9 * max(abs(final), 1.0) else 0.02 * max(abs(final), 1e-12)
    bad = [k for k in range(n) if t[k] >= te and abs(y[k] - final) > band]
    if not bad:
        return te
    return t[min(bad[-1] + 1, n - 1)]


def _steady(t, y, ts):
    t_win = t[int(len(t) * 0.9)]
    return y[t >= max(ts, t_win)].mean()


@pytest.mark.parametrize("name", ["islanded_load_step", "grid_freq_step", "grid_connected_setpoint",
                                  "matching_only"])
def test_metrics_match_csv(runs, name):
    out, reports = runs
    cfg = reports[name].config
    d = _read_csv(out / f"{name}.csv")
    m = read_report_metrics(out / f"{name}_report.txt")
    t = d["t"]
    te = 0.0 if name == "matching_only" else cfg["sim.event_time_s"]
    key = {"grid_connected_setpoint": "p", "matching_only": "v_dc"}.get(name, "omega")
    ts = _settle(t, d[key], te)
    w0 = 2 * np.pi * cfg["base.f_b_Hz"]
    p_b = cfg["base.p_b_VA"]
    assert m["settling_time_s"] == pytest.approx(ts - te, abs=1e-9)
    assert m["d_omega_pu"] == pytest.approx(_steady(t, d["omega"], ts) / w0 - 1, abs=1e-8)
    assert m["v_dc_err"] == pytest.approx(_steady(t, d["v_dc"], ts) / cfg["plant.v_dc_r_V"] - 1, abs=1e-8)
    p_ss = _steady(t, d["p"], ts)
    assert m["p_pu"] == pytest.approx(p_ss / p_b, abs=1e-8)
    pre = d["p"][t < te][-1] if te > 0 else d["p"][0]
    assert m["d_p_pu"] == pytest.approx((p_ss - pre) / p_b, abs=1e-8)
    # per-unit copies carry the same information
    assert np.allclose(d["omega_pu"], d["omega"] / w0, rtol=1e-8)


def test_sharing_metrics_match_csv(runs):
    out, reports = runs
    d = _read_csv(out / "two_converter_sharing.csv")
    m = read_report_metrics(out / "two_converter_sharing_report.txt")
    t, te = d["t"], reports["two_converter_sharing"].config["sim.event_time_s"]
    ts = max(_settle(t, d[c], te) for c in ("omega_1", "p_1", "p_2"))
    dp = [_steady(t, d[f"p_{k}"], ts) - d[f"p_{k}"][t < te][-1] for k in (1, 2)]
    assert m["share_ratio"] == pytest.approx(dp[0] / dp[1], rel=1e-7)
    w0 = 2 * np.pi * 60
    err = abs(_steady(t, d["omega_1"], ts) - _steady(t, d["omega_2"], ts)) / w0
    assert m["omega_sync_err_pu"] == pytest.approx(err, abs=1e-9)


# --- scenario outcomes --------------------------------------------------------

def test_all_scenarios_run_from_defaults(runs):
    out, reports = runs
    for name in SCENARIOS:
        r = reports[name]
        assert (out / f"{name}_report.txt").exists()
        assert all(np.isfinite(v) for v in r.metrics.values()), name
        if name in LC:
            assert r.log.t[-1] == pytest.approx(r.config["sim.t_stop_s"])
            assert (out / f"{name}.csv").exists()


def test_islanded_outcome(runs):
    m = runs[1]["islanded_load_step"].metrics
    assert m["d_omega_pu"] == pytest.approx(-0.025, abs=0.001)
    assert abs(m["v_dc_err"]) < 1e-3


def test_grid_freq_step_outcome(runs):
    m = runs[1]["grid_freq_step"].metrics
    assert m["d_p_pu"] == pytest.approx(-1.0, abs=0.05)
    assert abs(m["omega_sync_err_pu"]) < 1e-4


def test_sharing_outcome(runs):
    m = runs[1]["two_converter_sharing"].metrics
    assert m["share_ratio"] == pytest.approx(1.02 / 0.98, rel=0.01)
    assert m["omega_sync_err_pu"] < 1e-6


def test_matching_only_outcome(runs):
    r = runs[1]["matching_only"]
    assert r.config["hac.kappa_ac_bar_rad_per_s_pu"] == 18.84  # reduction happens in the builder
    assert abs(r.metrics["v_dc_err"]) < 1e-3
    assert abs(r.metrics["omega_sync_err_pu"]) < 1e-4


def test_droop_only_outcome(runs):
    m = runs[1]["droop_only"].metrics
    assert abs(m["p_err_pu"]) < 5e-3
    assert abs(m["omega_sync_err_pu"]) < 1e-4


def test_lyapunov_and_equilibrium_reports(runs):
    out, reports = runs
    lm = reports["lyapunov_decay"].metrics
    assert lm["satisfied"] == 1.0 and lm["n_samples"] == 100
    assert lm["converged_fraction"] == 1.0
    em = reports["equilibrium_report"].metrics
    assert em["newton_max_rel_diff"] < 1e-9
    assert em["max_eig_real"] < 0
    assert em["margin"] == pytest.approx(em["rho"] - em["rho_critical"])
    rows = np.loadtxt(out / "lyapunov_decay.csv", delimiter=",", skiprows=1)
    assert rows.shape == (100, 5)


# --- plots --------------------------------------------------------------------

def test_islanded_plots(runs):
    out, reports = runs
    svgs = sorted(out.glob("islanded_load_step_*.svg"))
    assert len(svgs) == 3
    d = _read_csv(out / "islanded_load_step.csv")
    assert d["omega_pu"][-1] == pytest.approx(0.975, abs=1e-3)


def test_plot_single_sample_rejected(tmp_path):
    log = TrajectoryLog(["t", "omega"], 0.1)
    log.append([0.0, 377.0])
    with pytest.raises(EmptyLog):
        emit_plots(log, ["omega"], tmp_path)


def _line_ys(svg_text, min_points):
    for d in re.findall(r'<path d="([^"]+)"', svg_text):
        nums = [float(v) for v in re.findall(r"-?\d+(?:\.\d+)?", d)]
        if len(nums) >= 2 * min_points:
            return nums[1::2]
    return None


def test_constant_trajectory_plots_flat(tmp_path):
    log = TrajectoryLog(["t", "omega"], 0.01, {"omega": 376.99})
    for k in range(60):
        log.append([0.01 * k, 376.99])
    (path,) = emit_plots(log, ["omega"], tmp_path, prefix="flat")
    ys = _line_ys(path.read_text(), 60)
    assert ys is not None and max(ys) - min(ys) < 1e-6


def test_plot_unknown_channel(tmp_path):
    log = TrajectoryLog(["t", "omega"], 0.1)
    log.append([0.0, 1.0])
    log.append([0.1, 1.0])
    with pytest.raises(KeyError):
        emit_plots(log, ["nothing"], tmp_path)


# --- metric helpers -----------------------------------------------------------

def test_settling_instant_on_first_order_response():
    t = np.linspace(0, 2, 2001)
    y = np.where(t < 0.1, 0.0, 1 - np.exp(-(t - 0.1) / 0.1))
    ts, final = settling_instant(t, y, 0.1)
    assert final == pytest.approx(1.0, abs=1e-6)
    assert ts - 0.1 == pytest.approx(0.1 * np.log(50), abs=2e-3)
    assert steady_value(t, y, ts) == pytest.approx(1.0, abs=1e-6)


def test_steady_value_ignores_samples_before_settling():
    t = np.linspace(0, 1, 101)
    y = np.ones_like(t)
    y[95] = 100.0
    assert steady_value(t, y, 0.96) == 1.0


# --- scenario specs and cli -----------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ConfigError):
        ScenarioSpec("no_such_thing")
    with pytest.raises(ConfigError):
        ScenarioSpec("droop_only", overrides={"hac.nope": 1}).resolve()
    cfg = ScenarioSpec("droop_only", overrides={"hac.kappa_dc_rad_per_Vs": 0}, t_stop=0.5).resolve()
    assert cfg["hac.kappa_dc_rad_per_Vs"] == 0.0 and cfg["sim.t_stop_s"] == 0.5


def test_cli_success(tmp_path, capsys):
    assert main(["--scenario", "equilibrium_report", "--out", str(tmp_path)]) == 0
    assert "rho_critical=" in capsys.readouterr().out
    assert (tmp_path / "equilibrium_report_report.txt").exists()


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[hac]\nkappa_zz = 1\n")
    assert main(["--scenario", "equilibrium_report", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "kappa_zz" in capsys.readouterr().err
    assert main(["--scenario", "equilibrium_report", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["--scenario", "islanded_load_step", "--dt", "3e-5", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as ei:
        main(["--scenario", "bogus"])
    assert ei.value.code == 2


def test_cli_numeric_failure(tmp_path, capsys):
    rc = main(["--scenario", "equilibrium_report", "--set", "dc_source.kappa_i_A_per_Vs=0",
               "--out", str(tmp_path)])
    assert rc == 3
    assert "numeric failure" in capsys.readouterr().err


def test_cli_overrides_and_short_run(tmp_path):
    rc = main(["--scenario", "droop_only", "--t-stop", "0.2", "--ctrl-mode", "discrete",
               "--set", "sim.event_time_s=0.05", "--out", str(tmp_path), "--plots", "on"])
    assert rc == 0
    d = _read_csv(tmp_path / "droop_only.csv")
    assert d["t"][-1] == pytest.approx(0.2)
    assert len(list(tmp_path.glob("droop_only_*.svg"))) == 3


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "hacsim", "--scenario", "equilibrium_report",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
