"""Acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL`` line with the measured figures before
asserting. Run ``python tests/test_acceptance.py`` for the summary alone.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from hacsim import analysis
from hacsim.analysis import StiffGridSetup, equilibria_closed_form, newton_equilibrium, scaled_residuals
from hacsim.config import parse_config
from hacsim.control import DcPidGains, HacGains
from hacsim.engine import rk4_step, simulate
from hacsim.plant import PlantParams
from hacsim.scenarios import (ScenarioSpec, fd_derivative, lyapunov_metrics, run_lyapunov_batch,
                              run_scenario, stiff_grid_setup)
from hacsim.systems import AbcStiffGridHac, StiffGridHac


def _report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    capman = _report.capman
    if capman is not None:
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
    else:
        print(line, flush=True)


_report.capman = None


@pytest.fixture(autouse=True)
def _uncaptured(request):
    _report.capman = request.config.pluginmanager.getplugin("capturemanager")
    yield
    _report.capman = None


def _scenario(name):
    return run_scenario(ScenarioSpec(name)).metrics


# --- criteria -------------------------------------------------------------------

def criterion_1():
    t0 = time.perf_counter()
    m = _scenario("islanded_load_step")
    runtime = time.perf_counter() - t0
    ok = abs(m["d_omega_pu"] + 0.025) <= 0.001 and abs(m["v_dc_err"]) < 1e-3 and runtime < 10.0
    return ok, f"islanded: d_omega={m['d_omega_pu']:+.5f} pu, v_dc err={m['v_dc_err']:+.2e}, runtime={runtime:.2f} s"


def criterion_2():
    m = _scenario("grid_freq_step")
    ok = abs(m["d_p_pu"] + 1.0) <= 0.05 and abs(m["omega_sync_err_pu"]) < 1e-4
    return ok, f"grid freq step: d_p={m['d_p_pu']:+.4f} pu, sync err={m['omega_sync_err_pu']:.1e}"


def criterion_3():
    m = _scenario("grid_connected_setpoint")
    ok = abs(m["p_err_pu"]) < 5e-3 and abs(m["omega_sync_err_pu"]) < 1e-4
    return ok, f"set-point step: |p-p_r|={abs(m['p_err_pu']):.1e} pu, |w-w0|/w0={abs(m['omega_sync_err_pu']):.1e}"


def criterion_4():
    m = _scenario("two_converter_sharing")
    target = 1.02 / 0.98
    ok = m["omega_sync_err_pu"] < 1e-6 and abs(m["share_ratio"] / target - 1) <= 0.01
    return ok, f"sharing: ratio={m['share_ratio']:.5f} (target {target:.5f}), sync err={m['omega_sync_err_pu']:.1e}"


def _random_setup(rng):
    base = PlantParams()
    f = lambda: rng.uniform(0.5, 2.0)  # noqa: E731
    v0 = base.v0 * f()
    p = PlantParams(C_dc=base.C_dc * f(), G_dc=base.G_dc * f(), L=0.68e-3 * f(), R=0.0685 * f(),
                    omega0=base.omega0 * rng.uniform(0.9, 1.1), v0=v0,
                    v_dc_r=v0 * rng.uniform(2.2, 4.0), L_g=0.0, R_g=0.0)
    mu = rng.uniform(0.9, 1.1) * p.v0 / p.v_dc_r
    g = HacGains(variant="exact", kappa_ac=rng.uniform(5, 200), kappa_dc=rng.uniform(1e-3, 1.0),
                 delta_r=rng.uniform(-0.6, 0.6), v_dc_r=p.v_dc_r, omega0=p.omega0)
    return StiffGridSetup(p, g, DcPidGains(rng.uniform(1, 50), rng.uniform(50, 2000)), mu)


def criterion_5():
    rng = np.random.default_rng(2024)
    worst_diff = worst_res = 0.0
    for _ in range(100):
        s = _random_setup(rng)
        eq = equilibria_closed_form(s)[0]
        nw = newton_equilibrium(s)
        worst_diff = max(worst_diff, float(np.max(np.abs(nw.x - eq.x) / np.maximum(np.abs(eq.x), 1.0))))
        worst_res = max(worst_res, float(np.max(np.abs(scaled_residuals(eq.x, s)))))
    ok = worst_diff < 1e-9 and worst_res < 1e-9
    return ok, f"100 draws: max rel diff={worst_diff:.1e}, max residual={worst_res:.1e}"


def criterion_6():
    cfg = parse_config("")
    b = run_lyapunov_batch(cfg)
    m = lyapunov_metrics(b)
    h = b.t[1] - b.t[0]
    fd = fd_derivative(b.V, h)
    an = b.dV[2:-2]
    per_traj = np.sqrt(np.mean((an - fd) ** 2, axis=0)) / np.sqrt(np.mean(an ** 2, axis=0))
    ok = (m["satisfied"] == 1.0 and m["n_samples"] == 100 and m["V_ratio_max"] < 1e-6
          and m["dVdt_rel_rms"] < 1e-4 and per_traj.max() < 1e-4)
    return ok, (f"rho/rho_crit={m['rho'] / m['rho_critical']:.2f}, max V_T/V_0={m['V_ratio_max']:.1e}, "
                f"dV/dt rel rms={m['dVdt_rel_rms']:.1e} (worst trajectory {per_traj.max():.1e})")


def criterion_7():
    cfg = parse_config("")
    rng = np.random.default_rng(99)
    base = stiff_grid_setup(cfg)
    worst = 0.0
    for _ in range(3):
        s = StiffGridSetup(base.plant, base.hac, base.dc, base.mu * rng.uniform(0.95, 1.05))
        x0 = list(newton_equilibrium(s).x + rng.uniform(-1, 1, 5) * np.array([0.5, 0, 30.0, 200.0, 200.0]))
        dq = simulate(StiffGridHac(s, x0=x0), [], (0.0, 0.05), h=5e-6, decimation=20, mode="continuous")
        abc = simulate(AbcStiffGridHac(s, x0), [], (0.0, 0.05), h=5e-6, decimation=20, mode="continuous")
        for col in ("delta", "zeta", "v_dc", "i_d", "i_q"):
            a, b = dq.column(col), abc.column(col)
            scale = max(np.max(np.abs(a)), 1.0)
            worst = max(worst, float(np.max(np.abs(a - b)) / scale))
    return worst < 1e-6, f"abc vs dq: max rel diff={worst:.1e} over 3 runs"


def criterion_8():
    mo = _scenario("matching_only")
    do = _scenario("droop_only")
    ok = (abs(mo["v_dc_err"]) < 1e-3 and abs(mo["omega_sync_err_pu"]) < 1e-4
          and abs(do["p_err_pu"]) < 5e-3 and abs(do["omega_sync_err_pu"]) < 1e-4)
    return ok, (f"matching-only |v_dc err|={abs(mo['v_dc_err']):.1e}; "
                f"droop-only |p-p_r|={abs(do['p_err_pu']):.1e} pu")


def criterion_9():
    def err(h):
        x = [1.0]
        for k in range(int(round(1.0 / h))):
            x = rk4_step(lambda t, z: [-z[0]], x, k * h, h)
        return abs(x[0] - math.exp(-1.0))
    orders = [math.log2(err(h) / err(h / 2)) for h in (0.1, 0.05, 0.025)]
    return min(orders) >= 3.9, "RK4 orders " + ", ".join(f"{o:.3f}" for o in orders)


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 10)}


@pytest.mark.parametrize("n", list(CRITERIA))
def test_criterion(n):
    ok, detail = CRITERIA[n]()
    _report(n, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    for n, fn in CRITERIA.items():
        _report(n, *fn())
