"""
Named scenarios and their headline metrics.

The four hardware-test reproductions run the LC-filter cascade with the power
form of HAC; the analysis scenarios use the L-filter model with the grid
impedance lumped into the filter and the angle form of HAC.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import analysis, config as cfgmod
from .analysis import Equilibrium, LyapCoeffs, StiffGridSetup
from .config import Config
from .control import delta_r_from_power, droop_alpha, feedforward_mu, kappa_ac_from_droop
from .engine import Event, TrajectoryLog, rk4_step, simulate
from .errors import ConfigError
from .frames import K_POWER
from .plant import Line
from .systems import SingleConverterLC, StiffGridHac, TwoConverterLC

SCENARIOS = ("islanded_load_step", "grid_connected_setpoint", "grid_freq_step",
             "two_converter_sharing", "matching_only", "droop_only", "lyapunov_decay",
             "equilibrium_report")

SETTLING_BAND = 0.02
FINAL_WINDOW = 0.10


@dataclass
class ScenarioSpec:
    """What to run. ``overrides`` maps ``section.key`` paths to values."""

    name: str
    overrides: Mapping[str, Any] = field(default_factory=dict)
    config_text: str = ""
    t_stop: float | None = None
    h: float | None = None
    seed: int | None = None
    ctrl_mode: str | None = None
    out_dir: str | Path | None = None
    plots: bool = False

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.name!r}; expected one of {', '.join(SCENARIOS)}",
                              key="scenario")

    def resolve(self) -> Config:
        cfg = cfgmod.parse_config(self.config_text).with_overrides(self.overrides)
        extra = {}
        if self.t_stop is not None:
            extra["sim.t_stop_s"] = float(self.t_stop)
        if self.h is not None:
            extra["sim.h_s"] = float(self.h)
        if self.seed is not None:
            extra["sim.seed"] = int(self.seed)
        if self.ctrl_mode is not None:
            extra["sim.ctrl_mode"] = self.ctrl_mode
        cfg = cfg.with_overrides(extra)
        cfgmod.validate(cfg)
        return cfg


@dataclass
class RunReport:
    scenario: str
    config: dict[str, Any]
    metrics: dict[str, float]
    files: dict[str, str] = field(default_factory=dict)
    log: TrajectoryLog | None = field(default=None, repr=False)
    notes: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"scenario: {self.scenario}", ""]
        lines += [f"note: {n}" for n in self.notes]
        lines += ["", "[metrics]"]
        lines += [f"{k}={_fmt(v)}" for k, v in self.metrics.items()]
        lines += ["", "[files]"]
        lines += [f"{k}={v}" for k, v in self.files.items()]
        lines += ["", "[config]"]
        lines += [f"{k}={_fmt(v)}" for k, v in self.config.items()]
        return "\n".join(lines) + "\n"


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def read_report_metrics(path: str | Path) -> dict[str, float]:
    """Parse the ``[metrics]`` block of a written report."""
    out: dict[str, float] = {}
    section = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("["):
            section = line.strip("[]")
        elif section == "metrics" and "=" in line:
            k, v = line.split("=", 1)
            out[k] = float(v) if v not in ("true", "false") else float(v == "true")
    return out


# --- metrics ----------------------------------------------------------------

def settling_instant(t: np.ndarray, y: np.ndarray, t_event: float) -> tuple[float, float]:
    """Settling instant and final value of ``y`` after an event.

    The final value is the mean over the last 10% of samples; the instant is
    the last entry into a band of 2% of the step magnitude around it (2% of
    the final value when the step is negligible).
    """
    n = len(t)
    if n < 2:
        raise ValueError("need at least two samples")
    final = float(np.mean(y[int(n * (1 - FINAL_WINDOW)):]))
    before = y[t < t_event]
    start = float(before[-1]) if len(before) else float(y[0])
    step = abs(final - start)
    band = SETTLING_BAND * (step if step > 1e-9 * max(abs(final), 1.0) else max(abs(final), 1e-12))
    outside = np.nonzero((np.abs(y - final) > band) & (t >= t_event))[0]
    if len(outside) == 0:
        return t_event, final
    k = outside[-1] + 1
    return (float(t[k]) if k < n else float(t[-1])), final


def steady_value(t: np.ndarray, y: np.ndarray, t_settle: float) -> float:
    """Mean of ``y`` over the final window, restricted to samples after settling."""
    n = len(t)
    t_window = t[int(n * (1 - FINAL_WINDOW))]
    mask = t >= max(t_settle, t_window)
    return float(np.mean(y[mask]))


def pre_event_value(t: np.ndarray, y: np.ndarray, t_event: float) -> float:
    before = y[t < t_event]
    return float(before[-1]) if len(before) else float(y[0])


def log_metrics(name: str, log: TrajectoryLog, refs: Mapping[str, float]) -> dict[str, float]:
    """Headline metrics of a simulated scenario from its log and references only."""
    t = log.t
    te = refs["t_event"]
    w0 = refs["omega0"]
    p_b = refs["p_b"]
    m: dict[str, float] = {}
    if name == "two_converter_sharing":
        ts = max(settling_instant(t, log.column(c), te)[0] for c in ("omega_1", "p_1", "p_2"))
        w1 = steady_value(t, log.column("omega_1"), ts)
        w2 = steady_value(t, log.column("omega_2"), ts)
        dp = []
        for k in (1, 2):
            p = log.column(f"p_{k}")
            dp.append(steady_value(t, p, ts) - pre_event_value(t, p, te))
        m.update(settling_time_s=ts - te, d_omega_pu=w1 / w0 - 1.0,
                 omega_sync_err_pu=abs(w1 - w2) / w0, d_p1_pu=dp[0] / p_b, d_p2_pu=dp[1] / p_b,
                 share_ratio=dp[0] / dp[1],
                 v_dc_err_max=max(abs(steady_value(t, log.column(f"v_dc_{k}"), ts) / refs["v_dc_r"] - 1)
                                  for k in (1, 2)))
        return m
    omega, p, v = log.column("omega"), log.column("p"), log.column("v_dc")
    key = {"grid_connected_setpoint": p, "droop_only": p, "matching_only": v}.get(name, omega)
    ts = settling_instant(t, key, te)[0]
    w_ss = steady_value(t, omega, ts)
    p_ss = steady_value(t, p, ts)
    v_ss = steady_value(t, v, ts)
    m["settling_time_s"] = ts - te
    m["d_omega_pu"] = w_ss / w0 - 1.0
    m["v_dc_err"] = v_ss / refs["v_dc_r"] - 1.0
    m["p_pu"] = p_ss / p_b
    m["d_p_pu"] = (p_ss - pre_event_value(t, p, te)) / p_b
    if "p_r" in refs:
        m["p_err_pu"] = (p_ss - refs["p_r"]) / p_b
    if "omega_g" in refs:
        m["omega_sync_err_pu"] = w_ss / refs["omega_g"] - 1.0
    return m


# --- builders ---------------------------------------------------------------

def _load_r(cfg: Config, load_pu: float) -> float:
    if not load_pu > 0:
        raise ConfigError("load must be > 0 p.u.", key="scenario.load_pu")
    return K_POWER * cfg["plant.v0_V"] ** 2 / (load_pu * cfg["base.p_b_VA"])


def build_lc(name: str, cfg: Config):
    """System, events and metric references of an LC-filter scenario."""
    plant = cfgmod.plant_params(cfg)
    base = cfgmod.per_unit_base(cfg)
    p_b = base.p_b
    te = cfg["sim.event_time_s"]
    common = dict(cascade=cfgmod.cascade_gains(cfg), dc=cfgmod.dc_gains(cfg),
                  lpf_cutoff=cfgmod.lpf_cutoff(cfg), base=base)
    refs = dict(t_event=te, omega0=plant.omega0, p_b=p_b, v_dc_r=plant.v_dc_r)
    x0 = None

    if name == "islanded_load_step":
        load = cfg["scenario.load_pu"]
        hac = cfgmod.hac_gains(cfg, p_r=load * p_b)
        sys = SingleConverterLC(plant, hac, grid=False, r_load=_load_r(cfg, load), **common)
        events = [Event(te, "set_load", _load_r(cfg, load + cfg["scenario.load_step_pu"]))]
    elif name == "grid_connected_setpoint" or name == "droop_only":
        extra = {"kappa_dc": 0.0} if name == "droop_only" else {}
        hac = cfgmod.hac_gains(cfg, p_r=0.0, **extra)
        sys = SingleConverterLC(plant, hac, grid=True, **common)
        p_new = cfg["scenario.p_step_pu"] * p_b
        events = [Event(te, "set_p_ref", p_new)]
        refs.update(p_r=p_new, omega_g=plant.omega0)
    elif name == "grid_freq_step":
        hac = cfgmod.hac_gains(cfg, p_r=cfg["scenario.p_r_pu"] * p_b)
        sys = SingleConverterLC(plant, hac, grid=True, **common)
        w_g = plant.omega0 * (1.0 + cfg["scenario.grid_freq_step"])
        events = [Event(te, "set_grid_freq", w_g)]
        refs.update(omega_g=w_g)
    elif name == "matching_only":
        hac = cfgmod.hac_gains(cfg, p_r=cfg["scenario.p_r_pu"] * p_b, kappa_ac_bar=0.0)
        sys = SingleConverterLC(plant, hac, grid=True, **common)
        x, xc = sys.initial_state()
        x0 = list(x)
        x0[2] = cfg["scenario.matching_v_dc_init"] * plant.v_dc_r
        events = []
        refs.update(omega_g=plant.omega0, t_event=0.0)
    elif name == "two_converter_sharing":
        p_r = cfg["scenario.share_p_r_pu"] * p_b
        bar = cfg["hac.kappa_ac_bar_rad_per_s_pu"] / p_b
        hacs = tuple(cfgmod.hac_gains(cfg, p_r=p_r, kappa_ac_bar=cfg[f"scenario.share_gain_{k}"] * bar)
                     for k in (1, 2))
        line = Line(plant.R_g, plant.L_g)
        load = cfg["scenario.load_pu"]
        sys = TwoConverterLC(plant, hacs, lines=(line, line), r_load=_load_r(cfg, load), **common)
        events = [Event(te, "set_load", _load_r(cfg, load + cfg["scenario.load_step_pu"]))]
    else:  # pragma: no cover - guarded by ScenarioSpec
        raise ConfigError(f"not an LC scenario: {name}", key="scenario")
    sys.pu_bases = {**sys.pu_bases, **{c: plant.v_dc_r for c in sys.columns if c.startswith("v_dc")}}
    return sys, events, refs, x0


def stiff_grid_setup(cfg: Config, kappa_dc: float | None = None, kappa_ac: float | None = None,
                     p_r_pu: float | None = None) -> StiffGridSetup:
    """Angle-form HAC on the L filter with the grid impedance lumped in.

    The angle reference follows from the power set-point through the
    small-angle power map; the angle gain defaults to the equivalent of the
    power droop gain unless configured.
    """
    plant = cfgmod.plant_params(cfg).merged()
    p_b = cfg["base.p_b_VA"]
    mu = feedforward_mu(plant.v0, plant.v_dc_r)
    x_tot = plant.omega0 * plant.L
    v_s = mu * plant.v_dc_r
    p_r = (cfg["scenario.p_r_pu"] if p_r_pu is None else p_r_pu) * p_b
    delta_r = delta_r_from_power(p_r, x_tot, v_s, plant.v0)
    if kappa_ac is None:
        kappa_ac = cfg["hac.kappa_ac_rad_per_s"] or kappa_ac_from_droop(
            cfg["hac.kappa_ac_bar_rad_per_s_pu"] / p_b, droop_alpha(x_tot, v_s, plant.v0))
    hac = cfgmod.hac_gains(cfg, variant="exact", kappa_ac=kappa_ac, delta_r=delta_r, p_r=p_r,
                           kappa_dc=cfg["hac.kappa_dc_rad_per_Vs"] if kappa_dc is None else kappa_dc)
    return StiffGridSetup(plant, hac, cfgmod.dc_gains(cfg), mu)


def _equilibrium_report(cfg: Config) -> tuple[dict[str, float], list[str]]:
    s = stiff_grid_setup(cfg)
    eqs = analysis.equilibria_closed_form(s)
    newton = analysis.newton_equilibrium(s)
    rep = analysis.stability_report(s, eqs[0])
    ev = analysis.jacobian_eigenvalues(s, eqs[0])
    m = {}
    for e in eqs:
        for f in ("delta", "zeta", "v_dc", "i_d", "i_q"):
            m[f"eq{e.k}_{f}"] = getattr(e, f)
    m["newton_max_rel_diff"] = float(np.max(np.abs(newton.x - eqs[0].x) / np.maximum(np.abs(eqs[0].x), 1.0)))
    m["residual_max"] = float(np.max(np.abs(eqs[0].residual)))
    m.update(rho=rep.rho, rho_critical=rep.rho_critical, margin=rep.margin,
             satisfied=float(rep.satisfied), kappa_ac=s.hac.kappa_ac, kappa_dc=s.hac.kappa_dc,
             mu=s.mu, delta_r=s.hac.delta_r, max_eig_real=float(ev[0].real))
    for k, e in enumerate(ev):
        m[f"eig{k}_re"] = float(e.real)
        m[f"eig{k}_im"] = float(e.imag)
    notes = ["stability condition evaluated in SI units",
             "certificate " + ("satisfied" if rep.satisfied else "not satisfied") +
             f" (rho={rep.rho:.6g}, rho_critical={rep.rho_critical:.6g})",
             "linearization " + ("stable" if ev[0].real < 0 else "unstable")]
    return m, notes


@dataclass
class LyapunovBatch:
    """Result of the perturbed-start batch on the L-filter model."""

    setup: StiffGridSetup
    eq: Equilibrium
    coeffs: LyapCoeffs
    t: np.ndarray
    x: np.ndarray          # (n_t, 5, n)
    V: np.ndarray          # (n_t, n)
    dV: np.ndarray         # analytic derivative along the samples


def lyapunov_setup(cfg: Config) -> StiffGridSetup:
    """Angle gain from config (or droop), dc gain placed a margin inside the certificate."""
    s0 = stiff_grid_setup(cfg)
    kappa_ac = cfg["scenario.lyap_kappa_ac_rad_per_s"] or s0.hac.kappa_ac
    eq = analysis.equilibria_closed_form(s0)[0]
    rho_c = analysis.rho_critical(s0.plant, eq, s0.mu, s0.dc.kappa_p, s0.k_s)
    kappa_dc = kappa_ac / (cfg["scenario.lyap_margin"] * rho_c)
    return stiff_grid_setup(cfg, kappa_dc=kappa_dc, kappa_ac=kappa_ac)


def perturbed_starts(cfg: Config, s: StiffGridSetup, eq: Equilibrium) -> np.ndarray:
    """Seeded uniform perturbations around ``eq``, shape ``(5, n)``."""
    rng = np.random.default_rng(cfg["sim.seed"])
    n = cfg["scenario.lyap_samples"]
    i_b = cfgmod.per_unit_base(cfg).i_base
    a = cfg["scenario.lyap_angle_rad"]
    dv = cfg["scenario.lyap_v_dc_frac"] * s.plant.v_dc_r
    di = cfg["scenario.lyap_current_pu"] * i_b
    half = np.array([a, 0.0, dv, di, di])
    return eq.x[:, None] + half[:, None] * rng.uniform(-1.0, 1.0, size=(5, n))


def run_lyapunov_batch(cfg: Config, t_stop: float | None = None, h: float | None = None) -> LyapunovBatch:
    s = lyapunov_setup(cfg)
    eq = analysis.equilibria_closed_form(s)[0]
    c = LyapCoeffs.for_setup(s)
    t_stop = cfg["scenario.lyap_t_stop_s"] if t_stop is None else t_stop
    h = cfg["scenario.lyap_h_s"] if h is None else h
    n_steps = int(round(t_stop / h))
    x = perturbed_starts(cfg, s, eq)

    def rhs(t, z):
        return np.array(analysis.closed_loop_rhs(z, s))

    xs = np.empty((n_steps + 1, 5, x.shape[1]))
    xs[0] = x
    for k in range(n_steps):
        x = rk4_step(rhs, x, k * h, h)
        xs[k + 1] = x
    V = analysis.lyapunov_value(np.moveaxis(xs, 1, 0), eq, c)
    dV = analysis.lyapunov_derivative(np.moveaxis(xs, 1, 0), eq, c, s)
    return LyapunovBatch(s, eq, c, np.arange(n_steps + 1) * h, xs, V, dV)


def fd_derivative(V: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central differences along axis 0 (interior samples)."""
    return (V[:-4] - 8 * V[1:-3] + 8 * V[3:-1] - V[4:]) / (12 * h)


def lyapunov_metrics(b: LyapunovBatch) -> dict[str, float]:
    V0 = b.V[0]
    Vf = b.V[-1]
    ratio = Vf / V0
    h = b.t[1] - b.t[0]
    fd = fd_derivative(b.V, h)
    an = b.dV[2:-2]
    rel_rms = float(np.sqrt(np.mean((an - fd) ** 2)) / np.sqrt(np.mean(an**2)))
    dif = np.diff(b.V, axis=0)
    tol = 1e-9 * V0
    mono = np.mean(dif <= tol, axis=0)
    rep = analysis.stability_report(b.setup, b.eq)
    return dict(
        n_samples=float(b.V.shape[1]), rho=rep.rho, rho_critical=rep.rho_critical,
        margin=rep.margin, satisfied=float(rep.satisfied),
        kappa_ac=b.setup.hac.kappa_ac, kappa_dc=b.setup.hac.kappa_dc,
        V_initial_min=float(V0.min()), V_initial_max=float(V0.max()),
        V_final_max=float(Vf.max()), V_ratio_max=float(ratio.max()),
        converged_fraction=float(np.mean(ratio < 1e-6)),
        monotone_fraction=float(np.mean(mono)), monotone_all=float(np.all(mono == 1.0)),
        dVdt_rel_rms=rel_rms)


# --- entry point ---------------------------------------------------------------

def run_scenario(spec: ScenarioSpec) -> RunReport:
    """Build, run and (optionally) write out one scenario."""
    cfg = spec.resolve()
    out = Path(spec.out_dir) if spec.out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    log = None
    notes: list[str] = []

    if spec.name == "equilibrium_report":
        metrics, notes = _equilibrium_report(cfg)
    elif spec.name == "lyapunov_decay":
        b = run_lyapunov_batch(cfg)
        metrics = lyapunov_metrics(b)
        notes.append(f"{int(metrics['n_samples'])} perturbed starts, seed {cfg['sim.seed']}")
        if out is not None:
            path = out / "lyapunov_decay.csv"
            rows = np.column_stack([np.arange(b.V.shape[1]), b.V[0], b.V[-1], b.V[-1] / b.V[0],
                                    np.mean(np.diff(b.V, axis=0) <= 1e-9 * b.V[0], axis=0)])
            np.savetxt(path, rows, delimiter=",", fmt="%.9g",
                       header="sample,V_initial,V_final,V_ratio,monotone_fraction", comments="")
    else:
        sys, events, refs, x0 = build_lc(spec.name, cfg)
        log = simulate(sys, events, (0.0, cfg["sim.t_stop_s"]), h=cfg["sim.h_s"],
                       ctrl_rate=cfg["sim.ctrl_rate_Hz"], decimation=cfg["sim.decimation"],
                       mode=cfg["sim.ctrl_mode"], x0=x0)
        metrics = log_metrics(spec.name, log, refs)
    metrics["runtime_s"] = time.perf_counter() - started

    report = RunReport(spec.name, cfg.flat(), metrics, log=log, notes=notes)
    if out is not None:
        if log is not None:
            report.files["csv"] = str(log.to_csv(out / f"{spec.name}.csv"))
            if spec.plots:
                from .plots import emit_plots
                for k, pth in enumerate(emit_plots(log, ("omega", "p", "v_dc"), out, prefix=spec.name)):
                    report.files[f"plot{k}"] = str(pth)
        elif spec.name == "lyapunov_decay":
            report.files["csv"] = str(out / "lyapunov_decay.csv")
        rp = out / f"{spec.name}_report.txt"
        report.files["report"] = str(rp)
        rp.write_text(report.to_text())
    return report
