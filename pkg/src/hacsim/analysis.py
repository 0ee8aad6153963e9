"""
Operating points and stability certificates of the L-filter converter under
the angle form of the hybrid angle control.

The closed loop has the state ``x = (delta, zeta, v_dc, i_d, i_q)``: relative
angle to the grid, dc-source integrator, dc-link voltage and grid-frame
currents. ``k_s`` is the power factor of the dq frame (3/2 for the
amplitude-invariant transform used throughout the package, 1 for the
power-invariant textbook form). Every expression below is written for general
``k_s``; with ``k_s = 1`` they reduce to the textbook formulas, and for other
values they follow from the exact rescaling ``i -> sqrt(k_s) i``,
``mu -> sqrt(k_s) mu``, ``v_g -> sqrt(k_s) v_g``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import DcPidGains, HacGains
from .errors import DegenerateImpedance, DegenerateParams, NoConvergence
from .frames import K_POWER, TWO_PI
from .plant import PlantParams, rhs_dq_L


@dataclass(frozen=True)
class StiffGridSetup:
    """L-filter converter on a stiff grid with HAC, dc PI source and constant modulation."""

    plant: PlantParams
    hac: HacGains
    dc: DcPidGains
    mu: float
    omega_g: float | None = None
    k_s: float = K_POWER

    def __post_init__(self):
        if self.hac.variant not in ("exact", "energy"):
            raise ValueError("the stiff-grid analysis needs an angle-based HAC variant")
        if self.hac.variant == "energy" and self.hac.energy_ac != "exact":
            raise ValueError("energy variant must use the angle ac term here")

    @property
    def grid_frequency(self) -> float:
        return self.plant.omega0 if self.omega_g is None else self.omega_g


def hac_frequency_array(s: StiffGridSetup, v_dc, delta):
    g = s.hac
    ac = g.kappa_ac * np.sin(0.5 * (delta - g.delta_r))
    if g.variant == "energy":
        return g.omega0 + g.dc_energy_gain * (v_dc * v_dc - g.v_dc_r**2) - ac
    return g.omega0 + g.kappa_dc * (v_dc - g.v_dc_r) - ac


def closed_loop_rhs(x, s: StiffGridSetup):
    """Closed-loop vector field; ``x`` entries may be arrays of a state batch."""
    delta, zeta, v_dc = x[0], x[1], x[2]
    omega = hac_frequency_array(s, v_dc, delta)
    i_dc = -s.dc.kappa_p * (v_dc - s.plant.v_dc_r) - s.dc.kappa_i * zeta
    return rhs_dq_L(x, s.mu, i_dc, s.plant, omega, s.grid_frequency, k_s=s.k_s,
                    kappa_d=s.dc.kappa_d)


@dataclass(frozen=True)
class Equilibrium:
    delta: float
    zeta: float
    v_dc: float
    i_d: float
    i_q: float
    k: int = 1
    residual: tuple[float, ...] = field(default=(), compare=False)

    @property
    def x(self) -> np.ndarray:
        return np.array([self.delta, self.zeta, self.v_dc, self.i_d, self.i_q])


def steady_currents(p: PlantParams, mu: float, v_dc: float, delta: float,
                    omega: float) -> tuple[float, float]:
    """Grid-frame currents that null the inductor dynamics."""
    wl = omega * p.L
    den = p.R**2 + wl**2
    if den == 0.0:
        raise DegenerateImpedance("R^2 + (omega L)^2 vanishes")
    a = mu * v_dc * math.cos(delta) - p.v0
    b = mu * v_dc * math.sin(delta)
    i_d = (mu * v_dc * (p.R * math.cos(delta) + wl * math.sin(delta)) - p.R * p.v0) / den
    i_q = (mu * v_dc * (p.R * math.sin(delta) - wl * math.cos(delta)) + wl * p.v0) / den
    # consistency with the linear solve of [R, -wl; wl, R] i = [a, b]
    assert abs(p.R * i_d - wl * i_q - a) <= 1e-9 * (abs(a) + abs(p.R * i_d) + abs(wl * i_q) + 1.0)
    assert abs(wl * i_d + p.R * i_q - b) <= 1e-9 * (abs(b) + abs(wl * i_d) + abs(p.R * i_q) + 1.0)
    return i_d, i_q


def equilibria_closed_form(s: StiffGridSetup) -> list[Equilibrium]:
    """Both stationary points ``delta* = delta_r`` (k=1) and ``delta_r + 2 pi`` (k=2).

    The dc voltage sits at its reference, the currents null the inductor
    dynamics and the integrator balances the dc-link current.
    """
    p = s.plant
    if s.dc.kappa_i <= 0:
        raise DegenerateParams("kappa_i must be > 0 for a unique integrator state")
    if s.grid_frequency != s.hac.omega0:
        raise DegenerateParams("closed form assumes the grid runs at the nominal frequency")
    v = p.v_dc_r
    delta = s.hac.delta_r
    i_d, i_q = steady_currents(p, s.mu, v, delta, s.grid_frequency)
    i_s = s.k_s * s.mu * (i_d * math.cos(delta) + i_q * math.sin(delta))
    zeta = (-p.G_dc * v - i_s) / s.dc.kappa_i
    out = []
    for k, d in ((1, delta), (2, delta + TWO_PI)):
        eq = Equilibrium(d, zeta, v, i_d, i_q, k)
        out.append(Equilibrium(d, zeta, v, i_d, i_q, k, tuple(scaled_residuals(eq.x, s))))
    return out


def _residual_terms(x, s: StiffGridSetup):
    """Residuals of the stationarity conditions and the magnitude of their largest term."""
    p = s.plant
    delta, zeta, v, i_d, i_q = x
    c, sn = math.cos(delta), math.sin(delta)
    w = s.grid_frequency
    wl = w * p.L
    omega = float(hac_frequency_array(s, v, delta))
    r = np.array([
        omega - w,
        v - p.v_dc_r,
        -s.dc.kappa_i * zeta - p.G_dc * v - s.k_s * s.mu * (i_d * c + i_q * sn),
        s.mu * v * c - p.R * i_d + wl * i_q - p.v0,
        s.mu * v * sn - p.R * i_q - wl * i_d,
    ])
    scale = np.array([
        max(w, abs(omega)),
        p.v_dc_r,
        abs(s.dc.kappa_i * zeta) + abs(p.G_dc * v) + abs(s.k_s * s.mu * i_d * c) + abs(s.k_s * s.mu * i_q * sn),
        abs(s.mu * v * c) + abs(p.R * i_d) + abs(wl * i_q) + p.v0,
        abs(s.mu * v * sn) + abs(p.R * i_q) + abs(wl * i_d),
    ])
    return r, scale


def scaled_residuals(x, s: StiffGridSetup) -> np.ndarray:
    r, scale = _residual_terms(x, s)
    return r / np.where(scale > 0, scale, 1.0)


def _residual_jacobian(x, s: StiffGridSetup) -> np.ndarray:
    p = s.plant
    delta, zeta, v, i_d, i_q = x
    c, sn = math.cos(delta), math.sin(delta)
    wl = s.grid_frequency * p.L
    g = s.hac
    half = 0.5 * (delta - g.delta_r)
    dw_dv = 2.0 * g.dc_energy_gain * v if g.variant == "energy" else g.kappa_dc
    ks_mu = s.k_s * s.mu
    return np.array([
        [-0.5 * g.kappa_ac * math.cos(half), 0.0, dw_dv, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [-ks_mu * (-i_d * sn + i_q * c), -s.dc.kappa_i, -p.G_dc, -ks_mu * c, -ks_mu * sn],
        [-s.mu * v * sn, 0.0, s.mu * c, -p.R, wl],
        [s.mu * v * c, 0.0, s.mu * sn, -wl, -p.R],
    ])


def _safe(scale):
    return np.where(scale > 0, scale, 1.0)


def newton_equilibrium(s: StiffGridSetup, x0=None, tol: float = 1e-12,
                       max_iter: int = 100) -> Equilibrium:
    """Damped Newton solve of the stationarity conditions.

    Starts from the references with zero currents and integrator unless ``x0``
    is given. Convergence is declared when every residual, relative to the
    largest term of its equation, is below ``tol``.
    """
    p = s.plant
    x = np.array([s.hac.delta_r, 0.0, p.v_dc_r, 0.0, 0.0] if x0 is None else x0, dtype=float)
    r, scale = _residual_terms(x, s)
    for _ in range(max_iter):
        rel = np.abs(r) / _safe(scale)
        if rel.max() <= tol:
            half = 0.5 * (x[0] - s.hac.delta_r)
            k = 1 if math.cos(half) > 0 else 2
            return Equilibrium(*x, k=k, residual=tuple(r / _safe(scale)))
        J = _residual_jacobian(x, s)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise NoConvergence("singular Jacobian in the equilibrium solve") from None
        if not np.all(np.isfinite(step)) or np.linalg.cond(J) > 1e15:
            raise NoConvergence("ill-conditioned Jacobian in the equilibrium solve")
        norm0 = np.linalg.norm(r / _safe(scale))
        lam = 1.0
        while True:
            x_new = x + lam * step
            r_new, scale_new = _residual_terms(x_new, s)
            if np.linalg.norm(r_new / _safe(scale_new)) < norm0 or lam < 1e-4:
                break
            lam *= 0.5
        x, r, scale = x_new, r_new, scale_new
    raise NoConvergence(f"Newton did not converge in {max_iter} iterations")


@dataclass(frozen=True)
class LyapCoeffs:
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3, self.c4, self.c5) <= 0:
            raise DegenerateParams("energy-function coefficients must be positive")

    @classmethod
    def for_setup(cls, s: StiffGridSetup) -> "LyapCoeffs":
        """Coefficient choice that cancels every cross term except the angle couplings."""
        if s.hac.kappa_dc <= 0:
            raise DegenerateParams("kappa_dc must be > 0 for the energy function")
        half_l = 0.5 * s.k_s * s.plant.L
        return cls(4.0 / s.hac.kappa_dc, 0.5 * s.dc.kappa_i, 0.5 * s.plant.C_dc, half_l, half_l)


def lyapunov_value(x, eq: Equilibrium, c: LyapCoeffs):
    """Energy function of the deviation from ``eq``; accepts batched states."""
    dd = x[0] - eq.delta
    return (c.c1 * (1.0 - np.cos(0.5 * dd)) + c.c2 * (x[1] - eq.zeta) ** 2
            + c.c3 * (x[2] - eq.v_dc) ** 2 + c.c4 * (x[3] - eq.i_d) ** 2
            + c.c5 * (x[4] - eq.i_q) ** 2)


def lyapunov_derivative(x, eq: Equilibrium, c: LyapCoeffs, s: StiffGridSetup):
    """Time derivative of :func:`lyapunov_value` along the closed-loop flow (chain rule)."""
    f = closed_loop_rhs(x, s)
    return (0.5 * c.c1 * np.sin(0.5 * (x[0] - eq.delta)) * f[0]
            + 2.0 * (c.c2 * (x[1] - eq.zeta) * f[1] + c.c3 * (x[2] - eq.v_dc) * f[2]
                     + c.c4 * (x[3] - eq.i_d) * f[3] + c.c5 * (x[4] - eq.i_q) * f[4]))


@dataclass(frozen=True)
class StabilityReport:
    rho: float
    rho_critical: float

    @property
    def margin(self) -> float:
        return self.rho - self.rho_critical

    @property
    def satisfied(self) -> bool:
        return self.margin > 0


def rho_critical(p: PlantParams, eq: Equilibrium, mu: float, kappa_p: float,
                 k_s: float = K_POWER) -> float:
    """Lower bound on ``kappa_ac / kappa_dc`` that makes the energy function decrease.

    Evaluated in the unit system of the inputs (SI by default); the three
    terms are not dimensionally homogeneous, so SI and per-unit inputs give
    different numbers.
    """
    if p.R <= 0:
        raise DegenerateParams("filter resistance must be > 0")
    damping = p.G_dc + kappa_p
    if damping <= 0:
        raise DegenerateParams("G_dc + kappa_p must be > 0")
    mu2 = mu * mu
    return (1.0 / damping + k_s * k_s * mu2 * (eq.i_d**2 + eq.i_q**2) / damping
            + k_s * mu2 * eq.v_dc**2 / p.R)


def stability_report(s: StiffGridSetup, eq: Equilibrium) -> StabilityReport:
    rho = s.hac.kappa_ac / s.hac.kappa_dc if s.hac.kappa_dc > 0 else math.inf
    return StabilityReport(rho, rho_critical(s.plant, eq, s.mu, s.dc.kappa_p, s.k_s))


def _pow2_step(scale: float) -> float:
    return 2.0 ** round(math.log2(scale))


def numerical_jacobian(s: StiffGridSetup, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of :func:`closed_loop_rhs`.

    Steps are powers of two so that perturbed coordinates are exact.
    """
    x = np.asarray(x, dtype=float)
    typical = np.array([1.0, max(abs(x[1]), 1.0), max(abs(x[2]), 1.0),
                        max(abs(x[3]), abs(x[4]), 1.0), max(abs(x[3]), abs(x[4]), 1.0)])
    J = np.empty((5, 5))
    for j in range(5):
        hj = _pow2_step(rel_step * typical[j])
        xp = x.copy()
        xm = x.copy()
        xp[j] += hj
        xm[j] -= hj
        J[:, j] = (np.array(closed_loop_rhs(xp, s)) - np.array(closed_loop_rhs(xm, s))) / (2.0 * hj)
    return J


def jacobian_eigenvalues(s: StiffGridSetup, eq: Equilibrium) -> np.ndarray:
    """Eigenvalues of the linearization at ``eq``, sorted by real part (descending)."""
    ev = np.linalg.eigvals(numerical_jacobian(s, eq.x))
    return ev[np.lexsort((-ev.imag, -ev.real))]
