"""Variational objects for the nonlocal critical-exponent problem.

The energy of a radial profile u is

    I_p(u) = a/2 + b/2 - c/2,
    a = int |grad u|^2,  b = kappa int u^2,
    c = int (I_alpha * G(u)) G(u),  G(s) = mu |s|^p + F(s),

with the power family F(s) = nu |s|^q / q, f(s) = nu |s|^{q-2} s. Along the
dilation u_tau(x) = u(x/tau) the three terms scale by tau^{N-2}, tau^N and
tau^{N+alpha}, giving the fiber polynomial

    phi(tau) = tau^{N-2} a/2 + tau^N b/2 - tau^{N+alpha} c/2

whose unique interior maximum tau_0 projects u onto the constraint set
{P_p = 0}, where P_p(u) = ((N-2) a + N b - (N+alpha) c) / 2 = phi'(1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import RadialFunction
from .riesz import RieszOperator
from .specfun import ConstantsReport, DimensionPair, constants_report

_PROJECTION_TOL = 1e-12


@dataclass(frozen=True)
class PowerNonlinearity:
    """F(s) = nu |s|^q / q with derivative f(s) = nu |s|^{q-2} s."""

    nu: float
    q: float

    def __post_init__(self):
        if self.nu < 0.0:
            raise ValueError(f"coefficient nu must be >= 0, got {self.nu}")
        if self.nu > 0.0 and self.q <= 1.0:
            raise ValueError(f"exponent q must exceed 1, got {self.q}")

    def F(self, s: np.ndarray) -> np.ndarray:
        if self.nu == 0.0:
            return np.zeros_like(np.asarray(s, dtype=float))
        return (self.nu / self.q) * np.abs(s) ** self.q

    def f(self, s: np.ndarray) -> np.ndarray:
        if self.nu == 0.0:
            return np.zeros_like(np.asarray(s, dtype=float))
        return self.nu * np.sign(s) * np.abs(s) ** (self.q - 1.0)


@dataclass(frozen=True)
class ConditionsReport:
    """Pass/fail record for the growth conditions on the perturbation F."""

    f1: bool
    f2: bool
    f3: bool
    f4: bool
    pure_critical: bool
    messages: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return self.f1 and self.f2 and self.f3 and self.f4


def validate_conditions(nl: PowerNonlinearity, d: DimensionPair) -> ConditionsReport:
    """Check oddness/sign, growth bounds and the superlinearity branch."""
    N = d.N
    p_lo, p_hi = d.p_lower, d.p_upper
    msgs = []

    if nl.nu == 0.0:
        msgs.append(
            "nu = 0: F vanishes identically; growth conditions hold vacuously "
            "but the superlinearity condition fails (pure-critical problem, "
            "energy-threshold strictness inapplicable)"
        )
        return ConditionsReport(True, True, True, False, True, tuple(msgs))

    f1 = True  # odd with f(s) >= 0 on s >= 0 holds for every power law nu >= 0
    f2 = p_lo <= nl.q <= p_hi
    if not f2:
        msgs.append(f"growth bound needs q in [{p_lo:.6g}, {p_hi:.6g}], got q={nl.q}")
    f3 = p_lo < nl.q < p_hi
    if not f3:
        msgs.append(
            f"decay of F/|s|^{{p}} at 0 and infinity needs q in ({p_lo:.6g}, "
            f"{p_hi:.6g}) strictly, got q={nl.q}"
        )
    if N >= 5:
        bound, label = (N + d.alpha - 4.0) / (N - 2.0), "(N+alpha-4)/(N-2)"
    elif N == 4:
        bound, label = d.alpha / 2.0, "alpha/2"
    else:
        bound, label = 1.0 + d.alpha, "1+alpha"
    f4 = nl.q > bound
    if not f4:
        msgs.append(f"superlinearity needs q > {label} = {bound:.6g}, got q={nl.q}")
    return ConditionsReport(f1, f2, f3, f4, False, tuple(msgs))


@dataclass(frozen=True)
class ProblemParams:
    """Full coefficient set (N, alpha, kappa, mu, p, nonlinearity)."""

    d: DimensionPair
    kappa: float
    mu: float
    p: float
    nl: PowerNonlinearity
    constants: ConstantsReport = field(init=False, repr=False)

    def __post_init__(self):
        if self.kappa <= 0.0 or self.mu <= 0.0:
            raise ValueError("kappa and mu must be positive")
        if not (self.d.p_lower < self.p <= self.d.p_upper):
            raise ValueError(
                f"exponent p must lie in ({self.d.p_lower:.6g}, "
                f"{self.d.p_upper:.6g}], got {self.p}"
            )
        object.__setattr__(self, "constants", constants_report(self.d, self.mu))

    @property
    def is_critical(self) -> bool:
        return self.p == self.d.p_upper

    def with_p(self, p: float) -> "ProblemParams":
        return ProblemParams(self.d, self.kappa, self.mu, p, self.nl)

    def g_total(self, u: np.ndarray) -> np.ndarray:
        """G(u) = mu |u|^p + F(u), the source of the nonlocal coupling."""
        return self.mu * np.abs(u) ** self.p + self.nl.F(u)

    def g_prime(self, u: np.ndarray) -> np.ndarray:
        """G'(u) = p mu |u|^{p-2} u + f(u)."""
        return self.p * self.mu * np.sign(u) * np.abs(u) ** (self.p - 1.0) + self.nl.f(u)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Scaling components of the energy and the Pohozaev value."""

    kinetic: float
    mass: float
    nonlocal_: float
    energy: float
    pohozaev: float

    def as_dict(self) -> dict:
        return {
            "kinetic": self.kinetic,
            "mass": self.mass,
            "nonlocal": self.nonlocal_,
            "energy": self.energy,
            "pohozaev": self.pohozaev,
        }


def breakdown_from_terms(a: float, b: float, c: float, d: DimensionPair) -> EnergyBreakdown:
    N, alpha = d.N, d.alpha
    return EnergyBreakdown(
        kinetic=a,
        mass=b,
        nonlocal_=c,
        energy=0.5 * (a + b - c),
        pohozaev=0.5 * ((N - 2) * a + N * b - (N + alpha) * c),
    )


def energy_breakdown(pp: ProblemParams, op: RieszOperator, u: RadialFunction) -> EnergyBreakdown:
    """a, b, c, I_p(u), P_p(u) on the energy-path quadrature."""
    if u.grid is not op.grid:
        raise ValueError("profile lives on a different grid than the operator")
    G = pp.g_total(u.values)
    if not np.all(np.isfinite(G)):
        raise ValueError("nonlinearity produced non-finite values")
    a = u.grid.kinetic(u.values)
    b = pp.kappa * u.grid.energy_mass(u.values)
    c = op.pairing_values(G, G)
    return breakdown_from_terms(a, b, c, pp.d)


def el_residual(pp: ProblemParams, op: RieszOperator, u: RadialFunction) -> float:
    """Relative strong-form defect of -lap u + kappa u = (I_alpha*G(u)) G'(u).

    The Laplacian is the conservative radial operator, which is exactly the
    variational operator of the discrete energy, so this residual measures
    stationarity of I_p and vanishes at a converged minimizer.
    """
    grid = u.grid
    norm = grid.h1_norm(u.values)
    if norm < 1e-300:
        raise ValueError("Euler-Lagrange residual undefined for the zero profile")
    G = pp.g_total(u.values)
    field = (
        -grid.laplacian(u.values)
        + pp.kappa * u.values
        - op.apply_values(G) * pp.g_prime(u.values)
    )
    return float(np.sqrt(grid.hat_masses @ field**2) / norm)


def fiber_map(eb: EnergyBreakdown, d: DimensionPair, tau: float) -> float:
    """phi(tau), the energy along the dilation orbit (no re-quadrature)."""
    if tau < 0.0:
        raise ValueError(f"dilation parameter must be >= 0, got {tau}")
    if tau == 0.0:
        return 0.0
    N, alpha = d.N, d.alpha
    return 0.5 * (
        tau ** (N - 2) * eb.kinetic + tau**N * eb.mass - tau ** (N + alpha) * eb.nonlocal_
    )


def fiber_derivative(eb: EnergyBreakdown, d: DimensionPair, tau: float) -> float:
    """phi'(tau); phi'(1) = P_p(u) identically."""
    N, alpha = d.N, d.alpha
    return 0.5 * (
        (N - 2) * tau ** (N - 3) * eb.kinetic
        + N * tau ** (N - 1) * eb.mass
        - (N + alpha) * tau ** (N + alpha - 1) * eb.nonlocal_
    )


def fiber_second_derivative(eb: EnergyBreakdown, d: DimensionPair, tau: float) -> float:
    N, alpha = d.N, d.alpha
    return 0.5 * (
        (N - 2) * (N - 3) * tau ** (N - 4) * eb.kinetic
        + N * (N - 1) * tau ** (N - 2) * eb.mass
        - (N + alpha) * (N + alpha - 1) * tau ** (N + alpha - 2) * eb.nonlocal_
    )


def project_pohozaev(eb: EnergyBreakdown, d: DimensionPair) -> float:
    """Unique tau_0 > 0 with phi'(tau_0) = 0, phi''(tau_0) < 0.

    Dividing phi' by tau^{N-3} leaves psi(t) = (N-2) a + N b t^2
    - (N+alpha) c t^{2+alpha}, positive at 0 and strictly decreasing after its
    single hump, so a doubling/halving bracket always exists; the root is
    polished by bisection-safeguarded Newton to 1e-12.
    """
    a, b, c = eb.kinetic, eb.mass, eb.nonlocal_
    if a <= 0.0:
        raise ValueError("degenerate profile: kinetic term vanishes")
    if c <= 0.0:
        raise ValueError(
            "no projection exists: the nonlocal coefficient is not positive"
        )
    N, alpha = d.N, d.alpha

    def psi(t):
        return (N - 2) * a + N * b * t**2 - (N + alpha) * c * t ** (2 + alpha)

    def dpsi(t):
        return 2 * N * b * t - (N + alpha) * (2 + alpha) * c * t ** (1 + alpha)

    hi = 1.0
    while psi(hi) > 0.0:
        hi *= 2.0
        if hi > 1e150:
            raise ValueError("projection bracket diverged")
    lo = hi / 2.0
    while psi(lo) <= 0.0:
        lo /= 2.0
        if lo < 1e-150:
            raise ValueError("projection bracket collapsed")

    t = 0.5 * (lo + hi)
    for _ in range(200):
        val = psi(t)
        if val > 0.0:
            lo = t
        else:
            hi = t
        slope = dpsi(t)
        step = t - val / slope if slope != 0.0 else 0.5 * (lo + hi)
        t_new = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(t_new - t) <= _PROJECTION_TOL * t:
            t = t_new
            break
        t = t_new
    if not fiber_second_derivative(eb, d, t) < 0.0:
        raise ValueError("projection did not land on the fiber maximum")
    return float(t)


def projected_energy(eb: EnergyBreakdown, d: DimensionPair) -> float:
    """max over tau of phi(tau), the quantity whose infimum is the level m_p."""
    return fiber_map(eb, d, project_pohozaev(eb, d))
