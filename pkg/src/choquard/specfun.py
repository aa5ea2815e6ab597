"""Closed-form special constants for the nonlocal critical problem.

Everything here is an exact Gamma-function expression evaluated in double
precision: the Riesz normalization A_alpha(N), the sharp conformal
Hardy-Littlewood-Sobolev constant C_alpha(N), the best Sobolev constant S,
the critical nonlocal constant S_alpha = S / (A_alpha C_alpha)^{(N-2)/(N+alpha)},
and the energy-level threshold

    (2+alpha)/(2(N+alpha)) * ((N-2)/(N+alpha))^{(N-2)/(2+alpha)}
        * mu^{-2(N-2)/(2+alpha)} * S_alpha^{(N+alpha)/(2+alpha)}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class DimensionPair:
    """Spatial dimension N >= 3 and Riesz order alpha in (0, N)."""

    N: int
    alpha: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ValueError(f"dimension N must be an integer >= 3, got {self.N}")
        if not (0.0 < self.alpha < self.N):
            raise ValueError(
                f"Riesz order alpha must lie strictly in (0, N={self.N}), got {self.alpha}"
            )

    @property
    def p_lower(self) -> float:
        """Lower critical exponent (N + alpha) / N."""
        return (self.N + self.alpha) / self.N

    @property
    def p_upper(self) -> float:
        """Upper critical exponent (N + alpha) / (N - 2)."""
        return (self.N + self.alpha) / (self.N - 2)


@dataclass(frozen=True)
class ConstantsReport:
    """All derived constants for one (N, alpha, mu)."""

    N: int
    alpha: float
    mu: float
    a_alpha: float
    c_alpha: float
    sobolev_s: float
    s_alpha: float
    threshold: float


def gamma(x: float) -> float:
    """Gamma function for x > 0 (double precision, Lanczos-backed)."""
    if not x > 0.0:
        raise ValueError(f"gamma requires x > 0, got {x}")
    return math.gamma(x)


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere S^{N-1}: 2 pi^{N/2} / Gamma(N/2)."""
    return 2.0 * math.pi ** (N / 2.0) / gamma(N / 2.0)


def riesz_normalization(d: DimensionPair) -> float:
    """A_alpha(N) = Gamma((N-alpha)/2) / (Gamma(alpha/2) pi^{N/2} 2^alpha)."""
    N, a = d.N, d.alpha
    return gamma((N - a) / 2.0) / (gamma(a / 2.0) * math.pi ** (N / 2.0) * 2.0**a)


def hls_sharp_constant(d: DimensionPair) -> float:
    """Sharp conformal HLS constant C_alpha(N) for exponent pair 2N/(N+alpha).

    C_alpha(N) = pi^{(N-alpha)/2} Gamma(alpha/2)/Gamma((N+alpha)/2)
                 * (Gamma(N/2)/Gamma(N))^{-alpha/N}
    """
    N, a = d.N, d.alpha
    return (
        math.pi ** ((N - a) / 2.0)
        * gamma(a / 2.0)
        / gamma((N + a) / 2.0)
        * (gamma(N / 2.0) / gamma(N)) ** (-a / N)
    )


def sobolev_constant(N: int) -> float:
    """Best constant S in ||grad u||_2^2 >= S ||u||_{2N/(N-2)}^2 on R^N.

    Closed form pi N (N-2) (Gamma(N/2)/Gamma(N))^{2/N}, attained on the
    Talenti family (1 + |x|^2)^{-(N-2)/2} up to scaling.
    """
    if int(N) != N or N < 3:
        raise ValueError(f"dimension N must be an integer >= 3, got {N}")
    return math.pi * N * (N - 2) * (gamma(N / 2.0) / gamma(N)) ** (2.0 / N)


def critical_nonlocal_constant(d: DimensionPair) -> float:
    """S_alpha = S / (A_alpha(N) C_alpha(N))^{(N-2)/(N+alpha)}."""
    N, a = d.N, d.alpha
    s = sobolev_constant(N)
    return s / (riesz_normalization(d) * hls_sharp_constant(d)) ** ((N - 2) / (N + a))


def critical_level_threshold(d: DimensionPair, mu: float) -> float:
    """Upper bound for the critical groundstate level m_{p*}.

    Monotone decreasing in mu with exact power mu^{-2(N-2)/(2+alpha)}.
    """
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    N, a = d.N, d.alpha
    s_a = critical_nonlocal_constant(d)
    return (
        (2 + a)
        / (2 * (N + a))
        * ((N - 2) / (N + a)) ** ((N - 2) / (2 + a))
        * mu ** (-2 * (N - 2) / (2 + a))
        * s_a ** ((N + a) / (2 + a))
    )


def constants_report(d: DimensionPair, mu: float) -> ConstantsReport:
    """Evaluate every constant once for (N, alpha, mu)."""
    return ConstantsReport(
        N=d.N,
        alpha=d.alpha,
        mu=mu,
        a_alpha=riesz_normalization(d),
        c_alpha=hls_sharp_constant(d),
        sobolev_s=sobolev_constant(d.N),
        s_alpha=critical_nonlocal_constant(d),
        threshold=critical_level_threshold(d, mu),
    )
