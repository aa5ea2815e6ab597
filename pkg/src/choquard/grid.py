"""Radial discretization of R^N.

A RadialGrid is a truncated mesh 0 = r_0 < r_1 < ... < r_M = R together with
positive quadrature weights that already contain the full radial measure
|S^{N-1}| r^{N-1} dr, so integrate(u) = sum(w * u) approximates the integral
of the radial profile u over all of R^N.

Two positive weight families coexist on purpose:

* `weights`: composite 3-point Newton-Cotes on interval pairs (Simpson on
  nonuniform panels), used by integrate() and the Lebesgue norms. High order,
  but its effective node lengths alternate, so it is unsuitable as a lumped
  mass for strong-form residuals.
* `hat_masses`: exact r^{N-1} moments of the P1 hat functions. The energy
  path (kinetic form, mass term, nonlocal pairing) uses these so that the
  variational gradient equals hat_mass times the conservative finite
  difference Euler-Lagrange field exactly; a minimizer of the discrete
  energy then satisfies the strong-form equation nodally.

The kinetic seminorm integrates the squared segment slope against the exact
segment moments of r^{N-1}; this conservative form has no odd-even null mode,
which the Sobolev-gradient solver relies on. The mesh is graded geometrically
near the origin and merges into a uniform tail, with consecutive spacing
ratios kept small enough that every panel weight stays positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .specfun import sphere_area

# Per-step geometric growth used when grading toward the origin.
_GROWTH = 1.04


def _panel_weights(h0: float, h1: float) -> tuple[float, float, float]:
    """Exact quadratic-interpolation weights on a two-interval panel."""
    s = h0 + h1
    return (
        s * (2.0 * h0 - h1) / (6.0 * h0),
        s**3 / (6.0 * h0 * h1),
        s * (2.0 * h1 - h0) / (6.0 * h1),
    )


class RadialGrid:
    """Radial mesh with measure-carrying quadrature weights."""

    def __init__(self, N: int, nodes: np.ndarray):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3 or nodes.size % 2 == 0:
            raise ValueError("nodes must be a 1-d array with an even interval count")
        if nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0.0):
            raise ValueError("nodes must start at 0 and increase strictly")
        if int(N) != N or N < 3:
            raise ValueError(f"dimension N must be an integer >= 3, got {N}")
        self.N = int(N)
        self.nodes = nodes
        self.R = float(nodes[-1])
        self.M = nodes.size - 1
        self.area = sphere_area(self.N)

        h = np.diff(nodes)
        self.spacings = h
        # Simpson-type length weights, then fold in |S^{N-1}| r^{N-1}.
        length_w = np.zeros_like(nodes)
        for k in range(0, self.M - 1, 2):
            w0, w1, w2 = _panel_weights(h[k], h[k + 1])
            if min(w0, w1, w2) < 0.0:
                raise ValueError(
                    f"negative panel weight at nodes {k}..{k + 2}; grading too abrupt"
                )
            length_w[k] += w0
            length_w[k + 1] += w1
            length_w[k + 2] += w2
        self.weights = self.area * nodes ** (self.N - 1) * length_w

        # Exact moments of r^{N-1} per segment (for the kinetic form) and per
        # hat function (lumped mass for the conservative Laplacian).
        rpow = nodes**self.N
        self.seg_moments = self.area * np.diff(rpow) / self.N
        first = self.area * np.diff(nodes ** (self.N + 1)) / (self.N + 1)
        # hat_i mass = int (r - r_{i-1})/h r^{N-1} + int (r_{i+1} - r)/h r^{N-1}
        left = (first - nodes[:-1] * self.seg_moments) / h
        right = (nodes[1:] * self.seg_moments - first) / h
        self.hat_masses = np.zeros_like(nodes)
        self.hat_masses[:-1] += right
        self.hat_masses[1:] += left

    # -- construction ------------------------------------------------------

    @classmethod
    def build(
        cls,
        N: int,
        R: float,
        M: int,
        grading: float = 20.0,
        include: tuple[float, ...] = (),
    ) -> "RadialGrid":
        """Graded mesh on [0, R] with M intervals (rounded up to even).

        grading is the ratio of the uniform tail spacing to the origin
        spacing; 1.0 gives a uniform mesh. Radii listed in include are snapped
        onto panel boundaries so that discontinuities (e.g. a ball indicator)
        can sit exactly on a node.
        """
        if R <= 0.0 or M < 2:
            raise ValueError("need R > 0 and at least 2 intervals")
        if grading < 1.0:
            raise ValueError("grading ratio must be >= 1")
        M = int(M) + int(M) % 2
        if grading == 1.0:
            nodes = np.linspace(0.0, R, M + 1)
        else:
            k = min(M // 2, max(1, int(np.ceil(np.log(grading) / np.log(_GROWTH)))))
            prof = grading ** (np.minimum(np.arange(M), k) / k)
            h0 = R / prof.sum()
            nodes = np.concatenate(([0.0], np.cumsum(h0 * prof)))
            nodes[-1] = R
        for radius in include:
            if not 0.0 < radius < R:
                raise ValueError(f"include radius {radius} outside (0, R)")
            if M < 10:
                raise ValueError("include radii need at least 10 intervals")
            # Snap the nearest interior panel boundary onto the radius and make
            # the two flanking panels symmetric with one common spacing: the
            # O(h) quadrature errors of a jump sitting on this node then cancel
            # exactly (the discontinuous profile samples 1/2 there).
            j = 2 * int(np.argmin(np.abs(nodes[2:-1:2] - radius))) + 2
            j = min(max(j, 4), M - 4)
            hbar = 0.5 * min(radius - nodes[j - 2], nodes[j + 2] - radius)
            nodes[j - 2 : j + 3] = radius + hbar * np.arange(-2.0, 3.0)
            nodes[j - 3] = 0.5 * (nodes[j - 4] + nodes[j - 2])
            nodes[j + 3] = 0.5 * (nodes[j + 2] + nodes[j + 4])
        return cls(N, nodes)

    @classmethod
    def focused(
        cls,
        N: int,
        R: float,
        M: int,
        core_width: float,
        core_fraction: float = 0.55,
    ) -> "RadialGrid":
        """Mesh concentrating a fixed share of the nodes on [0, 4*core_width].

        Used for near-critical groundstates that concentrate at a known
        scale: the core region gets nearly uniform fine spacing, followed by
        a geometric transition and a uniform tail reaching R.
        """
        if not 0.0 < 8.0 * core_width < R:
            raise ValueError("core width must satisfy 0 < 8*core_width < R")
        M = int(M) + int(M) % 2
        n_core = int(core_fraction * M)
        g1, g2 = 1.003, 1.05
        h0 = 4.0 * core_width * (g1 - 1.0) / (g1**n_core - 1.0)
        core = h0 * g1 ** np.arange(n_core)

        def tail_spacings(h_max: float) -> np.ndarray:
            h = core[-1] * g2 ** np.arange(1, M)
            h = np.minimum(h, h_max)
            return h[: M - n_core]

        lo, hi = core[-1], R
        for _ in range(80):
            h_max = 0.5 * (lo + hi)
            if core.sum() + tail_spacings(h_max).sum() < R:
                lo = h_max
            else:
                hi = h_max
        spacings = np.concatenate([core, tail_spacings(hi)])
        spacings *= R / spacings.sum()
        nodes = np.concatenate([[0.0], np.cumsum(spacings)])
        nodes[-1] = R
        return cls(N, nodes)

    # -- quadrature and norms ----------------------------------------------

    def integrate(self, values: np.ndarray) -> float:
        """Integral over R^N of the radial profile."""
        return float(self.weights @ np.asarray(values, dtype=float))

    def lq_norm(self, values: np.ndarray, q: float) -> float:
        """Lebesgue norm (int |u|^q)^{1/q}, q >= 1."""
        if q < 1.0:
            raise ValueError(f"Lebesgue exponent must satisfy q >= 1, got {q}")
        return float(self.integrate(np.abs(values) ** q) ** (1.0 / q))

    def kinetic(self, values: np.ndarray) -> float:
        """int |grad u|^2 via segment slopes against exact r^{N-1} moments."""
        slopes = np.diff(values) / self.spacings
        return float(self.seg_moments @ slopes**2)

    def energy_mass(self, values: np.ndarray) -> float:
        """int u^2 against the hat masses (the energy path's quadrature)."""
        return float(self.hat_masses @ np.asarray(values, dtype=float) ** 2)

    def h1_seminorms(self, values: np.ndarray) -> tuple[float, float]:
        """(kinetic, mass) = (int |grad u|^2, int u^2), energy-path weights."""
        return self.kinetic(values), self.energy_mass(values)

    def h1_norm(self, values: np.ndarray) -> float:
        kin, mass = self.h1_seminorms(values)
        return float(np.sqrt(kin + mass))

    def derivative(self, values: np.ndarray) -> np.ndarray:
        """Nodal u'(r): 3-point interior formula, u'(0) = 0 by symmetry."""
        u = np.asarray(values, dtype=float)
        r = self.nodes
        du = np.empty_like(u)
        hm, hp = r[1:-1] - r[:-2], r[2:] - r[1:-1]
        du[1:-1] = (
            hm**2 * u[2:] - hp**2 * u[:-2] + (hp**2 - hm**2) * u[1:-1]
        ) / (hm * hp * (hm + hp))
        du[0] = 0.0
        h1, h2 = r[-1] - r[-2], r[-1] - r[-3]
        du[-1] = (u[-1] - u[-2]) / h1 + (h1 / h2) * ((u[-1] - u[-3]) / h2 - (u[-1] - u[-2]) / h1)
        return du

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        """Conservative radial Laplacian (r^{N-1} u')' / r^{N-1} at the nodes.

        Interface fluxes (seg_moment/h) * (du/h) make this exactly the
        variational operator of the segment kinetic form under hat masses.
        """
        u = np.asarray(values, dtype=float)
        flux = self.seg_moments * np.diff(u) / self.spacings**2
        div = np.zeros_like(u)
        div[:-1] += flux
        div[1:] -= flux
        return div / self.hat_masses

    # -- profiles ------------------------------------------------------------

    def dilate(self, values: np.ndarray, tau: float) -> np.ndarray:
        """Resample r -> u(r/tau) with linear interpolation, zero beyond R."""
        if not tau > 0.0:
            raise ValueError(f"dilation parameter must be positive, got {tau}")
        return np.interp(self.nodes / tau, self.nodes, values, right=0.0)

    def ball_indicator(self, radius: float) -> np.ndarray:
        """Indicator of the ball |x| < radius; a node exactly on the boundary
        gets the midpoint value 1/2, which keeps the quadrature second order."""
        vals = np.where(self.nodes < radius, 1.0, 0.0)
        vals[np.isclose(self.nodes, radius, rtol=0.0, atol=1e-12 * self.R)] = 0.5
        return vals

    def truncation_ratio(self, values: np.ndarray) -> float:
        """|u(R)| / max|u|, the reported domain-truncation diagnostic."""
        peak = float(np.max(np.abs(values)))
        return float(np.abs(values[-1]) / peak) if peak > 0.0 else 0.0


@dataclass
class RadialFunction:
    """Sampled radial profile tied to its grid."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.nodes.shape:
            raise ValueError("profile length does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("profile contains non-finite samples")

    def integrate(self) -> float:
        return self.grid.integrate(self.values)

    def lq_norm(self, q: float) -> float:
        return self.grid.lq_norm(self.values, q)

    def h1_seminorms(self) -> tuple[float, float]:
        return self.grid.h1_seminorms(self.values)

    def h1_norm(self) -> float:
        return self.grid.h1_norm(self.values)

    def dilate(self, tau: float) -> "RadialFunction":
        return RadialFunction(self.grid, self.grid.dilate(self.values, tau))


def from_callable(grid: RadialGrid, f) -> RadialFunction:
    """Sample a radial function f(r) on the grid."""
    return RadialFunction(grid, f(grid.nodes))


def save_profile(path, u: RadialFunction) -> None:
    """Write the profile as CSV with header r,u (17 significant digits)."""
    with open(path, "w") as fh:
        fh.write("r,u\n")
        for r, v in zip(u.grid.nodes, u.values):
            fh.write(f"{r:.16e},{v:.16e}\n")


def load_profile(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a profile CSV back; radii must be strictly increasing."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns r,u")
    r, values = data[:, 0], data[:, 1]
    if np.any(np.diff(r) <= 0.0):
        raise ValueError(f"{path}: radii are not strictly increasing")
    return r, values
