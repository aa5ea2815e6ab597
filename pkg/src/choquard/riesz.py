"""Riesz potential I_alpha * v on radial profiles.

For radial v the convolution with A_alpha(N) |x - y|^{alpha - N} reduces to a
one-dimensional kernel

    k(r, s) = A_alpha(N) |S^{N-2}| (2 r s)^{(alpha-N)/2} Q(chi),
    Q(chi)  = int_0^pi (chi - cos t)^{(alpha-N)/2} sin^{N-2} t dt,
    chi     = (r^2 + s^2) / (2 r s),

so apply(v)(r) = int_0^inf k(r, s) v(s) s^{N-1} ds. Q depends on the single
variable chi - 1 = (r - s)^2 / (2 r s) >= 0 and is evaluated through a
log-log cubic spline of a densely tabulated adaptive quadrature; writing
chi - cos t = (chi - 1) + 2 sin^2(t/2) keeps the tabulation stable down to
chi - 1 ~ 1e-300.

The kernel has an integrable |r - s|^{alpha-1} singularity across the
diagonal (a genuine blow-up for alpha <= 1), so diagonal entries are not
point values. Entry (i, i) instead stores the exact hat-weighted mass of the
singular kernel, int k(r_i, s) hat_i(s) s^{N-1} ds / wtil_i, computed by
geometric panels that halve toward s = r_i and are closed with the analytic
geometric-series tail of the leading singular power (exact for a pure power,
never clamped). Off-diagonal entries remain plain point values under the hat
node weights, which matches the diagonal treatment to second order.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from .grid import RadialFunction, RadialGrid
from .specfun import DimensionPair, riesz_normalization, sphere_area

_TABLE_PER_DECADE = 200
_PANEL_NODES = 16
_DIAG_PANEL_NODES = 8
_DIAG_DEPTH = 1e-10  # innermost panel edge relative to the cell half-width


def _q_single(N: int, alpha: float, eps: float, gl_x, gl_w) -> float:
    """Q(1 + eps) by geometric theta-panels resolving the scale sqrt(2 eps)."""
    power = (alpha - N) / 2.0
    edges = [0.0, min(np.sqrt(2.0 * eps), np.pi / 2.0)]
    while edges[-1] < np.pi:
        edges.append(min(2.0 * edges[-1], np.pi))
    edges = np.asarray(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    t = (mid[:, None] + half[:, None] * gl_x[None, :]).ravel()
    w = (half[:, None] * gl_w[None, :]).ravel()
    vals = (eps + 2.0 * np.sin(t / 2.0) ** 2) ** power * np.sin(t) ** (N - 2)
    return float(w @ vals)


class _QTable:
    """Spline of log Q against log(chi - 1) for one (N, alpha)."""

    def __init__(self, N: int, alpha: float, eps_lo: float, eps_hi: float):
        gl_x, gl_w = leggauss(_PANEL_NODES)
        lo = np.floor(np.log10(eps_lo)) - 1.0
        hi = np.ceil(np.log10(eps_hi)) + 1.0
        n = int((hi - lo) * _TABLE_PER_DECADE) + 1
        x = np.linspace(lo * np.log(10.0), hi * np.log(10.0), n)
        q = np.array([_q_single(N, alpha, e, gl_x, gl_w) for e in np.exp(x)])
        if not (np.all(np.isfinite(q)) and np.all(q > 0.0)):
            raise RuntimeError(
                f"angular kernel integral did not converge for N={N}, alpha={alpha}"
            )
        self.x_lo, self.x_hi = x[0], x[-1]
        self._spline = CubicSpline(x, np.log(q))

    def __call__(self, eps: np.ndarray) -> np.ndarray:
        x = np.log(eps)
        if np.any(x < self.x_lo) or np.any(x > self.x_hi):
            raise RuntimeError("chi - 1 outside the tabulated kernel range")
        return np.exp(self._spline(x))


_q_cache: dict[tuple[int, float, float, float], _QTable] = {}


def _q_table(N: int, alpha: float, eps_lo: float, eps_hi: float) -> _QTable:
    key = (N, alpha, np.floor(np.log10(eps_lo)), np.ceil(np.log10(eps_hi)))
    if key not in _q_cache:
        _q_cache[key] = _QTable(N, alpha, eps_lo, eps_hi)
    return _q_cache[key]


class RieszOperator:
    """Dense radial realization of v -> I_alpha * v on one grid."""

    def __init__(self, d: DimensionPair, grid: RadialGrid, kernel: np.ndarray):
        if grid.N != d.N:
            raise ValueError("grid dimension does not match DimensionPair")
        self.d = d
        self.grid = grid
        self.kernel = kernel
        # s^{N-1} ds node weights of the energy path (hat masses, not Simpson:
        # the solver needs one locally smooth lumped family across all terms)
        self._wtil = grid.hat_masses / grid.area

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        return self.kernel @ (self._wtil * values)

    def apply(self, v: RadialFunction) -> RadialFunction:
        if v.grid is not self.grid:
            raise ValueError("profile lives on a different grid")
        return RadialFunction(self.grid, self.apply_values(v.values))

    def pairing_values(self, u: np.ndarray, v: np.ndarray) -> float:
        """Bilinear form int (I_alpha * u) v over R^N."""
        return float(self.grid.hat_masses @ (np.asarray(v) * self.apply_values(u)))

    def pairing(self, u: RadialFunction, v: RadialFunction) -> float:
        if u.grid is not self.grid or v.grid is not self.grid:
            raise ValueError("profiles live on a different grid")
        return self.pairing_values(u.values, v.values)


def build_kernel(d: DimensionPair, grid: RadialGrid) -> RieszOperator:
    """Assemble the dense angular-average kernel for (N, alpha) on the grid."""
    N, alpha = d.N, d.alpha
    r = grid.nodes
    a_norm = riesz_normalization(d)
    area_full = sphere_area(N)
    ring = sphere_area(N - 1)  # |S^{N-2}|, the angular average's measure

    rp = r[1:]
    eps = np.subtract.outer(rp, rp) ** 2 / (2.0 * np.outer(rp, rp))
    off = eps > 0.0
    eps_pos = eps[off]
    table = _q_table(N, alpha, min(eps_pos.min() * _DIAG_DEPTH**2, 1e-24), eps_pos.max())

    kernel = np.zeros((r.size, r.size))
    block = np.zeros_like(eps)
    block[off] = table(eps_pos)
    block *= a_norm * ring * (2.0 * np.outer(rp, rp)) ** ((alpha - N) / 2.0) * off
    kernel[1:, 1:] = block

    # r = 0 has no angular dependence: k(0, s) = A |S^{N-1}| s^{alpha-N}.
    kernel[0, 1:] = a_norm * area_full * rp ** (alpha - N)
    kernel[1:, 0] = kernel[0, 1:]
    # hat-weighted diagonal at the origin, in closed form:
    # int_0^{r_1} s^{alpha-1} (1 - s/r_1) ds = r_1^alpha / (alpha (alpha+1))
    wtil0 = r[1] ** N / (N * (N + 1))
    kernel[0, 0] = a_norm * area_full * r[1] ** alpha / (alpha * (alpha + 1)) / wtil0

    _hat_diagonal(kernel, d, grid, table, a_norm, ring)
    return RieszOperator(d, grid, kernel)


def _hat_diagonal(kernel, d, grid, table, a_norm, ring) -> None:
    """Diagonal entries as exact hat-weighted masses of the singular kernel.

    K[i, i] wtil_i = int k(r_i, s) hat_i(s) s^{N-1} ds over the hat support,
    by geometric panels halving toward s = r_i down to _DIAG_DEPTH of each
    side, plus the analytic geometric-series tail of the leading power
    |s - r_i|^{alpha-1} (the hat factor is 1 there to leading order).
    """
    N, alpha = d.N, d.alpha
    r = grid.nodes
    wtil = grid.hat_masses / grid.area
    gl_x, gl_w = leggauss(_DIAG_PANEL_NODES)
    power = (alpha - N) / 2.0
    for i in range(1, r.size):
        ri = r[i]
        total = 0.0
        last_panel = 0.0
        for sign, width in ((-1.0, ri - r[i - 1]), (1.0, r[i + 1] - ri if i + 1 < r.size else 0.0)):
            if width <= 0.0:
                continue
            edges = [width]
            while edges[-1] > _DIAG_DEPTH * width:
                edges.append(edges[-1] * 0.5)
            edges = np.asarray(edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            half = 0.5 * (edges[:-1] - edges[1:])
            x = (mid[:, None] + half[:, None] * gl_x[None, :]).ravel()
            w = (half[:, None] * gl_w[None, :]).ravel()
            s = ri + sign * x
            vals = (
                a_norm
                * ring
                * (2.0 * ri * s) ** power
                * table(x**2 / (2.0 * ri * s))
                * s ** (N - 1)
                * (1.0 - x / width)
            )
            contrib = w * vals
            total += float(np.sum(contrib))
            inner = float(np.sum(contrib[-_DIAG_PANEL_NODES:]))
            if not (np.isfinite(inner) and inner >= 0.0):
                raise RuntimeError(
                    f"diagonal kernel integral failed to converge at r = {ri}"
                )
            last_panel += inner
        kernel[i, i] = (total + last_panel / (2.0**alpha - 1.0)) / wtil[i]


def hls_optimizer_ratio(op: RieszOperator) -> float:
    """Rayleigh quotient of the HLS optimizer h = (1 + r^2)^{-(N+alpha)/2}.

    Returns pairing(h, h) / (A_alpha ||h||_{2N/(N+alpha)}^2), which approaches
    the sharp constant C_alpha(N) from below as the grid refines. The
    conformal-norm mass beyond the truncation radius must be negligible.
    """
    d, grid = op.d, op.grid
    N, alpha = d.N, d.alpha
    h = (1.0 + grid.nodes**2) ** (-(N + alpha) / 2.0)
    q = 2.0 * N / (N + alpha)
    total = grid.integrate(h**q)
    tail = grid.area * grid.R ** (-N) / N  # int_R^inf r^{N-1-2N} dr
    if tail / total > 1e-4:
        raise ValueError(
            f"truncation radius R={grid.R} leaves relative tail mass "
            f"{tail / total:.2e} > 1e-4 in the conformal norm"
        )
    a_norm = riesz_normalization(d)
    return op.pairing_values(h, h) / (a_norm * grid.lq_norm(h, q) ** 2)


# -- kernel cache ------------------------------------------------------------

_MAGIC = struct.Struct("<ddQd")  # N, alpha, M, R


def grid_hash(grid: RadialGrid) -> str:
    digest = hashlib.sha256()
    digest.update(np.int64(grid.N).tobytes())
    digest.update(grid.nodes.tobytes())
    return digest.hexdigest()[:16]


def kernel_cache_name(d: DimensionPair, grid: RadialGrid) -> str:
    return f"riesz_N{d.N}_a{d.alpha:.12g}_{grid_hash(grid)}.kern"


def save_kernel(path, op: RieszOperator) -> None:
    """Binary layout: little-endian (N, alpha, M, R) header, row-major entries."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC.pack(float(op.grid.N), op.d.alpha, op.grid.M, op.grid.R))
        fh.write(op.kernel.astype("<f8").tobytes())


def load_kernel(path, d: DimensionPair, grid: RadialGrid) -> RieszOperator:
    with open(path, "rb") as fh:
        header = fh.read(_MAGIC.size)
        n_f, alpha, m, radius = _MAGIC.unpack(header)
        if (int(n_f), m) != (d.N, grid.M) or alpha != d.alpha or radius != grid.R:
            raise ValueError(f"{path}: kernel header does not match (N, alpha, grid)")
        data = np.frombuffer(fh.read(), dtype="<f8")
    side = grid.M + 1
    if data.size != side * side:
        raise ValueError(f"{path}: truncated kernel file")
    return RieszOperator(d, grid, data.reshape(side, side).copy())
