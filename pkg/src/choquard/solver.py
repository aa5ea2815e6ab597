"""Groundstate candidates by projected Sobolev-gradient descent.

The level m_p = inf { I_p(u) : P_p(u) = 0 } is approached by minimizing the
reduced functional u -> max_tau I_p(u_tau): every iterate is re-projected
onto the constraint set through the fiber maximum (repeated dilation until
the fiber root sits at tau = 1), so its energy IS the reduced functional,
and on the constraint the reduced gradient coincides with the plain energy
gradient. Descent directions are preconditioned by the H^1 operator
(-lap + kappa)^{-1} (tridiagonal solve), steps are backtracked on the
projected energy, and iterates are replaced by their absolute value, which
cannot increase any energy term.

Subcritical continuation re-solves along an increasing exponent schedule,
warm-starting each solve from the previous minimizer re-projected at the
new exponent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .grid import RadialFunction, RadialGrid
from .model import (
    EnergyBreakdown,
    ProblemParams,
    breakdown_from_terms,
    el_residual,
    energy_breakdown,
    project_pohozaev,
    projected_energy,
    validate_conditions,
)
from .riesz import RieszOperator, build_kernel

_PROJECT_ITERS = 30
_PROJECT_TOL = 1e-9
_COLLAPSE_TAU = 1e3
_MONOTONE_SLACK = 1e-8
# reject iterates whose kinetic energy piles into the innermost cells: they
# are sub-mesh spikes whose discrete energy undercuts the continuum level
_CORE_SEGMENTS = 8
_CORE_KINETIC_CAP = 0.5
# exponents this close to critical (fractions of the admissible interval)
# are reached through subcritical warm-up stages instead of a cold start
_STAGE_TRIGGER = 0.12
_STAGE_OFFSETS = (0.3, 0.1, 0.03, 0.01)


@dataclass(frozen=True)
class SolveOptions:
    max_iterations: int = 500
    step: float = 1.0
    shrink: float = 0.5
    el_tol: float = 1e-3
    pohozaev_tol: float = 1e-6
    seed: int = 0
    n_starts: int = 3

    def __post_init__(self):
        if self.el_tol <= 0.0 or self.pohozaev_tol <= 0.0:
            raise ValueError("residual tolerances must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("backtracking factor must lie in (0, 1)")


@dataclass
class SolveReport:
    profile: RadialFunction
    breakdown: EnergyBreakdown
    m_p: float
    el_residual: float
    pohozaev_residual: float
    iterations: int
    converged: bool
    status: str
    truncation: float
    multistart_spread: float = 0.0
    positive: bool | None = None
    radially_nonincreasing: bool | None = None
    decay_bound_ok: bool | None = None
    below_threshold: bool | None = None
    history: list = field(default_factory=list, repr=False)


@dataclass
class ContinuationReport:
    p_values: np.ndarray
    m_values: np.ndarray
    el_residuals: np.ndarray
    pohozaev_residuals: np.ndarray
    converged: list
    limit_estimate: float
    monotonicity_diagnostic: float
    reports: list = field(default_factory=list, repr=False)


def default_initial(grid: RadialGrid, width: float = 1.2) -> RadialFunction:
    """Unit-mass Gaussian; the projection fixes the overall dilation anyway."""
    values = np.exp(-((grid.nodes / width) ** 2) / 2.0)
    return RadialFunction(grid, values / np.sqrt(grid.energy_mass(values)))


def _h1_cholesky(grid: RadialGrid, kappa: float):
    """Banded Cholesky factor of the H^1 matrix (stiffness + kappa mass)."""
    n = grid.nodes.size
    coeff = grid.seg_moments / grid.spacings**2
    ab = np.zeros((2, n))
    ab[1, :-1] += coeff
    ab[1, 1:] += coeff
    ab[0, 1:] = -coeff
    ab[1] += kappa * grid.hat_masses
    return cholesky_banded(ab, lower=False)


class _Collapse(Exception):
    """Iterate left the admissible set (vanishing or concentration)."""


def _calibrate_amplitude(pp: ProblemParams, op: RieszOperator, values: np.ndarray) -> np.ndarray:
    """Rescale the start so its fiber maximum sits at tau = O(1).

    An uncalibrated start can have a tiny nonlocal coefficient and a fiber
    root far beyond the truncation radius, where dilation is meaningless.
    tau_0 is strictly decreasing in the amplitude, so bisect on it.
    """
    grid = op.grid
    a = grid.kinetic(values)
    b = pp.kappa * grid.energy_mass(values)

    def fiber_root(amp: float) -> float:
        G = pp.g_total(amp * values)
        c = op.pairing_values(G, G)
        if not np.isfinite(c) or c <= 0.0:
            return np.inf
        return project_pohozaev(breakdown_from_terms(amp * amp * a, amp * amp * b, c, pp.d), pp.d)

    lo, hi = 1.0, 1.0
    for _ in range(60):
        if fiber_root(hi) <= 1.0:
            break
        hi *= 2.0
    else:
        raise _Collapse("vanished: could not calibrate the start amplitude")
    for _ in range(60):
        if fiber_root(lo) >= 1.0 or not np.isfinite(fiber_root(lo)):
            break
        lo /= 2.0
    for _ in range(80):
        mid = np.sqrt(lo * hi)
        t = fiber_root(mid)
        if 0.9 <= t <= 1.1:
            return mid * values
        if t > 1.0:
            lo = mid
        else:
            hi = mid
    return np.sqrt(lo * hi) * values


def _reproject(pp: ProblemParams, op: RieszOperator, values: np.ndarray) -> tuple[np.ndarray, EnergyBreakdown]:
    """Dilate until the fiber root sits at tau = 1 (constraint P_p = 0).

    The fixed point contracts at the rate of the resampling error, so a few
    passes reach tau = 1 to 1e-9; profiles for which it stops contracting
    (sub-grid concentration) are rejected rather than returned off-constraint.
    """
    grid = op.grid
    drift = 1.0
    for _ in range(_PROJECT_ITERS):
        if not np.all(np.abs(values) < 1e12):
            raise _Collapse("concentrated: profile amplitude diverged")
        slopes_sq = grid.seg_moments * (np.diff(values) / grid.spacings) ** 2
        total_kin = slopes_sq.sum()
        if total_kin > 0.0 and slopes_sq[:_CORE_SEGMENTS].sum() > _CORE_KINETIC_CAP * total_kin:
            raise _Collapse("concentrated beyond mesh resolution")
        eb = energy_breakdown(pp, op, RadialFunction(grid, values))
        if eb.nonlocal_ <= 1e-14 * (eb.kinetic + eb.mass):
            raise _Collapse("vanished: nonlocal coefficient collapsed to zero")
        tau = project_pohozaev(eb, pp.d)
        drift *= tau
        if drift > _COLLAPSE_TAU or drift < 1.0 / _COLLAPSE_TAU:
            raise _Collapse("concentrated: fiber root drifted beyond bounds")
        if abs(tau - 1.0) <= _PROJECT_TOL:
            return values, eb
        values = grid.dilate(values, tau)
    raise _Collapse("projection did not stabilize on this profile")


def _newton_polish(pp, op, values, max_steps=6):
    """Damped Newton on the strong-form equation, from a near-minimizer.

    The Jacobian couples the tridiagonal H^1 part with the dense nonlocal
    rank structure; a few steps drive the Euler-Lagrange field to roundoff.
    Returns the polished profile (not re-projected).
    """
    grid = op.grid
    n = values.size
    coeff = grid.seg_moments / grid.spacings**2
    idx = np.arange(n - 1)
    wt = grid.hat_masses / grid.area

    def el_vector(v):
        G = pp.g_total(v)
        appG = op.apply_values(G)
        field = -grid.laplacian(v) + pp.kappa * v - appG * pp.g_prime(v)
        return grid.hat_masses * field, appG

    v = values.copy()
    F, appG = el_vector(v)
    norm = float(np.sqrt(F @ F))
    for _ in range(max_steps):
        gp = pp.g_prime(v)
        absv = np.abs(v)
        gpp = pp.p * pp.mu * (pp.p - 1.0) * absv ** (pp.p - 2.0)
        if pp.nl.nu > 0.0:
            gpp = gpp + pp.nl.nu * (pp.nl.q - 1.0) * absv ** (pp.nl.q - 2.0)
        J = np.zeros((n, n))
        J[idx, idx] += coeff
        J[idx + 1, idx + 1] += coeff
        J[idx, idx + 1] -= coeff
        J[idx + 1, idx] -= coeff
        diag = np.arange(n)
        J[diag, diag] += pp.kappa * grid.hat_masses - grid.hat_masses * gpp * appG
        J -= (grid.hat_masses * gp)[:, None] * op.kernel * (wt * gp)[None, :]
        try:
            delta = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            break
        stepped = False
        t = 1.0
        for _ in range(8):
            trial = np.abs(v - t * delta)
            if np.all(np.isfinite(trial)):
                F_new, appG_new = el_vector(trial)
                norm_new = float(np.sqrt(F_new @ F_new))
                if norm_new < norm:
                    v, F, appG, norm = trial, F_new, appG_new, norm_new
                    stepped = True
                    break
            t *= 0.5
        if not stepped:
            break
    return v


def _descend(pp, op, start_values, opts, progress=None, polish=True):
    """One projected-descent run; returns a SolveReport without certify flags."""
    grid = op.grid
    chol = _h1_cholesky(grid, pp.kappa)
    u, eb = _reproject(pp, op, _calibrate_amplitude(pp, op, np.abs(start_values)))
    energy = eb.energy
    step = opts.step
    history = []
    status, converged = "max-iterations", False
    iterations = 0
    el_res = np.inf
    prev_u = prev_grad = None

    for iterations in range(1, opts.max_iterations + 1):
        G = pp.g_total(u)
        coupling = op.apply_values(G)
        el_field = -grid.laplacian(u) + pp.kappa * u - coupling * pp.g_prime(u)
        h1 = np.sqrt(grid.kinetic(u) + grid.energy_mass(u))
        el_res = float(np.sqrt(grid.hat_masses @ el_field**2) / h1)
        p_res = abs(eb.pohozaev) / h1**2
        history.append((iterations, energy, el_res, p_res, step))
        if progress is not None:
            progress(iterations, energy, el_res, p_res)
        if el_res <= opts.el_tol and p_res <= opts.pohozaev_tol:
            status, converged = "converged", True
            break

        grad = grid.hat_masses * el_field
        direction = cho_solve_banded((chol, False), grad)
        # Barzilai-Borwein step in the H^1 metric seeds the backtracking;
        # descent stays monotone because trials are still energy-checked
        step = min(opts.step, step / opts.shrink)
        if prev_u is not None:
            du, dg = u - prev_u, grad - prev_grad
            numer = float(du @ dg)
            denom = float(dg @ cho_solve_banded((chol, False), dg))
            if numer > 0.0 and denom > 0.0:
                step = numer / denom
        prev_u, prev_grad = u.copy(), grad
        # keep the first trial a bounded relative update of the iterate
        dir_h1 = np.sqrt(grid.kinetic(direction) + grid.energy_mass(direction))
        cap = 0.8 * h1 / dir_h1 if dir_h1 > 0.0 else opts.step
        accepted = False
        step = min(step, cap)
        for _ in range(40):
            raw = u - step * direction
            trial = np.abs(raw)
            # evenness of the energy: dropping signs cannot raise the kinetic
            # term, and leaves mass and nonlocal terms untouched
            assert grid.kinetic(trial) <= grid.kinetic(raw) * (1.0 + _MONOTONE_SLACK)
            try:
                # fiber maximum in closed form: cheap reject without dilating
                trial_eb = energy_breakdown(pp, op, RadialFunction(grid, trial))
                trial_level = projected_energy(trial_eb, pp.d)
                if trial_level < energy:
                    u, eb = _reproject(pp, op, trial)
                    energy = eb.energy
                    accepted = True
                    break
            except (_Collapse, ValueError):
                pass
            step *= opts.shrink
        if not accepted:
            # no further descent available; residuals decide convergence
            converged = el_res <= opts.el_tol and p_res <= opts.pohozaev_tol
            status = "converged" if converged else "line-search stalled"
            break

    # Newton endgame: the projected descent stalls at the constrained
    # minimizer, whose strong-form defect reflects the discrete Pohozaev
    # mismatch of the quadrature; polishing the Euler-Lagrange system and
    # re-projecting once lands much closer to both residual targets.
    if polish and u.size <= 4200 and el_res > opts.el_tol / 3.0:
        try:
            polished, eb_pol = _reproject(pp, op, _newton_polish(pp, op, u))
            if el_residual(pp, op, RadialFunction(grid, polished)) < el_residual(
                pp, op, RadialFunction(grid, u)
            ):
                u, eb = polished, eb_pol
        except (_Collapse, ValueError):
            pass

    profile = RadialFunction(grid, u)
    final_el = el_residual(pp, op, profile)
    h1 = profile.h1_norm()
    final_pres = abs(eb.pohozaev) / h1**2
    if final_el <= opts.el_tol and final_pres <= opts.pohozaev_tol:
        status, converged = "converged", True
    return SolveReport(
        profile=profile,
        breakdown=eb,
        m_p=eb.energy,
        el_residual=final_el,
        pohozaev_residual=final_pres,
        iterations=iterations,
        converged=converged,
        status=status,
        truncation=grid.truncation_ratio(u),
        history=history,
    )


def minimize(
    pp: ProblemParams,
    op: RieszOperator,
    init: RadialFunction,
    opts: SolveOptions,
    override_conditions: bool = False,
    progress=None,
    staged: bool = True,
) -> SolveReport:
    """Best-energy multi-start descent for the level m_p at this exponent.

    Near the upper critical exponent the minimizer concentrates, so a cold
    start at p = p* risks the sub-mesh funnel; the descent then follows the
    subcritical-approximation route: multi-start at a safely subcritical
    exponent, then warm-start continuation stages up to the target.
    """
    if init.grid is not op.grid:
        raise ValueError("initial profile lives on a different grid")
    if not np.any(init.values != 0.0):
        raise ValueError("initial profile must be nonzero")
    report = validate_conditions(pp.nl, pp.d)
    if not report.ok and not override_conditions:
        raise ValueError(
            "nonlinearity fails the growth conditions: " + "; ".join(report.messages)
        )

    stages = []
    width = pp.d.p_upper - pp.d.p_lower
    if staged and pp.p > pp.d.p_upper - _STAGE_TRIGGER * width:
        stages = [
            pp.p - off * width
            for off in _STAGE_OFFSETS
            if pp.d.p_lower < pp.p - off * width < pp.p
        ]
    if not stages:
        return _multistart(pp, op, init, opts, progress)

    stage_opts = replace(opts, max_iterations=max(80, opts.max_iterations // 4))
    try:
        first = _multistart(pp.with_p(stages[0]), op, init, stage_opts, progress, polish=False)
        warm = first.profile.values
        for q in stages[1:]:
            warm = _descend(
                pp.with_p(q), op, warm, stage_opts, progress, polish=False
            ).profile.values
        final = _descend(pp, op, warm, opts, progress)
    except _Collapse as exc:
        raise RuntimeError(str(exc)) from exc
    final.multistart_spread = first.multistart_spread
    return final


def _multistart(pp, op, init, opts, progress=None, polish=True) -> SolveReport:
    rng = np.random.default_rng(opts.seed)
    starts = [init.values]
    for _ in range(max(0, opts.n_starts - 1)):
        width = float(np.exp(rng.uniform(np.log(0.5), np.log(3.0))))
        starts.append(default_initial(op.grid, width).values)

    runs = []
    collapse = None
    for values in starts:
        try:
            runs.append(_descend(pp, op, values, opts, progress, polish=polish))
        except _Collapse as exc:
            collapse = exc
    if not runs:
        raise RuntimeError(str(collapse)) from collapse
    converged_runs = [r for r in runs if r.converged] or runs
    best = min(converged_runs, key=lambda r: r.m_p)
    levels = [r.m_p for r in converged_runs]
    best.multistart_spread = (
        (max(levels) - min(levels)) / abs(best.m_p) if len(levels) > 1 and best.m_p else 0.0
    )
    return best


def minimize_refined(
    pp: ProblemParams,
    op: RieszOperator,
    init: RadialFunction,
    opts: SolveOptions,
    progress=None,
    target_core_nodes: int = 420,
) -> tuple[SolveReport, RieszOperator]:
    """Solve, re-meshing once onto a core-focused grid if the minimizer
    concentrates below the resolution the residual targets require.

    Near the upper critical exponent the groundstate core carries the
    discrete Pohozaev mismatch: both residual bounds need a few hundred
    nodes across the half-maximum radius, which a general-purpose graded
    mesh cannot spare. Returns the report together with the operator whose
    grid the reported profile lives on.
    """
    rep = minimize(pp, op, init, opts, progress=progress)
    if rep.converged:
        return rep, op
    v = rep.profile.values
    grid = op.grid
    peak = float(np.max(v))
    below = np.nonzero(v < 0.5 * peak)[0]
    if below.size == 0:
        return rep, op
    width = float(grid.nodes[below[0]])
    core_nodes = int(np.count_nonzero(grid.nodes < width))
    if width >= grid.R / 8.0 or core_nodes >= target_core_nodes:
        return rep, op

    focus = RadialGrid.focused(grid.N, grid.R, grid.M, width)
    op2 = build_kernel(pp.d, focus)
    warm = RadialFunction(focus, np.interp(focus.nodes, grid.nodes, v))
    rep2 = minimize(
        pp, op2, warm, replace(opts, n_starts=1), progress=progress, staged=False
    )
    return (rep2, op2) if rep2.el_residual < rep.el_residual else (rep, op)


def certify(pp: ProblemParams, op: RieszOperator, rep: SolveReport) -> SolveReport:
    """Fill the structural flags of a report (diagnostics only, no solve)."""
    v = rep.profile.values
    grid = rep.profile.grid

    support = np.nonzero(v > 0.0)[0]
    positive = bool(
        support.size > 0 and np.all(v >= 0.0) and np.all(v[: support[-1] + 1] > 0.0)
    )

    scale = float(np.max(v) - np.min(v)) or 1.0
    nonincreasing = bool(np.all(np.diff(v) <= _MONOTONE_SLACK * scale))

    # radial nonincreasing L^2 bound: |u(r)| <= r^{-N/2} (N/|S^{N-1}|)^{1/2} ||u||_2
    r = grid.nodes[1:]
    bound = r ** (-grid.N / 2.0) * np.sqrt(grid.N / grid.area) * grid.lq_norm(v, 2.0)
    decay_ok = bool(np.all(np.abs(v[1:]) <= bound * (1.0 + 1e-9)))

    below = bool(rep.m_p < pp.constants.threshold) if pp.is_critical else None
    return replace(
        rep,
        positive=positive,
        radially_nonincreasing=nonincreasing,
        decay_bound_ok=decay_ok,
        below_threshold=below,
    )


def continuation(
    pp_template: ProblemParams,
    op: RieszOperator,
    schedule,
    opts: SolveOptions,
    progress=None,
) -> ContinuationReport:
    """Warm-started solves along an increasing exponent schedule."""
    schedule = np.asarray(list(schedule), dtype=float)
    if schedule.size == 0 or np.any(np.diff(schedule) <= 0.0):
        raise ValueError("exponent schedule must be nonempty and increasing")
    d = pp_template.d
    if schedule[0] <= d.p_lower or schedule[-1] > d.p_upper:
        raise ValueError(
            f"schedule must stay inside ({d.p_lower:.6g}, {d.p_upper:.6g}]"
        )

    reports = []
    warm = default_initial(op.grid)
    for k, p in enumerate(schedule):
        pp = pp_template.with_p(float(p))
        entry_opts = opts if k == 0 else replace(opts, n_starts=1)
        try:
            rep = minimize(pp, op, warm, entry_opts, progress=progress, staged=(k == 0))
            rep = certify(pp, op, rep)
            warm = rep.profile
        except (RuntimeError, ValueError) as exc:
            rep = None
            if progress is not None:
                progress(-1, float("nan"), float("nan"), float("nan"))
            reports.append((float(p), rep, str(exc)))
            continue
        reports.append((float(p), rep, rep.status))

    solved = [(p, rep) for p, rep, _ in reports if rep is not None]
    m = np.array([rep.m_p for _, rep in solved])
    p_ok = np.array([p for p, _ in solved])
    limit = float(m[-1]) if m.size else float("nan")
    jump = float(np.max(np.diff(m))) if m.size > 1 else 0.0
    return ContinuationReport(
        p_values=p_ok,
        m_values=m,
        el_residuals=np.array([rep.el_residual for _, rep in solved]),
        pohozaev_residuals=np.array([rep.pohozaev_residual for _, rep in solved]),
        converged=[rep.converged for _, rep in solved],
        limit_estimate=limit,
        monotonicity_diagnostic=jump,
        reports=reports,
    )
