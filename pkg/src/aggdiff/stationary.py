"""Stationary states by damped fixed-point iteration with mass enforcement.

A stationary density solves rho = ((m-1) beta / m * (C - W*rho))_+^(1/(m-1))
with C pinned by unit mass. The solver alternates (a) a bisection for C at
frozen convolution and (b) a damped update of the density, and exits once
the iterate stalls below tolerance with a small stationarity defect.
Free-boundary states (densities with vacuum) are reached through the
positive-part truncation without any regularisation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import energy, spectral
from .errors import BisectFailed, NoConvergence, NoNegativeMode
from .potential import Potential, dominant_mode
from .spectral import Field, Grid, Mode

RESIDUAL_CAP = 1e-6


@dataclass(frozen=True)
class FixedPointConfig:
    """Iteration controls.

    damping: fraction of the raw update applied per sweep.
    tol: sup-norm of the applied iterate change at which to stop.
    bisect_tol: admissible mass defect of the normalising constant.
    kick: amplitude of the dominant-mode perturbation, relative to the
        flat height, used to escape the flat state.
    """

    damping: float = 0.5
    max_iter: int = 50_000
    tol: float = 1e-10
    bisect_tol: float = 1e-12
    kick: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must be in (0, 1], got {self.damping}")
        if self.tol <= 0 or self.bisect_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class FixedPointResult:
    state: Field
    residual: float
    iterations: int
    damping_used: float


def _sc_values(phi: np.ndarray, beta: float, m: float, C: float) -> np.ndarray:
    base = np.maximum((m - 1.0) * beta / m * (C - phi), 0.0)
    return base ** (1.0 / (m - 1.0))


def sc_map(rho: Field, W: Potential, beta: float, m: float, C: float) -> Field:
    """One application of the self-consistency map at a fixed constant C."""
    if m <= 1:
        raise ValueError(f"m must be > 1, got {m}")
    phi = spectral.convolve(W, rho).values
    return Field(rho.grid, _sc_values(phi, beta, m, C))


def _mass_of(phi: np.ndarray, vol: float, beta: float, m: float, C: float) -> float:
    return float(vol * np.sum(_sc_values(phi, beta, m, C)))


def mass_bisect(phi, beta: float, m: float, grid: Grid | None = None, bisect_tol: float = 1e-12) -> float:
    """The constant C at which the mapped density has unit mass.

    The mass is continuous and nondecreasing in C and strictly increasing
    once positive, so a bracket [min phi, max phi + m/((m-1) beta) *
    rho_inf^(m-1)] always contains the unique root. Bisection runs until
    the mass defect is below bisect_tol or the bracket collapses to the
    floating-point resolution of C; in the latter case the root is exact
    to one ulp even though a cell at the free boundary makes the mass too
    steep to meet the tolerance literally.
    """
    if m <= 1:
        raise ValueError(f"m must be > 1, got {m}")
    if isinstance(phi, Field):
        grid = phi.grid
        phi_vals = phi.values
    else:
        if grid is None:
            raise ValueError("grid required when phi is a raw array")
        phi_vals = np.asarray(phi, dtype=float)
    vol = grid.cell_volume
    rho_inf = grid.L**-grid.d
    lo = float(phi_vals.min())
    hi = float(phi_vals.max()) + m / ((m - 1.0) * beta) * rho_inf ** (m - 1.0)
    m_lo = _mass_of(phi_vals, vol, beta, m, lo)
    m_hi = _mass_of(phi_vals, vol, beta, m, hi)
    for _ in range(64):  # pathological phi only; the analytic bracket is exact
        if m_lo <= 1.0 <= m_hi:
            break
        if m_hi < m_lo:
            raise BisectFailed("mass is not monotone across the bracket")
        lo, hi = lo - (hi - lo), hi + (hi - lo)
        m_lo = _mass_of(phi_vals, vol, beta, m, lo)
        m_hi = _mass_of(phi_vals, vol, beta, m, hi)
    else:
        raise BisectFailed("could not bracket the mass-normalising constant")
    if m_hi < m_lo:
        raise BisectFailed("mass is not monotone across the bracket")
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        m_mid = _mass_of(phi_vals, vol, beta, m, mid)
        if abs(m_mid - 1.0) <= bisect_tol:
            return mid
        if m_mid < 1.0:
            lo = mid
        else:
            hi = mid
        mid = 0.5 * (lo + hi)
        if hi - lo <= 4.0 * np.spacing(max(abs(lo), abs(hi))):
            return mid
    return mid


def _mass_constant(
    phi_vals: np.ndarray,
    beta: float,
    m: float,
    grid: Grid,
    bisect_tol: float,
    c_init: float | None,
) -> float:
    """Warm-started Newton for the mass constant, bisection as fallback.

    The mass is smooth and strictly increasing wherever positive, so
    Newton from the previous iteration's constant converges in a few
    steps; any sign of trouble falls back to the bracketed bisection.
    """
    if c_init is None:
        return mass_bisect(phi_vals, beta, m, grid=grid, bisect_tol=bisect_tol)
    vol = grid.cell_volume
    scale = (m - 1.0) * beta / m
    c = c_init
    for _ in range(40):
        base = np.maximum(scale * (c - phi_vals), 0.0)
        mass = vol * float(np.sum(base ** (1.0 / (m - 1.0))))
        defect = mass - 1.0
        if abs(defect) <= bisect_tol:
            return c
        pos = base > 0.0
        if not pos.any():
            break
        deriv = vol * scale / (m - 1.0) * float(np.sum(base[pos] ** ((2.0 - m) / (m - 1.0))))
        if not np.isfinite(deriv) or deriv <= 0.0:
            break
        step = defect / deriv
        if not np.isfinite(step):
            break
        c_new = c - step
        if abs(c_new - c) <= 2.0 * np.spacing(abs(c)):
            return c_new
        c = c_new
    return mass_bisect(phi_vals, beta, m, grid=grid, bisect_tol=bisect_tol)


def kick_mode(W: Potential) -> Mode:
    """Mode along which solvers perturb the flat state: the dominant one,
    or the first axis mode when the kernel is stable."""
    try:
        return dominant_mode(W).k_sharp
    except NoNegativeMode:
        return (1,) + (0,) * (W.d - 1)


def kicked(state: Field, W: Potential, amplitude_rel: float) -> Field:
    """Add a small dominant-mode bump and project back to a density."""
    grid = state.grid
    rho_inf = grid.L**-grid.d
    bump = amplitude_rel * rho_inf * spectral.mode_field(grid, kick_mode(W)).values
    vals = np.maximum(state.values + bump, 0.0)
    total = grid.cell_volume * vals.sum()
    return Field(grid, vals / total)


# Consecutive anti-correlated updates tolerated before the damping halves.
_OSCILLATION_WINDOW = 100
_MIN_DAMPING = 1.0 / 64.0


def _mode_damping(W: Potential, beta: float, m: float, grid: Grid) -> list[tuple[np.ndarray, float]]:
    """Per-mode damping reductions for strongly repulsive kernel modes.

    The fixed-point map's flat-state gain on kernel mode k is
    -(beta/m) rho_inf^(2-m) W_hat(k)/N_k; large positive coefficients turn
    this strongly negative and the plain damped update oscillates. Scaling
    the update on those modes by 1/(1 + |gain|) keeps it contractive while
    leaving every other direction (the growing mode included) at full
    strength. Returns (basis values, scale) pairs with scale < 1.
    """
    rho_inf = grid.L**-grid.d
    out: list[tuple[np.ndarray, float]] = []
    for k in sorted(W.modes):
        gain = -(beta / m) * rho_inf ** (2.0 - m) * W.modes[k] / spectral.norm_const(k, grid.L)
        if gain < -1.0:
            scale = 1.0 / (1.0 + abs(gain))
            for v in spectral.sym_variants(k):
                out.append((spectral.mode_field(grid, v).values, scale))
    return out


def solve(
    W: Potential,
    beta: float,
    m: float,
    init: Field,
    config: FixedPointConfig = FixedPointConfig(),
) -> FixedPointResult:
    """Damped fixed-point iteration from a density initial guess.

    Exits once the applied sup-norm change falls below tol and the
    stationarity defect is below 1e-6; raises NoConvergence (carrying the
    last iterate) when the iteration cap is reached. Strongly repulsive
    kernel modes receive reduced damping (see _mode_damping); if the
    change still stops improving for a long stretch the global damping is
    halved, which settles free-boundary cells that would otherwise flip in
    and out of the support.
    """
    if m <= 1:
        raise ValueError(f"m must be > 1, got {m}")
    grid = init.grid
    rho = init.values.copy()
    theta_damp = config.damping
    mode_scales = _mode_damping(W, beta, m, grid)
    vol = grid.cell_volume
    best_change = np.inf
    stall = 0
    change = np.inf
    C = None
    for it in range(1, config.max_iter + 1):
        phi = spectral.convolve(W, Field(grid, rho)).values
        C = _mass_constant(phi, beta, m, grid, config.bisect_tol, C)
        target = _sc_values(phi, beta, m, C)
        delta = target - rho
        step_vals = theta_damp * delta
        for e_v, scale in mode_scales:
            coef = vol * float(np.sum(delta * e_v))
            step_vals = step_vals + theta_damp * (scale - 1.0) * coef * e_v
        change = float(np.max(np.abs(step_vals)))
        rho = rho + step_vals
        if change < best_change * (1.0 - 1e-3):
            best_change = change
            stall = 0
        else:
            stall += 1
            if stall >= _STALL_WINDOW and theta_damp > _MIN_DAMPING:
                theta_damp *= 0.5
                stall = 0
        if change <= config.tol:
            total = grid.cell_volume * rho.sum()
            state = Field(grid, rho / total)
            defect = energy.stationarity_residual(state, W, beta, m).sup_defect
            if defect <= RESIDUAL_CAP:
                return FixedPointResult(
                    state=state, residual=defect, iterations=it, damping_used=theta_damp
                )
    state = Field(grid, rho)
    defect = energy.stationarity_residual(state, W, beta, m).sup_defect
    raise NoConvergence(
        f"no convergence after {config.max_iter} iterations "
        f"(last change {change:.3e}, residual {defect:.3e})",
        state=state,
        residual=defect,
        iterations=config.max_iter,
    )


@dataclass(frozen=True)
class BranchSample:
    """One continuation point; state is None when the solve failed."""

    beta: float
    state: Field | None
    residual: float
    iterations: int
    converged: bool


def continue_branch(
    W: Potential,
    m: float,
    beta_grid,
    grid: Grid,
    config: FixedPointConfig = FixedPointConfig(),
    init: Field | None = None,
) -> list[BranchSample]:
    """Warm-started continuation along a sorted beta grid.

    Each point starts from the previous converged state plus a fresh
    dominant-mode kick; failures are recorded (they flag folds) without
    aborting the sweep.
    """
    betas = list(beta_grid)
    if betas != sorted(betas) and betas != sorted(betas, reverse=True):
        raise ValueError("beta_grid must be sorted ascending or descending")
    current = init if init is not None else spectral.flat_state(grid)
    samples: list[BranchSample] = []
    for b in betas:
        start = kicked(current, W, config.kick)
        try:
            res = solve(W, b, m, start, config)
            samples.append(
                BranchSample(
                    beta=b,
                    state=res.state,
                    residual=res.residual,
                    iterations=res.iterations,
                    converged=True,
                )
            )
            current = res.state
        except NoConvergence as exc:
            samples.append(
                BranchSample(
                    beta=b,
                    state=None,
                    residual=float(exc.residual) if exc.residual is not None else float("nan"),
                    iterations=exc.iterations or config.max_iter,
                    converged=False,
                )
            )
            # Restart the continuation from flat after a failure.
            current = spectral.flat_state(grid)
    return samples
