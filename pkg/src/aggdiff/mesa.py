"""The large-m limit: constrained interaction energy and m-sweeps.

As the diffusion exponent grows, the entropy term flattens into the hard
constraint rho <= 1 and the free energy degenerates to the interaction
term alone. This module evaluates that limit functional, classifies its
minimisers by domain size and kernel stability, and checks the limit
empirically by sweeping stationary solves across increasing m.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import energy, spectral, stationary
from .errors import NoConvergence, NotADensity
from .potential import Potential, h_stability
from .spectral import Field, Grid
from .stationary import FixedPointConfig

PLATEAU_BAND = (0.95, 1.05)
SUP_SLACK = 0.05  # admissible overshoot of the unit ceiling at finite m
PLATEAU_STABLE_TOL = 0.05


class MesaCase(enum.Enum):
    INFEASIBLE = "Infeasible"
    UNIQUE_FLAT = "UniqueFlat"
    FLAT_OPTIMAL = "FlatOptimal"
    NONTRIVIAL_OPTIMAL = "NontrivialOptimal"


def mesa_energy(rho: Field, W: Potential) -> float:
    """Half the interaction form when rho <= 1 on the grid, else +inf."""
    if rho.max_value > 1.0:
        return math.inf
    return 0.5 * spectral.bilinear_form(W, rho)


def mesa_classify(L: float, d: int, W: Potential) -> MesaCase:
    """Minimiser structure of the limit functional from (L, d, W) alone.

    Domains smaller than unit volume admit no feasible density; exactly
    unit volume pins the flat state; above that, stability of the kernel
    decides between the flat state and a genuinely nontrivial minimiser.
    A zero kernel makes every feasible state optimal, flat included.
    """
    volume = L**d
    if volume < 1.0:
        return MesaCase.INFEASIBLE
    if volume == 1.0:
        return MesaCase.UNIQUE_FLAT
    if h_stability(W).stable:
        return MesaCase.FLAT_OPTIMAL
    return MesaCase.NONTRIVIAL_OPTIMAL


def clamp_to_unit(rho: Field) -> Field:
    """Project a density onto {0 <= rho <= 1, unit mass}.

    Caps the values at one and redistributes the clipped mass over the
    remaining headroom in proportion to it; a single pass is exact because
    no receiving cell can overshoot its own headroom.
    """
    grid = rho.grid
    vol = grid.cell_volume
    capped = np.minimum(rho.values, 1.0)
    deficit = 1.0 - vol * float(capped.sum())
    if deficit > 0.0:
        headroom = 1.0 - capped
        total_headroom = vol * float(headroom.sum())
        if total_headroom < deficit:
            raise NotADensity("domain volume below one; no feasible projection")
        capped = capped + (deficit / total_headroom) * headroom
    return Field.density(grid, capped, mass_tol=1e-9)


def plateau_fraction(rho: Field) -> float:
    """Fraction of cells sitting in the unit-plateau band."""
    lo, hi = PLATEAU_BAND
    return float(np.mean((rho.values >= lo) & (rho.values <= hi)))


@dataclass(frozen=True)
class MesaRow:
    m: float
    sup_norm: float
    free_energy: float
    plateau_fraction: float
    converged: bool


@dataclass(frozen=True)
class MesaResult:
    case: MesaCase
    minimiser: Field | None
    f_inf: float
    rows: list[MesaRow]
    sup_trend_ok: bool
    plateau_stable: bool
    limit_negative: bool
    complete: bool


def mesa_sweep(
    W: Potential,
    beta: float,
    m_list,
    grid: Grid,
    config: FixedPointConfig = FixedPointConfig(),
) -> MesaResult:
    """Stationary solves across ascending m, warm-started, then the limit check.

    The final converged state is projected onto the unit ceiling and fed
    to the limit functional; for an unstable kernel on a large domain the
    projected profile must beat the flat state.
    """
    ms = [float(m) for m in m_list]
    if ms != sorted(ms):
        raise ValueError("m_list must be ascending")
    case = mesa_classify(grid.L, grid.d, W)
    rows: list[MesaRow] = []
    current = spectral.flat_state(grid)
    last_state: Field | None = None
    complete = True
    for m in ms:
        start = stationary.kicked(current, W, config.kick)
        try:
            res = stationary.solve(W, beta, m, start, config)
            state = res.state
            rows.append(
                MesaRow(
                    m=m,
                    sup_norm=state.max_value,
                    free_energy=energy.free_energy(state, W, beta, m).total,
                    plateau_fraction=plateau_fraction(state),
                    converged=True,
                )
            )
            current = state
            last_state = state
        except NoConvergence as exc:
            complete = False
            rows.append(
                MesaRow(
                    m=m,
                    sup_norm=exc.state.max_value if exc.state is not None else float("nan"),
                    free_energy=float("nan"),
                    plateau_fraction=float("nan"),
                    converged=False,
                )
            )
    if last_state is None:
        return MesaResult(
            case=case,
            minimiser=None,
            f_inf=float("nan"),
            rows=rows,
            sup_trend_ok=False,
            plateau_stable=False,
            limit_negative=False,
            complete=False,
        )
    clamped = clamp_to_unit(last_state)
    f_inf = mesa_energy(clamped, W)
    sups = [r.sup_norm for r in rows if r.converged]
    sup_trend_ok = (
        all(b <= a + 1e-9 for a, b in zip(sups, sups[1:])) and sups[-1] <= 1.0 + SUP_SLACK
    )
    fracs = [r.plateau_fraction for r in rows if r.converged]
    plateau_stable = len(fracs) >= 2 and abs(fracs[-1] - fracs[-2]) <= PLATEAU_STABLE_TOL
    return MesaResult(
        case=case,
        minimiser=clamped,
        f_inf=f_inf,
        rows=rows,
        sup_trend_ok=sup_trend_ok,
        plateau_stable=plateau_stable,
        limit_negative=f_inf < 0.0,
        complete=complete,
    )
