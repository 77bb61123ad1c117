"""Closed-form local bifurcation data for the self-consistency map.

Each negative kernel mode k carries an explicit critical parameter

    beta_*(k) = -m * rho_inf^(m-3/2) * Theta(k) / W_hat(k),

at which a branch of nontrivial stationary states splits off the flat
state, provided no other mode shares its ratio. The branch direction is
governed by the curvature beta''(0), whose sign separates supercritical
from subcritical branches and vanishes identically at m = 2 and m = 3.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import spectral
from .errors import NotABifurcationMode, NoTransition
from .potential import Potential, dominant_mode, h_stability, mode_ratio
from .spectral import Grid, Mode, as_mode, theta

RATIO_TIE_TOL = 1e-12


class BranchClass(enum.Enum):
    SUPERCRITICAL = "Supercritical"
    SUBCRITICAL = "Subcritical"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class BifurcationPoint:
    k_star: Mode
    beta_star: float
    curvature: float
    branch_class: BranchClass
    conditions_ok: bool
    k_max: int


def quartic_integral(k, L: float, d: int | None = None) -> float:
    """Integral of e_k^4 by grid quadrature at 4x oversampling.

    The integrand is a trigonometric polynomial of degree 4*max|k_i| per
    axis, so a grid with more than that many points integrates it exactly.
    In one dimension the closed form is 3/(2L).
    """
    kt = as_mode(k, d if d is not None else (1 if isinstance(k, int) else len(k)))
    top = max(abs(v) for v in kt)
    n = 16
    while n < 8 * max(top, 1):
        n *= 2
    grid = Grid(d=len(kt), L=L, n=n)
    e = spectral.mode_field(grid, kt).values
    return float(grid.cell_volume * np.sum(e**4))


def _check_mode(W: Potential, k_star) -> Mode:
    kt = as_mode(k_star, W.d)
    if W.coefficient(kt) >= 0:
        raise NotABifurcationMode(f"W_hat({kt}) = {W.coefficient(kt)} is not negative")
    return kt


def _uniqueness_ok(W: Potential, kt: Mode, k_max: int) -> bool:
    target = mode_ratio(W, kt)
    for k, w in W.modes.items():
        if k == kt or max(k) > k_max:
            continue
        if abs(w / theta(k) - target) <= RATIO_TIE_TOL:
            return False
    return True


def beta_star(W: Potential, m: float, k_star, k_max: int = 64) -> float:
    """Critical parameter at which mode k_star destabilises the flat state."""
    kt = _check_mode(W, k_star)
    if not _uniqueness_ok(W, kt, k_max):
        warnings.warn(
            f"mode {kt} shares its ratio with another mode <= {k_max}; "
            "the one-dimensional-kernel condition fails",
            stacklevel=2,
        )
    rho_inf = W.L**-W.d
    return -m * rho_inf ** (m - 1.5) * theta(kt) / W.coefficient(kt)


def beta_sharp(W: Potential, m: float, k_max: int = 64) -> float:
    """Linear-stability threshold of the flat state.

    Equals beta_star at the dominant mode whenever that mode is unique.
    """
    stab = h_stability(W)
    if stab.stable:
        raise NoTransition("kernel is H-stable; the flat state never destabilises")
    report = dominant_mode(W, k_max)
    rho_inf = W.L**-W.d
    return -m * rho_inf ** (m - 1.5) / report.ratio


def curvature(W: Potential, m: float, k_star, k_max: int = 64) -> float:
    """Branch curvature beta''(0) at the bifurcation from mode k_star.

    Vanishes exactly for m in {2, 3}; positive branches open to larger
    beta (supercritical), negative ones to smaller beta (subcritical).
    """
    kt = _check_mode(W, k_star)
    bs = beta_star(W, m, kt, k_max)
    rho_inf = W.L**-W.d
    return bs * (m - 2.0) * (m - 3.0) / (3.0 * rho_inf**2) * quartic_integral(kt, W.L, W.d)


def classify_branch(curv: float, tol: float = 0.0) -> BranchClass:
    if curv > tol:
        return BranchClass.SUPERCRITICAL
    if curv < -tol:
        return BranchClass.SUBCRITICAL
    return BranchClass.DEGENERATE


def enumerate_bifurcations(W: Potential, m: float, k_max: int = 64) -> list[BifurcationPoint]:
    """All negative modes within the truncation, sorted by beta_star.

    Modes that tie in ratio with another scanned mode are still listed but
    flagged conditions_ok=False.
    """
    points = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in sorted(W.modes):
            if max(k) > k_max or W.modes[k] >= 0:
                continue
            bs = beta_star(W, m, k, k_max)
            curv = curvature(W, m, k, k_max)
            points.append(
                BifurcationPoint(
                    k_star=k,
                    beta_star=bs,
                    curvature=curv,
                    branch_class=classify_branch(curv),
                    conditions_ok=_uniqueness_ok(W, k, k_max),
                    k_max=k_max,
                )
            )
    points.sort(key=lambda p: (p.beta_star, p.k_star))
    return points
