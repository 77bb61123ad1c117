"""Free energy, a-priori bounds and stationarity diagnostics.

The free energy splits into an entropy scaled by 1/beta and the quadratic
interaction term. The stationarity diagnostics measure how far a density is
from solving the self-consistency relation

    (1/beta) * m/(m-1) * rho^(m-1) + W * rho = const on the support,

both as a sup-norm defect and as a dissipation-slope surrogate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import spectral
from .errors import MultiComponentUnsupported
from .potential import Potential
from .spectral import Field, Grid

# Cells below this multiple of the flat height count as vacuum.
EPS_SUPPORT_FACTOR = 1e-10


@dataclass(frozen=True)
class EnergyBreakdown:
    entropy: float
    interaction: float
    total: float
    beta: float
    m: float


def entropy_term(rho: Field, beta: float, m: float) -> float:
    """S = (1/(beta(m-1))) (int rho^m - 1) for m > 1; rho log rho at m = 1."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    vol = rho.grid.cell_volume
    vals = rho.values
    if m == 1:
        pos = vals[vals > 0]
        return float(vol * np.sum(pos * np.log(pos)) / beta)
    return float((vol * np.sum(vals**m) - 1.0) / (beta * (m - 1.0)))


def interaction_term(rho: Field, W: Potential) -> float:
    """E = (1/2) * double integral of W(x-y) rho(x) rho(y)."""
    return 0.5 * spectral.bilinear_form(W, rho)


def free_energy(rho: Field, W: Potential, beta: float, m: float) -> EnergyBreakdown:
    """Total free energy with its entropy/interaction split."""
    s = entropy_term(rho, beta, m)
    e = interaction_term(rho, W)
    return EnergyBreakdown(entropy=s, interaction=e, total=s + e, beta=beta, m=m)


def flat_free_energy(W: Potential, grid: Grid, beta: float, m: float) -> float:
    """Free energy of the uniform state on the given grid."""
    return free_energy(spectral.flat_state(grid), W, beta, m).total


def w_minus_sup(W: Potential, samples_per_axis: int | None = None) -> float:
    """Sup norm of the negative part of the kernel, by dense sampling."""
    top = max((max(k) for k in W.modes), default=1)
    if samples_per_axis is None:
        samples_per_axis = max(256, 32 * top) if W.d == 1 else max(128, 16 * top)
    pts = np.linspace(0.0, W.L, samples_per_axis, endpoint=False)
    if W.d == 1:
        vals = W.evaluate(pts)
    else:
        mx, my = np.meshgrid(pts, pts, indexing="ij")
        vals = W.evaluate(np.stack([mx, my], axis=-1))
    return float(max(0.0, -vals.min()))


def linf_bound(beta: float, m: float, W: Potential) -> float:
    """Explicit sup-norm bound below which minimisers can always be found.

    Composed of a direct entropy-domination constant and a
    truncation-and-renormalisation constant; the returned value is
    max(B1, 2*B2).
    """
    if m <= 1:
        raise ValueError(f"m must be > 1, got {m}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    volume = W.L**W.d
    wm = w_minus_sup(W)
    b1 = (2.0 / volume ** (m - 1.0) + beta * (m - 1.0) * wm) ** (1.0 / (m - 1.0))
    s_star = 0.5 * wm + 1.0 / (beta * (m - 1.0) * volume ** (m - 1.0))
    # Interaction energy of the flat state vanishes for mean-zero kernels.
    e_star = 0.5 * wm
    inner = m * (1.0 + 2.0**m * (m + 1.0)) * s_star + 8.0 * e_star + 0.5 * wm
    b2 = ((m - 1.0) * beta * inner) ** (1.0 / (m - 1.0))
    return max(b1, 2.0 * b2)


def self_consistency_constant(rho: Field, W: Potential, beta: float, m: float) -> float:
    """The constant forced by mass normalisation on a fully supported state.

    For mean-zero kernels the convolution average vanishes and only the
    entropy average contributes.
    """
    if m <= 1:
        raise ValueError(f"m must be > 1, got {m}")
    grid = rho.grid
    rho_inf = grid.L**-grid.d
    if rho.min_value <= EPS_SUPPORT_FACTOR * rho_inf:
        raise MultiComponentUnsupported(
            "density has vacuum cells; a single global constant is only exact "
            "for fully supported states"
        )
    vol = grid.cell_volume
    volume = grid.L**grid.d
    entropy_avg = m / (beta * (m - 1.0) * volume) * float(vol * np.sum(rho.values ** (m - 1.0)))
    conv_avg = float(vol * np.sum(spectral.convolve(W, rho).values)) / volume
    return entropy_avg + conv_avg


def _gradient_sq(grid: Grid, vals: np.ndarray) -> np.ndarray:
    """|grad f|^2 by centered periodic differences."""
    out = np.zeros(grid.shape)
    for ax in range(grid.d):
        g = (np.roll(vals, -1, axis=ax) - np.roll(vals, 1, axis=ax)) / (2.0 * grid.h)
        out = out + g * g
    return out


@dataclass(frozen=True)
class StationarityDefect:
    """Sup-norm defect of the self-consistency relation plus a slope surrogate.

    sup_defect is the largest deviation of the entropy variable from its
    constant over the support; slope is the weighted L2 norm of its
    gradient, which vanishes exactly at stationary states.
    """

    sup_defect: float
    slope: float


def entropy_variable_values(rho: Field, W: Potential, beta: float, m: float) -> np.ndarray:
    """xi = (1/beta) m/(m-1) rho^(m-1) + W * rho as a raw array."""
    if m <= 1:
        raise ValueError(f"m must be > 1, got {m}")
    conv = spectral.convolve(W, rho).values
    return m / (beta * (m - 1.0)) * rho.values ** (m - 1.0) + conv


def stationarity_residual(rho: Field, W: Potential, beta: float, m: float) -> StationarityDefect:
    """How far a density is from stationarity.

    The reference constant is the closed-form one on full support and the
    support average otherwise (vacuum cells are excluded from the defect;
    they satisfy the relation through the positive-part truncation).
    """
    grid = rho.grid
    xi = entropy_variable_values(rho, W, beta, m)
    rho_inf = grid.L**-grid.d
    support = rho.values > EPS_SUPPORT_FACTOR * rho_inf
    if support.all():
        c_ref = self_consistency_constant(rho, W, beta, m)
    else:
        c_ref = float(np.mean(xi[support]))
    sup_defect = float(np.max(np.abs(xi[support] - c_ref)))
    slope_sq = grid.cell_volume * float(np.sum(rho.values * _gradient_sq(grid, xi)))
    return StationarityDefect(sup_defect=sup_defect, slope=math.sqrt(max(slope_sq, 0.0)))
