"""Phase-transition location and classification along beta sweeps.

A sweep runs warm-started continuation in both directions over a beta
grid and keeps, per beta, the lower-energy converged state. The
transition point is bracketed where the branch energy first dips below
the flat energy, refined by bisection with fresh solves, and classified
continuous when the bracket sits at the linear-stability threshold AND
the branch amplitude vanishes into it; otherwise discontinuous with the
measured jump. A small rules engine predicts the outcome from kernel
structure alone so numerics and theory can be cross-checked.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import energy, spectral, stationary
from .errors import (
    InconclusiveClassification,
    NoNegativeMode,
    NotADensity,
    NoTransitionDetected,
    PreconditionFailed,
)
from .potential import (
    Potential,
    check_m4_conditions,
    dominant_mode,
    find_delta_star,
    h_stability,
)
from .bifurcation import beta_sharp
from .spectral import Field, Grid
from .stationary import BranchSample, FixedPointConfig

ENERGY_CROSS_TOL = 1e-8  # branch counts as winning once F_branch - F_flat < -this
JUMP_FRACTION = 0.1  # sup-norm jump threshold, relative to the flat height
BRACKET_WIDTH_FRACTION = 1e-3  # refinement target, relative to beta_sharp
FIT_POINTS = 5  # samples above beta_c used in the amplitude power-law fit


class TransitionKind(enum.Enum):
    CONTINUOUS = "Continuous"
    DISCONTINUOUS = "Discontinuous"
    NONE = "None"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class SweepRecord:
    """One (beta, steady state) sample of a sweep."""

    beta: float
    sup_norm: float
    f_branch: float
    f_flat: float
    residual: float
    min_rho: float
    support_fraction: float
    converged: bool
    mode_amplitude: float = float("nan")  # signed coefficient on the dominant mode
    state: Field | None = None

    def amplitude(self, rho_inf: float) -> float:
        """Sup-norm distance to the flat state."""
        return max(self.sup_norm - rho_inf, rho_inf - self.min_rho)


SWEEP_CSV_HEADER = "beta,sup_norm,F_branch,F_flat,residual,min_rho,support_fraction,converged"


def records_csv(records: list[SweepRecord]) -> str:
    lines = [SWEEP_CSV_HEADER]
    for r in records:
        lines.append(
            ",".join(
                [
                    format(r.beta, ".17g"),
                    format(r.sup_norm, ".17g"),
                    format(r.f_branch, ".17g"),
                    format(r.f_flat, ".17g"),
                    format(r.residual, ".17g"),
                    format(r.min_rho, ".17g"),
                    format(r.support_fraction, ".17g"),
                    "true" if r.converged else "false",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _support_fraction(state: Field) -> float:
    rho_inf = state.grid.L**-state.grid.d
    return float(np.mean(state.values > energy.EPS_SUPPORT_FACTOR * rho_inf))


def _record_from_sample(
    sample: BranchSample, W: Potential, m: float, grid: Grid, kick_k
) -> SweepRecord:
    f_flat = energy.flat_free_energy(W, grid, sample.beta, m)
    if sample.state is None:
        return SweepRecord(
            beta=sample.beta,
            sup_norm=float("nan"),
            f_branch=float("nan"),
            f_flat=f_flat,
            residual=sample.residual,
            min_rho=float("nan"),
            support_fraction=float("nan"),
            converged=False,
        )
    st = sample.state
    e_k = spectral.mode_field(grid, kick_k).values
    rho_inf = grid.L**-grid.d
    amp = grid.cell_volume * float(np.sum((st.values - rho_inf) * e_k))
    return SweepRecord(
        beta=sample.beta,
        sup_norm=st.max_value,
        f_branch=energy.free_energy(st, W, sample.beta, m).total,
        f_flat=f_flat,
        residual=sample.residual,
        min_rho=st.min_value,
        support_fraction=_support_fraction(st),
        converged=True,
        mode_amplitude=amp,
        state=st,
    )


def sweep(
    W: Potential,
    m: float,
    beta_grid,
    grid: Grid,
    config: FixedPointConfig = FixedPointConfig(),
) -> tuple[list[SweepRecord], float]:
    """Two-direction sweep merged to the per-beta energy minimum.

    Returns (records ascending in beta, hysteresis), where hysteresis is
    the largest sup-norm gap between the ascending and descending branches
    at one beta; subcritical branches show up only in the descending pass,
    so a nonzero gap is itself transition evidence.
    """
    betas = sorted(float(b) for b in beta_grid)
    kick_k = stationary.kick_mode(W)
    asc = stationary.continue_branch(W, m, betas, grid, config)
    desc = stationary.continue_branch(W, m, list(reversed(betas)), grid, config)
    asc_rec = {s.beta: _record_from_sample(s, W, m, grid, kick_k) for s in asc}
    desc_rec = {s.beta: _record_from_sample(s, W, m, grid, kick_k) for s in desc}
    merged: list[SweepRecord] = []
    hysteresis = 0.0
    for b in betas:
        ra, rd = asc_rec[b], desc_rec[b]
        if ra.converged and rd.converged:
            hysteresis = max(hysteresis, abs(ra.sup_norm - rd.sup_norm))
            merged.append(ra if ra.f_branch <= rd.f_branch else rd)
        elif ra.converged:
            merged.append(ra)
        else:
            merged.append(rd)
    return merged, hysteresis


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


def _crosses(record: SweepRecord, eps_e: float) -> bool:
    return record.converged and (record.f_branch - record.f_flat) < -eps_e


def locate_beta_c(records: list[SweepRecord], eps_e: float = ENERGY_CROSS_TOL) -> Bracket:
    """Grid bracket where the branch energy first beats the flat energy."""
    ordered = sorted(records, key=lambda r: r.beta)
    prev = None
    for r in ordered:
        if _crosses(r, eps_e):
            if prev is None:
                raise NoTransitionDetected(
                    "branch already wins at the lowest sweep point; no flat side in range"
                )
            return Bracket(lo=prev.beta, hi=r.beta)
        if r.converged:
            prev = r
    raise NoTransitionDetected("no energy crossing on the sweep grid")


def refine_bracket(
    W: Potential,
    m: float,
    bracket: Bracket,
    records: list[SweepRecord],
    grid: Grid,
    config: FixedPointConfig = FixedPointConfig(),
    target_width: float | None = None,
    eps_e: float = ENERGY_CROSS_TOL,
) -> tuple[Bracket, list[SweepRecord]]:
    """Shrink the crossing bracket by bisection with fresh warm solves.

    Each midpoint is solved from the current branch-side state, so the
    extra records double as close-to-threshold branch samples for the
    classification fits.
    """
    kick_k = stationary.kick_mode(W)
    by_beta = {r.beta: r for r in records if r.converged and r.state is not None}
    warm = by_beta.get(bracket.hi)
    warm_state = warm.state if warm is not None else spectral.flat_state(grid)
    if target_width is None:
        target_width = BRACKET_WIDTH_FRACTION * beta_sharp(W, m)
    extras: list[SweepRecord] = []
    lo, hi = bracket.lo, bracket.hi
    while hi - lo > target_width:
        mid = 0.5 * (lo + hi)
        start = stationary.kicked(warm_state, W, config.kick)
        try:
            res = stationary.solve(W, mid, m, start, config)
            sample = BranchSample(mid, res.state, res.residual, res.iterations, True)
        except stationary.NoConvergence as exc:  # recorded, treated as flat side
            sample = BranchSample(mid, None, float("nan"), config.max_iter, False)
        rec = _record_from_sample(sample, W, m, grid, kick_k)
        extras.append(rec)
        if _crosses(rec, eps_e):
            hi = mid
            warm_state = rec.state
        else:
            lo = mid
    return Bracket(lo=lo, hi=hi), extras


@dataclass(frozen=True)
class Prediction:
    """Rule-engine output; anchor is a stable machine identifier."""

    kind: TransitionKind
    rule: str
    anchor: str
    beta_sharp: float | None
    exists: bool | None
    at_beta_sharp: bool | None
    strength: str  # "theorem" or "suggestive"
    delta_star: float | None = None


def predict(W: Potential, m: float, k_max: int = 64) -> Prediction:
    """Ordered application of the classification rules.

    Stable kernels never transition; m in [2, 3] forces a jump (with the
    m = 2 degenerate family pinned at the threshold); verified quartic
    reinforcement gives a continuous transition at m = 4; a resonant
    additive mode triple at small ladder gap suggests a jump for other m.
    Falls through to Unknown (transition exists, kind open).
    """
    if h_stability(W).stable:
        return Prediction(
            kind=TransitionKind.NONE,
            rule="H-stable kernel: the flat state is the unique minimiser at every beta",
            anchor="h_stable_unique_flat",
            beta_sharp=None,
            exists=False,
            at_beta_sharp=None,
            strength="theorem",
        )
    bs = beta_sharp(W, m, k_max)
    if m == 2.0:
        return Prediction(
            kind=TransitionKind.DISCONTINUOUS,
            rule="quadratic nonlinearity: degenerate minimiser family at the threshold",
            anchor="m2_degenerate_family",
            beta_sharp=bs,
            exists=True,
            at_beta_sharp=True,
            strength="theorem",
        )
    if 2.0 <= m <= 3.0:
        return Prediction(
            kind=TransitionKind.DISCONTINUOUS,
            rule="m between 2 and 3: every unstable kernel jumps",
            anchor="m_in_2_3_discontinuous",
            beta_sharp=bs,
            exists=True,
            at_beta_sharp=None,
            strength="theorem",
        )
    if m == 4.0:
        try:
            report = check_m4_conditions(W, k_max)
            if report.all_hold:
                return Prediction(
                    kind=TransitionKind.CONTINUOUS,
                    rule="quartic nonlinearity with reinforced secondary harmonics",
                    anchor="m4_continuous_conditions",
                    beta_sharp=bs,
                    exists=True,
                    at_beta_sharp=True,
                    strength="theorem",
                )
        except PreconditionFailed:
            pass
    ds = find_delta_star(W, k_max)
    if ds is not None and m != 2.0:
        return Prediction(
            kind=TransitionKind.DISCONTINUOUS,
            rule="additive mode triple among near-minimal-ratio modes",
            anchor="resonant_mode_triple",
            beta_sharp=bs,
            exists=True,
            at_beta_sharp=None,
            strength="theorem" if ds.delta == 0.0 else "suggestive",
            delta_star=ds.delta,
        )
    return Prediction(
        kind=TransitionKind.UNKNOWN,
        rule="unstable kernel: a transition exists at or below the threshold; kind open",
        anchor="transition_exists_kind_unknown",
        beta_sharp=bs,
        exists=True,
        at_beta_sharp=None,
        strength="theorem",
    )


@dataclass(frozen=True)
class TransitionReport:
    beta_c: Bracket | None
    kind: TransitionKind
    beta_sharp: float
    jump: float | None
    amplitude_exponent: float | None
    hysteresis: float
    prediction: Prediction
    consistent_with_prediction: bool | None
    envelope_monotone: bool | None = None


def _amplitude_fit(points: list[tuple[float, float]], beta_ref: float) -> float | None:
    """Power-law exponent of amplitude vs (beta - beta_ref), log-log slope."""
    usable = [(b, a) for b, a in points if b > beta_ref * (1.0 + 1e-14) and a > 0.0]
    if len(usable) < 2:
        return None
    usable.sort(key=lambda p: p[0])
    usable = usable[:FIT_POINTS]
    xs = np.log([b - beta_ref for b, _ in usable])
    ys = np.log([a for _, a in usable])
    slope = np.polyfit(xs, ys, 1)[0]
    return float(slope)


def classify_transition(
    records: list[SweepRecord],
    bracket: Bracket,
    beta_sharp_value: float,
    rho_inf: float,
) -> tuple[TransitionKind, float | None, float | None]:
    """(kind, jump, amplitude_exponent) for a located crossing.

    Continuous requires the bracket to sit on the linear threshold within
    its own width, a positive fitted decay exponent of the branch
    amplitude into the bracket, and a sub-threshold amplitude at the
    closest sample (the finite-sample stand-in for the vanishing limsup).
    """
    above = sorted(
        (r for r in records if r.converged and r.beta > bracket.lo * (1.0 + 1e-14)),
        key=lambda r: r.beta,
    )
    above = [r for r in above if r.amplitude(rho_inf) > 0.0]
    if len(above) < 2:
        raise InconclusiveClassification(
            f"only {len(above)} usable branch samples above the bracket"
        )
    nearest_amp = above[0].amplitude(rho_inf)
    exponent = _amplitude_fit([(r.beta, r.amplitude(rho_inf)) for r in above], bracket.lo)
    at_threshold = abs(bracket.mid - beta_sharp_value) <= max(bracket.width, 1e-12)
    vanishing = exponent is not None and exponent > 0.0 and nearest_amp <= JUMP_FRACTION * rho_inf
    if at_threshold and vanishing:
        return TransitionKind.CONTINUOUS, nearest_amp, exponent
    return TransitionKind.DISCONTINUOUS, nearest_amp, exponent


def _envelope_monotone(records: list[SweepRecord], eps_e: float) -> bool:
    """Once the branch wins it keeps winning at larger beta."""
    won = False
    for r in sorted(records, key=lambda x: x.beta):
        if not r.converged:
            continue
        if won and not _crosses(r, eps_e):
            return False
        if _crosses(r, eps_e):
            won = True
    return True


def m2_family(alpha: float, W: Potential, grid: Grid) -> tuple[Field, float]:
    """Member of the quadratic-case minimiser family and its energy.

    At the m = 2 threshold the states flat + alpha * e_(dominant mode) all
    share the flat energy for alpha in [0, |domain|^(-1/2) / Theta].
    """
    report = dominant_mode(W)
    ks = report.k_sharp
    volume = grid.L**grid.d
    alpha_max = volume**-0.5 / spectral.theta(ks)
    if not 0.0 <= alpha <= alpha_max * (1.0 + 1e-12):
        raise NotADensity(f"alpha {alpha} outside [0, {alpha_max}]; the state would go negative")
    vals = spectral.flat_state(grid).values + alpha * spectral.mode_field(grid, ks).values
    state = Field.density(grid, np.maximum(vals, 0.0), mass_tol=1e-9)
    beta_2 = beta_sharp(W, 2.0)
    return state, energy.free_energy(state, W, beta_2, 2.0).total


def analyze_transition(
    W: Potential,
    m: float,
    grid: Grid,
    beta_grid=None,
    config: FixedPointConfig = FixedPointConfig(),
    k_max: int = 64,
) -> TransitionReport:
    """Full pipeline: sweep, locate, refine, classify, predict."""
    prediction = predict(W, m, k_max)
    if h_stability(W).stable:
        if beta_grid is None:
            raise ValueError("beta_grid is required for stable kernels (no threshold to scale by)")
        records, hysteresis = sweep(W, m, beta_grid, grid, config)
        return TransitionReport(
            beta_c=None,
            kind=TransitionKind.NONE,
            beta_sharp=float("inf"),
            jump=None,
            amplitude_exponent=None,
            hysteresis=hysteresis,
            prediction=prediction,
            consistent_with_prediction=prediction.kind == TransitionKind.NONE,
        )
    bs = beta_sharp(W, m, k_max)
    if beta_grid is None:
        beta_grid = np.linspace(0.8 * bs, 1.2 * bs, 41)
    records, hysteresis = sweep(W, m, beta_grid, grid, config)
    rho_inf = grid.L**-grid.d
    try:
        coarse = locate_beta_c(records)
    except NoTransitionDetected:
        return TransitionReport(
            beta_c=None,
            kind=TransitionKind.NONE,
            beta_sharp=bs,
            jump=None,
            amplitude_exponent=None,
            hysteresis=hysteresis,
            prediction=prediction,
            consistent_with_prediction=prediction.kind
            in (TransitionKind.NONE, TransitionKind.UNKNOWN),
            envelope_monotone=_envelope_monotone(records, ENERGY_CROSS_TOL),
        )
    bracket, extras = refine_bracket(W, m, coarse, records, grid, config)
    all_records = sorted(records + extras, key=lambda r: r.beta)
    kind, jump, exponent = classify_transition(all_records, bracket, bs, rho_inf)
    consistent = prediction.kind in (kind, TransitionKind.UNKNOWN)
    return TransitionReport(
        beta_c=bracket,
        kind=kind,
        beta_sharp=bs,
        jump=jump,
        amplitude_exponent=exponent,
        hysteresis=hysteresis,
        prediction=prediction,
        consistent_with_prediction=consistent,
        envelope_monotone=_envelope_monotone(records, ENERGY_CROSS_TOL),
    )
