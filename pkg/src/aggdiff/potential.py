"""Interaction kernels: H-stability, dominant modes, resonance conditions.

A kernel is specified by finitely many cosine-mode coefficients W_hat(k),
k in N^d \\ {0}; it is therefore even in every coordinate and mean-zero.
The classification machinery here answers, in order of increasing
refinement: is the flat state ever destabilised (H-stability), which mode
destabilises it first (dominant mode), which nearby modes can resonate
with it (the delta-ladder and additive triples), and whether the quartic
reinforcement inequalities hold that force a continuous transition at
m = 4.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import spectral
from .errors import InvalidMode, NoNegativeMode, PreconditionFailed
from .spectral import Grid, Mode, as_mode, norm_const, sym_variants, theta

RATIO_TIE_TOL = 1e-12


@dataclass(frozen=True)
class Potential:
    """Mean-zero even kernel given by cosine-mode coefficients.

    modes maps nonnegative multi-indices (not all zero) to real
    coefficients; unspecified modes are zero. label optionally names a
    closed form (e.g. "neg_cos").
    """

    d: int
    L: float
    modes: Mapping[Mode, float]
    label: str | None = None

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        clean: dict[Mode, float] = {}
        for k, w in self.modes.items():
            kt = as_mode(k, self.d)
            if any(v < 0 for v in kt):
                raise InvalidMode(f"mode {kt} has negative entries; kernels are cosine-only")
            if all(v == 0 for v in kt):
                raise InvalidMode("mode 0 is fixed to zero (mean-zero kernel)")
            w = float(w)
            if w != 0.0:
                clean[kt] = clean.get(kt, 0.0) + w
        object.__setattr__(self, "modes", clean)

    @classmethod
    def from_modes(cls, L: float, d: int, modes: Mapping, label: str | None = None) -> "Potential":
        return cls(d=d, L=L, modes=dict(modes), label=label)

    @classmethod
    def neg_cos(cls, L: float) -> "Potential":
        """W(x) = -cos(2 pi x / L) in one dimension."""
        return cls(d=1, L=L, modes={(1,): -math.sqrt(L / 2.0)}, label="neg_cos")

    def coefficient(self, k) -> float:
        return self.modes.get(as_mode(k, self.d), 0.0)

    def evaluate(self, x) -> np.ndarray:
        """Pointwise values from the defining cosine sum; exact everywhere."""
        xs = np.asarray(x, dtype=float)
        if self.d == 1:
            axes = [xs]
        else:
            axes = [xs[..., i] for i in range(self.d)]
        out = np.zeros(np.shape(axes[0]))
        for k in sorted(self.modes):
            term = np.full_like(out, self.modes[k] * norm_const(k, self.L))
            for j, ax in zip(k, axes):
                if j != 0:
                    term = term * np.cos(2.0 * np.pi * j * ax / self.L)
            out = out + term
        return out

    def sample(self, grid: Grid) -> spectral.Field:
        """Kernel values at the cell centers of a grid."""
        if grid.d != self.d or grid.L != self.L:
            from .errors import GridMismatch

            raise GridMismatch(f"potential (d={self.d}, L={self.L}) vs grid (d={grid.d}, L={grid.L})")
        if self.d == 1:
            return spectral.Field(grid, self.evaluate(grid.axis()))
        mx, my = grid.meshes()
        return spectral.Field(grid, self.evaluate(np.stack([mx, my], axis=-1)))

    def to_dict(self) -> dict:
        if self.label is not None and not self.modes_differ_from_label():
            return {"named": self.label, "L": self.L}
        return {
            "L": self.L,
            "d": self.d,
            "modes": [list(k) + [w] for k, w in sorted(self.modes.items())],
        }

    def modes_differ_from_label(self) -> bool:
        if self.label == "neg_cos":
            ref = Potential.neg_cos(self.L)
            return self.modes != ref.modes
        return True

    @classmethod
    def from_dict(cls, data: Mapping) -> "Potential":
        if "named" in data:
            if data["named"] == "neg_cos":
                return cls.neg_cos(float(data["L"]))
            raise InvalidMode(f"unknown named potential {data['named']!r}")
        d = int(data["d"])
        modes = {}
        for row in data["modes"]:
            *k, w = row
            modes[tuple(int(v) for v in k)] = float(w)
        return cls(d=d, L=float(data["L"]), modes=modes)


@dataclass(frozen=True)
class HStability:
    """Outcome of the H-stability test; witness is a negative mode if unstable."""

    stable: bool
    witness: Mode | None = None


@dataclass(frozen=True)
class ModeReport:
    """Dominant destabilising mode and whether it is unique within k_max."""

    k_sharp: Mode
    ratio: float
    unique: bool
    k_max: int


def h_stability(W: Potential) -> HStability:
    """Stable iff every nonzero-mode coefficient is >= 0."""
    negative = sorted(k for k, w in W.modes.items() if w < 0)
    if negative:
        return HStability(stable=False, witness=negative[0])
    return HStability(stable=True)


def _scan_modes(d: int, k_max: int):
    if d == 1:
        for i in range(1, k_max + 1):
            yield (i,)
    else:
        for i in range(k_max + 1):
            for j in range(k_max + 1):
                if i == 0 and j == 0:
                    continue
                yield (i, j)


def mode_ratio(W: Potential, k) -> float:
    """W_hat(k) / Theta(k), the quantity minimised by the dominant mode."""
    kt = as_mode(k, W.d)
    return W.coefficient(kt) / theta(kt)


def dominant_mode(W: Potential, k_max: int = 64) -> ModeReport:
    """Argmin of W_hat(k)/Theta(k) over 0 < |k|_inf <= k_max.

    Requires an unstable kernel; ties are reported with unique=False and
    the lexicographically smallest minimiser.
    """
    if h_stability(W).stable:
        raise NoNegativeMode("kernel is H-stable; every mode ratio is >= 0")
    in_range = {k: w for k, w in W.modes.items() if max(k) <= k_max and w < 0}
    if not in_range:
        raise NoNegativeMode(f"no negative mode within |k|_inf <= {k_max}")
    ratios = {k: w / theta(k) for k, w in in_range.items()}
    best = min(ratios.values())
    winners = sorted(k for k, r in ratios.items() if r <= best + RATIO_TIE_TOL)
    return ModeReport(k_sharp=winners[0], ratio=best, unique=len(winners) == 1, k_max=k_max)


def k_delta_set(W: Potential, delta: float, k_max: int = 64) -> set[Mode]:
    """Modes whose ratio is within delta of the minimum ratio.

    Follows the defining inequality literally over all k with
    |k|_inf <= k_max, so for large delta zero-coefficient modes enter too.
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    report = dominant_mode(W, k_max)
    cutoff = report.ratio + delta + RATIO_TIE_TOL
    return {k for k in _scan_modes(W.d, k_max) if mode_ratio(W, k) <= cutoff}


def _find_triple(modes: set[Mode]) -> tuple[Mode, Mode, Mode] | None:
    """Lexicographically smallest (ka, kb, kc) in the set with ka = kb + kc."""
    ordered = sorted(modes)
    best = None
    for kb, kc in itertools.product(ordered, repeat=2):
        ka = tuple(b + c for b, c in zip(kb, kc))
        if ka in modes:
            cand = (ka, kb, kc)
            if best is None or cand < best:
                best = cand
    return best


@dataclass(frozen=True)
class DeltaStar:
    """Smallest ladder level whose near-minimal modes contain an additive triple."""

    delta: float
    triple: tuple[Mode, Mode, Mode]


def find_delta_star(W: Potential, k_max: int = 64) -> DeltaStar | None:
    """Search the discrete ratio ladder for an additive triple ka = kb + kc.

    The ladder runs over the distinct ratio values of the negative-
    coefficient modes only: modes with ratio >= 0 would enter the
    near-minimal set only at a gap as large as the full distance to
    stability, which can never count as small. Returns None when no triple
    of negative modes exists within the truncation.
    """
    if h_stability(W).stable:
        raise NoNegativeMode("kernel is H-stable")
    negative = {k: w / theta(k) for k, w in W.modes.items() if max(k) <= k_max and w < 0}
    if not negative:
        raise NoNegativeMode(f"no negative mode within |k|_inf <= {k_max}")
    best = min(negative.values())
    ladder = sorted({r - best for r in negative.values()})
    for delta in ladder:
        members = {k for k, r in negative.items() if r <= best + delta + RATIO_TIE_TOL}
        triple = _find_triple(members)
        if triple is not None:
            return DeltaStar(delta=delta, triple=triple)
    return None


@dataclass(frozen=True)
class TrigExpansion:
    """Basis expansions of e_k^2 and e_k^3.

    e_k^2 = sum_{j in p2} p2[j] e_j + c0 e_0, and
    e_k^3 = sum_{l in p3} p3[l] e_l + ck e_k.
    """

    k: Mode
    p2: dict[Mode, float]
    c0: float
    p3: dict[Mode, float]
    ck: float


def p2_p3(k, L: float) -> TrigExpansion:
    """Index sets and coefficients of the square and cube of a cosine mode.

    The square spreads onto doubled indices with weight rho_inf / N_j; the
    cube spreads onto indices mixing tripled and original entries, weighted
    by rho_inf^2 / (N_k N_l) times 3 per nonzero coordinate left unchanged.
    """
    kt = tuple(int(v) for v in (k if hasattr(k, "__iter__") else (k,)))
    if all(v == 0 for v in kt):
        raise InvalidMode("the zero mode has no nontrivial expansion")
    if any(v < 0 for v in kt):
        raise InvalidMode(f"expected a nonnegative index, got {kt}")
    d = len(kt)
    rho_inf = L**-d

    p2: dict[Mode, float] = {}
    for choice in itertools.product(*[((2 * v, 0) if v != 0 else (0,)) for v in kt]):
        j = tuple(choice)
        if all(v == 0 for v in j):
            continue
        p2[j] = rho_inf / norm_const(j, L)
    c0 = rho_inf / norm_const((0,) * d, L)

    p3: dict[Mode, float] = {}
    ck = 0.0
    for choice in itertools.product(*[((3 * v, v) if v != 0 else (0,)) for v in kt]):
        ell = tuple(choice)
        kept = sum(1 for a, b in zip(ell, kt) if b != 0 and a == b)
        coef = rho_inf**2 / (norm_const(kt, L) * norm_const(ell, L)) * 3.0**kept
        if ell == kt:
            ck = coef
        else:
            p3[ell] = coef
    return TrigExpansion(k=kt, p2=p2, c0=c0, p3=p3, ck=ck)


@dataclass(frozen=True)
class M4Report:
    """Outcome of the quartic-reinforcement inequalities.

    margins maps each tested mode to (lhs, rhs); the inequality asks
    lhs > rhs. a2 covers the doubled-index set, a3 the tripled one.
    """

    k_sharp: Mode
    a2_holds: bool
    a3_holds: bool
    margins_a2: dict[Mode, tuple[float, float]]
    margins_a3: dict[Mode, tuple[float, float]]

    @property
    def all_hold(self) -> bool:
        return self.a2_holds and self.a3_holds


def _oversampled_grid(W: Potential, indices) -> Grid:
    top = max(max(abs(v) for v in k) for k in indices)
    n = 16
    while n < 8 * max(top, 1):
        n *= 2
    return Grid(d=W.d, L=W.L, n=n)


def _signed(sigma: Mode, k: Mode) -> Mode:
    return tuple(s * abs(v) for s, v in zip(sigma, k))


def _sign_patterns(k: Mode):
    opts = [((1, -1) if v != 0 else (1,)) for v in k]
    return [tuple(p) for p in itertools.product(*opts)]


def _max_sq_product_coeff(grid: Grid, k: Mode, target: Mode, order: int) -> float:
    """max over sign patterns of the squared coefficient of the target mode
    in the product of `order` signed copies of e_k."""
    vol = grid.cell_volume
    fields = {s: spectral.mode_field(grid, _signed(s, k)).values for s in _sign_patterns(k)}
    best = 0.0
    for combo in itertools.product(_sign_patterns(k), repeat=order):
        prod = np.ones(grid.shape)
        for s in combo:
            prod = prod * fields[s]
        sign = tuple(int(np.prod([s[i] for s in combo])) for i in range(len(k)))
        tgt = spectral.mode_field(grid, _signed(sign, target)).values
        coef = vol * float(np.sum(prod * tgt))
        best = max(best, coef * coef)
    return best


def check_m4_conditions(W: Potential, k_max: int = 64) -> M4Report:
    """Test the two inequality families that force a continuous transition
    at quartic nonlinearity.

    Requires a unique dominant mode and no other negative mode. The
    coefficient maxima over sign patterns are extracted by quadrature on an
    oversampled grid, which keeps the constants exact for products of
    degree at most three.
    """
    report = dominant_mode(W, k_max)
    if not report.unique:
        raise PreconditionFailed("dominant mode is not unique within the truncation")
    ks = report.k_sharp
    negatives = [k for k, w in W.modes.items() if w < 0 and k != ks]
    if negatives:
        raise PreconditionFailed(f"negative secondary modes present: {negatives}")

    exp = p2_p3(ks, W.L)
    rho_inf = W.L**-W.d
    card = len(set(exp.p2) | set(exp.p3))
    w_sharp = abs(W.coefficient(ks))
    grid = _oversampled_grid(W, list(exp.p2) + list(exp.p3) + [ks])

    margins_a2: dict[Mode, tuple[float, float]] = {}
    for j in sorted(exp.p2):
        c_sq = _max_sq_product_coeff(grid, ks, j, order=2)
        rhs = 6.0 * theta(j) ** 5 * c_sq * card / (rho_inf * theta(ks)) * w_sharp
        margins_a2[j] = (W.coefficient(j), rhs)
    margins_a3: dict[Mode, tuple[float, float]] = {}
    for ell in sorted(exp.p3):
        c_sq = _max_sq_product_coeff(grid, ks, ell, order=3)
        rhs = 2.0 * theta(ell) ** 9 * theta(ks) * c_sq * card / (3.0 * rho_inf**2) * w_sharp
        margins_a3[ell] = (W.coefficient(ell), rhs)

    return M4Report(
        k_sharp=ks,
        a2_holds=all(lhs > rhs for lhs, rhs in margins_a2.values()),
        a3_holds=all(lhs > rhs for lhs, rhs in margins_a3.values()),
        margins_a2=margins_a2,
        margins_a3=margins_a3,
    )
