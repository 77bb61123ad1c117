"""Periodic grid, mixed cosine/sine basis, transforms and interaction forms.

The domain is the d-dimensional torus of side L (d in {1, 2}), discretised by
uniform cell centers. The basis is the real trigonometric family

    e_k(x) = N_k * prod_i phi_{k_i}(x_i),     k in Z^d,

where phi_j is cos(2*pi*j*x/L) for j > 0, the constant 1 for j = 0 and
sin(2*pi*|j|*x/L) for j < 0, and N_k = Theta(k) / L^(d/2) with
Theta(k) = prod_i (2 - delta_{k_i,0})^(1/2). The family is orthonormal in
L^2, so coefficients are plain inner products evaluated by trapezoidal
quadrature, which is exact for band-limited integrands on this grid.

Sign patterns of a nonnegative multi-index (the "signed variants" below)
enumerate the distinct cosine/sine companions of a mode; indices with a zero
entry have fewer variants because flipping a zero is the identity.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np

from .errors import GridMismatch, InvalidMode, NotADensity

if TYPE_CHECKING:  # pragma: no cover
    from .potential import Potential

Mode = tuple[int, ...]

DENSITY_MASS_TOL = 1e-12


def as_mode(k, d: int) -> Mode:
    """Normalise an int or an iterable of ints to a length-d index tuple."""
    if isinstance(k, (int, np.integer)):
        if d != 1:
            raise InvalidMode(f"scalar index {k} on a {d}-dimensional grid")
        return (int(k),)
    kt = tuple(int(v) for v in k)
    if len(kt) != d:
        raise InvalidMode(f"index {kt} has length {len(kt)}, expected {d}")
    return kt


def theta(k) -> float:
    """Theta(k): square root of the number of distinct signed variants of k."""
    kt = tuple(int(v) for v in (k if isinstance(k, Iterable) else (k,)))
    nz = sum(1 for v in kt if v != 0)
    return math.sqrt(2.0**nz)


def norm_const(k, L: float) -> float:
    """Basis normalisation N_k = Theta(k) / L^(d/2)."""
    kt = tuple(int(v) for v in (k if isinstance(k, Iterable) else (k,)))
    return theta(kt) / L ** (len(kt) / 2.0)


def sym_variants(k) -> list[Mode]:
    """Distinct sign patterns of a nonnegative multi-index, sorted.

    For k with z nonzero entries this has 2**z elements; equal variants
    arising from zero entries are merged, which realises the quotient by
    the stabiliser of k.
    """
    kt = tuple(int(v) for v in (k if isinstance(k, Iterable) else (k,)))
    variants = {()}
    for v in kt:
        if v == 0:
            variants = {t + (0,) for t in variants}
        else:
            variants = {t + (v,) for t in variants} | {t + (-v,) for t in variants}
    return sorted(variants)


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered periodic grid on [0, L)^d.

    Attributes:
        d: spatial dimension, 1 or 2.
        L: side length, > 0.
        n: cells per dimension, a power of two >= 8.
    """

    d: int
    L: float
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def nyquist(self) -> int:
        return self.n // 2

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    def axis(self) -> np.ndarray:
        """Cell centers along one axis: x_i = (i + 1/2) L / n."""
        return (np.arange(self.n) + 0.5) * self.h

    def meshes(self) -> tuple[np.ndarray, ...]:
        """Per-axis coordinate arrays broadcast to the full grid shape."""
        return tuple(np.meshgrid(*([self.axis()] * self.d), indexing="ij"))


@dataclass(frozen=True)
class Field:
    """Real scalar field sampled at the cell centers of a grid.

    Values are stored read-only; every operation returns a new Field, so
    instances can be shared freely across threads.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != self.grid.shape:
            raise GridMismatch(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def density(cls, grid: Grid, values, mass_tol: float = DENSITY_MASS_TOL) -> "Field":
        """Construct a probability density; checks nonnegativity and unit mass."""
        f = cls(grid, values)
        if f.min_value < 0:
            raise NotADensity(f"negative values (min {f.min_value:.3e})")
        if abs(f.mass - 1.0) > mass_tol:
            raise NotADensity(f"mass {f.mass!r} differs from 1 by more than {mass_tol}")
        return f

    @property
    def mass(self) -> float:
        return float(self.grid.cell_volume * self.values.sum())

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def max_value(self) -> float:
        return float(self.values.max())

    @property
    def min_value(self) -> float:
        return float(self.values.min())

    def shifted(self, cells) -> "Field":
        """Translate by whole cells along each axis (periodic roll)."""
        if isinstance(cells, (int, np.integer)):
            cells = (int(cells),) * self.grid.d
        out = self.values
        for ax, c in enumerate(cells):
            out = np.roll(out, int(c), axis=ax)
        return Field(self.grid, out)


def flat_state(grid: Grid) -> Field:
    """The uniform density L^(-d), stationary for every beta."""
    return Field.density(grid, np.full(grid.shape, grid.L**-grid.d))


def _axis_function(j: int, x: np.ndarray, L: float) -> np.ndarray:
    if j > 0:
        return np.cos(2.0 * np.pi * j * x / L)
    if j < 0:
        return np.sin(2.0 * np.pi * (-j) * x / L)
    return np.ones_like(x)


def basis_eval(k, x, grid: Grid):
    """Evaluate e_k at points x (scalar, 1d array, or (..., d) array).

    Raises InvalidMode when any |k_i| exceeds the Nyquist index n/2.
    """
    kt = as_mode(k, grid.d)
    if any(abs(v) > grid.nyquist for v in kt):
        raise InvalidMode(f"mode {kt} beyond Nyquist limit {grid.nyquist}")
    xs = np.asarray(x, dtype=float)
    if grid.d == 1:
        axes = [xs]
    else:
        if xs.shape[-1] != grid.d:
            raise InvalidMode(f"point shape {xs.shape} incompatible with d={grid.d}")
        axes = [xs[..., i] for i in range(grid.d)]
    out = np.full(np.shape(axes[0]), norm_const(kt, grid.L))
    for j, ax in zip(kt, axes):
        out = out * _axis_function(j, ax, grid.L)
    return out if out.ndim else float(out)


def mode_field(grid: Grid, k) -> Field:
    """The basis function e_k sampled on the grid (cached; fields are immutable)."""
    return _mode_field_cached(grid, as_mode(k, grid.d))


@functools.lru_cache(maxsize=None)
def _mode_field_cached(grid: Grid, kt: Mode) -> Field:
    if any(abs(v) > grid.nyquist for v in kt):
        raise InvalidMode(f"mode {kt} beyond Nyquist limit {grid.nyquist}")
    vals = np.full(grid.shape, norm_const(kt, grid.L))
    for ax, j in enumerate(kt):
        func = _axis_function(j, grid.axis(), grid.L)
        shape = [1] * grid.d
        shape[ax] = grid.n
        vals = vals * func.reshape(shape)
    return Field(grid, vals)


@dataclass(frozen=True)
class SpectralCoeffs:
    """Coefficient table over signed multi-indices, truncated at k_max."""

    d: int
    L: float
    k_max: int
    table: Mapping[Mode, float]

    def __getitem__(self, k) -> float:
        return self.table.get(as_mode(k, self.d), 0.0)

    def norm_sq(self) -> float:
        return sum(v * v for v in self.table.values())


def _signed_range(k_max: int) -> list[int]:
    return list(range(-k_max, k_max + 1))


def analyze(f: Field, k_max: int | None = None) -> SpectralCoeffs:
    """Coefficients f_hat(k) = <f, e_k> by exact trapezoidal quadrature.

    Defaults to k_max = n/2 - 1 so that synthesize(analyze(f)) reproduces
    any field band-limited below the Nyquist index.
    """
    grid = f.grid
    if k_max is None:
        k_max = grid.nyquist - 1
    if k_max > grid.nyquist:
        raise InvalidMode(f"k_max {k_max} beyond Nyquist limit {grid.nyquist}")
    x = grid.axis()
    funcs = {j: _axis_function(j, x, grid.L) for j in _signed_range(k_max)}
    table: dict[Mode, float] = {}
    if grid.d == 1:
        for j, phi in funcs.items():
            table[(j,)] = grid.cell_volume * norm_const((j,), grid.L) * float(phi @ f.values)
    else:
        # Separable quadrature: contract rows first, then columns.
        partial = {j: funcs[j] @ f.values for j in funcs}
        for j1 in _signed_range(k_max):
            row = partial[j1]
            for j2 in _signed_range(k_max):
                val = grid.cell_volume * norm_const((j1, j2), grid.L) * float(funcs[j2] @ row)
                table[(j1, j2)] = val
    return SpectralCoeffs(grid.d, grid.L, k_max, table)


def synthesize(c: SpectralCoeffs, grid: Grid) -> Field:
    """Sum the coefficient table against the sampled basis."""
    if c.d != grid.d or not math.isclose(c.L, grid.L, rel_tol=0, abs_tol=0):
        raise GridMismatch(f"coefficients for (d={c.d}, L={c.L}) on grid (d={grid.d}, L={grid.L})")
    vals = np.zeros(grid.shape)
    for k in sorted(c.table):
        coef = c.table[k]
        if coef == 0.0:
            continue
        vals = vals + coef * mode_field(grid, k).values
    return Field(grid, vals)


def _require_compatible(W: "Potential", grid: Grid):
    if W.d != grid.d or not math.isclose(W.L, grid.L, rel_tol=0, abs_tol=0):
        raise GridMismatch(f"potential on (d={W.d}, L={W.L}) vs grid (d={grid.d}, L={grid.L})")


def convolve(W: "Potential", f: Field) -> Field:
    """Periodic convolution W * f through the cosine-mode series of W.

    For each stored mode k of W the signed variants sigma(k) contribute
    W_hat(k)/N_k * f_hat(sigma(k)) * e_sigma(k). Mean-zero kernels give a
    mean-zero result.
    """
    grid = f.grid
    _require_compatible(W, grid)
    out = np.zeros(grid.shape)
    vol = grid.cell_volume
    for k in sorted(W.modes):
        w = W.modes[k]
        if w == 0.0:
            continue
        inv_nk = 1.0 / norm_const(k, grid.L)
        for v in sym_variants(k):
            e_v = mode_field(grid, v).values
            fhat = vol * float(np.sum(f.values * e_v))
            out = out + (w * inv_nk * fhat) * e_v
    return Field(grid, out)


def bilinear_form(W: "Potential", f: Field) -> float:
    """Interaction form: integral of W(x-y) f(x) f(y) over the torus squared.

    Evaluated as sum_k W_hat(k)/N_k * sum_sigma |f_hat(sigma(k))|^2.
    """
    grid = f.grid
    _require_compatible(W, grid)
    vol = grid.cell_volume
    total = 0.0
    for k in sorted(W.modes):
        w = W.modes[k]
        if w == 0.0:
            continue
        acc = 0.0
        for v in sym_variants(k):
            fhat = vol * float(np.sum(f.values * mode_field(grid, v).values))
            acc += fhat * fhat
        total += w / norm_const(k, grid.L) * acc
    return total


def double_quadrature(W: "Potential", f: Field) -> float:
    """Direct O(n^(2d)) tensor quadrature of the interaction form.

    Independent oracle for bilinear_form: the kernel is evaluated pointwise
    at the difference lattice and contracted against f twice, with no
    spectral identities involved.
    """
    grid = f.grid
    _require_compatible(W, grid)
    n = grid.n
    offsets = np.arange(n) * grid.h
    if grid.d == 1:
        kernel = W.evaluate(offsets)
        idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
        K = kernel[idx]
        v = f.values
        return float(grid.cell_volume**2 * v @ K @ v)
    dx, dy = np.meshgrid(offsets, offsets, indexing="ij")
    kernel = W.evaluate(np.stack([dx, dy], axis=-1))
    ii = np.arange(n)
    di = (ii[:, None] - ii[None, :]) % n
    K = kernel[di[:, None, :, None], di[None, :, None, :]].reshape(n * n, n * n)
    v = f.values.reshape(-1)
    return float(grid.cell_volume**2 * v @ K @ v)
