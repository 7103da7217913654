"""Spectral calculus on (0,1) with Dirichlet boundary.

Collocation on the uniform interior grid xi_j = j/(N+1), j=1..N.  The sampled
sine eigenfunctions e_k(xi) = sqrt(2) sin(k pi xi) of the Dirichlet Laplacian
are exactly orthonormal for the rectangle inner product <x,y> = h * sum x*y
(discrete sine orthogonality), so every diagonal operator of the Laplacian --
heat semigroup, Yosida approximation, mode projection -- is realized exactly
by a forward/inverse DST-I pair.

Array layout: space is always the last axis, so every helper broadcasts over
arbitrary batch dimensions (trajectories, directions).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dst
from scipy.integrate import cumulative_trapezoid

__all__ = [
    "Grid",
    "Field",
    "SpectralVector",
    "DualFunctional",
    "to_modes",
    "from_modes",
    "apply_diagonal",
    "heat_multipliers",
    "yosida_multipliers",
    "eigenpair",
    "heat_semigroup",
    "yosida_apply",
    "project_modes",
    "mollify",
    "subdifferential",
    "sup_norm",
    "h_norm",
    "l1_norm",
    "h_inner",
]

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Grid:
    """Uniform interior grid for (0,1) with implicit zero boundary values."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs at least 2 interior points, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def xi(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / (self.n + 1)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.n + 1)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Laplacian eigenvalues -k^2 pi^2 for k = 1..n."""
        k = self.modes
        return -((k * np.pi) ** 2)

    def index_of(self, xi0: float) -> int:
        """Nearest grid index to a location in (0,1); ties to the smaller index."""
        j = int(np.ceil(xi0 * (self.n + 1) - 1.5))
        return min(max(j, 0), self.n - 1)


# ---------------------------------------------------------------------------
# transforms (pure array helpers; space on the last axis)

def to_modes(values: np.ndarray, h: float) -> np.ndarray:
    """Mode coefficients c_k = <x, e_k> from grid samples (exact on the grid)."""
    return dst(values, type=1, axis=-1) * (h / _SQRT2)


def from_modes(coeffs: np.ndarray) -> np.ndarray:
    """Grid samples sum_k c_k e_k(xi_j) from mode coefficients."""
    return dst(coeffs, type=1, axis=-1) / _SQRT2


def apply_diagonal(values: np.ndarray, mult: np.ndarray, h: float) -> np.ndarray:
    """Apply a mode-diagonal operator: from_modes(mult * to_modes(values)).

    The two DST constants fold into a single h/2.
    """
    return dst(mult * dst(values, type=1, axis=-1), type=1, axis=-1) * (h / 2.0)


def heat_multipliers(grid: Grid, t: float) -> np.ndarray:
    """Mode multipliers exp(-k^2 pi^2 t) of the heat semigroup."""
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    return np.exp(grid.eigenvalues * t)


def yosida_multipliers(grid: Grid, k: float) -> np.ndarray:
    """Mode multipliers of the Yosida approximation A_k = kA(k - A)^{-1}."""
    if k <= 0:
        raise ValueError(f"Yosida parameter must be positive, got {k}")
    lam = grid.eigenvalues
    return k * lam / (k - lam)


# ---------------------------------------------------------------------------
# norms (rectangle quadrature h*sum, exact for the sampled eigenbasis)

def sup_norm(values: np.ndarray) -> np.ndarray:
    return np.abs(values).max(axis=-1)


def h_norm(values: np.ndarray, h: float) -> np.ndarray:
    return np.sqrt(h * np.square(values).sum(axis=-1))


def l1_norm(values: np.ndarray, h: float) -> np.ndarray:
    return h * np.abs(values).sum(axis=-1)


def h_inner(x: np.ndarray, y: np.ndarray, h: float) -> np.ndarray:
    return h * (x * y).sum(axis=-1)


# ---------------------------------------------------------------------------
# public value types

@dataclass
class Field:
    """A state in E: grid samples of a continuous function vanishing at 0, 1."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError(
                f"field shape {self.values.shape} does not match grid n={self.grid.n}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite entries")

    @property
    def sup_norm(self) -> float:
        return float(sup_norm(self.values))

    @property
    def h_norm(self) -> float:
        return float(h_norm(self.values, self.grid.h))

    @property
    def l1_norm(self) -> float:
        return float(l1_norm(self.values, self.grid.h))

    def inner(self, other: "Field") -> float:
        return float(h_inner(self.values, other.values, self.grid.h))


def field_from_function(grid: Grid, fn) -> Field:
    return Field(grid, np.asarray(fn(grid.xi), dtype=float))


@dataclass
class SpectralVector:
    """Mode coefficients c_k, k = 1..K_max, against the sine eigenbasis."""

    coeffs: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 1 or len(self.coeffs) > self.grid.n:
            raise ValueError("need 1 <= K_max <= N mode coefficients")

    @classmethod
    def from_field(cls, x: Field, k_max: int | None = None) -> "SpectralVector":
        k_max = x.grid.n if k_max is None else k_max
        if not 1 <= k_max <= x.grid.n:
            raise ValueError(f"mode count {k_max} out of range 1..{x.grid.n}")
        return cls(to_modes(x.values, x.grid.h)[:k_max], x.grid)

    def to_field(self) -> Field:
        padded = np.zeros(self.grid.n)
        padded[: len(self.coeffs)] = self.coeffs
        return Field(self.grid, from_modes(padded))


@dataclass
class DualFunctional:
    """An element of E*: a signed point mass or an L^1 density on the grid.

    kind "point": payload is (grid index, sign); the functional y -> s*y(xi*),
    norm 1 in E*.  kind "density": payload is a grid field w; the functional
    y -> h*sum(w*y), norm = l1_norm(w).
    """

    kind: str
    grid: Grid
    index: int = 0
    sign: float = 1.0
    density: np.ndarray | None = None

    def pair(self, y: Field | np.ndarray) -> float | np.ndarray:
        values = y.values if isinstance(y, Field) else np.asarray(y)
        if self.kind == "point":
            return self.sign * values[..., self.index]
        return h_inner(self.density, values, self.grid.h)

    @property
    def dual_norm(self) -> float:
        if self.kind == "point":
            return 1.0
        return float(l1_norm(self.density, self.grid.h))


# ---------------------------------------------------------------------------
# operations

def eigenpair(grid: Grid, k: int) -> tuple[Field, float]:
    """k-th Dirichlet eigenfunction sqrt(2) sin(k pi xi) and eigenvalue -k^2 pi^2."""
    if not 1 <= k <= grid.n:
        raise ValueError(f"mode index {k} out of range 1..{grid.n}")
    values = _SQRT2 * np.sin(k * np.pi * grid.xi)
    return Field(grid, values), float(-((k * np.pi) ** 2))


def heat_semigroup(x: Field, t: float) -> Field:
    """e^{tA} x via the sine transform; t=0 is the on-grid identity."""
    return Field(x.grid, apply_diagonal(x.values, heat_multipliers(x.grid, t), x.grid.h))


def yosida_apply(x: Field, k: float) -> Field:
    """A_k x = kA(k-A)^{-1} x, the bounded Yosida surrogate of the Laplacian."""
    return Field(x.grid, apply_diagonal(x.values, yosida_multipliers(x.grid, k), x.grid.h))


def project_modes(x: Field, m: int) -> Field:
    """Orthogonal projection onto span{e_1..e_m}."""
    if not 1 <= m <= x.grid.n:
        raise ValueError(f"mode count {m} out of range 1..{x.grid.n}")
    mult = (x.grid.modes <= m).astype(float)
    return Field(x.grid, apply_diagonal(x.values, mult, x.grid.h))


def projection_multipliers(grid: Grid, m: int) -> np.ndarray:
    if not 1 <= m <= grid.n:
        raise ValueError(f"mode count {m} out of range 1..{grid.n}")
    return (grid.modes <= m).astype(float)


def mollify(x: Field, n: int) -> Field:
    """Window average x_n(xi) = (n/2) * integral of the odd extension of x
    over (xi - 1/n, xi + 1/n).

    The extension is odd across both endpoints (zero at 0 and 1), which is what
    keeps the average vanishing at the boundary and gives the sup bound
    |x_n|_E <= sqrt(n/2) |x|_H: after folding the reflected pieces back, the
    effective integration window sits inside (0,1) with length <= 2/n.
    """
    if n < 1:
        raise ValueError(f"averaging index must be >= 1, got {n}")
    grid = x.grid
    h = grid.h
    # odd extension sampled on [-1, 2]: 3*(n+1)+1 nodes including both ends
    inner = x.values
    ext = np.concatenate([[0.0], -inner[::-1], [0.0], inner, [0.0], -inner[::-1], [0.0]])
    eta = np.linspace(-1.0, 2.0, ext.size)
    anti = np.concatenate([[0.0], cumulative_trapezoid(ext, dx=h)])
    left = np.interp(grid.xi - 1.0 / n, eta, anti)
    right = np.interp(grid.xi + 1.0 / n, eta, anti)
    return Field(grid, 0.5 * n * (right - left))


def subdifferential(x: Field) -> DualFunctional:
    """Norm-one functional attaining <x, delta_x> = |x|_E.

    A signed point evaluation at the smallest-index maximizer of |x|; for the
    zero field the designated default is the point mass nearest xi = 1/2 with
    positive sign.
    """
    values = x.values
    if not np.any(values):
        return DualFunctional("point", x.grid, index=x.grid.index_of(0.5), sign=1.0)
    j = int(np.argmax(np.abs(values)))
    s = 1.0 if values[j] > 0 else -1.0
    return DualFunctional("point", x.grid, index=j, sign=s)
