"""Observables phi: E -> R with optional derivative metadata.

Every observable evaluates in batch on arrays of grid samples (space on the
last axis).  When first/second derivatives are available they are exposed as

    grad_pair(u, v)   = <v, D phi(u)>          (directional derivative)
    hess_quad(u, v)   = <v, D^2 phi(u) v>      (second directional derivative)
    grad_dual_norm(u) = |D phi(u)|_{E*}

which is all the estimators need: tangent-flow gradients, generator
applications, and carre-du-champ terms are built from pairings, never from a
materialized gradient vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import Field, Grid, h_inner, l1_norm

__all__ = [
    "Observable",
    "CylindricalObservable",
    "EvaluationObservable",
    "ProductObservable",
    "CustomObservable",
    "constant_observable",
    "square_observable",
    "smooth_cylindrical",
]


@dataclass
class Observable:
    """Base: named bounded-or-not functional with derivative metadata flags."""

    name: str = "observable"
    sup_bound: float = np.inf
    has_gradient: bool = False
    has_hessian: bool = False

    def value(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_pair(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.name} carries no gradient metadata")

    def hess_quad(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.name} carries no Hessian metadata")

    def grad_dual_norm(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.name} carries no gradient metadata")

    def __call__(self, u) -> np.ndarray:
        values = u.values if isinstance(u, Field) else np.asarray(u)
        return self.value(values)


@dataclass
class CylindricalObservable(Observable):
    """phi(x) = chi(<x, w>) for a smooth scalar chi and a grid density w.

    D phi(x) = chi'(<x,w>) w, so gradients live in L^1 and the carre-du-champ
    series against a cylindrical observable is a Parseval sum.
    """

    grid: Grid = None
    w: np.ndarray = None
    chi: callable = None
    chi_d: callable = None
    chi_dd: callable = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (self.grid.n,):
            raise ValueError("density shape does not match grid")
        self.has_gradient = self.chi_d is not None
        self.has_hessian = self.chi_dd is not None

    def _r(self, u):
        return h_inner(u, self.w, self.grid.h)

    def value(self, u):
        return self.chi(self._r(u))

    def grad_pair(self, u, v):
        return self.chi_d(self._r(u)) * h_inner(v, self.w, self.grid.h)

    def hess_quad(self, u, v):
        return self.chi_dd(self._r(u)) * h_inner(v, self.w, self.grid.h) ** 2

    def grad_dual_norm(self, u):
        return np.abs(self.chi_d(self._r(u))) * l1_norm(self.w, self.grid.h)


@dataclass
class EvaluationObservable(Observable):
    """phi(x) = chi(x(xi0)): composition with a point evaluation.

    Its gradient is a point mass, so it is Lipschitz on E but NOT of the
    cylindrical class; the carre-du-champ series against it diverges like the
    number of retained modes.  Kept precisely to exercise that failure mode.
    """

    grid: Grid = None
    xi0: float = 0.5
    chi: callable = None
    chi_d: callable = None
    chi_dd: callable = None

    def __post_init__(self):
        self.index = self.grid.index_of(self.xi0)
        self.has_gradient = self.chi_d is not None
        self.has_hessian = self.chi_dd is not None

    def value(self, u):
        return self.chi(u[..., self.index])

    def grad_pair(self, u, v):
        return self.chi_d(u[..., self.index]) * v[..., self.index]

    def hess_quad(self, u, v):
        return self.chi_dd(u[..., self.index]) * v[..., self.index] ** 2

    def grad_dual_norm(self, u):
        return np.abs(self.chi_d(u[..., self.index]))


@dataclass
class ProductObservable(Observable):
    """phi(x) = prod_k <x, w_k> for grid densities w_k (polynomial cylindrical)."""

    grid: Grid = None
    ws: tuple = ()

    def __post_init__(self):
        self.ws = tuple(np.asarray(w, dtype=float) for w in self.ws)
        if len(self.ws) < 1:
            raise ValueError("need at least one factor")
        self.has_gradient = True
        self.has_hessian = True

    def _pairings(self, u):
        return np.stack([h_inner(u, w, self.grid.h) for w in self.ws])

    def value(self, u):
        return np.prod(self._pairings(u), axis=0)

    def grad_pair(self, u, v):
        p = self._pairings(u)
        q = np.stack([h_inner(v, w, self.grid.h) for w in self.ws])
        total = np.zeros(np.asarray(u).shape[:-1])
        for k in range(len(self.ws)):
            others = np.prod(np.delete(p, k, axis=0), axis=0)
            total = total + others * q[k]
        return total

    def hess_quad(self, u, v):
        p = self._pairings(u)
        q = np.stack([h_inner(v, w, self.grid.h) for w in self.ws])
        total = np.zeros(np.asarray(u).shape[:-1])
        for k in range(len(self.ws)):
            for l in range(len(self.ws)):
                if k == l:
                    continue
                others = np.prod(np.delete(p, [k, l], axis=0), axis=0)
                total = total + others * q[k] * q[l]
        return total

    def grad_dual_norm(self, u):
        p = self._pairings(u)
        norms = np.array([l1_norm(w, self.grid.h) for w in self.ws])
        total = np.zeros(np.asarray(u).shape[:-1])
        for k in range(len(self.ws)):
            others = np.prod(np.delete(p, k, axis=0), axis=0)
            total = total + np.abs(others) * norms[k]
        return total  # triangle-inequality bound, exact for a single factor


@dataclass
class CustomObservable(Observable):
    """Wrap arbitrary callables (batch arrays in, batch values out)."""

    fn: callable = None
    grad_pair_fn: callable = None
    hess_quad_fn: callable = None
    grad_dual_norm_fn: callable = None

    def __post_init__(self):
        self.has_gradient = self.grad_pair_fn is not None
        self.has_hessian = self.hess_quad_fn is not None

    def value(self, u):
        return self.fn(u)

    def grad_pair(self, u, v):
        if self.grad_pair_fn is None:
            return super().grad_pair(u, v)
        return self.grad_pair_fn(u, v)

    def hess_quad(self, u, v):
        if self.hess_quad_fn is None:
            return super().hess_quad(u, v)
        return self.hess_quad_fn(u, v)

    def grad_dual_norm(self, u):
        if self.grad_dual_norm_fn is None:
            return super().grad_dual_norm(u)
        return self.grad_dual_norm_fn(u)


def constant_observable(grid: Grid, c: float = 1.0) -> Observable:
    def zero(u, v=None):
        return np.zeros(np.asarray(u).shape[:-1])

    return CustomObservable(
        name=f"const[{c:g}]", sup_bound=abs(c),
        fn=lambda u: np.full(np.asarray(u).shape[:-1], float(c)),
        grad_pair_fn=lambda u, v: zero(u),
        hess_quad_fn=lambda u, v: zero(u),
        grad_dual_norm_fn=zero,
    )


def square_observable(obs: Observable) -> Observable:
    """phi^2 with derivatives by the product rule (needs phi's metadata)."""
    sup = obs.sup_bound ** 2 if np.isfinite(obs.sup_bound) else np.inf
    out = CustomObservable(
        name=f"({obs.name})^2", sup_bound=sup,
        fn=lambda u: obs.value(u) ** 2,
        grad_pair_fn=(lambda u, v: 2.0 * obs.value(u) * obs.grad_pair(u, v))
        if obs.has_gradient else None,
        hess_quad_fn=(lambda u, v: 2.0 * obs.grad_pair(u, v) ** 2
                      + 2.0 * obs.value(u) * obs.hess_quad(u, v))
        if obs.has_hessian else None,
        grad_dual_norm_fn=(lambda u: 2.0 * np.abs(obs.value(u)) * obs.grad_dual_norm(u))
        if obs.has_gradient else None,
    )
    return out


def smooth_cylindrical(grid: Grid, w: np.ndarray, kind: str, name: str | None = None,
                       scale: float = 1.0) -> CylindricalObservable:
    """Stock chi shapes against a density w: 'linear', 'cos', 'tanh'."""
    w = np.asarray(w, dtype=float)
    if kind == "linear":
        chi, chi_d, chi_dd = (lambda r: r), (lambda r: np.ones_like(r)), (lambda r: np.zeros_like(r))
        sup = np.inf
    elif kind == "cos":
        chi, chi_d, chi_dd = np.cos, (lambda r: -np.sin(r)), (lambda r: -np.cos(r))
        sup = 1.0
    elif kind == "tanh":
        def chi(r):
            return np.tanh(r / scale)

        def chi_d(r):
            return (1.0 - np.tanh(r / scale) ** 2) / scale

        def chi_dd(r):
            t = np.tanh(r / scale)
            return -2.0 * t * (1.0 - t * t) / scale ** 2

        sup = 1.0
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return CylindricalObservable(
        name=name or f"{kind}<.,w>", sup_bound=sup, grid=grid, w=w,
        chi=chi, chi_d=chi_d, chi_dd=chi_dd,
    )
