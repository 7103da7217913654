"""Reaction and diffusion coefficients as Nemytskii operators.

A reaction f(xi, rho) acts on a field pointwise, [F(x)](xi) = f(xi, x(xi)),
with derivatives acting by pointwise multiplication.  The diffusion g enters
as the multiplication operator [G(x)y](xi) = g(xi, x(xi)) y(xi).

All evaluators take (xi, rho) and must broadcast: xi has shape (N,), rho any
shape (..., N).  Presets are xi-independent; the API supports xi-dependence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .spectral import Field, Grid

__all__ = [
    "ReactionSpec",
    "DiffusionSpec",
    "ModelSpec",
    "HypothesisError",
    "ValidationReport",
    "gamma_cutoff",
    "gamma_cutoff_deriv",
    "gamma_cutoff_second",
    "truncate_reaction",
    "apply_F",
    "apply_DF",
    "apply_D2F",
    "apply_G",
    "apply_G_inverse",
    "validate_hypotheses",
    "model_preset",
]


class HypothesisError(RuntimeError):
    """A standing assumption needed by the requested operation fails."""


# ---------------------------------------------------------------------------
# cutoff

def _blend(t):
    # quintic on [0,1] joining (1,1,0) -> (2,0,0) in (value, slope, curvature)
    return 1.0 + t + t**3 * (4.0 + t * (-7.0 + 3.0 * t))


def _blend_d(t):
    return 1.0 + t**2 * (12.0 + t * (-28.0 + 15.0 * t))


def _blend_dd(t):
    return t * (24.0 + t * (-84.0 + 60.0 * t))


def gamma_cutoff(r):
    """Odd, non-decreasing, twice continuously differentiable cutoff.

    Identity on |r| <= 1, saturates at +-2 for |r| >= 2, quintic blend in
    between (value/slope/curvature matched at both seams).
    """
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    out = np.where(a <= 1.0, r, np.sign(r) * _blend(np.clip(a - 1.0, 0.0, 1.0)))
    return np.where(a >= 2.0, np.sign(r) * 2.0, out)


def gamma_cutoff_deriv(r):
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    out = np.where(a <= 1.0, 1.0, _blend_d(np.clip(a - 1.0, 0.0, 1.0)))
    return np.where(a >= 2.0, 0.0, out)


def gamma_cutoff_second(r):
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    out = np.where(a <= 1.0, 0.0, np.sign(r) * _blend_dd(np.clip(a - 1.0, 0.0, 1.0)))
    return np.where(a >= 2.0, 0.0, out)


# ---------------------------------------------------------------------------
# specs

@dataclass
class ReactionSpec:
    """Reaction f with rho-derivatives and its standing-assumption metadata."""

    f: Callable
    df: Callable
    d2f: Callable
    deg_m: float = 1.0
    lambda_dissip: float = 0.0
    alpha_h14: float | None = None
    beta_h14: float | None = None
    name: str = "reaction"


@dataclass
class DiffusionSpec:
    """Diffusion g with rho-derivatives and Lipschitz/bound metadata."""

    g: Callable
    dg: Callable
    d2g: Callable
    lip_const: float = 0.0
    beta_g: float = 0.0
    upper_bound: float = math.inf
    name: str = "diffusion"


def truncate_reaction(spec: ReactionSpec, n: float) -> ReactionSpec:
    """Reaction f_n(xi, rho) = f(xi, n * gamma(rho/n)) with chain-rule derivatives.

    On |rho| <= n the evaluators compute f(xi, rho) directly (numpy.where on the
    untouched argument), so the agreement with the untruncated reaction on the
    identity region is bit-exact, not merely within rounding of n*(rho/n).
    """
    if n < 1:
        raise ValueError(f"truncation level must be >= 1, got {n}")
    if math.isinf(n):
        return spec
    f, df, d2f = spec.f, spec.df, spec.d2f

    def fn(xi, rho):
        rho = np.asarray(rho, dtype=float)
        inside = np.abs(rho) <= n
        return np.where(inside, f(xi, rho), f(xi, n * gamma_cutoff(rho / n)))

    def dfn(xi, rho):
        rho = np.asarray(rho, dtype=float)
        inside = np.abs(rho) <= n
        r = rho / n
        return np.where(inside, df(xi, rho), df(xi, n * gamma_cutoff(r)) * gamma_cutoff_deriv(r))

    def d2fn(xi, rho):
        rho = np.asarray(rho, dtype=float)
        inside = np.abs(rho) <= n
        r = rho / n
        arg = n * gamma_cutoff(r)
        outside = d2f(xi, arg) * gamma_cutoff_deriv(r) ** 2 + df(xi, arg) * gamma_cutoff_second(r) / n
        return np.where(inside, d2f(xi, rho), outside)

    return replace(spec, f=fn, df=dfn, d2f=d2fn, name=f"{spec.name}|trunc{n:g}")


@dataclass
class ModelSpec:
    """A complete model: reaction, diffusion, grid, and approximation knobs.

    truncation_n = inf means the untruncated reaction; yosida_k = inf means the
    exact Laplacian semigroup in the time stepper.  noise_modes M is the number
    of driving Brownian modes.
    """

    reaction: ReactionSpec
    diffusion: DiffusionSpec
    grid: Grid
    noise_modes: int = 16
    truncation_n: float = math.inf
    yosida_k: float = math.inf
    name: str = "model"

    def __post_init__(self):
        if not 1 <= self.noise_modes <= self.grid.n:
            raise ValueError(
                f"noise modes {self.noise_modes} out of range 1..{self.grid.n}"
            )
        if self.truncation_n < 1:
            raise ValueError("truncation level must be >= 1 (inf = untruncated)")
        if self.yosida_k <= 0:
            raise ValueError("yosida_k must be positive (inf = exact)")
        self._effective = (
            self.reaction
            if math.isinf(self.truncation_n)
            else truncate_reaction(self.reaction, self.truncation_n)
        )

    @property
    def effective_reaction(self) -> ReactionSpec:
        """The reaction actually integrated: truncated when truncation_n < inf."""
        return self._effective


# ---------------------------------------------------------------------------
# Nemytskii applications (array core + Field wrappers)

def reaction_values(model: ModelSpec, u: np.ndarray) -> np.ndarray:
    return model.effective_reaction.f(model.grid.xi, u)


def reaction_deriv_values(model: ModelSpec, u: np.ndarray) -> np.ndarray:
    return model.effective_reaction.df(model.grid.xi, u)


def reaction_second_values(model: ModelSpec, u: np.ndarray) -> np.ndarray:
    return model.effective_reaction.d2f(model.grid.xi, u)


def diffusion_values(model: ModelSpec, u: np.ndarray) -> np.ndarray:
    return model.diffusion.g(model.grid.xi, u)


def diffusion_deriv_values(model: ModelSpec, u: np.ndarray) -> np.ndarray:
    return model.diffusion.dg(model.grid.xi, u)


def diffusion_second_values(model: ModelSpec, u: np.ndarray) -> np.ndarray:
    return model.diffusion.d2g(model.grid.xi, u)


def _check_grid(model: ModelSpec, *fields: Field):
    for x in fields:
        if x.grid.n != model.grid.n:
            raise ValueError("field grid does not match model grid")


def apply_F(model: ModelSpec, x: Field) -> Field:
    """[F(x)](xi) = f_n(xi, x(xi))."""
    _check_grid(model, x)
    return Field(model.grid, reaction_values(model, x.values))


def apply_DF(model: ModelSpec, x: Field, y: Field) -> Field:
    """[DF(x)y](xi) = f_n'(xi, x(xi)) y(xi)."""
    _check_grid(model, x, y)
    return Field(model.grid, reaction_deriv_values(model, x.values) * y.values)


def apply_D2F(model: ModelSpec, x: Field, y1: Field, y2: Field) -> Field:
    """[D2F(x)(y1,y2)](xi) = f_n''(xi, x(xi)) y1(xi) y2(xi)."""
    _check_grid(model, x, y1, y2)
    return Field(model.grid, reaction_second_values(model, x.values) * y1.values * y2.values)


def apply_G(model: ModelSpec, x: Field, y: Field) -> Field:
    """[G(x)y](xi) = g(xi, x(xi)) y(xi)."""
    _check_grid(model, x, y)
    return Field(model.grid, diffusion_values(model, x.values) * y.values)


def apply_G_inverse(model: ModelSpec, x: Field, y: Field) -> Field:
    """[G(x)^{-1} y](xi) = y(xi) / g(xi, x(xi)); needs |g| bounded below."""
    _check_grid(model, x, y)
    if model.diffusion.beta_g <= 0:
        raise HypothesisError("G inverse needs a positive lower bound on |g|")
    return Field(model.grid, y.values / diffusion_values(model, x.values))


# ---------------------------------------------------------------------------
# hypothesis validation

@dataclass
class ValidationReport:
    """Sampled pass/fail per standing assumption, with witnesses."""

    items: dict = field(default_factory=dict)

    def record(self, key: str, passed: bool, required: bool, **info):
        self.items[key] = {"passed": bool(passed), "required": bool(required), **info}

    def passed(self, key: str) -> bool:
        return self.items[key]["passed"]

    @property
    def all_required_passed(self) -> bool:
        return all(v["passed"] for v in self.items.values() if v["required"])

    def summary_lines(self) -> list[str]:
        lines = []
        for key, v in self.items.items():
            status = "pass" if v["passed"] else "FAIL"
            req = "required" if v["required"] else "informational"
            extra = {k: w for k, w in v.items() if k not in ("passed", "required")}
            lines.append(f"{key}: {status} ({req}) {extra}")
        return lines


def _ratio_fit(values: np.ndarray, rho: np.ndarray, power: float) -> float:
    return float((np.abs(values) / (1.0 + np.abs(rho) ** power)).max())


def validate_hypotheses(
    model: ModelSpec,
    rho_range: tuple[float, float] = (-6.0, 6.0),
    n_rho: int = 2001,
    n_xi: int = 9,
) -> ValidationReport:
    """Sample the coefficient box and check every standing assumption.

    Growth bounds are checked for stability: doubling the sample box must not
    raise the fitted constant by more than a factor 2^(1/2), i.e. the implied
    growth exponent may not exceed the declared degree by half a power
    (detects super-polynomial growth without symbolic analysis).  The strict
    dissipativity condition is read as sup f' <= pi^2 - alpha for some
    alpha > 0 (the smallest Dirichlet eigenvalue is pi^2), together with a
    finite uniform bound on |g|.
    """
    rx = model.reaction
    dx = model.diffusion
    xi = np.linspace(model.grid.xi[0], model.grid.xi[-1], n_xi)[:, None]
    rho = np.linspace(rho_range[0], rho_range[1], n_rho)[None, :]
    half = np.abs(rho) <= 0.5 * max(abs(rho_range[0]), abs(rho_range[1]))
    report = ValidationReport()

    m = rx.deg_m
    f0, f1, f2 = rx.f(xi, rho), rx.df(xi, rho), rx.d2f(xi, rho)
    ok_growth = True
    fitted = {}
    for j, vals in enumerate((f0, f1, f2)):
        power = max(m - j, 0.0)
        c_full = _ratio_fit(vals, rho, power)
        c_half = _ratio_fit(np.where(half, vals, 0.0), rho, power)
        # a degree-(power) bound keeps the fitted constant saturating as the
        # box doubles; growth of a strictly higher degree k shows up as
        # c_full/c_half ~ 2^(k-power).  Flag an implied excess power >= 1/2.
        excess = math.log2(max(c_full, 1e-300) / max(c_half, 1e-300))
        stable = c_full <= 1e-9 or excess <= 0.5
        ok_growth &= stable
        fitted[f"c_{j}"] = c_full
        fitted[f"excess_{j}"] = excess
    report.record("h1_growth", ok_growth, required=True, deg_m=m, **fitted)

    sup_fp = float(f1.max())
    i_w = np.unravel_index(int(f1.argmax()), f1.shape)
    report.record(
        "h1_sup_fprime",
        sup_fp <= rx.lambda_dissip + 1e-9,
        required=True,
        sup_fprime=sup_fp,
        declared_lambda=rx.lambda_dissip,
        witness_rho=float(rho[0, i_w[1]]),
    )

    g0 = dx.g(xi, rho)
    has_h14 = rx.alpha_h14 is not None and rx.beta_h14 is not None
    c_g_full = _ratio_fit(g0, rho, 1.0 / m)
    c_g_half = _ratio_fit(np.where(half, g0, 0.0), rho, 1.0 / m)
    excess_g = math.log2(max(c_g_full, 1e-300) / max(c_g_half, 1e-300))
    report.record(
        "h1_g_growth",
        c_g_full <= 1e-9 or excess_g <= 0.5,
        required=not has_h14,
        fitted_c=c_g_full,
        excess=excess_g,
    )

    dg_samples = np.abs(np.diff(g0, axis=1)) / float(rho[0, 1] - rho[0, 0])
    lip_fit = float(dg_samples.max())
    report.record(
        "h1_g_lipschitz",
        lip_fit <= dx.lip_const + 1e-6,
        required=True,
        fitted_lip=lip_fit,
        declared_lip=dx.lip_const,
    )

    if has_h14:
        sig = np.linspace(rho_range[0], rho_range[1], 201)[None, None, :]
        rho3 = rho[:, :, None]
        lhs = (rx.f(xi[:, :, None], rho3 + sig) - rx.f(xi[:, :, None], rho3)) * sig
        rhs = -rx.alpha_h14 * np.abs(sig) ** (m + 1) + rx.beta_h14 * (
            1.0 + np.abs(rho3) ** (m + 1)
        )
        worst = float((lhs - rhs).max())
        report.record(
            "h1_strong_dissipativity",
            worst <= 1e-9,
            required=True,
            alpha=rx.alpha_h14,
            beta=rx.beta_h14,
            worst_margin=worst,
        )

    min_abs_g = float(np.abs(g0).min())
    report.record(
        "h2_noise_nondegenerate",
        dx.beta_g > 0 and min_abs_g >= dx.beta_g - 1e-12,
        required=False,
        min_abs_g=min_abs_g,
        declared_beta=dx.beta_g,
    )

    max_abs_g = float(np.abs(g0).max())
    alpha3 = math.pi**2 - sup_fp
    report.record(
        "h3_strict_dissipativity",
        alpha3 > 0 and math.isfinite(dx.upper_bound) and max_abs_g <= dx.upper_bound + 1e-9,
        required=False,
        alpha_margin=alpha3,
        max_abs_g=max_abs_g,
        declared_upper=dx.upper_bound,
    )
    return report


# ---------------------------------------------------------------------------
# presets

def _cubic_reaction(lam: float = 1.0) -> ReactionSpec:
    # (f(rho+sig)-f(rho))*sig = lam*sig^2 - sig^2*(3(rho+sig/2)^2 + sig^2/4)
    # <= lam*sig^2 - sig^4/4 <= -sig^4/8 + 2*lam^2, so alpha=1/8, beta=2*lam^2+1
    return ReactionSpec(
        f=lambda xi, rho: lam * rho - rho**3,
        df=lambda xi, rho: lam - 3.0 * rho**2,
        d2f=lambda xi, rho: -6.0 * rho,
        deg_m=3.0,
        lambda_dissip=lam,
        alpha_h14=0.125,
        beta_h14=2.0 * lam * lam + 1.0,
        name=f"cubic(lambda={lam:g})",
    )


def _sine_diffusion(base: float = 1.0, amp: float = 0.1) -> DiffusionSpec:
    return DiffusionSpec(
        g=lambda xi, rho: base + amp * np.sin(rho),
        dg=lambda xi, rho: amp * np.cos(rho) + 0.0 * rho,
        d2g=lambda xi, rho: -amp * np.sin(rho),
        lip_const=abs(amp),
        beta_g=base - abs(amp),
        upper_bound=base + abs(amp),
        name=f"affine-sine(base={base:g}, amp={amp:g})",
    )


def _linear_reaction(a: float = 1.0) -> ReactionSpec:
    return ReactionSpec(
        f=lambda xi, rho: -a * rho,
        df=lambda xi, rho: -a + 0.0 * rho,
        d2f=lambda xi, rho: 0.0 * rho,
        deg_m=1.0,
        lambda_dissip=-a,
        alpha_h14=None,
        beta_h14=None,
        name=f"linear(a={a:g})",
    )


def _constant_diffusion(sigma: float = 0.5) -> DiffusionSpec:
    return DiffusionSpec(
        g=lambda xi, rho: sigma + 0.0 * rho,
        dg=lambda xi, rho: 0.0 * rho,
        d2g=lambda xi, rho: 0.0 * rho,
        lip_const=0.0,
        beta_g=sigma,
        upper_bound=sigma,
        name=f"constant(sigma={sigma:g})",
    )


def model_preset(name: str, grid: Grid, **kwargs) -> ModelSpec:
    """Named model presets.

    "cubic-default": f = lam*rho - rho^3 (lam=1), g = 1 + 0.1 sin rho.
    "ou-linear": f = -a*rho (a=1), g = sigma (0.5) -- every closed form known.
    Keyword overrides: lam/a/sigma/base/amp plus any ModelSpec field.
    """
    model_fields = {"noise_modes", "truncation_n", "yosida_k"}
    model_kwargs = {k: v for k, v in kwargs.items() if k in model_fields}
    coef_kwargs = {k: v for k, v in kwargs.items() if k not in model_fields}
    if name == "cubic-default":
        reaction = _cubic_reaction(coef_kwargs.pop("lam", 1.0))
        diffusion = _sine_diffusion(
            coef_kwargs.pop("base", 1.0), coef_kwargs.pop("amp", 0.1)
        )
    elif name == "ou-linear":
        reaction = _linear_reaction(coef_kwargs.pop("a", 1.0))
        diffusion = _constant_diffusion(coef_kwargs.pop("sigma", 0.5))
    else:
        raise ValueError(f"unknown preset {name!r} (use 'cubic-default' or 'ou-linear')")
    if coef_kwargs:
        raise ValueError(f"unknown preset parameters: {sorted(coef_kwargs)}")
    return ModelSpec(reaction, diffusion, grid, name=name, **model_kwargs)
