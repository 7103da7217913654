"""Monte Carlo realization of the transition semigroup P_t phi(x) = E phi(u^x(t))
and its calculus: gradients (probabilistic-integral and tangent forms), the
resolvent of the generator, the carre-du-champ series, Ornstein-Uhlenbeck
regularization, and the exact generator of mode-truncated systems.

Estimators share one deterministic trajectory population per call (common
random numbers across time nodes and across the two sides of identity checks),
so results are a pure function of the master seed, independent of thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import coefficients as coeffs
from .coefficients import HypothesisError, ModelSpec
from .driver import map_trajectories, mc_mean
from .flows import SchemeConfig, run_batch
from .noise import NoiseStream, all_increments, derive_seed, normal_array
from .observables import CylindricalObservable, Observable
from .spectral import (
    Field,
    apply_diagonal,
    eigenpair,
    from_modes,
    heat_multipliers,
    projection_multipliers,
    to_modes,
)

__all__ = [
    "MCConfig",
    "MCEstimate",
    "QuadratureConfig",
    "ResolventEstimate",
    "GammaSeries",
    "FiniteSystem",
    "estimate_Pt",
    "estimate_Pt_curve",
    "gradient_bel",
    "gradient_tangent",
    "resolvent",
    "quadrature_coarsening_error",
    "exp_weighted_nodes",
    "kolmogorov_apply",
    "gamma_operator",
    "parseval_gamma",
    "ou_regularize",
    "ou_regularize_cylindrical",
    "finite_generator_apply",
    "finite_paths",
]


@dataclass
class MCConfig:
    """Sampling configuration shared by every estimator."""

    master_seed: int = 0
    dt: float = 1e-3
    threads: int = 1
    chunk_size: int = 256
    blowup_ceiling: float = 1e3

    def derived(self, *tags) -> "MCConfig":
        """Same budgets, statistically fresh stream family."""
        return replace(self, master_seed=derive_seed(self.master_seed, *tags))


@dataclass
class MCEstimate:
    mean: float
    std_error: float
    n_samples: int
    n_aborted: int = 0

    def interval(self, k: float = 3.0) -> tuple[float, float]:
        return self.mean - k * self.std_error, self.mean + k * self.std_error

    def __float__(self) -> float:
        return float(self.mean)


def _estimate(values: np.ndarray, n_aborted: int = 0) -> MCEstimate:
    m, se, n = mc_mean(values)
    return MCEstimate(m, se, n, n_aborted)


# ---------------------------------------------------------------------------
# trajectory populations

@dataclass
class Population:
    """Snapshots of a trajectory population, id-ordered and seed-deterministic."""

    times: np.ndarray      # unique snapshot times actually recorded
    cols: np.ndarray       # requested time -> column in `times`
    u: np.ndarray          # (n_traj, K, N)
    eta: np.ndarray | None
    bel: np.ndarray | None
    abort_step: np.ndarray

    @property
    def n_aborted(self) -> int:
        return int((self.abort_step >= 0).sum())

    def u_at(self, req: int) -> np.ndarray:
        return self.u[:, self.cols[req], :]

    def eta_at(self, req: int, d: int) -> np.ndarray:
        return self.eta[:, d, self.cols[req], :]

    def bel_at(self, req: int, d: int) -> np.ndarray:
        return self.bel[:, d, self.cols[req]]


def sample_population(
    model: ModelSpec,
    x_values: np.ndarray,
    times,
    n_traj: int,
    mc: MCConfig,
    tangent_init: np.ndarray | None = None,
    second_pairs: tuple = (),
    bel: bool = False,
) -> Population:
    """Run n_traj trajectories with snapshots at `times` (snapped to the dt lattice)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    cfg = SchemeConfig(dt=mc.dt, T=float(times.max()), snapshot_times=tuple(times),
                       blowup_ceiling=mc.blowup_ceiling)
    snap_steps = cfg.snapshot_steps()
    col_of = {int(s): k for k, s in enumerate(snap_steps)}
    req_steps = [min(cfg.n_steps, max(0, int(round(t / mc.dt)))) for t in times]
    cols = np.asarray([col_of[s] for s in req_steps], dtype=int)

    def worker(a, b):
        streams = [NoiseStream(mc.master_seed, i, model.noise_modes, mc.dt)
                   for i in range(a, b)]
        paths = run_batch(model, x_values, cfg, streams,
                          tangent_init=tangent_init, second_pairs=second_pairs, bel=bel)
        out = {"u": paths.u, "abort": paths.abort_step}
        if paths.eta is not None:
            out["eta"] = paths.eta
        if paths.bel is not None:
            out["bel"] = paths.bel
        return out

    res = map_trajectories(n_traj, worker, mc.threads, mc.chunk_size)
    return Population(
        times=snap_steps * mc.dt,
        cols=cols,
        u=res["u"],
        eta=res.get("eta"),
        bel=res.get("bel"),
        abort_step=res["abort"],
    )


# ---------------------------------------------------------------------------
# semigroup and gradients

def estimate_Pt(model: ModelSpec, obs: Observable, x: Field, t: float,
                n_traj: int, mc: MCConfig) -> MCEstimate:
    """P_t phi(x) by plain Monte Carlo; t = 0 is exact."""
    if t < 0:
        raise ValueError(f"need t >= 0, got {t}")
    if t == 0:
        return MCEstimate(float(obs(x)), 0.0, n_traj)
    pop = sample_population(model, x.values, [t], n_traj, mc)
    return _estimate(obs(pop.u_at(0)), pop.n_aborted)


def estimate_Pt_curve(model: ModelSpec, obs: Observable, x: Field, times,
                      n_traj: int, mc: MCConfig) -> list[MCEstimate]:
    """P_t phi(x) at several times from one population (common random numbers)."""
    pop = sample_population(model, x.values, times, n_traj, mc)
    return [_estimate(obs(pop.u_at(k)), pop.n_aborted) for k in range(len(pop.cols))]


def gradient_bel(model: ModelSpec, obs: Observable, x: Field, t: float, h: Field,
                 n_traj: int, mc: MCConfig) -> MCEstimate:
    """<h, D(P_t phi)(x)> through the probabilistic gradient formula

        (1/t) E[ phi(u(t)) * int_0^t <G(u)^{-1} eta^h, dw> ]

    which needs only phi evaluations (no derivative metadata) but does need the
    noise coefficient bounded away from zero.
    """
    if t <= 0:
        raise ValueError(f"the gradient formula needs t > 0, got {t}")
    pop = sample_population(model, x.values, [t], n_traj, mc,
                            tangent_init=h.values[None, :], bel=True)
    values = obs(pop.u_at(0)) * pop.bel_at(0, 0) / t
    return _estimate(values, pop.n_aborted)


def gradient_tangent(model: ModelSpec, obs: Observable, x: Field, t: float, h: Field,
                     n_traj: int, mc: MCConfig) -> MCEstimate:
    """<h, D(P_t phi)(x)> = E <eta^h(t), D phi(u(t))> for phi with gradient metadata."""
    if not obs.has_gradient:
        raise ValueError(f"{obs.name} carries no gradient metadata")
    if t < 0:
        raise ValueError(f"need t >= 0, got {t}")
    if t == 0:
        return MCEstimate(float(obs.grad_pair(x.values, h.values)), 0.0, n_traj)
    pop = sample_population(model, x.values, [t], n_traj, mc,
                            tangent_init=h.values[None, :])
    values = obs.grad_pair(pop.u_at(0), pop.eta_at(0, 0))
    return _estimate(values, pop.n_aborted)


# ---------------------------------------------------------------------------
# resolvent

@dataclass
class QuadratureConfig:
    """Laplace-quadrature layout: geometric nodes refined near zero (where the
    integrand's gradient can blow up like t^{-1/2}), trapezoid weights, horizon
    chosen so the dropped tail is below tail_tol."""

    n_nodes: int = 49
    t_min: float | None = None
    t_max: float | None = None
    tail_tol: float = 1e-3


@dataclass
class ResolventEstimate:
    value: MCEstimate
    lam: float
    t_grid: np.ndarray
    weights: np.ndarray
    T_max: float
    truncation_error_bound: float
    node_means: np.ndarray | None = None
    quadrature_error_bound: float = 0.0
    per_traj: np.ndarray | None = None

    @property
    def det_error_bound(self) -> float:
        return self.truncation_error_bound + self.quadrature_error_bound


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.empty_like(nodes)
    w[0] = (nodes[1] - nodes[0]) / 2
    w[-1] = (nodes[-1] - nodes[-2]) / 2
    if len(nodes) > 2:
        w[1:-1] = (nodes[2:] - nodes[:-2]) / 2
    return w


def quadrature_coarsening_error(nodes: np.ndarray, f_means: np.ndarray,
                                f_ses: np.ndarray | None = None) -> float:
    """Trapezoid-error estimate by node coarsening: |S_full - S_every_other|.

    For a smooth integrand the every-other-node sum carries roughly 4x the
    trapezoid error, so the difference overstates the fine-sum error by ~3x --
    a deliberately conservative, data-driven bound.  When the node values are
    themselves Monte Carlo means, pass their standard errors: the part of the
    difference explained by node noise is then removed in quadrature, so noisy
    early nodes do not masquerade as discretization error.
    """
    if len(nodes) < 3:
        return math.inf
    keep = np.isfinite(f_means)
    nodes, f_means = nodes[keep], f_means[keep]
    if f_ses is not None:
        f_ses = np.asarray(f_ses)[keep]
    if len(nodes) < 3:
        return math.inf
    idx = list(range(0, len(nodes), 2))
    if idx[-1] != len(nodes) - 1:
        idx.append(len(nodes) - 1)
    w_diff = _trapezoid_weights(nodes)
    coarse_w = _trapezoid_weights(nodes[idx])
    for j, i in enumerate(idx):
        w_diff[i] -= coarse_w[j]
    diff = float(w_diff @ f_means)
    if f_ses is None:
        return abs(diff)
    noise_var = float((w_diff**2) @ np.where(np.isfinite(f_ses), f_ses, 0.0) ** 2)
    return math.sqrt(max(diff * diff - noise_var, 0.0))


def laplace_nodes(lam: float, dt: float, sup_bound: float,
                  quad: QuadratureConfig | None = None) -> tuple[np.ndarray, np.ndarray, float, float]:
    """(nodes, trapezoid weights, T_max, tail bound) on the step lattice, node 0 included."""
    quad = quad or QuadratureConfig()
    if lam <= 0:
        raise ValueError(f"need lambda > 0, got {lam}")
    sup = sup_bound if math.isfinite(sup_bound) and sup_bound > 0 else 1.0
    if quad.t_max is not None:
        T = quad.t_max
    else:
        T = math.log(max(sup / (lam * quad.tail_tol), 2.0)) / lam
    T = max(dt, math.ceil(T / dt) * dt)
    t_min = quad.t_min if quad.t_min is not None else dt
    t_min = max(dt, round(t_min / dt) * dt)
    n_pos = max(2, quad.n_nodes - 1)
    raw = t_min * (T / t_min) ** (np.arange(n_pos) / (n_pos - 1))
    steps = sorted({int(round(t / dt)) for t in raw} | {0, int(round(T / dt))})
    nodes = np.asarray(steps, dtype=float) * dt
    w = _trapezoid_weights(nodes)
    tail = math.exp(-lam * nodes[-1]) * sup / lam
    return nodes, w, float(nodes[-1]), tail


def exp_weighted_nodes(lam: float, dt: float, sup_bound: float, n_nodes: int,
                       tail_tol: float = 1e-3) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Nodes and weights for int_0^inf e^{-lam s} F(s) ds with F bounded.

    Substituting v = e^{-lam s} turns the integral into (1/lam) int_0^1 F dv
    with a bounded integrand whose v-derivatives vanish at v=0 whenever F
    relaxes exponentially, so a uniform-v trapezoid converges fast; the
    returned weights absorb the exponential factor (sum approx (1-eps)/lam).
    Nodes still concentrate near s=0 and sit on the step lattice.  Returns
    (s_nodes ascending, weights, T_max, tail bound = eps*sup/lam).
    """
    if lam <= 0:
        raise ValueError(f"need lambda > 0, got {lam}")
    if n_nodes < 3:
        raise ValueError(f"need at least 3 nodes, got {n_nodes}")
    sup = sup_bound if math.isfinite(sup_bound) and sup_bound > 0 else 1.0
    T = math.log(max(sup / (lam * tail_tol), 2.0)) / lam
    T = max(2 * dt, math.ceil(T / dt) * dt)
    eps = math.exp(-lam * T)
    v_grid = np.linspace(eps, 1.0, n_nodes)
    steps = sorted({int(round(-math.log(v) / (lam * dt))) for v in v_grid[:-1]}
                   | {0, int(round(T / dt))})
    s_nodes = np.asarray(steps, dtype=float) * dt
    v_snap = np.exp(-lam * s_nodes)      # descending in s
    order = np.argsort(v_snap)           # ascending v for trapezoid weights
    w_v = _trapezoid_weights(v_snap[order])
    weights = np.empty_like(s_nodes)
    weights[order] = w_v / lam
    tail = eps * sup / lam
    return s_nodes, weights, float(s_nodes[-1]), tail


def resolvent(model: ModelSpec, psi: Observable, x: Field, lam: float,
              n_traj: int, mc: MCConfig,
              quad: QuadratureConfig | None = None) -> ResolventEstimate:
    """(lam - K)^{-1} psi (x) = int_0^inf e^{-lam t} P_t psi(x) dt by per-trajectory
    Laplace sums over one population snapshotted at every node."""
    nodes, w, T, tail = laplace_nodes(lam, mc.dt, psi.sup_bound, quad)
    pop = sample_population(model, x.values, nodes, n_traj, mc)
    weights = w * np.exp(-lam * nodes)
    vals = np.stack([psi(pop.u_at(k)) for k in range(len(nodes))], axis=1)
    per_traj = vals @ weights
    good = np.isfinite(per_traj)
    node_means = (vals[good].mean(axis=0) if good.any()
                  else np.full(len(nodes), np.nan))
    quad_err = quadrature_coarsening_error(nodes, node_means * np.exp(-lam * nodes))
    return ResolventEstimate(
        value=_estimate(per_traj, pop.n_aborted),
        lam=lam, t_grid=nodes, weights=w, T_max=T, truncation_error_bound=tail,
        node_means=node_means, quadrature_error_bound=quad_err, per_traj=per_traj,
    )


def kolmogorov_apply(res: ResolventEstimate, psi_at_x: float) -> MCEstimate:
    """K phi(x) = lam*phi(x) - psi(x) for the resolvent-represented phi = (lam-K)^{-1}psi."""
    v = res.value
    return MCEstimate(res.lam * v.mean - psi_at_x, res.lam * v.std_error,
                      v.n_samples, v.n_aborted)


# ---------------------------------------------------------------------------
# carre-du-champ series

@dataclass
class GammaSeries:
    """Partial sums of sum_i |<G(x)e_i, D phi(x)>|^2 with a tail diagnostic.

    cauchy is a heuristic: the average tail term must be below tail_frac of the
    total.  Point-evaluation observables produce terms of roughly constant size
    (the series grows like the mode count) and are flagged non-Cauchy.
    """

    value: float
    terms: np.ndarray
    partial_sums: np.ndarray
    tail_window: int
    cauchy: bool


def gamma_operator(model: ModelSpec, gradient_provider, x: Field, m_series: int,
                   tail_window: int = 8, tail_frac: float = 0.005) -> GammaSeries:
    """Carre-du-champ partial sum at x; gradient_provider(y: Field) -> <y, D phi(x)>."""
    grid = model.grid
    if not 1 <= m_series <= grid.n:
        raise ValueError(f"series length {m_series} out of range 1..{grid.n}")
    gx = coeffs.diffusion_values(model, x.values)
    terms = np.empty(m_series)
    for i in range(1, m_series + 1):
        e_i, _ = eigenpair(grid, i)
        terms[i - 1] = float(gradient_provider(Field(grid, gx * e_i.values))) ** 2
    partial = np.cumsum(terms)
    total = partial[-1]
    w = min(tail_window, m_series)
    tail_mean = terms[-w:].mean()
    cauchy = bool(total <= 0 or tail_mean <= tail_frac * total)
    return GammaSeries(value=float(total), terms=terms, partial_sums=partial,
                       tail_window=w, cauchy=cauchy)


def parseval_gamma(model: ModelSpec, obs: CylindricalObservable, x: Field) -> float:
    """Closed form for cylindrical phi: chi'(<x,w>)^2 |g(.,x) w|_H^2 (full series)."""
    grid = model.grid
    gx = coeffs.diffusion_values(model, x.values)
    r = np.sum(x.values * obs.w) * grid.h
    gw = gx * obs.w
    return float(obs.chi_d(r) ** 2 * grid.h * np.sum(gw * gw))


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck regularization

def ou_covariance_diag(grid, t: float, m: int) -> np.ndarray:
    """q_k = (1 - e^{-2 k^2 pi^2 t}) / (2 k^2 pi^2), k = 1..m."""
    lam_k = -grid.eigenvalues[:m]
    return (1.0 - np.exp(-2.0 * lam_k * t)) / (2.0 * lam_k)


def ou_regularize(model: ModelSpec, psi: Observable, t: float, x: Field,
                  n_mc: int, master_seed: int) -> MCEstimate:
    """R_t psi(x) = E psi(e^{tA}x + Y), Y the OU bridge-to-equilibrium Gaussian."""
    if t <= 0:
        raise ValueError(f"regularization needs t > 0, got {t}")
    grid = model.grid
    m = model.noise_modes
    q = ou_covariance_diag(grid, t, m)
    xi = normal_array(master_seed, ("ou-reg", m, n_mc), (n_mc, m))
    modes = np.zeros((n_mc, grid.n))
    modes[:, :m] = np.sqrt(q) * xi
    base = apply_diagonal(x.values, heat_multipliers(grid, t), grid.h)
    return _estimate(psi(base + from_modes(modes)))


def ou_regularize_cylindrical(model: ModelSpec, obs: CylindricalObservable, t: float,
                              n_quad: int = 41) -> CylindricalObservable:
    """Exact (quadrature) OU regularization of a cylindrical observable.

    <e^{tA}x + Y, w> = <x, e^{tA}w> + <Y, w> with <Y, w> centered Gaussian of
    variance s^2 = sum_k q_k <w,e_k>^2, so R_t phi is again cylindrical with
    the heat-flowed density and a Gauss-Hermite smoothed chi.
    """
    if t <= 0:
        raise ValueError(f"regularization needs t > 0, got {t}")
    grid = model.grid
    m = model.noise_modes
    q = ou_covariance_diag(grid, t, m)
    w_modes = to_modes(obs.w, grid.h)[:m]
    s = math.sqrt(float(np.sum(q * w_modes**2)))
    w_t = apply_diagonal(obs.w, heat_multipliers(grid, t), grid.h)
    z, gw = np.polynomial.hermite_e.hermegauss(n_quad)
    gw = gw / math.sqrt(2.0 * math.pi)

    def smooth(fn):
        if fn is None:
            return None

        def smoothed(r):
            r = np.asarray(r, dtype=float)
            return fn(r[..., None] + s * z) @ gw

        return smoothed

    return CylindricalObservable(
        name=f"R[{t:g}]({obs.name})", sup_bound=obs.sup_bound, grid=grid, w=w_t,
        chi=smooth(obs.chi), chi_d=smooth(obs.chi_d), chi_dd=smooth(obs.chi_dd),
    )


# ---------------------------------------------------------------------------
# mode-truncated systems and their exact generator

@dataclass
class FiniteSystem:
    """dX = (AX + P_d F(X)) dt + sum_{i<=d} P_d G(X) e_i dbeta_i on span{e_1..e_d}."""

    model: ModelSpec
    modes: int

    def __post_init__(self):
        if not 1 <= self.modes <= self.model.grid.n:
            raise ValueError(f"mode count {self.modes} out of range 1..{self.model.grid.n}")

    def _project(self, values: np.ndarray) -> np.ndarray:
        grid = self.model.grid
        return apply_diagonal(values, projection_multipliers(grid, self.modes), grid.h)

    def drift(self, u: np.ndarray) -> np.ndarray:
        grid = self.model.grid
        c = to_modes(u, grid.h)
        c = c * projection_multipliers(grid, self.modes)
        au = from_modes(c * grid.eigenvalues)
        return au + self._project(coeffs.reaction_values(self.model, u))

    def sigma(self, u: np.ndarray, i: int) -> np.ndarray:
        if not 1 <= i <= self.modes:
            raise ValueError(f"driver index {i} out of range 1..{self.modes}")
        e_i, _ = eigenpair(self.model.grid, i)
        return self._project(coeffs.diffusion_values(self.model, u) * e_i.values)


def finite_generator_apply(system: FiniteSystem, obs: Observable, x) -> float | np.ndarray:
    """L phi(x) = <b(x), D phi(x)> + (1/2) sum_i <sigma_i(x), D^2 phi(x) sigma_i(x)>."""
    if not (obs.has_gradient and obs.has_hessian):
        raise ValueError(f"{obs.name} lacks first/second derivative metadata")
    u = x.values if isinstance(x, Field) else np.asarray(x, dtype=float)
    total = obs.grad_pair(u, system.drift(u))
    for i in range(1, system.modes + 1):
        total = total + 0.5 * obs.hess_quad(u, system.sigma(u, i))
    return float(total) if np.ndim(total) == 0 else total


def finite_paths(system: FiniteSystem, x: Field, t: float, streams,
                 gen_obs: Observable | None = None,
                 blowup_ceiling: float = 1e6) -> dict:
    """Integrate the mode-truncated system; optionally accumulate the left-point
    Riemann sum of L phi along each path (the integrand of the Ito-in-mean check).

    All streams must share one dt; dt-coupled runs pass refine()d streams.
    """
    model, grid, d = system.model, system.model.grid, system.modes
    if not math.isfinite(model.truncation_n) and model.reaction.deg_m > 1:
        raise HypothesisError(
            "the mode-truncated system needs globally Lipschitz coefficients; "
            "pin a finite truncation_n on the model"
        )
    dt = streams[0].dt
    for s in streams:
        if not math.isclose(s.dt, dt):
            raise ValueError("streams disagree on dt")
        if s.modes < d:
            raise ValueError("stream has fewer modes than drivers")
    n_steps = int(round(t / dt))
    B = len(streams)
    mult = heat_multipliers(grid, dt)
    proj = projection_multipliers(grid, d)
    u = np.broadcast_to(system._project(x.values), (B, grid.n)).copy()
    gen_int = np.zeros(B)
    alive = np.ones(B, dtype=bool)
    pad = np.zeros((B, grid.n))
    incs = np.stack([all_increments(s, n_steps) for s in streams]) if n_steps else None
    for j in range(n_steps):
        if gen_obs is not None:
            gen_int += dt * finite_generator_apply(system, gen_obs, u)
        pad[:, :d] = incs[:, j, :d]
        w_field = from_modes(pad)
        gu = coeffs.diffusion_values(model, u)
        fu = coeffs.reaction_values(model, u)
        drift = u + dt * apply_diagonal(fu, proj, grid.h) \
            + apply_diagonal(gu * w_field, proj, grid.h)
        u = apply_diagonal(drift, mult, grid.h)
        bad = alive & ~(np.abs(u).max(axis=1) <= blowup_ceiling)
        if bad.any():
            alive &= ~bad
            u[bad] = 0.0
            gen_int[bad] = 0.0
    u[~alive] = np.nan
    gen_int[~alive] = np.nan
    return {"u": u, "gen_int": gen_int, "n_aborted": int((~alive).sum())}
