"""Time integration: primary flow, tangent flows, second-variation flow, and
the gradient-formula stochastic integral, all driven by one noise stream.

Scheme (exponential Euler, left-point noise):

    u_{j+1} = S_dt( u_j + dt*F_n(u_j) + G(u_j) * sum_{i<=M} e_i dbeta_{i,j} )

with S_dt the exact heat semigroup over one step (or its Yosida surrogate
e^{dt A_k} when the model pins a finite yosida_k).  The linear part is exact,
so the heat equation (f = g = 0) is integrated without time error; the noise
coefficient is evaluated at the left point (Ito convention), matching the
stochastic convolution of the mild form.

The engine advances a whole batch of trajectories in lockstep numpy arrays
(space on the last axis); the public single-trajectory operations wrap the
batch engine with batch size 1.  Because the noise is a pure function of
(master_seed, trajectory_id, step), "extending" a trajectory with a tangent
flow is implemented as a deterministic coupled re-run on the same stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import coefficients as coeffs
from .coefficients import HypothesisError, ModelSpec
from .noise import NoiseStream, all_increments
from .spectral import (
    Field,
    from_modes,
    h_norm,
    heat_multipliers,
    mollify,
    sup_norm,
    to_modes,
    yosida_multipliers,
)

__all__ = [
    "SchemeConfig",
    "PathBundle",
    "BatchPaths",
    "BlowUpError",
    "run_batch",
    "evolve_primary",
    "evolve_tangent",
    "evolve_second",
    "bel_accumulate",
    "evolve_from_H",
]


class BlowUpError(RuntimeError):
    """A trajectory exceeded the sup-norm ceiling (hypothesis violation or dt too large)."""


@dataclass
class SchemeConfig:
    """Step size, horizon, and snapshot times (snapped to the step lattice)."""

    dt: float
    T: float
    snapshot_times: tuple = ()
    scheme: str = "exponential-euler"
    blowup_ceiling: float = 1e3

    def __post_init__(self):
        if self.dt <= 0 or self.T < 0:
            raise ValueError("need dt > 0 and T >= 0")
        if self.scheme != "exponential-euler":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.snapshot_times:
            self.snapshot_times = (self.T,)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def snapshot_steps(self) -> np.ndarray:
        """Snapshot times as step indices (nearest step, deduplicated, sorted)."""
        steps = sorted({min(self.n_steps, max(0, int(round(t / self.dt))))
                        for t in self.snapshot_times})
        return np.asarray(steps, dtype=int)


@dataclass
class BatchPaths:
    """Snapshots for a batch of trajectories advanced in lockstep.

    u has shape (B, K, N); eta (B, D, K, N) for D tangent directions;
    zeta (B, P, K, N) for P second-variation pairs; bel (B, D, K) holds the
    running stochastic integral of the gradient formula at snapshot times.
    Trajectories that hit the ceiling carry NaN from the abort step on and
    their abort step index; estimators drop and count them.
    """

    times: np.ndarray
    u: np.ndarray
    eta: np.ndarray | None = None
    zeta: np.ndarray | None = None
    bel: np.ndarray | None = None
    abort_step: np.ndarray | None = None
    sup_u: np.ndarray | None = None
    sup_eta: np.ndarray | None = None

    @property
    def aborted(self) -> np.ndarray:
        return self.abort_step >= 0


def run_batch(
    model: ModelSpec,
    x0: np.ndarray,
    cfg: SchemeConfig,
    streams: list[NoiseStream],
    tangent_init: np.ndarray | None = None,
    second_pairs: tuple = (),
    bel: bool = False,
) -> BatchPaths:
    """Advance a batch of trajectories; the workhorse behind every estimator.

    x0: (N,) shared or (B, N) per-trajectory initial states, B = len(streams).
    tangent_init: (D, N) initial tangent directions (shared across the batch).
    second_pairs: pairs (a, b) of tangent indices; one second-variation flow
    zeta^{(h_a, h_b)} per pair, started at zero.
    bel: accumulate integral sum_j <G(u_j)^{-1} eta_j, e_i> dbeta_{i,j} per
    tangent direction (needs a positive lower bound on |g|).
    """
    grid = model.grid
    n, h = grid.n, grid.h
    B = len(streams)
    m_noise = model.noise_modes
    for s in streams:
        if s.modes < m_noise:
            raise ValueError("stream has fewer modes than the model needs")
        if not math.isclose(s.dt, cfg.dt):
            raise ValueError("stream dt does not match scheme dt")
    if bel and model.diffusion.beta_g <= 0:
        raise HypothesisError("gradient-formula integral needs |g| bounded below")

    if math.isinf(model.yosida_k):
        mult = heat_multipliers(grid, cfg.dt)
    else:
        mult = np.exp(cfg.dt * yosida_multipliers(grid, model.yosida_k))

    u = np.broadcast_to(np.asarray(x0, dtype=float), (B, n)).copy()
    D = 0
    eta = zeta = bel_acc = None
    if tangent_init is not None:
        tangent_init = np.atleast_2d(np.asarray(tangent_init, dtype=float))
        D = tangent_init.shape[0]
        eta = np.broadcast_to(tangent_init, (B, D, n)).copy()
        if bel:
            bel_acc = np.zeros((B, D))
    if second_pairs:
        for a, b in second_pairs:
            if not (0 <= a < D and 0 <= b < D):
                raise ValueError("second-variation pair indexes missing tangent directions")
        zeta = np.zeros((B, len(second_pairs), n))
    elif bel and tangent_init is None:
        raise ValueError("the gradient-formula integral needs a tangent flow")

    n_steps = cfg.n_steps
    snap_steps = cfg.snapshot_steps()
    snap_pos = {int(s): k for k, s in enumerate(snap_steps)}
    K = len(snap_steps)

    out_u = np.empty((B, K, n))
    out_eta = np.empty((B, D, K, n)) if eta is not None else None
    out_zeta = np.empty((B, len(second_pairs), K, n)) if zeta is not None else None
    out_bel = np.empty((B, D, K)) if bel_acc is not None else None

    abort_step = np.full(B, -1, dtype=int)
    alive = np.ones(B, dtype=bool)
    sup_u = sup_norm(u)
    sup_eta = sup_norm(eta) if eta is not None else None

    incs = np.stack([all_increments(s, n_steps) for s in streams]) if n_steps else None

    def record(k: int):
        out_u[:, k] = u
        if out_eta is not None:
            out_eta[:, :, k] = eta
        if out_zeta is not None:
            out_zeta[:, :, k] = zeta
        if out_bel is not None:
            out_bel[:, :, k] = bel_acc

    if 0 in snap_pos:
        record(snap_pos[0])

    xi = grid.xi
    pad = np.zeros((B, n))
    for j in range(n_steps):
        pad[:, :m_noise] = incs[:, j, :m_noise]
        w_field = from_modes(pad)
        fu = coeffs.reaction_values(model, u)
        gu = coeffs.diffusion_values(model, u)
        if eta is not None:
            fpu = coeffs.reaction_deriv_values(model, u)[:, None, :]
            gpu = coeffs.diffusion_deriv_values(model, u)[:, None, :]
            if bel_acc is not None:
                # left-point integrand <G(u_j)^{-1} eta_j, e_i>, modes i <= M
                integ = to_modes(eta / gu[:, None, :], h)[:, :, :m_noise]
                bel_acc += np.einsum("bdm,bm->bd", integ, incs[:, j, :m_noise])
            eta_new = eta + cfg.dt * fpu * eta + gpu * eta * w_field[:, None, :]
            if zeta is not None:
                fppu = coeffs.reaction_second_values(model, u)[:, None, :]
                gppu = coeffs.diffusion_second_values(model, u)[:, None, :]
                pair = np.stack([eta[:, a] * eta[:, b] for a, b in second_pairs], axis=1)
                zeta = apply_step(
                    zeta + cfg.dt * (fpu * zeta + fppu * pair)
                    + (gpu * zeta + gppu * pair) * w_field[:, None, :], mult, h)
            eta = apply_step(eta_new, mult, h)
        u = apply_step(u + cfg.dt * fu + gu * w_field, mult, h)

        step_sup = sup_norm(u)
        bad = alive & ~(step_sup <= cfg.blowup_ceiling)
        if bad.any():
            abort_step[bad] = j + 1
            alive &= ~bad
            u[bad] = 0.0
            if eta is not None:
                eta[bad] = 0.0
            if zeta is not None:
                zeta[bad] = 0.0
            if bel_acc is not None:
                bel_acc[bad] = 0.0
            step_sup = sup_norm(u)
        sup_u = np.maximum(sup_u, step_sup)
        if eta is not None:
            sup_eta = np.maximum(sup_eta, sup_norm(eta))
        if j + 1 in snap_pos:
            record(snap_pos[j + 1])

    # snapshots at or after an abort are not data: mark NaN
    if (abort_step >= 0).any():
        dead = abort_step[:, None] >= 0
        late = dead & (snap_steps[None, :] >= np.where(abort_step[:, None] < 0,
                                                       n_steps + 1, abort_step[:, None]))
        out_u[late] = np.nan
        if out_eta is not None:
            out_eta[np.broadcast_to(late[:, None, :], out_eta.shape[:3])] = np.nan
        if out_zeta is not None:
            out_zeta[np.broadcast_to(late[:, None, :], out_zeta.shape[:3])] = np.nan
        if out_bel is not None:
            out_bel[np.broadcast_to(late[:, None, :], out_bel.shape)] = np.nan
        sup_u[abort_step >= 0] = np.inf

    return BatchPaths(
        times=snap_steps * cfg.dt,
        u=out_u,
        eta=out_eta,
        zeta=out_zeta,
        bel=out_bel,
        abort_step=abort_step,
        sup_u=sup_u,
        sup_eta=sup_eta,
    )


def apply_step(values: np.ndarray, mult: np.ndarray, h: float) -> np.ndarray:
    from .spectral import apply_diagonal

    return apply_diagonal(values, mult, h)


# ---------------------------------------------------------------------------
# single-trajectory public operations

@dataclass
class PathBundle:
    """One trajectory: primary path plus optional tangent/second flows and the
    gradient-formula integral, all driven by the one stream it references."""

    model: ModelSpec
    cfg: SchemeConfig
    x: Field
    stream: NoiseStream
    times: np.ndarray
    u_path: np.ndarray
    eta_path: np.ndarray | None = None
    eta2_path: np.ndarray | None = None
    zeta_path: np.ndarray | None = None
    bel_path: np.ndarray | None = None
    tangent_h: Field | None = None
    tangent_k: Field | None = None
    diagnostics: dict = field(default_factory=dict)

    def u_at(self, k: int) -> Field:
        return Field(self.model.grid, self.u_path[k])

    @property
    def bel_integral(self) -> float | None:
        return None if self.bel_path is None else float(self.bel_path[-1])


def _check_hypotheses_for_flow(model: ModelSpec):
    report = coeffs.validate_hypotheses(model)
    if not (report.passed("h1_growth") and report.passed("h1_sup_fprime")
            and report.passed("h1_g_lipschitz")):
        raise HypothesisError(
            "well-posedness assumptions fail:\n" + "\n".join(report.summary_lines())
        )


def _run_single(model, x: Field, cfg, stream, tangent_init=None, second_pairs=(), bel=False,
                validated=False) -> BatchPaths:
    if not validated:
        _check_hypotheses_for_flow(model)
    paths = run_batch(model, x.values, cfg, [stream],
                      tangent_init=tangent_init, second_pairs=second_pairs, bel=bel)
    if paths.abort_step[0] >= 0:
        t_abort = paths.abort_step[0] * cfg.dt
        raise BlowUpError(
            f"sup-norm exceeded ceiling {cfg.blowup_ceiling:g} at t={t_abort:g} "
            f"(trajectory {stream.trajectory_id}, seed {stream.master_seed}); "
            "hypothesis violation or dt too large"
        )
    return paths


def evolve_primary(model: ModelSpec, x: Field, cfg: SchemeConfig,
                   stream: NoiseStream, validated: bool = False) -> PathBundle:
    """Integrate the primary equation from x, recording snapshots."""
    paths = _run_single(model, x, cfg, stream, validated=validated)
    return PathBundle(
        model=model, cfg=cfg, x=x, stream=stream, times=paths.times,
        u_path=paths.u[0],
        diagnostics={"sup_u": float(paths.sup_u[0])},
    )


def evolve_tangent(bundle: PathBundle, h: Field) -> PathBundle:
    """The bundle extended with the tangent flow eta^h (same noise, coupled re-run)."""
    bel = bundle.model.diffusion.beta_g > 0
    paths = _run_single(bundle.model, bundle.x, bundle.cfg, bundle.stream,
                        tangent_init=h.values[None, :], bel=bel, validated=True)
    return replace(
        bundle,
        u_path=paths.u[0],
        eta_path=paths.eta[0, 0],
        bel_path=paths.bel[0, 0] if bel else None,
        tangent_h=h,
        diagnostics={**bundle.diagnostics,
                     "sup_u": float(paths.sup_u[0]),
                     "sup_eta": float(paths.sup_eta[0, 0])},
    )


def evolve_second(bundle: PathBundle, h: Field, k: Field) -> PathBundle:
    """The bundle extended with eta^h, eta^k and the second variation zeta^{h,k}."""
    bel = bundle.model.diffusion.beta_g > 0
    paths = _run_single(bundle.model, bundle.x, bundle.cfg, bundle.stream,
                        tangent_init=np.stack([h.values, k.values]),
                        second_pairs=((0, 1),), bel=bel, validated=True)
    return replace(
        bundle,
        u_path=paths.u[0],
        eta_path=paths.eta[0, 0],
        eta2_path=paths.eta[0, 1],
        zeta_path=paths.zeta[0, 0],
        bel_path=paths.bel[0, 0] if bel else None,
        tangent_h=h,
        tangent_k=k,
        diagnostics={**bundle.diagnostics, "sup_u": float(paths.sup_u[0])},
    )


def bel_accumulate(bundle: PathBundle) -> float:
    """Final value of the gradient-formula integral for the bundle's tangent flow."""
    if bundle.model.diffusion.beta_g <= 0:
        raise HypothesisError("gradient-formula integral needs |g| bounded below")
    if bundle.eta_path is None:
        raise ValueError("bundle carries no tangent flow; call evolve_tangent first")
    return float(bundle.bel_path[-1])


def evolve_from_H(model: ModelSpec, x_h: Field, n: int, cfg: SchemeConfig,
                  stream: NoiseStream) -> PathBundle:
    """Integrate from the mollified initial state x_n; pairs the run with the
    one from x_{2n} on the same stream and reports their H-distance.

    The route to rough (merely square-integrable) initial data: the mollifier
    maps an H datum into E with |x_n|_E <= sqrt(n/2)|x|_H, and the paired
    distance sup_t |u^{x_n} - u^{x_{2n}}|_H tracks the Cauchy property of the
    approximations.
    """
    if n < 1:
        raise ValueError(f"averaging index must be >= 1, got {n}")
    xn, x2n = mollify(x_h, n), mollify(x_h, 2 * n)
    bundle = evolve_primary(model, xn, cfg, stream)
    paired = evolve_primary(model, x2n, cfg, stream, validated=True)
    dist = float(np.max(h_norm(bundle.u_path - paired.u_path, model.grid.h)))
    bundle.diagnostics["h_distance_to_double"] = dist
    bundle.diagnostics["h_norm_bound_ratio"] = float(
        np.max(h_norm(bundle.u_path, model.grid.h)) / max(1.0 + x_h.h_norm, 1e-300)
    )
    bundle.diagnostics["paired_bundle"] = paired
    return bundle
