"""Invariant-measure sampling and its consequences: moments, the variance /
Dirichlet-energy (Poincare) ratio, spectral-gap decay fitting, and uniform
gradient decay of the semigroup.

The measure is sampled by long runs of the dynamics itself (burn-in + thinned
snapshots from several chains started at two different states), so everything
downstream is a self-consistency statement about the same dynamics; the
linear-drift submodel, where every quantity is analytic, anchors the battery.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import coefficients as coeffs
from .coefficients import HypothesisError, ModelSpec
from .driver import block_se, mc_mean
from .flows import SchemeConfig, run_batch
from .identities import IdentityReport, _report
from .noise import NoiseStream, derive_seed
from .observables import Observable
from .semigroup import MCConfig, MCEstimate, sample_population
from .spectral import Field, Grid, eigenpair, sup_norm

__all__ = [
    "EmpiricalMeasure",
    "PoincareReport",
    "GapFit",
    "GradientDecayFit",
    "dissipativity_rate",
    "sample_invariant",
    "moment",
    "poincare_report",
    "gap_fit",
    "uniform_gradient_decay",
    "invariance_check",
]


@dataclass
class EmpiricalMeasure:
    """Thinned long-run snapshots standing in for the invariant measure."""

    grid: Grid
    samples: np.ndarray          # (S, N)
    chain_ids: np.ndarray        # (S,)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.chain_ids = np.asarray(self.chain_ids, dtype=int)
        if self.samples.ndim != 2 or self.samples.shape[1] != self.grid.n:
            raise ValueError("sample array must be (n_samples, grid.n)")
        if len(self.chain_ids) != len(self.samples):
            raise ValueError("one chain id per sample required")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("measure samples must be finite")

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    def save_csv(self, path, extra_header: dict | None = None):
        with open(path, "w", newline="") as fh:
            for k, v in {**self.provenance, **(extra_header or {})}.items():
                fh.write(f"# {k}: {v}\n")
            writer = csv.writer(fh)
            writer.writerow(["sample", "chain", *[f"x{j}" for j in range(self.grid.n)]])
            for i, (cid, row) in enumerate(zip(self.chain_ids, self.samples)):
                writer.writerow([i, cid, *[repr(float(v)) for v in row]])

    @classmethod
    def load_csv(cls, path, grid: Grid) -> "EmpiricalMeasure":
        provenance, rows, cids = {}, [], []
        with open(path) as fh:
            lines = fh.readlines()
        data = []
        for line in lines:
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                provenance[key.strip()] = val.strip()
            elif line.strip():
                data.append(line)
        reader = csv.reader(data)
        header = next(reader)
        if not header or header[0] != "sample":
            raise ValueError("unrecognized measure CSV layout")
        for rec in reader:
            cids.append(int(rec[1]))
            rows.append([float(v) for v in rec[2:]])
        return cls(grid, np.asarray(rows), np.asarray(cids), provenance)


def dissipativity_rate(model: ModelSpec) -> float:
    """alpha = pi^2 - sup f' — the model's own relaxation-rate scale."""
    return math.pi**2 - model.reaction.lambda_dissip


def sample_invariant(
    model: ModelSpec,
    mc: MCConfig,
    n_samples: int = 512,
    chains: int = 8,
    burn_in: float | None = None,
    thin: float | None = None,
    alt_start: Field | None = None,
) -> EmpiricalMeasure:
    """Thinned snapshots from `chains` runs, half started at 0 and half at an
    off-equilibrium state (default 2 e1), after a burn-in tied to the model's
    dissipativity scale: T0 = 5/alpha, thinning 1/alpha.
    """
    grid = model.grid
    alpha = dissipativity_rate(model)
    if (burn_in is None or thin is None) and alpha <= 0:
        raise HypothesisError(
            "strict dissipativity fails (pi^2 <= sup f'); pass burn_in and thin "
            "explicitly to sample anyway")
    burn_in = 5.0 / alpha if burn_in is None else burn_in
    thin = 1.0 / alpha if thin is None else thin
    thin = max(mc.dt, round(thin / mc.dt) * mc.dt)
    if chains < 1 or n_samples < chains:
        raise ValueError("need chains >= 1 and n_samples >= chains")
    per_chain = -(-n_samples // chains)
    times = burn_in + thin * np.arange(per_chain)
    if alt_start is None:
        alt_start = Field(grid, 2.0 * eigenpair(grid, 1)[0].values)

    cfg = SchemeConfig(dt=mc.dt, T=float(times[-1]), snapshot_times=tuple(times),
                       blowup_ceiling=mc.blowup_ceiling)
    x0 = np.zeros((chains, grid.n))
    x0[1::2] = alt_start.values
    streams = [NoiseStream(mc.master_seed, c, model.noise_modes, mc.dt)
               for c in range(chains)]
    paths = run_batch(model, x0, cfg, streams)

    flat = paths.u.reshape(chains * paths.u.shape[1], grid.n)
    cids = np.repeat(np.arange(chains), paths.u.shape[1])
    bad = ~np.all(np.isfinite(flat), axis=1)
    if bad.mean() > 0.01:
        raise RuntimeError(
            f"{bad.mean():.1%} of snapshots lost to blow-up aborts (>1%); "
            "the model/dt combination is not usable for measure sampling")
    flat, cids = flat[~bad], cids[~bad]
    order = np.argsort(cids, kind="stable")
    flat, cids = flat[order][:n_samples], cids[order][:n_samples]

    # mixing diagnostic: chains started at 0 vs at alt_start must agree
    e1 = eigenpair(grid, 1)[0].values
    mix = {}
    for tag, fn in (("mode1", lambda v: grid.h * (v @ e1)),
                    ("sup", lambda v: np.abs(v).max(axis=-1))):
        chain_means = np.array([fn(flat[cids == c]).mean() for c in range(chains)])
        g0, g1 = chain_means[0::2], chain_means[1::2]
        se = (math.hypot(g0.std(ddof=1) / math.sqrt(len(g0)),
                         g1.std(ddof=1) / math.sqrt(len(g1)))
              if min(len(g0), len(g1)) > 1 else np.inf)
        mix[tag] = {"start0_mean": float(g0.mean()), "alt_mean": float(g1.mean()),
                    "discrepancy": float(abs(g0.mean() - g1.mean())),
                    "joint_se": float(se),
                    "mixed": bool(abs(g0.mean() - g1.mean()) <= 3 * se)}

    return EmpiricalMeasure(
        grid, flat, cids,
        provenance={"burn_in": burn_in, "thin": thin, "chains": chains,
                    "master_seed": mc.master_seed, "dt": mc.dt,
                    "model": model.name, "n_aborted_snapshots": int(bad.sum()),
                    "mixing": mix},
    )


def moment(measure: EmpiricalMeasure, p: float) -> MCEstimate:
    """Empirical p-th moment of the sup-norm (samples are thinned to roughly
    one relaxation time, so the iid error formula is taken at face value)."""
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    vals = sup_norm(measure.samples) ** p
    m, se, n = mc_mean(vals)
    return MCEstimate(m, se, n)


# ---------------------------------------------------------------------------
# Poincare ratio

@dataclass
class PoincareReport:
    rows: list
    rho_hat: float
    rho_se: float
    n_samples: int

    def summary_lines(self):
        out = []
        for r in self.rows:
            tag = " (excluded: zero energy)" if r["excluded"] else ""
            out.append(f"{r['name']}: var={r['variance']:.5g} "
                       f"energy={r['energy']:.5g} ratio={r['ratio']:.5g}{tag}")
        out.append(f"rho_hat = {self.rho_hat:.5g} +- {self.rho_se:.2g}")
        return out


def poincare_report(measure: EmpiricalMeasure, observables,
                    n_boot: int = 200, boot_seed: int = 0) -> PoincareReport:
    """Per-observable variance / Dirichlet energy and the worst ratio rho_hat.

    The energy is the measure average of |D phi|_{E*}^2 — the dual norm on E,
    which for cylindrical phi = chi(<.,w>) is |chi'| * L1-norm of w (not the
    L2 norm: the gradient is an L1 density acting on sup-norm perturbations).
    SE of rho_hat by bootstrap over whole chains, respecting serial correlation.
    """
    obs_list = list(observables)
    for obs in obs_list:
        if not obs.has_gradient:
            raise ValueError(f"{obs.name} carries no gradient metadata")
    x = measure.samples
    values = {obs.name: np.asarray(obs(x), dtype=float) for obs in obs_list}
    energies = {obs.name: np.asarray(obs.grad_dual_norm(x), dtype=float) ** 2
                for obs in obs_list}

    def ratios(idx):
        out = {}
        for obs in obs_list:
            v = values[obs.name][idx]
            e = energies[obs.name][idx]
            var = v.var(ddof=1)
            en = e.mean()
            out[obs.name] = (var, en, var / en if en > 1e-12 * max(var, 1.0) else np.nan)
        return out

    full_idx = np.arange(measure.n_samples)
    base = ratios(full_idx)
    rows = [{"name": name, "variance": var, "energy": en,
             "ratio": rat, "excluded": not np.isfinite(rat)}
            for name, (var, en, rat) in base.items()]
    included = [r["ratio"] for r in rows if not r["excluded"]]
    rho_hat = max(included) if included else np.nan

    labels = np.unique(measure.chain_ids)
    rng = np.random.default_rng(derive_seed(boot_seed, "poincare-boot"))
    boots = []
    for _ in range(n_boot):
        pick = rng.choice(labels, size=len(labels), replace=True)
        idx = np.concatenate([np.flatnonzero(measure.chain_ids == c) for c in pick])
        r = [v for (_, _, v) in ratios(idx).values() if np.isfinite(v)]
        if r:
            boots.append(max(r))
    rho_se = float(np.std(boots, ddof=1)) if len(boots) > 1 else np.inf
    return PoincareReport(rows, float(rho_hat), rho_se, measure.n_samples)


# ---------------------------------------------------------------------------
# spectral-gap decay fit

@dataclass
class GapFit:
    t_grid: np.ndarray
    d_values: np.ndarray
    d_std_errors: np.ndarray
    delta_hat: float
    delta_se: float
    r_squared: float
    equilibrated: bool
    n_fit_nodes: int
    metadata: dict = field(default_factory=dict)


def gap_fit(model: ModelSpec, measure: EmpiricalMeasure, obs: Observable,
            t_grid, mc: MCConfig, outer_samples: int = 64,
            inner_traj: int = 64) -> GapFit:
    """Exponential decay rate of d(t) = int (P_t phi - phi_bar)^2 dmu.

    phi_bar comes from the full measure sample (its SE is folded into d's
    error); d(t) is estimated by a nested MC with the inner-variance bias
    removed: E[(Pt_hat - phi_bar)^2 - Var(Pt_hat)] = (P_t phi - phi_bar)^2.
    Weighted least squares on log d(t); nodes indistinguishable from zero are
    dropped, and if fewer than three remain the measure is reported as already
    equilibrated at this observable's resolution.
    """
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    if np.any(t_grid <= 0):
        raise ValueError("t_grid must be positive")
    phi_all = np.asarray(obs(measure.samples), dtype=float)
    phi_bar = float(phi_all.mean())
    var_phi_bar = block_se(phi_all, measure.chain_ids) ** 2

    stride = max(1, measure.n_samples // outer_samples)
    idxs = np.arange(measure.n_samples)[::stride][:outer_samples]

    def one(idx):
        y = measure.samples[idx]
        pop = sample_population(model, y, t_grid, inner_traj,
                                mc.derived("gap", int(idx)))
        row = np.empty(len(t_grid))
        for k in range(len(t_grid)):
            m, se, n = mc_mean(obs(pop.u_at(k)))
            row[k] = (m - phi_bar) ** 2 - se * se
        return row

    if mc.threads > 1:
        with ThreadPoolExecutor(max_workers=mc.threads) as pool:
            rows = np.stack(list(pool.map(one, idxs)))
    else:
        rows = np.stack([one(i) for i in idxs])

    cids = measure.chain_ids[idxs]
    d_vals = rows.mean(axis=0) - var_phi_bar
    d_ses = np.array([block_se(rows[:, k], cids) for k in range(len(t_grid))])

    usable = (d_vals > 0) & (d_vals > 2.0 * d_ses)
    meta = {"phi_bar": phi_bar, "var_phi_bar": var_phi_bar,
            "outer_samples": len(idxs), "inner_traj": inner_traj}
    if usable.sum() < 3:
        return GapFit(t_grid, d_vals, d_ses, 0.0, np.inf, 0.0, True,
                      int(usable.sum()), meta)

    t, y = t_grid[usable], np.log(d_vals[usable])
    w = (d_vals[usable] / d_ses[usable]) ** 2
    sw, swt, swt2 = w.sum(), (w * t).sum(), (w * t * t).sum()
    swy, swty = (w * y).sum(), (w * t * y).sum()
    det = sw * swt2 - swt**2
    intercept = (swt2 * swy - swt * swty) / det
    slope = (sw * swty - swt * swy) / det
    resid = y - (intercept + slope * t)
    chi2 = float((w * resid**2).sum() / max(len(t) - 2, 1))
    slope_se = math.sqrt(chi2 * sw / det)
    ybar = swy / sw
    ss_tot = float((w * (y - ybar) ** 2).sum())
    r2 = 1.0 - float((w * resid**2).sum()) / ss_tot if ss_tot > 0 else 0.0
    return GapFit(t_grid, d_vals, d_ses, -slope, slope_se, r2, False,
                  int(usable.sum()), meta)


# ---------------------------------------------------------------------------
# uniform gradient decay

@dataclass
class GradientDecayFit:
    t_grid: np.ndarray
    sup_gradient: np.ndarray
    sup_std_errors: np.ndarray
    theta_hat: float
    theta_se: float
    loglog_slope: float
    metadata: dict = field(default_factory=dict)


def uniform_gradient_decay(model: ModelSpec, obs: Observable, t_grid, x_set,
                           mc: MCConfig, n_traj: int = 512,
                           h_set=None) -> GradientDecayFit:
    """sup over states and unit directions of |<h, D(P_t phi)(x)>| at each t,
    with an exponential fit (rate theta_hat) and the log-log slope over the
    same nodes (the short-time singularity exponent diagnostic)."""
    if not obs.has_gradient:
        raise ValueError(f"{obs.name} carries no gradient metadata")
    grid = model.grid
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    if h_set is None:
        h_set = [Field(grid, eigenpair(grid, k)[0].values / math.sqrt(2.0))
                 for k in (1, 2, 3)]
    dirs = np.stack([h.values for h in h_set])

    best = np.full(len(t_grid), -np.inf)
    best_se = np.zeros(len(t_grid))
    for xi_idx, x in enumerate(x_set):
        pop = sample_population(model, x.values, t_grid, n_traj,
                                mc.derived("graddecay", xi_idx),
                                tangent_init=dirs)
        for d in range(len(h_set)):
            for k in range(len(t_grid)):
                m, se, n = mc_mean(obs.grad_pair(pop.u_at(k), pop.eta_at(k, d)))
                if abs(m) > best[k]:
                    best[k], best_se[k] = abs(m), se

    y = np.log(best)
    coef = np.polyfit(t_grid, y, 1)
    theta = -coef[0]
    resid = y - np.polyval(coef, t_grid)
    t_var = ((t_grid - t_grid.mean()) ** 2).sum()
    theta_se = math.sqrt(max(resid @ resid, 1e-300) / max(len(t_grid) - 2, 1) / t_var)
    ll = np.polyfit(np.log(t_grid), y, 1)[0]
    return GradientDecayFit(t_grid, best, best_se, float(theta), float(theta_se),
                            float(ll), {"n_states": len(list(x_set)),
                                        "n_directions": len(h_set)})


# ---------------------------------------------------------------------------
# invariance self-check

def invariance_check(model: ModelSpec, obs: Observable, measure: EmpiricalMeasure,
                     t_values, inner_traj: int, mc: MCConfig) -> list[IdentityReport]:
    """Measure-average of P_t phi vs measure-average of phi at each t (the
    defining property of invariance), sharing the sample set on both sides."""
    t_values = [float(t) for t in t_values]
    phi_y = np.asarray(obs(measure.samples), dtype=float)

    def one(idx):
        pop = sample_population(model, measure.samples[idx], t_values, inner_traj,
                                mc.derived("invariance", int(idx)))
        return np.array([mc_mean(obs(pop.u_at(k)))[0] for k in range(len(t_values))])

    idxs = list(range(measure.n_samples))
    if mc.threads > 1:
        with ThreadPoolExecutor(max_workers=mc.threads) as pool:
            rows = np.stack(list(pool.map(one, idxs)))
    else:
        rows = np.stack([one(i) for i in idxs])

    reports = []
    for k, t in enumerate(t_values):
        diff = rows[:, k] - phi_y
        joint = block_se(diff, measure.chain_ids)
        lhs = MCEstimate(float(np.nanmean(rows[:, k])),
                         block_se(rows[:, k], measure.chain_ids), len(idxs))
        rhs = MCEstimate(float(phi_y.mean()),
                         block_se(phi_y, measure.chain_ids), len(idxs))
        det = 2.0 * mc.dt * max(1.0, abs(rhs.mean))
        reports.append(_report(f"invariance[t={t:g}]", lhs, rhs, det,
                               joint_se=joint, metadata={"t": t}))
    return reports
