"""Ergodic layer against the linear-model stationary law and synthetic fits.

Oracles: the stationary variance sigma^2/(2 lam_k) per mode, the exact
Poincare ratio of a one-mode linear functional, a synthetic exponential-decay
data set for the gap fit, and invariance of the sampled measure under the
dynamics it came from.
"""

import math

import numpy as np
import pytest

from rdlab import (
    EmpiricalMeasure,
    Field,
    Grid,
    MCConfig,
    dissipativity_rate,
    gap_fit,
    invariance_check,
    model_preset,
    moment,
    poincare_report,
    sample_invariant,
    uniform_gradient_decay,
)
from rdlab.observables import smooth_cylindrical
from rdlab.spectral import eigenpair

GRID = Grid(64)
A, SIGMA = 1.0, 0.5
OU = model_preset("ou-linear", GRID, a=A, sigma=SIGMA)
CUBIC = model_preset("cubic-default", GRID)
LAM1 = np.pi**2 + A


def e_k(k: int) -> Field:
    return eigenpair(GRID, k)[0]


class TestInvariantSampling:
    def test_stationary_mode_variance_matches_closed_form(self):
        mc = MCConfig(master_seed=107, dt=0.01, threads=4)
        measure = sample_invariant(OU, mc, n_samples=512, chains=8)
        c1 = GRID.h * measure.samples @ e_k(1).values
        truth = SIGMA**2 / (2 * LAM1)
        se = truth * math.sqrt(2.0 / (len(c1) - 1)) * 2.0  # thinned, allow factor
        assert abs(c1.mean()) < 4 * math.sqrt(truth / len(c1)) * 2.0
        assert abs(c1.var(ddof=1) - truth) < 5 * se

    def test_mixing_diagnostic_recorded(self):
        mc = MCConfig(master_seed=109, dt=0.01, threads=4)
        measure = sample_invariant(CUBIC, mc, n_samples=64, chains=8)
        mix = measure.provenance["mixing"]
        assert mix["mode1"]["mixed"] and mix["sup"]["mixed"]

    def test_moments_stabilize_under_doubling(self):
        mc = MCConfig(master_seed=113, dt=0.01, threads=4)
        small = sample_invariant(CUBIC, mc, n_samples=128, chains=8)
        big = sample_invariant(CUBIC, mc.derived("double", 1), n_samples=256, chains=8)
        for p in (2.0, 4.0):
            m_small, m_big = moment(small, p), moment(big, p)
            drift = abs(m_big.mean - m_small.mean) / max(abs(m_big.mean), 1e-12)
            assert drift < 0.05 + 3 * math.hypot(m_small.std_error, m_big.std_error) / abs(m_big.mean)

    def test_csv_round_trip(self, tmp_path):
        mc = MCConfig(master_seed=127, dt=0.01, threads=2)
        measure = sample_invariant(OU, mc, n_samples=32, chains=4)
        path = tmp_path / "measure.csv"
        measure.save_csv(path)
        back = EmpiricalMeasure.load_csv(path, GRID)
        assert np.array_equal(back.samples, measure.samples)
        assert np.array_equal(back.chain_ids, measure.chain_ids)


class TestInvariance:
    def test_measure_invariant_under_dynamics(self):
        mc = MCConfig(master_seed=131, dt=0.01, threads=4)
        measure = sample_invariant(OU, mc, n_samples=96, chains=8)
        obs = smooth_cylindrical(GRID, e_k(1).values, "tanh")
        reports = invariance_check(OU, obs, measure, t_values=(0.1, 0.5),
                                   inner_traj=32, mc=mc)
        for rep in reports:
            assert rep.passed, rep.summary()


class TestPoincare:
    def test_linear_functional_ratio_matches_closed_form(self):
        # phi = <x, e_1>: variance is sigma^2/(2 lam_1); the Dirichlet energy
        # is the squared dual norm (|chi'| * L1 norm of e_1)^2 = 8/pi^2
        mc = MCConfig(master_seed=137, dt=0.01, threads=4)
        measure = sample_invariant(OU, mc, n_samples=512, chains=8)
        report = poincare_report(measure, [smooth_cylindrical(GRID, e_k(1).values,
                                                              "linear")])
        row = report.rows[0]
        truth = (SIGMA**2 / (2 * LAM1)) / (8 / np.pi**2)
        assert abs(row["energy"] - 8 / np.pi**2) < 1e-3
        assert abs(row["ratio"] - truth) / truth < 0.12

    def test_rho_hat_seed_stable(self):
        obs = [smooth_cylindrical(GRID, e_k(1).values, "tanh"),
               smooth_cylindrical(GRID, e_k(1).values, "cos")]
        rhos = []
        for seed in (139, 149):
            mc = MCConfig(master_seed=seed, dt=0.01, threads=4)
            measure = sample_invariant(CUBIC, mc, n_samples=256, chains=8)
            rhos.append(poincare_report(measure, obs).rho_hat)
        assert abs(rhos[0] - rhos[1]) / max(rhos) < 0.20

    def test_zero_energy_observables_excluded_from_rho(self):
        mc = MCConfig(master_seed=151, dt=0.01, threads=2)
        measure = sample_invariant(OU, mc, n_samples=64, chains=4)
        from rdlab import constant_observable

        flat = constant_observable(GRID, 2.5)
        lively = smooth_cylindrical(GRID, e_k(1).values, "tanh")
        report = poincare_report(measure, [flat, lively])
        by_name = {r["name"]: r for r in report.rows}
        assert by_name[flat.name]["excluded"]
        assert not by_name[lively.name]["excluded"]
        assert np.isfinite(report.rho_hat)


class TestGapFit:
    def test_recovers_known_rate_on_linear_model(self):
        mc = MCConfig(master_seed=157, dt=0.01, threads=4)
        measure = sample_invariant(OU, mc, n_samples=64, chains=8)
        obs = smooth_cylindrical(GRID, e_k(1).values, "tanh")
        fit = gap_fit(OU, measure, obs, t_grid=(0.02, 0.05, 0.08, 0.11, 0.14),
                      mc=mc, outer_samples=32, inner_traj=48)
        truth = 2 * LAM1
        assert fit.delta_hat - 2 * fit.delta_se > 0
        assert fit.r_squared >= 0.9
        assert abs(fit.delta_hat - truth) / truth < 0.15

    def test_positive_gap_on_default_model(self):
        mc = MCConfig(master_seed=163, dt=0.01, threads=4)
        measure = sample_invariant(CUBIC, mc, n_samples=64, chains=8)
        obs = smooth_cylindrical(GRID, e_k(1).values, "tanh")
        fit = gap_fit(CUBIC, measure, obs, t_grid=(0.02, 0.06, 0.1, 0.14),
                      mc=mc, outer_samples=32, inner_traj=48)
        assert fit.delta_hat - 2 * fit.delta_se > 0
        assert fit.r_squared >= 0.9


class TestGradientDecay:
    def test_exact_rate_on_linear_model(self):
        # deterministic tangent flow: sup_h |<h, D P_t phi>| decays at exactly
        # lam_1 for the first-mode linear functional
        mc = MCConfig(master_seed=167, dt=0.005, threads=2)
        fit = uniform_gradient_decay(
            OU, smooth_cylindrical(GRID, e_k(1).values, "linear"),
            t_grid=(0.1, 0.2, 0.3, 0.4), x_set=[e_k(1)], mc=mc, n_traj=8)
        assert abs(fit.theta_hat - LAM1) / LAM1 < 0.02

    def test_dissipativity_rate_values(self):
        # linear model: alpha = pi^2 + a by construction
        assert abs(dissipativity_rate(OU) - LAM1) < 1e-9
        assert dissipativity_rate(CUBIC) > 0
