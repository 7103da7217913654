"""Coefficient layer: presets, standing-assumption validation, truncation.

Oracles: symbolic derivatives checked by central differences, bit-exact
truncation on the identity region, and hand-constructed counterexamples that
must be rejected by the validator.
"""

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdlab import (
    Field,
    Grid,
    HypothesisError,
    dissipativity_rate,
    model_preset,
    validate_hypotheses,
)
from rdlab.coefficients import (
    apply_D2F,
    apply_DF,
    apply_F,
    apply_G,
    apply_G_inverse,
    gamma_cutoff,
    gamma_cutoff_deriv,
    truncate_reaction,
)

GRID = Grid(32)


def field_of(values) -> Field:
    return Field(GRID, np.broadcast_to(np.asarray(values, float), (GRID.n,)).copy())


class TestPresets:
    @pytest.mark.parametrize(
        "name,kwargs",
        [
            ("cubic-default", {}),
            ("cubic-default", {"lam": 2.0, "base": 0.8, "amp": 0.05}),
            ("ou-linear", {"a": 1.0, "sigma": 0.5}),
            ("ou-linear", {"a": 3.0, "sigma": 2.0}),
        ],
    )
    def test_presets_satisfy_standing_assumptions(self, name, kwargs):
        model = model_preset(name, GRID, **kwargs)
        report = validate_hypotheses(model)
        assert report.all_required_passed, "\n".join(report.summary_lines())

    def test_dissipativity_rate_positive(self):
        assert dissipativity_rate(model_preset("cubic-default", GRID)) > 0
        assert dissipativity_rate(model_preset("ou-linear", GRID, a=1.0, sigma=0.5)) > 0

    def test_unknown_preset_rejected(self):
        with pytest.raises((KeyError, ValueError)):
            model_preset("no-such-model", GRID)


class TestValidatorCounterexamples:
    def test_hidden_quintic_growth_fails(self):
        model = model_preset("cubic-default", GRID)
        rx = replace(
            model.reaction,
            f=lambda xi, r: r - r**5,
            df=lambda xi, r: 1.0 - 5.0 * r**4 + 0.0 * xi,
            d2f=lambda xi, r: -20.0 * r**3 + 0.0 * xi,
        )
        report = validate_hypotheses(replace(model, reaction=rx))
        assert not report.passed("h1_growth")
        assert not report.all_required_passed

    def test_understated_drift_slope_fails(self):
        model = model_preset("cubic-default", GRID)
        rx = replace(model.reaction, lambda_dissip=0.25)  # true sup f' is 1.0
        report = validate_hypotheses(replace(model, reaction=rx))
        assert not report.passed("h1_sup_fprime")

    def test_understated_noise_lipschitz_fails(self):
        model = model_preset("cubic-default", GRID)
        dx = replace(model.diffusion, lip_const=1e-4)
        report = validate_hypotheses(replace(model, diffusion=dx))
        assert not report.passed("h1_g_lipschitz")


class TestDerivativeMetadata:
    @pytest.mark.parametrize("preset", ["cubic-default", "ou-linear"])
    def test_df_matches_central_difference(self, preset):
        model = model_preset(preset, GRID)
        rng = np.random.default_rng(7)
        x = Field(GRID, rng.normal(0, 1.5, GRID.n))
        y = Field(GRID, rng.normal(size=GRID.n))
        eps = 1e-6
        fd = (
            apply_F(model, Field(GRID, x.values + eps * y.values)).values
            - apply_F(model, Field(GRID, x.values - eps * y.values)).values
        ) / (2 * eps)
        np.testing.assert_allclose(apply_DF(model, x, y).values, fd, atol=1e-6)

    def test_d2f_matches_second_difference(self):
        model = model_preset("cubic-default", GRID)
        rng = np.random.default_rng(8)
        x = Field(GRID, rng.normal(0, 1.5, GRID.n))
        y = Field(GRID, rng.normal(size=GRID.n))
        eps = 1e-4
        fd = (
            apply_F(model, Field(GRID, x.values + eps * y.values)).values
            - 2 * apply_F(model, x).values
            + apply_F(model, Field(GRID, x.values - eps * y.values)).values
        ) / eps**2
        np.testing.assert_allclose(
            apply_D2F(model, x, y, y).values, fd, atol=1e-4, rtol=1e-4
        )

    def test_g_inverse_left_inverse(self):
        model = model_preset("cubic-default", GRID)
        rng = np.random.default_rng(9)
        x = Field(GRID, rng.normal(0, 2.0, GRID.n))
        y = Field(GRID, rng.normal(size=GRID.n))
        back = apply_G_inverse(model, x, apply_G(model, x, y))
        np.testing.assert_allclose(back.values, y.values, atol=1e-12)

    def test_g_inverse_requires_lower_bound(self):
        model = model_preset("cubic-default", GRID)
        degenerate = replace(model, diffusion=replace(model.diffusion, beta_g=0.0))
        x = field_of(0.0)
        with pytest.raises(HypothesisError):
            apply_G_inverse(degenerate, x, x)


class TestCutoffAndTruncation:
    @given(r=st.floats(-10, 10))
    @settings(max_examples=200, deadline=None)
    def test_cutoff_shape(self, r):
        v = float(gamma_cutoff(r))
        assert abs(v) <= 2.0 + 1e-12
        if abs(r) <= 1.0:
            assert v == r
        if abs(r) >= 2.0:
            assert v == np.sign(r) * 2.0
        assert float(gamma_cutoff_deriv(r)) >= -1e-12

    def test_cutoff_odd_and_monotone(self):
        r = np.linspace(-5, 5, 2001)
        v = gamma_cutoff(r)
        np.testing.assert_allclose(v, -gamma_cutoff(-r), atol=1e-14)
        assert np.all(np.diff(v) >= -1e-14)

    def test_cutoff_derivative_consistent(self):
        r = np.linspace(-3, 3, 1201)
        fd = np.gradient(gamma_cutoff(r), r)
        inner = slice(5, -5)
        np.testing.assert_allclose(
            gamma_cutoff_deriv(r)[inner], fd[inner], atol=5e-4
        )

    @given(
        n=st.sampled_from([1.0, 2.0, 4.0]),
        scale=st.floats(0.1, 0.95),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=60, deadline=None)
    def test_truncation_bit_exact_on_identity_region(self, n, scale, seed):
        model = model_preset("cubic-default", GRID)
        rx_n = truncate_reaction(model.reaction, n)
        rng = np.random.default_rng(seed)
        rho = rng.uniform(-scale * n, scale * n, 64)
        xi = np.full_like(rho, 0.5)
        assert np.array_equal(rx_n.f(xi, rho), model.reaction.f(xi, rho))
        assert np.array_equal(rx_n.df(xi, rho), model.reaction.df(xi, rho))

    def test_truncation_bounds_growth_outside(self):
        model = model_preset("cubic-default", GRID)
        rx_2 = truncate_reaction(model.reaction, 2.0)
        rho = np.linspace(-50, 50, 501)
        xi = np.full_like(rho, 0.5)
        vals = rx_2.f(xi, rho)
        # saturated argument: |f_2| can never exceed sup over |rho| <= 4
        cap = np.abs(model.reaction.f(xi, np.linspace(-4, 4, 2001))).max()
        assert np.abs(vals).max() <= cap + 1e-12

    def test_infinite_level_is_identity(self):
        model = model_preset("cubic-default", GRID)
        assert truncate_reaction(model.reaction, np.inf) is model.reaction

    def test_truncation_level_validated(self):
        model = model_preset("cubic-default", GRID)
        with pytest.raises(ValueError):
            truncate_reaction(model.reaction, 0.5)
