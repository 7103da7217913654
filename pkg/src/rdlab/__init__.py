"""Simulation and verification laboratory for a dissipative stochastic
reaction-diffusion equation on (0,1) with Dirichlet boundary, polynomial
reaction and Lipschitz multiplicative noise.

The package realizes, at desk scale:

* the spectral calculus of the Dirichlet Laplacian (sine eigenbasis,
  heat semigroup, Yosida approximations, mode projections),
* exponential-Euler time stepping of the primary flow together with its
  tangent (first-variation) and second-variation flows,
* Monte Carlo estimators for the transition semigroup, its gradient in
  probabilistic (stochastic-integral) and tangent form, and the resolvent
  of the generator,
* the gradient-series quadratic form Gamma(phi) = sum_i |<G e_i, Dphi>|^2
  and the identities tying it to the generator (resolvent square identity,
  finite-dimensional Ito formula, stationary energy identity),
* invariant-measure sampling plus Poincare-ratio and spectral-gap fits.
"""

from .spectral import (
    Grid,
    Field,
    SpectralVector,
    DualFunctional,
    eigenpair,
    heat_semigroup,
    yosida_apply,
    project_modes,
    mollify,
    subdifferential,
)
from .coefficients import (
    ReactionSpec,
    DiffusionSpec,
    ModelSpec,
    HypothesisError,
    gamma_cutoff,
    gamma_cutoff_deriv,
    truncate_reaction,
    apply_F,
    apply_DF,
    apply_D2F,
    apply_G,
    apply_G_inverse,
    validate_hypotheses,
    model_preset,
)
from .noise import NoiseStream, increments, refine
from .flows import (
    SchemeConfig,
    PathBundle,
    BlowUpError,
    evolve_primary,
    evolve_tangent,
    evolve_second,
    bel_accumulate,
    evolve_from_H,
)
from .observables import (
    Observable,
    CylindricalObservable,
    EvaluationObservable,
    CustomObservable,
    ProductObservable,
    constant_observable,
    square_observable,
    smooth_cylindrical,
)
from .semigroup import (
    MCConfig,
    MCEstimate,
    ResolventEstimate,
    QuadratureConfig,
    GammaSeries,
    FiniteSystem,
    sample_population,
    estimate_Pt,
    estimate_Pt_curve,
    gradient_bel,
    gradient_tangent,
    laplace_nodes,
    resolvent,
    kolmogorov_apply,
    gamma_operator,
    parseval_gamma,
    ou_regularize,
    ou_regularize_cylindrical,
    finite_generator_apply,
    finite_paths,
)
from .identities import (
    IdentityReport,
    CarreBudgets,
    EnergyBudgets,
    scalar_reduction,
    check_carre_resolvent_scalar,
    check_carre_resolvent,
    carre_regularization_trend,
    check_ito_E,
    check_square_identity,
    check_energy_identity,
    ladder_report,
)
from .ergodic import (
    EmpiricalMeasure,
    GapFit,
    GradientDecayFit,
    PoincareReport,
    dissipativity_rate,
    sample_invariant,
    moment,
    poincare_report,
    gap_fit,
    uniform_gradient_decay,
    invariance_check,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
