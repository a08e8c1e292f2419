"""Joint default-time laws for correlated generalized Cox models.

Closed-form joint survival (nested-subset and Möbius forms), Marshall-Olkin
interaction rates, shot-noise compensators and a deterministic Monte Carlo
engine for factor, shot-noise and min-decomposition models.
"""

__version__ = "0.1.0"

from .compensators import (
    CompensatorTable,
    build_table,
    marginal_recovery_residuals,
    mo_rates,
    mobius_gamma,
    mobius_inverse_check,
    negative_rates,
    subset_compensator,
    subset_rate,
)
from .errors import (
    ArgumentError,
    CapacityError,
    CorrcoxError,
    ModelValidationError,
    NumericalError,
    TailBoundError,
    UnsupportedModelError,
)
from .models import (
    CompoundPoisson,
    ConstantJumps,
    ContinuousHazard,
    EmpiricalJumps,
    ExponentialJumps,
    FactorModel,
    GammaJumps,
    GammaSubordinator,
    MinDecomposition,
    TimeDeformation,
    independent_model,
    joint_laplace_exponent,
    shared_driver_model,
)
from .numerics import integrate, log_sum_accumulate
from .rng import RngConfig
from .shot_noise import (
    Kernel,
    ShotIntensity,
    ShotNoiseModel,
    sn_bivariate_survival,
    sn_exact_joint_survival,
    sn_subset_compensator,
)
from .simulation import (
    McEstimate,
    PathRecord,
    extract_default_times,
    mc_conditional_survival,
    mc_joint_survival,
    mc_joint_survival_many,
    mc_martingale_check,
    mc_min_decomposition,
    mc_simultaneous_prob,
    sample_path,
)
from .spec_io import load_document, load_spec, model_hash
from .survival import (
    SurvivalQuery,
    bivariate_survival,
    joint_survival,
    joint_survival_mobius,
    min_decomposition_survival,
    min_survival,
    simultaneous_default_prob_mo,
)
