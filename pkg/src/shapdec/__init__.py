"""Conditional SHAP values split into interventional and dependent parts."""

from .core import (
    AttributionVector,
    Coalition,
    Decomposition,
    FeatureMatrix,
    Permutation,
    RngStream,
    Sample,
    enumerate_coalitions,
    prefix_set,
    sample_permutations,
)
from .distributions import (
    CopulaSampler,
    DiscreteJoint,
    DiscreteSampler,
    GaussianModel,
    GaussianSampler,
    MarginalSampler,
    condition_gaussian,
    conditional_mean,
    fit_copula,
    fit_gaussian,
    sample_conditional,
    sample_marginal_rows,
    sampler_from_json,
)
from .engine import (
    ExactValueFunction,
    ValueFunction,
    additive_split_check,
    conditional_value_function,
    decompose,
    exact_decomposition,
    exact_discrete_value_function,
    interventional_parts,
    interventional_value_function,
    kernel_shap,
    shapley_from_value_function,
    shapley_kernel_weight,
    shapley_residuals,
    value,
)
from .models import (
    ExternalModel,
    ForestModel,
    LinearModel,
    LogOddsModel,
    TabulatedModel,
    fit_forest,
    fit_ols,
    log_odds,
    model_from_json,
    predict_batch,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
