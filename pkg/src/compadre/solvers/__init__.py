from .graphical_lasso import GlassoPath, PrecisionEstimate, glasso_objective, graphical_lasso
from .group_lasso import GroupLassoFit, SmoothGroupProblem, group_lasso_smooth, group_objective
from .lasso import LassoFit, lasso, lasso_objective, lasso_path
from .refit import MixedModelFit, OLSFit, alpha_from_precision, mixed_model_refit, ols_refit

__all__ = [
    "GlassoPath", "GroupLassoFit", "LassoFit", "MixedModelFit", "OLSFit", "PrecisionEstimate",
    "SmoothGroupProblem", "alpha_from_precision", "glasso_objective", "graphical_lasso",
    "group_lasso_smooth", "group_objective", "lasso", "lasso_objective", "lasso_path",
    "mixed_model_refit", "ols_refit",
]
