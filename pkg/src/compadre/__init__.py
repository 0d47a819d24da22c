"""Joint selection of linear and nonlinear covariate effects for correlated responses."""

from .core import Effect, FitConfig, FitReport, ModelState, classify, fit, predict
from .simulation import SimSetting, simulate

__all__ = ["Effect", "FitConfig", "FitReport", "ModelState", "SimSetting", "classify", "fit",
           "predict", "simulate"]
__version__ = "0.1.0"
