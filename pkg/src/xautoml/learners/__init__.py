from .losses import FocalLossParams, LossSpec, loss_value_grad_hess  # noqa: F401
from .gbt import BoostedModel, GbtSpec, fit_gbt, feature_importance, partial_dependence  # noqa: F401
from .gam import GamModel, GamSpec, fit_gam  # noqa: F401
