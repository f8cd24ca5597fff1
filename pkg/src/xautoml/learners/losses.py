"""Training objectives for the boosting engines: cross-entropy and focal
loss, with analytic value/gradient/hessian in the raw score z.

Focal loss for a binary sample with label y ∈ {0,1}, p = sigmoid(z) and
p_t = p if y=1 else 1−p:

    FL = −α_t · (1 − p_t)^γ · log(p_t),   α_t = α if y=1 else 1−α

At the boundary α=1 the balanced convention would weight every negative by
zero, so α=1 instead disables class weighting (α_t ≡ 1 for both classes);
that is what makes the γ=0, α=1 case collapse to plain cross-entropy.

Writing u = p_t and s = +1 for y=1 / −1 for y=0 (so du/dz = s·u·(1−u)):

    dFL/dz   = s · α_t · (1−u)^γ · (γ·u·log u + u − 1)
    d²FL/dz² = α_t · u · (1−u)^γ · (γ·(1 − u·(γ+1))·log u + (2γ+1)·(1−u))

At γ=0, α=1 these reduce exactly to the cross-entropy expressions
(grad = p − y, hess = p·(1−p)). The focal hessian is *not* positive
everywhere for large γ; Newton boosting floors it (default 1e-16), while
derivative checks can request the raw value with ``hess_floor=None``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

_P_EPS = 1e-15
DEFAULT_HESS_FLOOR = 1e-16


@dataclass(frozen=True)
class FocalLossParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ConfigError("focal alpha must lie in (0, 1]")
        if self.gamma < 0:
            raise ConfigError("focal gamma must be >= 0")


@dataclass(frozen=True)
class LossSpec:
    name: str = "cross_entropy"
    focal: FocalLossParams | None = None

    def __post_init__(self):
        if self.name not in ("cross_entropy", "focal"):
            raise ConfigError(f"unknown loss {self.name!r}")
        if self.name == "focal" and self.focal is None:
            object.__setattr__(self, "focal", FocalLossParams())


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_value_grad_hess(spec: LossSpec, y, z, hess_floor: float | None = DEFAULT_HESS_FLOOR):
    """Per-sample (value, gradient, hessian) of the loss w.r.t. z.

    y must be in {0, 1}. Probabilities are clipped away from 0/1 so the
    logarithms stay finite. ``hess_floor=None`` returns the unfloored
    analytic hessian.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    p = np.clip(sigmoid(z), _P_EPS, 1.0 - _P_EPS)

    if spec.name == "cross_entropy":
        value = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
        grad = p - y
        hess = p * (1.0 - p)
    else:
        fp = spec.focal
        if fp.alpha == 1.0:
            alpha_t = np.ones_like(y)
        else:
            alpha_t = np.where(y == 1.0, fp.alpha, 1.0 - fp.alpha)
        sign = np.where(y == 1.0, 1.0, -1.0)
        u = np.where(y == 1.0, p, 1.0 - p)          # p_t
        log_u = np.log(u)
        om = 1.0 - u
        g = fp.gamma
        pow_om = om ** g
        value = -alpha_t * pow_om * log_u
        grad = sign * alpha_t * pow_om * (g * u * log_u + u - 1.0)
        hess = alpha_t * u * pow_om * (
            g * (1.0 - u * (g + 1.0)) * log_u + (2.0 * g + 1.0) * om)

    if hess_floor is not None:
        hess = np.maximum(hess, hess_floor)
    return value, grad, hess
