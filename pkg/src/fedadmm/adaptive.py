"""Residual-balancing penalty adaptation and the matching inexactness factor."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import sigma_max


@dataclass(frozen=True)
class AdaptiveParams:
    mu: float = 20.0
    tau: float = 2.0
    beta_min: float = 1e-4
    beta_max: float = 1e4

    def __post_init__(self):
        if not self.mu > 1:
            raise ValueError(f"mu must exceed 1, got {self.mu}")
        if not self.tau > 1:
            raise ValueError(f"tau must exceed 1, got {self.tau}")
        if not 0 < self.beta_min <= self.beta_max:
            raise ValueError(f"need 0 < beta_min <= beta_max, got {self.beta_min}, {self.beta_max}")


@dataclass(frozen=True)
class Residuals:
    primal: float
    dual: float


def residuals(u_new, u_prev, z_prev) -> Residuals:
    """Primal residual ``||u_new - u_prev||`` and dual residual ``||u_new - z_prev||``."""
    u_new, u_prev, z_prev = (np.asarray(a, dtype=np.float64) for a in (u_new, u_prev, z_prev))
    if not u_new.shape == u_prev.shape == z_prev.shape:
        raise ValueError(f"dimension mismatch: {u_new.shape}, {u_prev.shape}, {z_prev.shape}")
    return Residuals(float(np.linalg.norm(u_new - u_prev)), float(np.linalg.norm(u_new - z_prev)))


def beta_branch(r: Residuals, ap: AdaptiveParams) -> int:
    """+1 to grow beta, -1 to shrink it, 0 to keep it."""
    if r.dual > ap.mu * r.primal:
        return 1
    if r.primal > ap.mu * r.dual:
        return -1
    return 0


def scale_beta(beta: float, r: Residuals, ap: AdaptiveParams) -> float:
    branch = beta_branch(r, ap)
    if branch > 0:
        return beta * ap.tau
    if branch < 0:
        return beta / ap.tau
    return beta


def update_beta(beta: float, r: Residuals, ap: AdaptiveParams) -> float:
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return min(max(scale_beta(beta, r, ap), ap.beta_min), ap.beta_max)


def update_sigma(beta_new: float, c: float, safety: float = 1.0) -> float:
    """Inexactness factor at the boundary value for ``beta_new / c``, times ``safety``."""
    if not (beta_new > 0 and c > 0):
        raise ValueError(f"beta and c must be positive, got {beta_new}, {c}")
    if not 0 < safety <= 1:
        raise ValueError(f"safety factor must lie in (0, 1], got {safety}")
    return safety * sigma_max(beta_new / c)


def beta_exponent(beta: float, beta0: float, tau: float) -> float:
    """``log_tau(beta / beta0)``; an integer for any unclamped update history."""
    return math.log(beta / beta0) / math.log(tau)
