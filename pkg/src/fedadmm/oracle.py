"""Independent reference computations used to check the solver.

Nothing here calls into the model or ADMM code paths; the ridge systems are
assembled from raw data and solved with dense Cholesky factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .data import DataShard
from .models import RidgeSpec

Array = np.ndarray


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class RidgeGlobalSystem:
    normal_matrix: Array
    rhs: Array


def _spd_solve(matrix: Array, rhs: Array) -> Array:
    try:
        factor = linalg.cho_factor(matrix, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"system is not positive definite: {exc}") from exc
    x = linalg.cho_solve(factor, rhs)
    if np.linalg.norm(matrix @ x - rhs) > 1e-10 * max(np.linalg.norm(rhs), 1e-300):
        x = linalg.solve(matrix, rhs, assume_a="sym")
    return x


def ridge_global_system(
    shards: Sequence[DataShard], specs: RidgeSpec | Sequence[RidgeSpec], alphas: Sequence[float]
) -> RidgeGlobalSystem:
    if isinstance(specs, RidgeSpec):
        specs = [specs] * len(shards)
    n = specs[0].feature_dim
    matrix = np.zeros((n, n))
    rhs = np.zeros(n)
    for shard, spec, a in zip(shards, specs, alphas):
        A, b, count = shard.features, shard.targets, shard.features.shape[0]
        matrix += a * (A.T @ A / count + spec.gamma * np.eye(n))
        rhs += a * (A.T @ b / count)
    return RidgeGlobalSystem(0.5 * (matrix + matrix.T), rhs)


def ridge_global_solution(shards, specs, alphas) -> Array:
    """Unique minimizer of ``sum_i alpha_i f_i`` for ridge clients."""
    system = ridge_global_system(shards, specs, alphas)
    return _spd_solve(system.normal_matrix, system.rhs)


def finite_diff_grad(f: Callable[[Array], float], u: Array, h: float = 1e-5) -> Array:
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    u = np.asarray(u, dtype=np.float64)
    grad = np.empty_like(u)
    for j in range(u.size):
        up = u.copy()
        down = u.copy()
        up[j] += h
        down[j] -= h
        grad[j] = (f(up) - f(down)) / (2 * h)
    return grad


def al_minimizer_ridge(st, z: Array, spec: RidgeSpec, shard: DataShard | None = None) -> Array:
    """Exact minimizer of one ridge client's augmented Lagrangian at fixed ``lam`` and ``z``."""
    shard = st.shard if shard is None else shard
    A, b = shard.features, shard.targets
    count = A.shape[0]
    n = spec.feature_dim
    matrix = A.T @ A / count + (spec.gamma + st.beta) * np.eye(n)
    rhs = A.T @ b / count + st.lam + st.beta * z
    return _spd_solve(0.5 * (matrix + matrix.T), rhs)
