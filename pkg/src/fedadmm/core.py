"""Client and server building blocks of FedADMM.

The client augmented Lagrangian is

    L(u) = f(u) - lam.(u - z) + beta/2 ||u - z||^2

and its gradient ``grad f(u) - lam + beta (u - z)`` doubles as the residual
that drives the inexact stopping rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .data import DataShard
from .models import LossModel

Array = np.ndarray

Reference = Literal["prev_local", "global_z"]


class LocalSolveDiverged(FloatingPointError):
    def __init__(self, client: int | None, step: int):
        self.client = client
        self.step = step
        super().__init__(f"client {client}: local iterate became non-finite at step {step}")


@dataclass
class ClientState:
    u: Array
    lam: Array
    beta: float
    sigma: float
    c: float
    alpha: float
    eta: float
    shard: DataShard

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0 < self.sigma < 1:
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not (self.alpha > 0 and self.eta > 0 and self.c > 0):
            raise ValueError("alpha, eta and c must be positive")


@dataclass(frozen=True)
class ClientMsg:
    """What a client reports to the server: ``beta*u - lam`` and the ``beta`` that produced it."""

    combo: Array
    beta: float
    steps_taken: int = 0
    criterion_met: bool = True


@dataclass
class ServerState:
    z: Array
    delta: float
    cached_msgs: list[ClientMsg | None]

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")


@dataclass(frozen=True)
class FixedSteps:
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"need at least one local step, got {self.steps}")


@dataclass(frozen=True)
class Inexact:
    reference: Reference = "global_z"
    cap: int = 10

    def __post_init__(self):
        if self.reference not in ("prev_local", "global_z"):
            raise ValueError(f"unknown reference {self.reference!r}")
        if self.cap < 1:
            raise ValueError(f"cap must be at least 1, got {self.cap}")


StoppingRule = FixedSteps | Inexact


@dataclass(frozen=True)
class SolveResult:
    u: Array
    steps: int
    criterion_met: bool
    residual_norm: float


def _same_shape(*arrays: Array) -> None:
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise ValueError(f"dimension mismatch: {shape} vs {a.shape}")


def local_residual(u: Array, st: ClientState, z: Array, model: LossModel) -> Array:
    _same_shape(u, st.lam, z)
    return model.grad(u, st.shard) - st.lam + st.beta * (u - z)


def augmented_lagrangian(u: Array, st: ClientState, z: Array, model: LossModel) -> float:
    d = u - z
    return model.value(u, st.shard) - float(st.lam @ d) + 0.5 * st.beta * float(d @ d)


def sigma_max(beta_tilde: float) -> float:
    """Open upper bound sqrt(2)/(sqrt(2)+sqrt(beta_tilde)) on the inexactness factor."""
    if not beta_tilde > 0:
        raise ValueError(f"beta_tilde must be positive, got {beta_tilde}")
    return math.sqrt(2.0) / (math.sqrt(2.0) + math.sqrt(beta_tilde))


def local_solve(
    st: ClientState,
    z: Array,
    model: LossModel,
    rule: StoppingRule,
    client: int | None = None,
    on_step: Callable[[int, Array, Array], None] | None = None,
) -> SolveResult:
    """Full-batch gradient descent on the client AL, warm-started at ``z``.

    ``on_step(step, u, direction)`` is called before each update with the
    iterate and the descent direction actually applied.
    """
    if not st.eta > 0:
        raise ValueError(f"learning rate must be positive, got {st.eta}")
    u = np.array(z, dtype=np.float64, copy=True)
    e = local_residual(u, st, z, model)

    if isinstance(rule, FixedSteps):
        limit, threshold = rule.steps, -math.inf
    else:
        ref_residual = e if rule.reference == "global_z" else local_residual(st.u, st, z, model)
        limit, threshold = rule.cap, st.sigma * float(np.linalg.norm(ref_residual))

    steps = 0
    e_norm = float(np.linalg.norm(e))
    if not math.isfinite(e_norm):
        raise LocalSolveDiverged(client, steps)
    while e_norm > threshold and steps < limit:
        direction = -st.eta * e
        if on_step is not None:
            on_step(steps, u, direction)
        u = u + direction
        steps += 1
        e = local_residual(u, st, z, model)
        e_norm = float(np.linalg.norm(e))
        if not math.isfinite(e_norm):
            raise LocalSolveDiverged(client, steps)

    met = True if isinstance(rule, FixedSteps) else e_norm <= threshold
    return SolveResult(u, steps, met, e_norm)


def dual_update(st: ClientState, u_new: Array, z: Array) -> Array:
    _same_shape(u_new, st.lam, z)
    return st.lam - st.beta * (u_new - z)


def make_message(u: Array, lam: Array, beta: float, steps: int = 0, met: bool = True) -> ClientMsg:
    return ClientMsg(beta * u - lam, float(beta), steps, met)


def _check_msgs(msgs, alphas) -> None:
    if len(msgs) != len(alphas):
        raise ValueError(f"{len(msgs)} messages for {len(alphas)} clients")
    for i, msg in enumerate(msgs):
        if msg is None:
            raise ValueError(f"missing message from client {i}")
        if not msg.beta > 0:
            raise ValueError(f"client {i} reported non-positive beta {msg.beta}")


def aggregate(msgs, alphas, server: ServerState) -> Array:
    """Weighted closed-form z update blended with the previous global model.

    Sums run in client-index order so the result is bit-reproducible.
    """
    _check_msgs(msgs, alphas)
    num = np.zeros_like(server.z)
    den = 0.0
    for a, msg in zip(alphas, msgs):
        num += a * msg.combo
        den += a * msg.beta
    z_hat = num / den
    return z_hat / (1.0 + server.delta) + server.delta * server.z / (1.0 + server.delta)


def aggregate_prox_oracle(msgs, alphas, server: ServerState) -> Array:
    """Minimize the AL in z plus the proximal term ``delta/2 sum a_i b_i ||z - z_prev||^2``.

    Up to constants the objective is ``sum a_i (b_i/2 ||z||^2 - combo_i.z)`` plus
    the proximal term, i.e. ``h/2 ||z||^2 + g.z`` with the scalars below, so the
    minimizer is ``-g/h``.
    """
    _check_msgs(msgs, alphas)
    alphas = np.asarray(alphas, dtype=np.float64)
    betas = np.array([m.beta for m in msgs])
    combos = np.stack([m.combo for m in msgs])
    weight = float(alphas @ betas)
    curvature = weight * (1.0 + server.delta)
    linear = -(alphas @ combos) - server.delta * weight * server.z
    return -linear / curvature
