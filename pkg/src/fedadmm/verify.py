"""Self-checks behind ``fedadmm verify``: analytic code against independent oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracle
from .config import parse_config
from .core import (
    ClientMsg,
    ClientState,
    ServerState,
    aggregate,
    aggregate_prox_oracle,
    augmented_lagrangian,
    local_residual,
)
from .data import DataShard
from .models import MlpModel, MlpSpec, RidgeModel, RidgeSpec, mlp_grad, mlp_value, ridge_grad, ridge_value
from .orchestrator import Problem, client_weights, init_state, run_round


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def rel_error(a, b) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def random_ridge_shard(rng, count, dim):
    return DataShard(rng.standard_normal((count, dim)), rng.standard_normal(count))


def check_ridge_gradient(rng, instances=20) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        dim = int(rng.integers(2, 30))
        spec = RidgeSpec(float(rng.uniform(0.1, 2.0)), dim)
        shard = random_ridge_shard(rng, int(rng.integers(1, 40)), dim)
        u = rng.standard_normal(dim)
        fd = oracle.finite_diff_grad(lambda p: ridge_value(p, shard, spec), u, 1e-5)
        worst = max(worst, rel_error(ridge_grad(u, shard, spec), fd))
    return CheckResult("ridge gradient vs finite differences", worst < 1e-6, f"max rel err {worst:.2e}")


def check_mlp_gradient(rng, instances=10) -> CheckResult:
    spec = MlpSpec((4, 3, 3, 2))
    worst = 0.0
    for _ in range(instances):
        shard = DataShard(rng.standard_normal((8, 4)), rng.integers(0, 2, size=8))
        u = rng.standard_normal(spec.num_params)
        fd = oracle.finite_diff_grad(lambda p: mlp_value(p, shard, spec), u, 1e-4)
        worst = max(worst, rel_error(mlp_grad(u, shard, spec), fd))
    return CheckResult("mlp gradient vs finite differences", worst < 1e-5, f"max rel err {worst:.2e}")


def check_mlp_zero_loss(rng) -> CheckResult:
    spec = MlpSpec((6, 5, 10))
    shard = DataShard(rng.standard_normal((7, 6)), rng.integers(0, 10, size=7))
    err = abs(mlp_value(np.zeros(spec.num_params), shard, spec) - math.log(10))
    return CheckResult("mlp loss at zero parameters is ln(10)", err < 1e-12, f"error {err:.1e}")


def check_strong_convexity(rng, pairs=100) -> CheckResult:
    spec = RidgeSpec(1.0, 10)
    shard = random_ridge_shard(rng, 15, 10)
    worst = math.inf
    for _ in range(pairs):
        x, y = rng.standard_normal(10), rng.standard_normal(10)
        gap = (ridge_grad(x, shard, spec) - ridge_grad(y, shard, spec)) @ (x - y)
        worst = min(worst, gap - spec.gamma * (x - y) @ (x - y))
    return CheckResult("ridge strong convexity (gamma bound)", worst >= -1e-12, f"min slack {worst:.2e}")


def check_al_minimizer(rng) -> CheckResult:
    dim = 12
    spec = RidgeSpec(0.5, dim)
    shard = random_ridge_shard(rng, 30, dim)
    st = ClientState(np.zeros(dim), rng.standard_normal(dim), 1.5, 0.5, 0.5, 1.0, 0.01, shard)
    z = rng.standard_normal(dim)
    u = oracle.al_minimizer_ridge(st, z, spec)
    norm = float(np.linalg.norm(local_residual(u, st, z, RidgeModel(spec))))
    return CheckResult("AL minimizer zeroes the local residual", norm < 1e-9, f"|e| {norm:.1e}")


def check_residual_is_al_gradient(rng) -> CheckResult:
    spec = MlpSpec((5, 4, 3))
    model = MlpModel(spec)
    shard = DataShard(rng.standard_normal((6, 5)), rng.integers(0, 3, size=6))
    n = spec.num_params
    st = ClientState(np.zeros(n), rng.standard_normal(n), 2.0, 0.5, 1.0, 1.0, 0.01, shard)
    z = rng.standard_normal(n)
    u = rng.standard_normal(n)
    fd = oracle.finite_diff_grad(lambda p: augmented_lagrangian(p, st, z, model), u, 1e-5)
    err = rel_error(local_residual(u, st, z, model), fd)
    return CheckResult("residual equals the AL gradient", err < 1e-6, f"rel err {err:.2e}")


def check_aggregation(rng, instances=200) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        m, n = int(rng.integers(1, 21)), int(rng.integers(1, 51))
        alphas = rng.dirichlet(np.ones(m))
        msgs = [ClientMsg(rng.standard_normal(n), float(rng.uniform(0.1, 5))) for _ in range(m)]
        server = ServerState(rng.standard_normal(n), float(rng.uniform(0, 1)), msgs)
        worst = max(worst, float(np.max(np.abs(
            aggregate(msgs, alphas, server) - aggregate_prox_oracle(msgs, alphas, server)))))
    return CheckResult("memory aggregation equals proximal z-subproblem", worst < 1e-10,
                       f"max abs diff {worst:.1e}")


def check_ridge_convergence(rng) -> CheckResult:
    m, dim, per_client = 3, 5, 40
    spec = RidgeSpec(1.0, dim)
    shards = [random_ridge_shard(rng, per_client, dim) for _ in range(m)]
    alphas = client_weights(shards, "uniform")
    z_star = oracle.ridge_global_solution(shards, spec, alphas)
    cfg = parse_config(overrides=[
        f"experiment.clients={m}", f"experiment.subset_size={m}", "experiment.variant=in",
        "experiment.eta=0.1", "experiment.cap=50", f"synthetic.dim={dim}",
    ])
    problem = Problem(RidgeModel(spec), shards, alphas, None)
    state = init_state(problem, cfg)
    for _ in range(2000):
        run_round(state, cfg, problem, evaluate_now=False)
    err = float(np.linalg.norm(state.server.z - z_star) / np.linalg.norm(z_star))
    return CheckResult("FedADMM-In converges to the global ridge solution", err < 1e-6,
                       f"relative error {err:.1e}")


SUITES: dict[str, list[Callable[[np.random.Generator], CheckResult]]] = {
    "ridge": [check_ridge_gradient, check_strong_convexity, check_al_minimizer,
              check_aggregation, check_ridge_convergence],
    "mlp": [check_mlp_gradient, check_mlp_zero_loss, check_residual_is_al_gradient],
}


def run_suite(name: str = "all", seed: int = 0) -> list[CheckResult]:
    names = list(SUITES) if name == "all" else [name]
    results = []
    for suite in names:
        for check in SUITES[suite]:
            results.append(check(np.random.default_rng([seed, len(results)])))
    return results
