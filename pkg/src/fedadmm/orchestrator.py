"""Federated training loop for vanilla FedADMM, FedADMM-In and FedADMM-InSa."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import adaptive
from .adaptive import AdaptiveParams
from .config import ExperimentConfig
from .core import (
    ClientMsg,
    ClientState,
    FixedSteps,
    Inexact,
    ServerState,
    aggregate,
    dual_update,
    local_solve,
    make_message,
)
from .data import (
    STREAM_INIT,
    STREAM_SAMPLING,
    Dataset,
    DataShard,
    find_mnist_files,
    gen_synthetic,
    load_mnist,
    make_rng,
    partition_iid,
    partition_label_shards,
)
from .models import LossModel, MlpModel, RidgeModel, RidgeSpec

Array = np.ndarray


@dataclass(frozen=True)
class VanillaFedADMM:
    local_steps: int = 10

    @property
    def rule(self):
        return FixedSteps(self.local_steps)


@dataclass(frozen=True)
class FedADMMIn:
    reference: str = "global_z"
    cap: int = 10

    @property
    def rule(self):
        return Inexact(self.reference, self.cap)


@dataclass(frozen=True)
class FedADMMInSa:
    reference: str = "global_z"
    cap: int = 10
    adaptive: AdaptiveParams = field(default_factory=AdaptiveParams)

    @property
    def rule(self):
        return Inexact(self.reference, self.cap)


AlgorithmVariant = VanillaFedADMM | FedADMMIn | FedADMMInSa


def variant_from_config(cfg: ExperimentConfig) -> AlgorithmVariant:
    ex = cfg.experiment
    if ex.variant == "vanilla":
        return VanillaFedADMM(ex.local_steps)
    if ex.variant == "in":
        return FedADMMIn(ex.reference, ex.cap)
    ad = cfg.adaptive
    return FedADMMInSa(ex.reference, ex.cap, AdaptiveParams(ad.mu, ad.tau, ad.beta_min, ad.beta_max))


@dataclass
class Problem:
    """Everything static about a run: model, client shards, weights and evaluation data."""

    model: LossModel
    shards: list[DataShard]
    alphas: Array
    train: Dataset
    test: Dataset | None = None

    @property
    def num_clients(self) -> int:
        return len(self.shards)


def client_weights(shards: Sequence[DataShard], scheme: str) -> Array:
    if scheme == "uniform":
        return np.full(len(shards), 1.0 / len(shards))
    counts = np.array([s.count for s in shards], dtype=np.float64)
    return counts / counts.sum()


def build_problem(cfg: ExperimentConfig) -> Problem:
    ex, seeds = cfg.experiment, cfg.seeds
    if ex.example == "example1":
        syn = cfg.synthetic
        train = gen_synthetic(seeds.data, syn.n_samples, syn.dim)
        part = partition_iid(train, ex.clients, seeds.partition)
        model = RidgeModel(RidgeSpec(syn.gamma, syn.dim))
        test = None
    else:
        mn = cfg.mnist
        train, test = load_mnist(*find_mnist_files(mn.dir), mn.n_train, mn.n_test, seeds.data)
        if mn.partition == "label_shards":
            part = partition_label_shards(
                train, ex.clients, mn.shard_size, mn.shards_per_client, seeds.partition
            )
        else:
            part = partition_iid(train, ex.clients, seeds.partition)
        model = MlpModel()
    shards = part.shards(train)
    return Problem(model, shards, client_weights(shards, ex.alpha), train, test)


@dataclass
class FederationState:
    clients: list[ClientState]
    server: ServerState
    round: int = 0
    cumulative_steps: int = 0


def init_state(problem: Problem, cfg: ExperimentConfig) -> FederationState:
    """Zero multipliers, ``u_i = z``; round-0 messages are formed from this state."""
    ex = cfg.experiment
    z0 = problem.model.init_params(make_rng(cfg.seeds.init, STREAM_INIT))
    sigma0 = adaptive.update_sigma(ex.beta0, ex.convexity, ex.sigma_safety)
    clients = [
        ClientState(
            u=z0.copy(),
            lam=np.zeros_like(z0),
            beta=ex.beta0,
            sigma=sigma0,
            c=ex.convexity,
            alpha=float(a),
            eta=ex.eta,
            shard=shard,
        )
        for shard, a in zip(problem.shards, problem.alphas)
    ]
    msgs = [make_message(st.u, st.lam, st.beta) for st in clients]
    return FederationState(clients, ServerState(z0.copy(), ex.delta, msgs))


def sample_clients(m: int, subset_size: int, rng: np.random.Generator) -> Array:
    if not 0 <= subset_size <= m:
        raise ValueError(f"cannot sample {subset_size} of {m} clients")
    return np.sort(rng.choice(m, size=subset_size, replace=False))


@dataclass
class RoundRecord:
    round: int
    train_loss: float | None
    test_accuracy: float | None
    selected: tuple[int, ...]
    steps: tuple[int, ...]
    criterion_met: tuple[bool, ...]
    selected_steps: int
    cumulative_steps: int
    beta_mean: float
    beta_min: float
    beta_max: float
    criterion_unmet_count: int
    beta_clamped_count: int
    max_residual_norm: float
    wall_time: float


def population_loss(z: Array, problem: Problem) -> float:
    return float(sum(a * problem.model.value(z, s) for a, s in zip(problem.alphas, problem.shards)))


def evaluate(z: Array, ds: Dataset, model: LossModel) -> tuple[float, float | None]:
    """Mean loss over ``ds`` and, for classification, argmax accuracy."""
    if len(ds) == 0:
        return float("nan"), None
    shard = DataShard(ds.features, ds.targets)
    loss = model.value(z, shard)
    if ds.kind != "classification":
        return loss, None
    return loss, float(np.mean(model.predict(z, ds.features) == ds.targets))


@dataclass(frozen=True)
class _ClientUpdate:
    client: int
    u: Array
    lam: Array
    beta: float
    sigma: float
    msg: ClientMsg
    clamped: bool
    residual_norm: float


def _client_round(
    i: int, st: ClientState, z: Array, model: LossModel, variant: AlgorithmVariant, safety: float
) -> _ClientUpdate:
    res = local_solve(st, z, model, variant.rule, client=i)
    lam_new = dual_update(st, res.u, z)
    # The message carries the beta used in this round's solve.
    msg = make_message(res.u, lam_new, st.beta, res.steps, res.criterion_met)
    beta, sigma, clamped = st.beta, st.sigma, False
    if isinstance(variant, FedADMMInSa):
        r = adaptive.residuals(res.u, st.u, z)
        raw = adaptive.scale_beta(st.beta, r, variant.adaptive)
        beta = adaptive.update_beta(st.beta, r, variant.adaptive)
        clamped = beta != raw
        sigma = adaptive.update_sigma(beta, st.c, safety)
    return _ClientUpdate(i, res.u, lam_new, beta, sigma, msg, clamped, res.residual_norm)


def run_round(
    state: FederationState,
    cfg: ExperimentConfig,
    problem: Problem,
    selected: Sequence[int] | None = None,
    executor: ThreadPoolExecutor | None = None,
    evaluate_now: bool = True,
) -> RoundRecord:
    """Advance the federation by one communication round (in place)."""
    start = time.perf_counter()
    ex = cfg.experiment
    variant = variant_from_config(cfg)
    m = len(state.clients)
    if selected is None:
        rng = make_rng(cfg.seeds.sampling, STREAM_SAMPLING, state.round)
        selected = sample_clients(m, ex.subset_size, rng)
    selected = sorted(int(i) for i in selected)
    z = state.server.z

    def work(i):
        return _client_round(i, state.clients[i], z, problem.model, variant, ex.sigma_safety)

    if executor is None:
        updates = [work(i) for i in selected]
    else:
        updates = list(executor.map(work, selected))

    msgs = state.server.cached_msgs
    for up in updates:
        st = state.clients[up.client]
        st.u, st.lam, st.beta, st.sigma = up.u, up.lam, up.beta, up.sigma
        msgs[up.client] = up.msg
    chosen = set(selected)
    for i, st in enumerate(state.clients):
        # Unselected clients report beta_i^k * u_i - lam_i with their current beta.
        if i not in chosen and msgs[i].beta != st.beta:
            msgs[i] = make_message(st.u, st.lam, st.beta)

    state.server.z = aggregate(msgs, problem.alphas, state.server)
    state.round += 1
    round_steps = sum(up.msg.steps_taken for up in updates)
    state.cumulative_steps += round_steps

    train_loss = test_acc = None
    if evaluate_now:
        train_loss = population_loss(state.server.z, problem)
        if problem.test is not None:
            test_acc = evaluate(state.server.z, problem.test, problem.model)[1]
    betas = np.array([st.beta for st in state.clients])
    return RoundRecord(
        round=state.round,
        train_loss=train_loss,
        test_accuracy=test_acc,
        selected=tuple(selected),
        steps=tuple(up.msg.steps_taken for up in updates),
        criterion_met=tuple(up.msg.criterion_met for up in updates),
        selected_steps=round_steps,
        cumulative_steps=state.cumulative_steps,
        beta_mean=float(betas.mean()),
        beta_min=float(betas.min()),
        beta_max=float(betas.max()),
        criterion_unmet_count=sum(not up.msg.criterion_met for up in updates),
        beta_clamped_count=sum(up.clamped for up in updates),
        max_residual_norm=max((up.residual_norm for up in updates), default=0.0),
        wall_time=time.perf_counter() - start,
    )


def thread_count() -> int:
    value = os.environ.get("FEDADMM_THREADS", "1")
    try:
        threads = int(value)
    except ValueError:
        raise ValueError(f"FEDADMM_THREADS must be an integer, got {value!r}") from None
    return max(threads, 1)


@dataclass
class ExperimentResult:
    records: list[RoundRecord]
    state: FederationState
    problem: Problem

    @property
    def z(self) -> Array:
        return self.state.server.z


def run_experiment(
    cfg: ExperimentConfig,
    problem: Problem | None = None,
    on_record: Callable[[RoundRecord], None] | None = None,
    threads: int | None = None,
) -> ExperimentResult:
    problem = build_problem(cfg) if problem is None else problem
    state = init_state(problem, cfg)
    rounds = cfg.experiment.rounds
    every = cfg.experiment.eval_every
    threads = thread_count() if threads is None else threads
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    records = []
    try:
        for k in range(rounds):
            due = (k + 1) % every == 0 or k == rounds - 1
            rec = run_round(state, cfg, problem, executor=executor, evaluate_now=due)
            records.append(rec)
            if on_record is not None:
                on_record(rec)
    finally:
        if executor is not None:
            executor.shutdown()
    return ExperimentResult(records, state, problem)
