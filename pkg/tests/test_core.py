import math

import numpy as np
import pytest

from fedadmm.core import (
    ClientMsg,
    ClientState,
    FixedSteps,
    Inexact,
    LocalSolveDiverged,
    ServerState,
    aggregate,
    aggregate_prox_oracle,
    dual_update,
    local_residual,
    local_solve,
    make_message,
    sigma_max,
)
from fedadmm.data import DataShard
from fedadmm.models import MlpModel, MlpSpec, RidgeModel, RidgeSpec

from conftest import quadratic_client, random_shard


class TestResidual:
    def test_hand_value(self):
        st, model = quadratic_client()
        np.testing.assert_array_equal(local_residual(np.zeros(1), st, np.zeros(1), model), [-3.0])

    def test_zero_at_al_minimizer(self):
        st, model = quadratic_client()
        np.testing.assert_array_equal(local_residual(np.array([1.5]), st, np.zeros(1), model), [0.0])

    def test_shifted_multiplier_zeroes_residual(self, rng):
        dim = 6
        spec = RidgeSpec(0.5, dim)
        model = RidgeModel(spec)
        shard = random_shard(rng, 9, dim)
        u, z = rng.standard_normal(dim), rng.standard_normal(dim)
        lam = model.grad(u, shard) + 2.0 * (u - z)
        st = ClientState(u, lam, 2.0, 0.5, 0.5, 1.0, 0.1, shard)
        np.testing.assert_allclose(local_residual(u, st, z, model), 0.0, atol=1e-13)

    def test_dimension_mismatch(self):
        st, model = quadratic_client()
        with pytest.raises(ValueError, match="dimension"):
            local_residual(np.zeros(1), st, np.zeros(2), model)


class TestSigmaMax:
    @pytest.mark.parametrize("beta, expected", [(2.0, 0.5), (8.0, 1 / 3), (1.0, 0.585786437626905)])
    def test_values(self, beta, expected):
        assert sigma_max(beta) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("beta", [0.0, -1.0])
    def test_nonpositive(self, beta):
        with pytest.raises(ValueError):
            sigma_max(beta)


class TestLocalSolve:
    def test_hand_iterated_inexact(self):
        st, model = quadratic_client(sigma=0.4, eta=0.25)
        res = local_solve(st, np.zeros(1), model, Inexact("global_z", cap=10))
        assert res.u[0] == 1.125 and res.steps == 2 and res.criterion_met
        assert res.residual_norm == 0.75

    def test_already_optimal_takes_no_steps(self):
        # z = 3 with lam = 0 is the AL minimizer of 0.5(u - 3)^2 + 0.5(u - 3)^2
        st, model = quadratic_client()
        res = local_solve(st, np.array([3.0]), model, Inexact("global_z", 5))
        assert res.steps == 0 and res.criterion_met and res.u[0] == 3.0

    def test_fixed_steps_always_runs_e_steps(self):
        st, model = quadratic_client()
        res = local_solve(st, np.array([3.0]), model, FixedSteps(10))
        assert res.steps == 10 and res.criterion_met

    def test_fixed_steps_equals_manual_gd(self):
        st, model = quadratic_client(eta=0.1)
        u = np.zeros(1)
        for _ in range(4):
            u = u - 0.1 * local_residual(u, st, np.zeros(1), model)
        res = local_solve(st, np.zeros(1), model, FixedSteps(4))
        np.testing.assert_array_equal(res.u, u)

    def test_cap_binds_and_is_reported(self):
        st, model = quadratic_client(sigma=0.01, eta=0.01)
        res = local_solve(st, np.zeros(1), model, Inexact("global_z", cap=3))
        assert res.steps == 3 and not res.criterion_met
        assert res.residual_norm > 0.01 * 3.0

    def test_prev_local_reference(self):
        # e at stored u=1.5 is 0, so the threshold is 0 and only the cap stops the loop
        st, model = quadratic_client(sigma=0.5, eta=0.25)
        st.u = np.array([1.5])
        res = local_solve(st, np.zeros(1), model, Inexact("prev_local", cap=4))
        assert res.steps == 4 and not res.criterion_met

    def test_zero_reference_residual_reaches_exact_zero(self):
        # with eta = 1/(1+beta) one step lands exactly on the minimizer
        st, model = quadratic_client(sigma=0.5, eta=0.5)
        st.u = np.array([1.5])
        res = local_solve(st, np.zeros(1), model, Inexact("prev_local", cap=4))
        assert res.steps == 1 and res.criterion_met and res.u[0] == 1.5

    def test_direction_is_minus_eta_residual(self, rng):
        spec = MlpSpec((4, 3, 2))
        model = MlpModel(spec)
        shard = DataShard(rng.standard_normal((5, 4)), rng.integers(0, 2, size=5))
        n = spec.num_params
        st = ClientState(np.zeros(n), rng.standard_normal(n), 1.5, 0.5, 1.0, 1.0, 0.05, shard)
        z = rng.standard_normal(n)
        seen = []

        def probe(step, u, direction):
            expected = -st.eta * local_residual(u, st, z, model)
            seen.append(float(np.max(np.abs(direction - expected))))

        res = local_solve(st, z, model, FixedSteps(6), on_step=probe)
        assert len(seen) == res.steps == 6
        assert max(seen) <= 1e-12

    def test_divergence_names_client_and_step(self):
        st, model = quadratic_client(eta=5.0)
        with pytest.raises(LocalSolveDiverged) as err:
            local_solve(st, np.zeros(1), model, FixedSteps(2000), client=7)
        assert err.value.client == 7 and err.value.step > 0
        assert "client 7" in str(err.value)

    def test_warm_start_does_not_alias_z(self):
        st, model = quadratic_client()
        z = np.zeros(1)
        local_solve(st, z, model, FixedSteps(3))
        assert z[0] == 0.0

    def test_rule_validation(self):
        with pytest.raises(ValueError):
            FixedSteps(0)
        with pytest.raises(ValueError):
            Inexact("global_z", 0)
        with pytest.raises(ValueError):
            Inexact("elsewhere", 3)


class TestClientState:
    @pytest.mark.parametrize("field, value", [("beta", 0.0), ("sigma", 1.0), ("sigma", 0.0), ("eta", 0.0)])
    def test_invalid(self, field, value):
        kwargs = dict(u=np.zeros(1), lam=np.zeros(1), beta=1.0, sigma=0.5, c=1.0, alpha=1.0, eta=0.1,
                      shard=DataShard(np.ones((1, 1)), np.ones(1)))
        kwargs[field] = value
        with pytest.raises(ValueError):
            ClientState(**kwargs)


class TestDualUpdate:
    def test_no_violation_keeps_multiplier(self):
        st, _ = quadratic_client(lam=0.7)
        np.testing.assert_array_equal(dual_update(st, np.array([2.0]), np.array([2.0])), [0.7])

    def test_hand_value(self):
        st, _ = quadratic_client(lam=1.0, beta=1.0)
        np.testing.assert_array_equal(dual_update(st, np.array([2.0]), np.zeros(1)), [-1.0])

    def test_feasibility_identity(self, rng):
        for _ in range(20):
            st, _ = quadratic_client(lam=float(rng.normal()), beta=float(rng.uniform(0.1, 5)))
            u, z = rng.standard_normal(1), rng.standard_normal(1)
            new = dual_update(st, u, z)
            np.testing.assert_allclose(u - z, (st.lam - new) / st.beta, rtol=1e-12, atol=1e-14)

    def test_dimension_mismatch(self):
        st, _ = quadratic_client()
        with pytest.raises(ValueError):
            dual_update(st, np.zeros(2), np.zeros(2))


def msgs_for(us, lams, betas):
    return [make_message(np.atleast_1d(u), np.atleast_1d(l), b) for u, l, b in zip(us, lams, betas)]


class TestAggregate:
    def test_unweighted_mean(self):
        msgs = msgs_for([1.0, 5.0], [0.0, 0.0], [1.0, 1.0])
        z = aggregate(msgs, [0.5, 0.5], ServerState(np.zeros(1), 0.0, msgs))
        np.testing.assert_array_equal(z, [3.0])

    def test_hand_value_with_multipliers(self):
        msgs = msgs_for([2.0, 4.0], [1.0, -1.0], [1.0, 1.0])
        z = aggregate(msgs, [0.5, 0.5], ServerState(np.zeros(1), 0.0, msgs))
        np.testing.assert_array_equal(z, [3.0])

    def test_memory_blend(self):
        msgs = msgs_for([2.0, 4.0], [1.0, -1.0], [1.0, 1.0])
        z = aggregate(msgs, [0.5, 0.5], ServerState(np.ones(1), 0.01, msgs))
        assert z[0] == pytest.approx(3.01 / 1.01, abs=1e-15)
        assert round(z[0], 6) == 2.980198

    def test_matches_prox_oracle(self, rng):
        for _ in range(50):
            m, n = int(rng.integers(1, 21)), int(rng.integers(1, 51))
            alphas = rng.dirichlet(np.ones(m))
            msgs = [ClientMsg(rng.standard_normal(n), float(rng.uniform(0.1, 5))) for _ in range(m)]
            server = ServerState(rng.standard_normal(n), float(rng.uniform(0, 1)), msgs)
            np.testing.assert_allclose(aggregate(msgs, alphas, server),
                                       aggregate_prox_oracle(msgs, alphas, server), atol=1e-10)

    def test_zero_delta_is_plain_weighted_solution(self, rng):
        alphas = np.array([0.2, 0.3, 0.5])
        msgs = [ClientMsg(rng.standard_normal(4), b) for b in (1.0, 2.0, 0.5)]
        server = ServerState(rng.standard_normal(4), 0.0, msgs)
        plain = sum(a * m.combo for a, m in zip(alphas, msgs)) / sum(a * m.beta for a, m in zip(alphas, msgs))
        np.testing.assert_allclose(aggregate_prox_oracle(msgs, alphas, server), plain, atol=1e-14)
        np.testing.assert_allclose(aggregate(msgs, alphas, server), plain, atol=1e-14)

    def test_huge_delta_stays_at_previous_model(self, rng):
        msgs = [ClientMsg(rng.standard_normal(3), 1.0) for _ in range(2)]
        server = ServerState(rng.standard_normal(3), 1e6, msgs)
        np.testing.assert_allclose(aggregate_prox_oracle(msgs, [0.5, 0.5], server), server.z, atol=1e-3)

    def test_weighted_mean_when_multipliers_vanish(self, rng):
        us = rng.standard_normal((4, 3))
        alphas = rng.dirichlet(np.ones(4))
        msgs = [make_message(u, np.zeros(3), 1.7) for u in us]
        z = aggregate(msgs, alphas, ServerState(np.zeros(3), 0.0, msgs))
        np.testing.assert_allclose(z, alphas @ us, atol=1e-14)

    def test_missing_message(self):
        msgs = msgs_for([1.0], [0.0], [1.0]) + [None]
        with pytest.raises(ValueError, match="missing"):
            aggregate(msgs, [0.5, 0.5], ServerState(np.zeros(1), 0.0, msgs))

    def test_message_count_mismatch(self):
        msgs = msgs_for([1.0], [0.0], [1.0])
        with pytest.raises(ValueError):
            aggregate(msgs, [0.5, 0.5], ServerState(np.zeros(1), 0.0, msgs))

    def test_negative_delta_rejected(self):
        with pytest.raises(ValueError):
            ServerState(np.zeros(1), -0.1, [])


def test_message_combo_and_beta():
    msg = make_message(np.array([2.0, 1.0]), np.array([0.5, -1.0]), 3.0, steps=4, met=False)
    np.testing.assert_array_equal(msg.combo, [5.5, 4.0])
    assert msg.beta == 3.0 and msg.steps_taken == 4 and not msg.criterion_met


def test_sigma_max_range():
    values = [sigma_max(b) for b in np.logspace(-6, 6, 50)]
    assert all(0 < v < 1 for v in values)
    assert all(a > b for a, b in zip(values, values[1:]))
    assert math.isclose(sigma_max(1e-12), 1.0, rel_tol=1e-5)
