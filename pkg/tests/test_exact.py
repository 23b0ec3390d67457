import itertools
import math

import numpy as np
import pytest

from prballoc import allocator_exact as ex
from prballoc import channel
from prballoc.errors import InfeasibleError, UsageError

REF_PS = {8: 0.0032, 9: 0.0064, 10: 0.00208}


def hand_instance():
    """Two users, two single-PRB base stations, noise 1 W.

    Own-cell powers 4 W, cross-cell 0.5 W: serving each user at its own BS
    yields 4/1.5 + 4/1.5 = 16/3; the swapped assignment only 2/3.
    """
    cfg = channel.ScenarioConfig(
        num_bs=2, prbs_per_bs=1, num_users=2, num_normal=1, seed=0
    )
    sc = channel.Scenario(config=cfg, op_ps={2: 0.0064})
    q = np.array([[[4.0, 0.5]], [[0.5, 4.0]]])
    return sc, channel.PowerMap(q=q, noise_w=1.0)


def random_instance(rng):
    N = int(rng.integers(1, 4))
    K = int(rng.integers(2, min(6, 2 * N) + 1))
    cfg = channel.ScenarioConfig(
        num_bs=2, prbs_per_bs=N, num_users=K, num_normal=K - 1, seed=0
    )
    sc = channel.Scenario(config=cfg, op_ps={K: float(rng.uniform(0.001, 0.01))})
    q = rng.uniform(0.05, 5.0, size=(K, N, 2))
    return sc, channel.PowerMap(q=q, noise_w=float(rng.uniform(0.5, 2.0)))


def oracle_best(scenario, pm, config):
    """Independent exhaustive oracle: evaluate every injective user->slot map
    with the SINR ratio and objective written out from scratch."""
    cfg = scenario.config
    users = list(cfg.user_ids)
    slots = [(b, n) for b in range(1, cfg.num_bs + 1) for n in range(1, cfg.prbs_per_bs + 1)]
    weights = {}
    for k in users:
        if config.prioritization and scenario.is_outpatient(k):
            weights[k] = 1.0 + config.alpha * scenario.ps_of(k)
        else:
            weights[k] = 1.0
    best = None
    for perm in itertools.permutations(slots, len(users)):
        placed = dict(zip(users, perm))
        sinrs = {}
        for k, (b, n) in placed.items():
            interf = sum(
                pm.q[m - 1, n - 1, b - 1]
                for m, (w, n2) in placed.items()
                if m != k and n2 == n and w != b
            )
            sinrs[k] = pm.q[k - 1, n - 1, b - 1] / (interf + pm.noise_w)
        if config.objective == "wsrmax":
            value = sum(weights[k] * sinrs[k] for k in users)
        else:
            value = 0.0
            for k in users:
                if config.prioritization and scenario.is_outpatient(k):
                    value += weights[k] * sinrs[k]
                else:
                    value += math.log(sinrs[k])
        if best is None or value > best:
            best = value
    return best


class TestPwlSpec:
    def test_tangency_and_envelope(self):
        pwl = ex.PwlSpec((0.5, 1.0, 5.0))
        assert pwl.value(1.0) == pytest.approx(0.0, abs=1e-15)
        for s in np.linspace(0.05, 30, 200):
            assert pwl.value(s) >= math.log(s) - 1e-12
        for p in pwl.tangent_points:
            assert pwl.value(p) == pytest.approx(math.log(p), abs=1e-12)

    def test_slopes_strictly_decreasing(self):
        pwl = ex.PwlSpec.default()
        slopes = [m for m, _ in pwl.segments]
        assert all(a > b > 0 for a, b in zip(slopes, slopes[1:]))
        assert pwl.tangent_points[0] == pytest.approx(0.1)
        assert pwl.tangent_points[-1] == pytest.approx(20.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            ex.PwlSpec((0.0, 1.0))
        with pytest.raises(ValueError):
            ex.PwlSpec((1.0, 1.0))


class TestObjectives:
    def test_wsrmax_plain_sum_when_off(self):
        sinrs = {1: 2.0, 2: 3.0}
        assert ex.objective_wsrmax(sinrs, {1: 1.0, 2: 1.0}) == 5.0

    def test_wsrmax_weighted_term(self):
        assert ex.objective_wsrmax({1: 5.0}, {1: 4.2}) == pytest.approx(21.0)

    def test_pf_all_ones_is_zero(self):
        cfg = ex.SolverConfig(objective="pf")
        sinrs = {1: 1.0, 2: 1.0}
        assert ex.objective_pf(sinrs, {1: 1.0, 2: 1.0}, {1: False, 2: False}, cfg) == 0.0

    def test_pf_after_prioritization_mixes_terms(self):
        cfg = ex.SolverConfig(objective="pf", prioritization=True)
        sinrs = {1: 1.0, 2: 5.0}
        weights = {1: 1.0, 2: 2.04}
        got = ex.objective_pf(sinrs, weights, {1: False, 2: True}, cfg)
        assert got == pytest.approx(10.2)

    def test_pf_zero_sinr_undefined(self):
        cfg = ex.SolverConfig(objective="pf")
        with pytest.raises(ex.PfUndefinedError):
            ex.objective_pf({1: 0.0}, {1: 1.0}, {1: False}, cfg)


class TestSinrOf:
    def test_spec_arithmetic_anchor(self):
        # 2e-13 W signal, one 5e-14 W interferer, 1.135e-14 W noise
        cfg = channel.ScenarioConfig(num_bs=2, prbs_per_bs=1, num_users=2, num_normal=1)
        q = np.array([[[2e-13, 1e-15]], [[5e-14, 1e-13]]])
        pm = channel.PowerMap(q=q, noise_w=1.135e-14)
        assignment = ex.Assignment(slots={1: (1, 1), 2: (2, 1)})
        assert ex.sinr_of(assignment, pm, 1) == pytest.approx(3.260, abs=0.001)

    def test_no_interferer_and_scale_invariance(self):
        sc, pm = hand_instance()
        lone = ex.Assignment(slots={1: (1, 1)})
        assert ex.sinr_of(lone, pm, 1) == 4.0
        both = ex.Assignment(slots={1: (1, 1), 2: (2, 1)})
        scaled = channel.PowerMap(q=pm.q * 7.0, noise_w=pm.noise_w * 7.0)
        for k in (1, 2):
            assert ex.sinr_of(both, scaled, k) == pytest.approx(
                ex.sinr_of(both, pm, k), rel=1e-12
            )

    def test_unassigned_user(self):
        sc, pm = hand_instance()
        with pytest.raises(ValueError):
            ex.sinr_of(ex.Assignment(slots={}), pm, 1)


class TestSolveExact:
    def test_hand_instance(self):
        sc, pm = hand_instance()
        assignment, report = ex.solve_exact(sc, pm, ex.SolverConfig())
        assert assignment.slots == {1: (1, 1), 2: (2, 1)}
        assert report.objective_value == 16.0 / 3.0

    def test_single_user_takes_argmax_slot(self):
        cfg = channel.ScenarioConfig(num_bs=2, prbs_per_bs=2, num_users=2, num_normal=1)
        sc = channel.Scenario(config=cfg)
        rng = np.random.default_rng(0)
        q = rng.uniform(0.1, 1.0, size=(2, 2, 2))
        q[0, 1, 0] = 9.0
        q[1] = 1e-9  # second user negligible, so user 1 dominates the objective
        pm = channel.PowerMap(q=q, noise_w=1.0)
        assignment, report = ex.solve_exact(sc, pm, ex.SolverConfig())
        assert assignment.slots[1] == (1, 2)
        assert report.sinr[1] == pytest.approx(9.0, rel=1e-6)

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(11)
        for i in range(12):
            sc, pm = random_instance(rng)
            for objective in ("wsrmax", "pf"):
                for prio in (False, True):
                    config = ex.SolverConfig(objective=objective, prioritization=prio)
                    _, report = ex.solve_exact(sc, pm, config)
                    want = oracle_best(sc, pm, config)
                    assert report.objective_value == pytest.approx(want, rel=1e-12)

    def test_search_modes_agree_including_tie_break(self):
        rng = np.random.default_rng(23)
        for i in range(8):
            sc, pm = random_instance(rng)
            a1, r1 = ex.solve_exact(sc, pm, ex.SolverConfig(search="subset_dp"))
            a2, r2 = ex.solve_exact(sc, pm, ex.SolverConfig(search="exhaustive"))
            assert a1.slots == a2.slots
            assert r1.objective_value == pytest.approx(r2.objective_value, rel=1e-14)

    def test_tie_break_lexicographic(self):
        # fully symmetric instance: every assignment scores the same
        cfg = channel.ScenarioConfig(num_bs=2, prbs_per_bs=2, num_users=2, num_normal=1)
        sc = channel.Scenario(config=cfg)
        pm = channel.PowerMap(q=np.full((2, 2, 2), 1.0), noise_w=1.0)
        for search in ("subset_dp", "exhaustive"):
            assignment, _ = ex.solve_exact(sc, pm, ex.SolverConfig(search=search))
            assert assignment.slots == {1: (1, 1), 2: (1, 2)}

    def test_report_recomputes(self):
        sc, _ = channel.generate_scenario(channel.ScenarioConfig(seed=5), op_ps=REF_PS)
        pm = channel.generate_power_map(sc, 0)
        config = ex.SolverConfig(objective="pf", prioritization=True)
        assignment, report = ex.solve_exact(sc, pm, config)
        redo = ex.evaluate_assignment(assignment, pm, sc, config)
        assert report.objective_value == pytest.approx(redo.objective_value, rel=1e-12)
        used = set(assignment.slots.values())
        assert len(used) == len(assignment.slots)  # no slot shared

    def test_alpha_monotonicity_on_fixed_map(self):
        sc, _ = channel.generate_scenario(channel.ScenarioConfig(seed=8), op_ps=REF_PS)
        pm = channel.generate_power_map(sc, 0)
        weighted = []
        for alpha in (50.0, 100.0, 150.0, 250.0, 500.0):
            config = ex.SolverConfig(objective="wsrmax", prioritization=True, alpha=alpha)
            _, report = ex.solve_exact(sc, pm, config)
            weighted.append(sum(sc.ps_of(k) * report.sinr[k] for k in sc.config.op_ids))
        assert all(b >= a - 1e-12 for a, b in zip(weighted, weighted[1:]))

    def test_infeasible(self):
        cfg = channel.ScenarioConfig(num_bs=2, prbs_per_bs=1, num_users=2, num_normal=1)
        sc = channel.Scenario(config=cfg)
        pm = channel.PowerMap(q=np.ones((3, 1, 2)), noise_w=1.0)
        sc.config.num_users = 3  # bypass config validation to hit the solver guard
        with pytest.raises(InfeasibleError):
            ex.solve_exact(sc, pm, ex.SolverConfig())

    def test_config_validation(self):
        with pytest.raises(UsageError):
            ex.SolverConfig(objective="maxmin")
        with pytest.raises(UsageError):
            ex.SolverConfig(objective="pf", pf_log_mode="piecewise")


class TestLinearization:
    def test_deviation_tiny_and_lambda_detection(self):
        sc, _ = channel.generate_scenario(channel.ScenarioConfig(seed=6), op_ps=REF_PS)
        pm = channel.generate_power_map(sc, 0)
        assignment, report = ex.solve_exact(sc, pm, ex.SolverConfig())
        assert ex.verify_linearization(assignment, pm) < 1e-9
        max_t = max(report.sinr.values())
        with pytest.raises(ex.LambdaTooSmallError):
            ex.verify_linearization(assignment, pm, lam=max_t * 0.5)

    def test_no_interferers_degenerates(self):
        sc, pm = hand_instance()
        lone = ex.Assignment(slots={1: (1, 1)})
        assert ex.verify_linearization(lone, pm) == 0.0

    def test_default_lambda_dominates(self):
        sc, _ = channel.generate_scenario(channel.ScenarioConfig(seed=6), op_ps=REF_PS)
        pm = channel.generate_power_map(sc, 0)
        assert ex.default_lambda(pm) > float(pm.q.max()) / pm.noise_w
