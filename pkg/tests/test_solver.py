from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from intscore.data import BinaryDataset, FeatureSpec, aggregate
from intscore.model import LatticeSpec, ObjectiveValue, PenaltyConfig, ScoringSystem, objective
from intscore.solver import (
    SolutionPool,
    SolveConfig,
    brute_force_solve,
    conflict_lower_bound,
    node_bound,
    solve,
)

from instances import a1a2_dataset, random_instance


def quick_cfg(pool=20, **kw):
    return SolveConfig(time_limit=30.0, pool_size=pool, **kw)


class TestWorkedExample:
    def test_nor_model_is_recovered_exactly(self):
        ds = a1a2_dataset()
        agg = aggregate(ds)
        lattice = LatticeSpec(2, 2)
        cfg = PenaltyConfig.auto(1, ds.n, ds.p, lattice)
        report, pool = solve(agg, cfg, lattice, quick_cfg(), feature_names=ds.feature_names)
        assert report.status == "optimal"
        best, value = pool.best()
        assert best.intercept == 1
        assert best.terms == ((0, -1), (1, -1))
        assert value.weighted_error == 0
        assert report.gap == 0
        assert report.lower_bound == report.best_objective

    def test_brute_force_agrees(self):
        ds = a1a2_dataset()
        agg = aggregate(ds)
        lattice = LatticeSpec(2, 2)
        cfg = PenaltyConfig.auto(1, ds.n, ds.p, lattice)
        model, value = brute_force_solve(agg, cfg, lattice)
        assert (model.intercept, model.terms) == (1, ((0, -1), (1, -1)))
        assert value.weighted_error == 0


class TestOracleAgreement:
    @pytest.mark.parametrize("seed", range(12))
    def test_matches_brute_force(self, seed):
        ds, agg, cfg, lattice = random_instance(seed)
        report, pool = solve(agg, cfg, lattice, quick_cfg())
        _, want = brute_force_solve(agg, cfg, lattice)
        assert report.status == "optimal"
        assert report.best_objective == want.total
        assert report.lower_bound == want.total

    def test_pool_objectives_rederivable(self):
        ds, agg, cfg, lattice = random_instance(99)
        _, pool = solve(agg, cfg, lattice, quick_cfg())
        for model, value in pool.entries:
            again = objective(model, agg, cfg)
            assert again.total == value.total
            assert again.weighted_error == value.weighted_error

    def test_respects_term_cap(self):
        ds, agg, cfg, lattice = random_instance(7)
        report, pool = solve(agg, cfg, lattice, quick_cfg(term_cap=1))
        for model, _ in pool.entries:
            assert model.l0 <= 1


class TestConflictBound:
    def test_single_conflict_value(self):
        X = np.array([[1, 0]] * 4 + [[0, 1]], dtype=np.uint8)
        y = np.array([1, 1, 1, -1, -1], dtype=np.int8)
        ds = BinaryDataset((FeatureSpec("a"), FeatureSpec("b")), X, y)
        cfg = PenaltyConfig.auto(1, 5, 2, LatticeSpec(2, 4))
        # pattern (1,0) occurs 3 times positive, once negative
        assert conflict_lower_bound(aggregate(ds), cfg) == Fraction(1, 5)

    def test_stated_min_example(self):
        X = np.array([[1]] * 5, dtype=np.uint8)
        y = np.array([1, 1, 1, -1, -1], dtype=np.int8)
        ds = BinaryDataset((FeatureSpec("a"),), X, y)
        cfg = PenaltyConfig.auto(1, 5, 1, LatticeSpec(2, 4))
        assert conflict_lower_bound(aggregate(ds), cfg) == Fraction(2, 5)

    def test_no_conflicts_zero(self):
        ds = a1a2_dataset()
        cfg = PenaltyConfig.auto(1, 4, 2, LatticeSpec(2, 2))
        assert conflict_lower_bound(aggregate(ds), cfg) == 0

    @pytest.mark.parametrize("seed", range(8))
    def test_below_optimum(self, seed):
        ds, agg, cfg, lattice = random_instance(seed)
        _, best = brute_force_solve(agg, cfg, lattice)
        assert conflict_lower_bound(agg, cfg) <= best.total

    def test_all_identical_patterns_forced_error(self):
        X = np.ones((6, 2), dtype=np.uint8)
        y = np.array([1, 1, -1, -1, -1, -1], dtype=np.int8)
        ds = BinaryDataset((FeatureSpec("a"), FeatureSpec("b")), X, y)
        agg = aggregate(ds)
        lattice = LatticeSpec(2, 3)
        cfg = PenaltyConfig.auto(1, 6, 2, lattice)
        report, _ = solve(agg, cfg, lattice, quick_cfg())
        _, value = report.best, report.best_objective
        best_model, best_value = brute_force_solve(agg, cfg, lattice)
        assert best_value.weighted_error == Fraction(2, 6)
        assert report.status == "optimal"
        assert report.best_objective == best_value.total


class TestNodeBound:
    def test_fully_fixed_equals_objective(self):
        ds, agg, cfg, lattice = random_instance(3)
        rng = np.random.default_rng(0)
        for _ in range(5):
            coefs = [int(v) for v in rng.integers(-2, 3, size=ds.p)]
            lam0 = int(rng.integers(-3, 4))
            partial = [lam0] + coefs
            model = ScoringSystem.from_dense(lam0, coefs, ds.feature_names)
            assert node_bound(partial, agg, cfg, lattice) == objective(model, agg, cfg).total

    def test_root_between_conflict_bound_and_optimum(self):
        for seed in range(8):
            ds, agg, cfg, lattice = random_instance(seed)
            root = node_bound([None] * (ds.p + 1), agg, cfg, lattice)
            _, best = brute_force_solve(agg, cfg, lattice)
            assert conflict_lower_bound(agg, cfg) <= root <= best.total

    @pytest.mark.parametrize("seed", range(6))
    def test_below_every_completion(self, seed):
        ds, agg, cfg, lattice = random_instance(seed)
        rng = np.random.default_rng(seed + 100)
        bounds = lattice.bounds_for(ds.p)
        for _ in range(3):
            partial = [None]  # free intercept
            fixed_idx = []
            for j in range(ds.p):
                if rng.random() < 0.5:
                    partial.append(int(rng.integers(-bounds[j], bounds[j] + 1)))
                    fixed_idx.append(j)
                else:
                    partial.append(None)
            got = node_bound(partial, agg, cfg, lattice)

            # exhaustive completions of the free entries
            best = None
            free = [j for j in range(ds.p) if partial[j + 1] is None]
            coef_ranges = [range(-int(bounds[j]), int(bounds[j]) + 1) for j in free]
            for lam0 in range(-lattice.intercept_bound, lattice.intercept_bound + 1):
                for vals in product(*coef_ranges):
                    coefs = [0] * ds.p
                    for j in fixed_idx:
                        coefs[j] = partial[j + 1]
                    for j, v in zip(free, vals):
                        coefs[j] = v
                    model = ScoringSystem.from_dense(lam0, coefs, ds.feature_names)
                    total = objective(model, agg, cfg).total
                    if best is None or total < best:
                        best = total
            assert got <= best


class TestPool:
    def make(self, totals):
        pool = SolutionPool(3)
        for i, t in enumerate(totals):
            m = ScoringSystem.from_dense(i, [1], ["x"])
            v = ObjectiveValue(Fraction(t), 1, 1, Fraction(t))
            pool.add(m, v)
        return pool

    def test_sorted_and_capped(self):
        pool = self.make([5, 1, 3, 2, 4])
        totals = [v.total for _, v in pool.entries]
        assert totals == sorted(totals)
        assert len(pool) == 3
        assert totals[0] == 1

    def test_deduplication(self):
        pool = SolutionPool(5)
        m = ScoringSystem.from_dense(1, [2], ["x"])
        v = ObjectiveValue(Fraction(1), 1, 2, Fraction(1))
        assert pool.add(m, v)
        assert not pool.add(m, v)
        assert len(pool) == 1

    def test_best_with_at_most(self):
        pool = SolutionPool(10)
        dense = ScoringSystem.from_dense(0, [1, 1], ["a", "b"])
        sparse = ScoringSystem.from_dense(0, [1, 0], ["a", "b"])
        pool.add(dense, ObjectiveValue(Fraction(1, 10), 2, 2, Fraction(1, 10)))
        pool.add(sparse, ObjectiveValue(Fraction(2, 10), 1, 1, Fraction(2, 10)))
        model, _ = pool.best_with_at_most(1)
        assert model.l0 == 1
        model, _ = pool.best_with_at_most(2)
        assert model.l0 == 2


class TestAnytimeBehavior:
    def test_telemetry_bound_below_incumbent_and_monotone(self):
        ds, agg, cfg, lattice = random_instance(17)
        samples = []
        solve(agg, cfg, lattice, quick_cfg(), telemetry=samples.append)
        assert samples
        prev_bound = None
        prev_inc = None
        for s in samples:
            inc, bound = Fraction(s["incumbent"]), Fraction(s["bound"])
            assert bound <= inc
            if prev_bound is not None:
                assert bound >= prev_bound
                assert inc <= prev_inc
            prev_bound, prev_inc = bound, inc

    def test_node_limit_returns_incumbent(self):
        ds, agg, cfg, lattice = random_instance(23)
        report, pool = solve(agg, cfg, lattice, quick_cfg(node_limit=5))
        assert report.status in ("node_limit", "optimal")
        assert report.best is not None
        assert report.lower_bound <= report.best_objective
        assert len(pool) >= 1

    def test_zero_node_limit_still_feasible(self):
        ds, agg, cfg, lattice = random_instance(29)
        report, pool = solve(agg, cfg, lattice, quick_cfg(node_limit=0))
        assert report.best is not None
        assert objective(report.best, agg, cfg).total == report.best_objective

    def test_determinism_under_node_limit(self):
        ds, agg, cfg, lattice = random_instance(31)
        r1, p1 = solve(agg, cfg, lattice, quick_cfg(node_limit=40))
        r2, p2 = solve(agg, cfg, lattice, quick_cfg(node_limit=40))
        assert r1.best_objective == r2.best_objective
        assert r1.lower_bound == r2.lower_bound
        assert r1.nodes_explored == r2.nodes_explored
        assert r1.status == r2.status
        assert [m.key() for m, _ in p1.entries] == [m.key() for m, _ in p2.entries]


class TestEndpointsAndErrors:
    def test_all_positive_data_weight_endpoint(self):
        # W- = 0 admits no validated config, but brute force still shows the
        # optimum is the always-positive intercept-only model
        X = np.array([[0, 1], [1, 0], [1, 1], [0, 0]], dtype=np.uint8)
        y = np.ones(4, dtype=np.int8)
        ds = BinaryDataset((FeatureSpec("a"), FeatureSpec("b")), X, y)
        cfg = PenaltyConfig(2, 0, Fraction(1, 1000), Fraction(1, 10**6), max_terms=2)
        model, value = brute_force_solve(aggregate(ds), cfg, LatticeSpec(2, 3))
        assert model.l0 == 0 and model.intercept == 1
        assert value.weighted_error == 0

    def test_negative_term_cap_rejected(self):
        ds, agg, cfg, lattice = random_instance(2)
        with pytest.raises(ValueError):
            solve(agg, cfg, lattice, quick_cfg(term_cap=-1))

    def test_invalid_penalties_rejected(self):
        ds, agg, _, lattice = random_instance(2)
        bad = PenaltyConfig(1, 1, Fraction(1, 2), Fraction(1, 10**9))
        with pytest.raises(ValueError):
            solve(agg, bad, lattice, quick_cfg())

    def test_brute_force_lattice_guard(self):
        rng = np.random.default_rng(0)
        X = (rng.random((10, 8)) < 0.5).astype(np.uint8)
        y = np.where(rng.random(10) < 0.5, 1, -1).astype(np.int8)
        y[0] = 1
        y[1] = -1
        ds = BinaryDataset(tuple(FeatureSpec(f"f{j}") for j in range(8)), X, y)
        cfg = PenaltyConfig(1, 1, Fraction(1, 1000), Fraction(1, 10**9))
        with pytest.raises(ValueError):
            brute_force_solve(aggregate(ds), cfg, LatticeSpec(10, 100))


def test_single_feature_separable_recovery():
    X = np.array([[1], [1], [1], [0], [0]], dtype=np.uint8)
    y = np.array([1, 1, 1, -1, -1], dtype=np.int8)
    ds = BinaryDataset((FeatureSpec("flag"),), X, y)
    agg = aggregate(ds)
    lattice = LatticeSpec(1, 2)
    cfg = PenaltyConfig.auto(1, ds.n, ds.p, lattice)
    model, value = brute_force_solve(agg, cfg, lattice)
    assert value.weighted_error == 0
    report, _ = solve(agg, cfg, lattice, quick_cfg())
    assert report.best_objective == value.total
    assert objective(report.best, agg, cfg).weighted_error == 0


def test_penalty_separation_preserves_accuracy_order():
    # with auto-derived penalties, minimizing the full objective also
    # minimizes the weighted error, and at equal error the term count:
    # verified by full enumeration, including the asymmetric weight 4/5
    # whose error quantum undercuts min(W+, W-)
    from itertools import product as iproduct

    for seed, w_plus in ((1, Fraction(4, 5)), (4, 1), (9, Fraction(19, 10))):
        rng = np.random.default_rng(seed)
        n, p = 20, 3
        X = (rng.random((n, p)) < 0.5).astype(np.uint8)
        y = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
        y[0], y[1] = 1, -1
        ds = BinaryDataset(tuple(FeatureSpec(f"f{j}") for j in range(p)), X, y)
        agg = aggregate(ds)
        lattice = LatticeSpec(2, 3)
        cfg = PenaltyConfig.auto(w_plus, n, p, lattice)
        cfg.validate_for(n, p, lattice)

        best_total = None
        best_key = None
        total_winner = None
        for lam0 in range(-3, 4):
            for coefs in iproduct(range(-2, 3), repeat=p):
                m = ScoringSystem.from_dense(lam0, coefs, ds.feature_names)
                val = objective(m, agg, cfg)
                key = (val.weighted_error, val.l0_count, val.l1_sum)
                if best_key is None or key < best_key:
                    best_key = key
                if best_total is None or val.total < best_total:
                    best_total = val.total
                    total_winner = key
        assert total_winner == best_key


def test_per_feature_bounds_through_solver():
    rng = np.random.default_rng(3)
    X = (rng.random((25, 3)) < 0.5).astype(np.uint8)
    y = np.where(rng.random(25) < 0.5, 1, -1).astype(np.int8)
    y[0], y[1] = 1, -1
    ds = BinaryDataset(tuple(FeatureSpec(f"f{j}") for j in range(3)), X, y)
    agg = aggregate(ds)
    lattice = LatticeSpec((1, 2, 3), 4)
    cfg = PenaltyConfig.auto(1, ds.n, ds.p, lattice)
    report, pool = solve(agg, cfg, lattice, quick_cfg())
    _, want = brute_force_solve(agg, cfg, lattice)
    assert report.status == "optimal"
    assert report.best_objective == want.total
    bounds = lattice.bounds_for(3)
    for model, _ in pool.entries:
        for j, c in model.terms:
            assert abs(c) <= bounds[j]


def test_single_class_dataset():
    X = np.array([[1, 0], [0, 1], [1, 1]], dtype=np.uint8)
    y = np.ones(3, dtype=np.int8)
    ds = BinaryDataset((FeatureSpec("a"), FeatureSpec("b")), X, y)
    agg = aggregate(ds)
    lattice = LatticeSpec(2, 3)
    cfg = PenaltyConfig.auto(1, ds.n, ds.p, lattice)
    report, _ = solve(agg, cfg, lattice, quick_cfg())
    assert report.status == "optimal"
    assert objective(report.best, agg, cfg).weighted_error == 0
    assert report.best.l0 == 0  # the intercept alone suffices
