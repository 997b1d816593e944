import math

import numpy as np
import pytest

from intscore.data import BinaryDataset, FeatureSpec, aggregate
from intscore.model import LatticeSpec, PenaltyConfig, ScoringSystem, objective
from intscore.mps import export_mps
from intscore.polish import ActiveSet
from intscore.solver import SolveConfig, solve

from instances import a1a2_dataset, random_instance
from mps_reader import parse_mps, solve_mps


def conflict_fixture():
    """Three distinct patterns, one of them labeled both ways."""
    X = np.array([[0, 0], [0, 0], [1, 0]], dtype=np.uint8)
    y = np.array([1, -1, -1], dtype=np.int8)
    return BinaryDataset((FeatureSpec("a1"), FeatureSpec("a2")), X, y)


class TestStructure:
    def test_aggregated_counts(self):
        ds = conflict_fixture()
        cfg = PenaltyConfig.auto(1, ds.n, ds.p, LatticeSpec(2, 2))
        text = export_mps(aggregate(ds), cfg, LatticeSpec(2, 2), "aggregated")
        doc = parse_mps(text)
        zs = [c for c in doc["col_order"] if c.startswith("ZS")]
        zt = [c for c in doc["col_order"] if c.startswith("ZT")]
        assert len(zs) + len(zt) == 3
        conflicts = [r for r in doc["row_order"] if r.startswith("CF")]
        assert len(conflicts) == 1
        assert doc["rows"][conflicts[0]] == "E"

    def test_general_has_one_loss_row_per_example(self):
        ds = conflict_fixture()
        extra = BinaryDataset(ds.features,
                              np.vstack([ds.X, [[1, 1], [0, 1]]]).astype(np.uint8),
                              np.concatenate([ds.y, [1, -1]]).astype(np.int8))
        cfg = PenaltyConfig.auto(1, extra.n, extra.p, LatticeSpec(2, 2))
        text = export_mps(aggregate(extra), cfg, LatticeSpec(2, 2), "general")
        doc = parse_mps(text)
        loss_rows = [r for r in doc["row_order"] if r.startswith("LS")]
        assert len(loss_rows) == 5

    def test_polish_requires_active_set(self):
        ds = conflict_fixture()
        cfg = PenaltyConfig.auto(1, ds.n, ds.p, LatticeSpec(2, 2))
        with pytest.raises(ValueError):
            export_mps(aggregate(ds), cfg, LatticeSpec(2, 2), "polish")

    def test_polish_restricts_columns(self):
        ds, agg, cfg, lattice = random_instance(4)
        text = export_mps(agg, cfg, lattice, "polish", ActiveSet((0,)))
        doc = parse_mps(text)
        lams = [c for c in doc["col_order"] if c.startswith("LAM")]
        assert lams == ["LAM00000", "LAM00001"]
        assert not any(c.startswith("F") for c in doc["col_order"])

    def test_names_and_fields_fit_fixed_format(self):
        ds, agg, cfg, lattice = random_instance(0)
        text = export_mps(agg, cfg, lattice, "aggregated")
        for line in text.splitlines():
            if line.startswith((" ", "    ")) and "'MARKER'" not in line:
                for token in line.split():
                    assert len(token) <= 12
        doc = parse_mps(text)
        for name in doc["col_order"] + doc["row_order"]:
            assert len(name) <= 8

    def test_integer_markers_cover_coefficients(self):
        ds, agg, cfg, lattice = random_instance(1)
        doc = parse_mps(export_mps(agg, cfg, lattice, "aggregated"))
        lams = [c for c in doc["col_order"] if c.startswith("LAM")]
        assert len(lams) == ds.p + 1
        for c in lams:
            assert c in doc["integer"]
            lo, up = doc["bounds"][c]
            assert lo == -up and up >= 1


class TestRoundTrip:
    @pytest.mark.parametrize("seed", [0, 3, 5, 8])
    def test_aggregated_matches_solver(self, seed):
        ds, agg, cfg, lattice = random_instance(seed)
        report, _ = solve(agg, cfg, lattice, SolveConfig(time_limit=30, pool_size=10))
        text = export_mps(agg, cfg, lattice, "aggregated")
        obj, values, status = solve_mps(text)
        assert status == 0
        assert math.isclose(obj, float(report.best_objective),
                            rel_tol=1e-6, abs_tol=1e-7)
        # reconstruct the external solver's model and re-derive its exact
        # objective: it must equal the proven optimum
        lam0 = round(values["LAM00000"])
        coefs = [round(values[f"LAM{j + 1:05d}"]) for j in range(ds.p)]
        model = ScoringSystem.from_dense(lam0, coefs, ds.feature_names)
        assert objective(model, agg, cfg).total == report.best_objective

    def test_general_variant_solves(self):
        ds = a1a2_dataset()
        agg = aggregate(ds)
        lattice = LatticeSpec(2, 2)
        cfg = PenaltyConfig.auto(1, ds.n, ds.p, lattice)
        obj, values, status = solve_mps(export_mps(agg, cfg, lattice, "general"))
        assert status == 0
        # symmetric margin forces negatives to score <= -1: zero loss needs
        # doubled coefficients relative to the asymmetric optimum
        assert round(values["LAM00001"]) == -2
        assert round(values["LAM00002"]) == -2
        assert obj < float(cfg.w_plus / ds.n)  # still a zero-error solution

    def test_polish_variant_matches_restricted_optimum(self):
        ds, agg, cfg, lattice = random_instance(6)
        from intscore.polish import polish
        from intscore.model import trivial_model

        m = ScoringSystem.from_dense(1, [1] * ds.p, ds.feature_names)
        if m.l0 > cfg.max_terms:
            m = ScoringSystem.from_dense(1, [1, 1] + [0] * (ds.p - 2), ds.feature_names)
        polished, value = polish(m, agg, cfg, lattice)
        text = export_mps(agg, cfg, lattice, "polish", ActiveSet.of(m))
        obj, values, status = solve_mps(text)
        assert status == 0
        assert math.isclose(obj, float(value.weighted_error), rel_tol=1e-6, abs_tol=1e-7)
