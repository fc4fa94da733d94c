import numpy as np
import pytest

from heavisolve.classify import (LabeledDataset, NpSpec, TreeShape,
                                 build_np_classification,
                                 build_standard_classification,
                                 build_tree_hscop, enumerate_label_tuples,
                                 read_labeled_csv, sweep_label_tuples,
                                 tree_predict, write_labeled_csv)
from heavisolve.encode import build_full_mip, extract_solution
from heavisolve.hscop import Point, evaluate
from heavisolve.milp import solve_enumeration, solve_milp
from heavisolve.pwa import DcPwa, heaviside_closed, heaviside_open


def separable_toy():
    """Six 1-D points with an intercept column, separable at x = 0.5."""
    x = np.array([0.1, 0.2, 0.3, 0.7, 0.8, 0.9])
    feats = np.column_stack([x, np.ones(6)])
    return LabeledDataset(feats, np.array([0, 0, 0, 1, 1, 1]), 2)


def enum_optimum(problem, max_binaries=20):
    model, emap = build_full_mip(problem)
    sol = solve_enumeration(model, max_binaries=max_binaries)
    point, _ = extract_solution(sol, emap, problem)
    return sol.objective, point


class TestStandard:
    def test_one_atom_per_sample(self):
        data = separable_toy()
        problem, info = build_standard_classification(data)
        assert problem.n_atoms == data.n_samples
        assert info == list(range(6))

    def test_separable_toy_reaches_two(self):
        problem, _ = build_standard_classification(separable_toy(), tau=0.01)
        value, _ = enum_optimum(problem)
        assert value == pytest.approx(2.0, abs=1e-8)

    def test_beta_zero_objective(self):
        problem, _ = build_standard_classification(separable_toy(), tau=0.01)
        ev = evaluate(problem, Point(np.zeros(problem.n)))
        assert ev.objective == pytest.approx(0.0)

    def test_empty_class_rejected(self):
        data = LabeledDataset(np.ones((2, 1)), np.array([0, 0]), 2)
        with pytest.raises(ValueError):
            build_standard_classification(data)

    def test_objective_equals_saa_rates(self, rng):
        data = separable_toy()
        tau = 0.05
        lam = 0.02
        problem, _ = build_standard_classification(data, tau=tau, lam=lam)
        for _ in range(50):
            beta = rng.uniform(-1, 1, (2, 2))
            stacked = beta.reshape(-1)
            ev = evaluate(problem, Point(stacked))
            direct = 0.0
            for i in range(2):
                idx = data.class_indices(i)
                scores = data.features @ beta.T
                hits = 0
                for s in idx:
                    rival = max(scores[s, m] for m in range(2) if m != i)
                    hits += heaviside_closed(scores[s, i] - rival - tau)
                direct += hits / idx.size
            direct -= lam * float(np.abs(beta).sum())
            assert ev.objective == pytest.approx(direct, abs=1e-12)


class TestNeymanPearson:
    def _uniform_spec(self, e1, gamma, tau, lam=0.0):
        all_pairs = {(0, 1), (1, 0)}
        return NpSpec(n_classes=2, e1=e1,
                      e2=tuple(sorted(all_pairs - set(e1))),
                      weights={p: 1.0 for p in all_pairs},
                      gamma=gamma, tau=np.array([tau, tau]), lam=lam)

    def test_atoms_route_through_dc(self):
        data = separable_toy()
        spec = self._uniform_spec((), gamma=0.1, tau=0.01)
        problem, _ = build_np_classification(data, spec)
        assert all(isinstance(a.phi, DcPwa) for a in problem.atoms)
        assert not problem.rows

    def test_e1_empty_reduces_to_standard(self):
        data = separable_toy()
        tau = 0.01
        standard, _ = build_standard_classification(data, tau=tau)
        np_prob, _ = build_np_classification(
            data, self._uniform_spec((), gamma=0.1, tau=tau))
        v_std, _ = enum_optimum(standard)
        v_np, _ = enum_optimum(np_prob)
        assert v_np == pytest.approx(v_std, abs=1e-8)

    def test_vacuous_cap_matches_unconstrained(self):
        data = separable_toy()
        tau = 0.01
        capped = self._uniform_spec(((0, 1),), gamma=5.0, tau=tau)
        assert capped.e2 == ((1, 0),)
        prob_capped, _ = build_np_classification(data, capped)
        assert prob_capped.rows[0].rhs <= 0  # vacuous, permitted but logged
        v_capped, _ = enum_optimum(prob_capped)
        free = NpSpec(n_classes=2, e1=(), e2=((0, 1), (1, 0)),
                      weights={(0, 1): 0.0, (1, 0): 1.0}, gamma=5.0,
                      tau=np.array([tau, tau]))
        v_free, _ = enum_optimum(build_np_classification(data, free)[0])
        assert v_capped == pytest.approx(v_free, abs=1e-8)

    def test_tight_cap_binds(self):
        data = separable_toy()
        tau = 0.01
        # Cap the (0 -> predicted 1) errors hard: gamma small.
        spec = self._uniform_spec(((0, 1),), gamma=0.2, tau=tau)
        problem, _ = build_np_classification(data, spec)
        row = problem.rows[0]
        assert row.rhs == pytest.approx(1.0 - 0.2)
        value, point = enum_optimum(problem)
        ev = evaluate(problem, point)
        assert ev.feasible
        assert ev.row_values[0] >= row.rhs - 1e-9

    def test_complement_identity_pointwise(self, rng):
        data = separable_toy()
        tau = 0.01
        spec = self._uniform_spec((), gamma=0.1, tau=tau)
        problem, info = build_np_classification(data, spec)
        for _ in range(50):
            beta = rng.uniform(-1, 1, (2, 2))
            stacked = beta.reshape(-1)
            phi = problem.atom_values(stacked)
            for atom_id, (s, i, j) in enumerate(info):
                scores = data.features[s] @ beta.T
                h_j = scores[j] - max(scores[m] for m in range(2) if m != j)
                closed_neg = heaviside_closed(phi[atom_id])
                assert closed_neg == 1 - heaviside_open(h_j + tau)

    def test_pair_cover_validated(self):
        with pytest.raises(ValueError):
            NpSpec(n_classes=2, e1=((0, 1),), e2=(), weights={}, gamma=0.1)
        with pytest.raises(ValueError):
            NpSpec(n_classes=2, e1=((0, 1),), e2=((0, 1), (1, 0)),
                   weights={}, gamma=0.1)


class TestTree:
    def test_complete_shape_depth_one(self):
        shape = TreeShape.complete(1)
        assert shape.n_branch == 1
        assert shape.n_leaves == 2
        assert shape.left_ancestors == ((0,), ())
        assert shape.right_ancestors == ((), (0,))

    def test_depth_zero_rejected(self):
        with pytest.raises(ValueError):
            TreeShape.complete(0)

    def test_atom_counts_per_tuple(self):
        # One atom per (leaf, sample-with-matching-label) pair.
        data = LabeledDataset(
            np.array([[0.1, 1.0], [0.2, 1.0], [0.3, 1.0], [0.8, 1.0]]),
            np.array([0, 0, 0, 1]), 2)
        shape = TreeShape.complete(1)
        for labels, expected in (((0, 1), 4), ((0, 0), 6), ((1, 1), 2)):
            problem, _ = build_tree_hscop(data, shape, labels)
            assert problem.n_atoms == expected

    def test_single_sample_piece_count_matches_depth(self):
        data = LabeledDataset(np.array([[0.3, 1.0]]), np.array([0]), 1)
        shape = TreeShape.complete(2)
        problem, _ = build_tree_hscop(data, shape, (0, 0, 0, 0))
        for atom in problem.atoms:
            assert len(atom.phi.pieces) == 2

    def test_separable_sweep_classifies_all(self):
        data = separable_toy()
        shape = TreeShape.complete(1)

        def solve_fn(problem):
            model, emap = build_full_mip(problem)
            sol = solve_milp(model)
            point, _ = extract_solution(sol, emap, problem)
            return evaluate(problem, point).objective, point

        sweep = sweep_label_tuples(data, shape, solve_fn)
        assert sweep.best_objective == pytest.approx(6.0, abs=1e-8)
        predicted = tree_predict(shape, sweep.best_labels,
                                 sweep.best_point.x, data.features)
        assert np.array_equal(predicted, data.labels)
        assert len(sweep.per_tuple) == 4
        assert sweep.best_objective >= max(v for _, v in sweep.per_tuple) - 1e-12

    def test_label_swap_symmetry(self):
        data = separable_toy()
        shape = TreeShape.complete(1)

        def solve_fn(problem):
            model, emap = build_full_mip(problem)
            sol = solve_milp(model)
            point, _ = extract_solution(sol, emap, problem)
            return evaluate(problem, point).objective, point

        sweep = dict((l, v) for l, v in
                     sweep_label_tuples(data, shape, solve_fn).per_tuple)
        assert sweep[(0, 1)] == pytest.approx(sweep[(1, 0)], abs=1e-8)
        assert sweep[(0, 0)] == pytest.approx(sweep[(1, 1)], abs=1e-8)

    def test_min_composition_equals_indicator_product(self, rng):
        data = separable_toy()
        shape = TreeShape.complete(2)
        problem, info = build_tree_hscop(data, shape, (0, 1, 0, 1))
        p = data.n_features
        stride = p + 1
        for _ in range(30):
            x = rng.uniform(-1, 1, problem.n)
            phi = problem.atom_values(x)
            a = x.reshape(shape.n_branch, stride)[:, :p]
            b = x.reshape(shape.n_branch, stride)[:, p]
            for atom_id, (s, t) in enumerate(info):
                margins = data.features[s] @ a.T - b
                prod = 1
                for k in shape.right_ancestors[t]:
                    prod *= heaviside_closed(margins[k])
                for k in shape.left_ancestors[t]:
                    prod *= heaviside_closed(-margins[k] - shape.branch_eps)
                assert heaviside_closed(phi[atom_id]) == prod

    def test_tuple_enumeration_budget(self):
        shape = TreeShape.complete(2)
        assert len(list(enumerate_label_tuples(shape, 2, budget=16))) == 16
        with pytest.raises(ValueError):
            list(enumerate_label_tuples(shape, 3, budget=16))


class TestCsv:
    def test_round_trip(self, tmp_path, rng):
        data = LabeledDataset(rng.uniform(0, 1, (8, 3)),
                              rng.integers(0, 3, 8), 3)
        path = tmp_path / "labeled.csv"
        write_labeled_csv(data, path)
        back = read_labeled_csv(path)
        np.testing.assert_allclose(back.features, data.features, rtol=0)
        np.testing.assert_array_equal(back.labels, data.labels)
