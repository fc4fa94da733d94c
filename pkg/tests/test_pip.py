import numpy as np
import pytest

from heavisolve.encode import build_full_mip, build_restricted_mip, \
    incumbent_hint
from heavisolve.hscop import (Atom, ConstraintRow, HscopObjective,
                              HscopProblem, LinearHeavisideTerm, Point,
                              evaluate, index_sets)
from heavisolve.milp import OPTIMAL, solve_enumeration, solve_milp
from heavisolve.progressive import (PipConfig, PipState, choose_epsilons,
                                    initial_point, pip_step, run_pip)
from heavisolve.pwa import AffineFn, Box, MinAffine

from _oracles import random_hscop


def aff(w, b):
    return AffineFn(np.atleast_1d(np.asarray(w, dtype=float)), b)


def toy_problem():
    atoms = [Atom(0, MinAffine((aff([1.0], 0.0),))),
             Atom(1, MinAffine((aff([1.0], -2.0),)))]
    obj = HscopObjective(linear=np.zeros(1),
                         heaviside=(LinearHeavisideTerm(0, 1.0),
                                    LinearHeavisideTerm(1, 1.0)))
    return HscopProblem(n=1, box=Box([-1.0], [3.0]), atoms=atoms,
                        objective=obj)


def offsets_problem(offsets):
    atoms = [Atom(i, MinAffine((aff([1.0], c),))) for i, c in enumerate(offsets)]
    obj = HscopObjective(linear=np.zeros(1),
                         heaviside=tuple(LinearHeavisideTerm(i, 1.0)
                                         for i in range(len(offsets))))
    return HscopProblem(n=1, box=Box([-1.0], [1.0]), atoms=atoms, objective=obj)


class TestInitialPoint:
    def test_residual_covers_deficit(self):
        row = ConstraintRow(linear=(LinearHeavisideTerm(0, 1.0),), rhs=4.0,
                            residual_allowed=True)
        prob = HscopProblem(
            n=1, box=Box([-1.0], [1.0]),
            atoms=[Atom(0, MinAffine((aff([1.0], -2.0),)))],
            objective=HscopObjective(linear=np.zeros(1), residual_penalty=10.0,
                                     heaviside=(LinearHeavisideTerm(0, 1.0),)),
            rows=[row])
        p0 = initial_point(prob)
        assert p0.gamma == pytest.approx(4.0)  # atom inactive at the origin
        assert evaluate(prob, p0).feasible

    def test_no_rows_gives_origin_projection(self):
        prob = HscopProblem(n=2, box=Box([0.5, -1.0], [2.0, 1.0]), atoms=[],
                            objective=HscopObjective(linear=np.zeros(2)))
        p0 = initial_point(prob)
        np.testing.assert_allclose(p0.x, [0.5, 0.0])
        assert p0.gamma == 0.0

    def test_supplied_point_returned_unchanged(self):
        prob = toy_problem()
        start = Point(np.array([2.5]))
        assert initial_point(prob, start) is start

    def test_infeasible_supplied_point_rejected(self):
        prob = toy_problem()
        row = ConstraintRow(linear=(LinearHeavisideTerm(1, 1.0),), rhs=1.0)
        hard = HscopProblem(n=1, box=prob.box, atoms=prob.atoms,
                            objective=prob.objective, rows=[row])
        with pytest.raises(ValueError):
            initial_point(hard, Point(np.array([0.0])))

    def test_unrelaxable_deficit_demands_caller_start(self):
        row = ConstraintRow(linear=(LinearHeavisideTerm(1, 1.0),), rhs=1.0)
        prob = toy_problem()
        hard = HscopProblem(n=1, box=prob.box, atoms=prob.atoms,
                            objective=prob.objective, rows=[row])
        with pytest.raises(ValueError):
            initial_point(hard)


class TestChooseEpsilons:
    def test_within_cap_unchanged(self):
        prob = offsets_problem([-0.3, -0.1, 0.05, 0.2])
        eps = choose_epsilons(prob, np.array([0.0]), (0.25, 0.35), cap=4)
        assert eps == (0.25, 0.35)

    def test_shrinks_to_order_statistic(self):
        prob = offsets_problem([-0.3, -0.1, 0.05, 0.2])
        e1, e2 = choose_epsilons(prob, np.array([0.0]), (0.25, 0.35), cap=2)
        sets = index_sets(prob, np.array([0.0]), e1, e2)
        assert sets.inb == {1, 2}

    def test_cap_zero_keeps_exact_zeros(self):
        prob = offsets_problem([-0.3, 0.0, 0.2])
        e1, e2 = choose_epsilons(prob, np.array([0.0]), (0.5, 0.5), cap=0)
        assert (e1, e2) == (0.0, 0.0)
        sets = index_sets(prob, np.array([0.0]), e1, e2)
        assert sets.inb == {1}  # the zero atom cannot be excluded


class TestPipStep:
    def test_stale_step_expands(self):
        prob = toy_problem()
        state = PipState(nu=0, point=Point(np.array([-1.0])), mu=0.0,
                         eps1=0.5, eps2=0.5, stale_count=0)
        config = PipConfig()
        nxt = pip_step(prob, state, config)
        rec = nxt.history[-1]
        assert not rec.improved
        assert rec.n_inb == 0
        assert (nxt.eps1, nxt.eps2) == (1.0, 1.0)
        assert nxt.stale_count == 1
        assert nxt.mu == 0.0

    def test_improving_step_shrinks_and_resets(self):
        prob = toy_problem()
        state = PipState(nu=0, point=Point(np.array([-1.0])), mu=0.0,
                         eps1=1.0, eps2=1.0, stale_count=3)
        nxt = pip_step(prob, state, PipConfig())
        rec = nxt.history[-1]
        assert rec.improved
        assert nxt.mu > 0.0
        assert nxt.stale_count == 0
        assert (nxt.eps1, nxt.eps2) == (0.5, 0.5)

    def test_iterates_stay_feasible(self, rng):
        runs = 0
        for _ in range(20):
            prob = random_hscop(rng, n_max=3, k_max=5)
            if not prob.rows or not all(r.residual_allowed for r in prob.rows):
                continue
            runs += 1
            state = PipState(nu=0, point=initial_point(prob),
                             mu=evaluate(prob, initial_point(prob)).objective,
                             eps1=0.25, eps2=0.25, stale_count=0)
            config = PipConfig(eps1=0.25, eps2=0.25)
            for _ in range(6):
                state = pip_step(prob, state, config)
                assert evaluate(prob, state.point).feasible
        assert runs >= 5


class TestRunPip:
    def test_toy_trace_reaches_global(self):
        prob = toy_problem()
        result = run_pip(prob, start=Point(np.array([-1.0])))
        assert result.objective == pytest.approx(2.0)
        assert result.certificate
        assert result.iterations <= 12
        mus = [r.mu_after for r in result.history]
        assert mus == sorted(mus)

    def test_no_atoms_terminates_quickly(self):
        prob = HscopProblem(n=1, box=Box([-1.0], [2.0]), atoms=[],
                            objective=HscopObjective(linear=np.ones(1)))
        result = run_pip(prob)
        assert result.iterations <= 2
        assert result.point.x[0] == pytest.approx(2.0)
        assert result.objective == pytest.approx(2.0)

    def test_monotone_feasible_and_sandwiched(self, rng):
        runs = 0
        for _ in range(20):
            prob = random_hscop(rng, n_max=3, k_max=5)
            if not prob.rows or not all(r.residual_allowed for r in prob.rows):
                continue
            runs += 1
            result = run_pip(prob, PipConfig(max_iterations=40))
            mus = [r.mu_after for r in result.history]
            assert mus == sorted(mus)
            assert evaluate(prob, result.point).feasible
            full, _ = build_full_mip(prob)
            best = solve_enumeration(full)
            assert result.objective <= best.objective + 1e-6 * (
                1 + abs(best.objective))
        assert runs >= 5

    def test_certificate_means_no_restricted_improvement(self, rng):
        certified = 0
        for _ in range(12):
            prob = random_hscop(rng, n_max=2, k_max=4)
            if not all(r.residual_allowed for r in prob.rows):
                continue
            result = run_pip(prob, PipConfig(max_iterations=40))
            if not result.certificate:
                continue
            certified += 1
            rec = result.history[-1]
            sets = index_sets(prob, result.point.x, *rec.eps_effective)
            model, emap = build_restricted_mip(prob, result.point, sets)
            model.incumbent = incumbent_hint(prob, model, emap, result.point)
            resolve = solve_milp(model)
            assert resolve.status == OPTIMAL
            assert resolve.objective <= result.objective + 1e-6
        assert certified >= 3

    def test_deterministic(self, rng):
        prob = random_hscop(rng, n_max=3, k_max=5)
        if not all(r.residual_allowed for r in prob.rows):
            prob.rows = []
        a = run_pip(prob, PipConfig(max_iterations=30))
        b = run_pip(prob, PipConfig(max_iterations=30))
        assert [r.mu_after for r in a.history] == [r.mu_after for r in b.history]
        np.testing.assert_array_equal(a.point.x, b.point.x)

    def test_total_binaries_accounting(self):
        prob = toy_problem()
        result = run_pip(prob, start=Point(np.array([-1.0])))
        assert result.total_binaries == sum(r.n_binaries for r in result.history)

    def test_history_records_are_jsonable(self):
        import json
        prob = toy_problem()
        result = run_pip(prob, start=Point(np.array([-1.0])))
        text = json.dumps([r.to_json_dict() for r in result.history])
        assert "eps_effective" in text

    def test_solver_failure_returns_best_so_far(self, monkeypatch):
        from heavisolve import progressive
        from heavisolve.milp import MilpNumericalError

        calls = {"n": 0}
        real = progressive.solve_milp

        def flaky(model, tolerances=None):
            calls["n"] += 1
            if calls["n"] >= 3:
                raise MilpNumericalError("injected failure")
            return real(model, tolerances)

        monkeypatch.setattr(progressive, "solve_milp", flaky)
        prob = toy_problem()
        result = run_pip(prob, start=Point(np.array([-1.0])))
        assert result.aborted
        assert not result.certificate
        assert result.iterations == 2
        assert evaluate(prob, result.point).feasible

    def test_total_time_budget_stops_run(self):
        prob = toy_problem()
        config = PipConfig(total_time_limit=0.0)
        result = run_pip(prob, config, start=Point(np.array([-1.0])))
        assert result.iterations == 0
        assert not result.certificate
        assert result.objective == pytest.approx(0.0)
