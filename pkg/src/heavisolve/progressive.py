"""Progressive integer programming driver.

Starting from a feasible point, each step solves a restricted mixed-binary
encoding whose binaries cover only the atoms with values inside an epsilon
band around the current iterate.  The band shrinks after an improving step
and expands after a stale one; a run terminates after a configured number of
consecutive stale expansions (or immediately once a stale optimal solve has
covered every atom, at which point the value is globally optimal).  Iterates
are re-evaluated against the original problem, so the objective sequence is
non-decreasing and every iterate certified feasible by construction.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .encode import build_restricted_mip, extract_solution, incumbent_hint
from .hscop import HscopProblem, Point, evaluate, index_sets
from .milp import (FEASIBLE_TIME_LIMIT, OPTIMAL, MilpNumericalError,
                   Tolerances, solve_milp)

log = logging.getLogger(__name__)

__all__ = [
    "PipConfig",
    "PipState",
    "PipResult",
    "IterationRecord",
    "initial_point",
    "choose_epsilons",
    "pip_step",
    "run_pip",
]


@dataclass(frozen=True)
class PipConfig:
    """Knobs of the progressive run.

    ``cap_fraction`` limits the number of in-band binaries per subproblem to
    that fraction of the atom count (1.0 means no cap); the band is shrunk by
    order statistics when the cap binds.
    """

    eps1: float = 0.5
    eps2: float = 0.5
    expand_factor: float = 2.0
    cap_fraction: float = 1.0
    improvement_tol: float = 1e-6
    max_stale_expansions: int = 10
    subproblem_time_limit: float | None = 300.0
    max_iterations: int = 200
    total_time_limit: float | None = None

    def __post_init__(self):
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError("initial epsilons must be positive")
        if self.expand_factor <= 1:
            raise ValueError("expand_factor must exceed 1")
        if not 0 < self.cap_fraction <= 1:
            raise ValueError("cap_fraction must lie in (0, 1]")
        if self.max_stale_expansions < 1 or self.max_iterations < 1:
            raise ValueError("iteration limits must be positive")


@dataclass(frozen=True)
class IterationRecord:
    nu: int
    eps_requested: tuple
    eps_effective: tuple
    n_lt: int
    n_inb: int
    n_gt: int
    n_binaries: int
    n_binaries_total: int
    cap: int
    cap_violated: bool
    mu_before: float
    candidate_objective: float | None
    candidate_feasible: bool
    mu_after: float
    status: str
    improved: bool
    full_coverage: bool
    wall_time: float

    def to_json_dict(self) -> dict:
        def plain(v):
            if isinstance(v, tuple):
                return [plain(u) for u in v]
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, np.bool_):
                return bool(v)
            return v
        return {k: plain(v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class PipState:
    nu: int
    point: Point
    mu: float
    eps1: float
    eps2: float
    stale_count: int
    tainted: bool = False
    history: tuple = ()


@dataclass(frozen=True)
class PipResult:
    point: Point
    objective: float
    certificate: bool
    global_optimal: bool
    iterations: int
    total_binaries: int
    history: tuple
    aborted: bool = False


def initial_point(problem: HscopProblem, start: Point | None = None) -> Point:
    """A feasible starting point.

    A caller-supplied feasible point is returned unchanged.  Otherwise the
    origin is projected into the box and the residual is set to the smallest
    value closing every relaxable row; rows without a residual must already
    hold there, or the caller has to supply a start.
    """
    if start is not None:
        if not evaluate(problem, start).feasible:
            raise ValueError("supplied starting point is infeasible")
        return start
    x0 = np.clip(np.zeros(problem.n), problem.box.lower, problem.box.upper)
    probe = evaluate(problem, Point(x0, 0.0))
    gamma = 0.0
    for row, value in zip(problem.rows, probe.row_values):
        deficit = row.rhs - value
        if deficit > 0:
            if not row.residual_allowed:
                raise ValueError(
                    "no residual on a violated row; supply a feasible start")
            gamma = max(gamma, deficit)
    for row in problem.extra_rows:
        if not row.holds(x0, 1e-9):
            raise ValueError(
                "default start violates a polyhedral row; supply a feasible start")
    point = Point(x0, gamma)
    if not evaluate(problem, point).feasible:
        raise ValueError("could not construct a feasible start; supply one")
    return point


def choose_epsilons(problem: HscopProblem, x: np.ndarray,
                    eps: tuple[float, float], cap: int) -> tuple[float, float]:
    """Shrink the band symmetrically until at most ``cap`` atoms sit inside.

    The shrunk threshold is the cap-th smallest |phi| among in-band atoms, so
    ties on the threshold (in particular exact zeros, which no nonnegative
    band can exclude) may leave the cap exceeded; callers log that case.
    """
    if cap < 0:
        raise ValueError("cap must be nonnegative")
    eps1, eps2 = float(eps[0]), float(eps[1])
    phi = problem.atom_values(x)
    inside = (phi >= -eps2) & (phi <= eps1)
    if int(inside.sum()) <= cap:
        return eps1, eps2
    magnitudes = np.sort(np.abs(phi[inside]))
    threshold = float(magnitudes[cap - 1]) if cap > 0 else 0.0
    return min(eps1, threshold), min(eps2, threshold)


def pip_step(problem: HscopProblem, state: PipState, config: PipConfig,
             tolerances: Tolerances | None = None) -> PipState:
    """One restricted solve plus the band update, returning the next state."""
    t0 = time.perf_counter()
    k = problem.n_atoms
    cap = int(math.floor(config.cap_fraction * k + 1e-9))
    eps_req = (state.eps1, state.eps2)
    eps_eff = choose_epsilons(problem, state.point.x, eps_req, cap)
    sets = index_sets(problem, state.point.x, *eps_eff)
    cap_violated = len(sets.inb) > cap
    if cap_violated:
        log.warning("binary cap %d exceeded: %d unshrinkable in-band atoms",
                    cap, len(sets.inb))

    model, emap = build_restricted_mip(problem, state.point, sets)
    model.time_limit = config.subproblem_time_limit
    model.incumbent = incumbent_hint(problem, model, emap, state.point)
    sol = solve_milp(model, tolerances)
    if sol.status not in (OPTIMAL, FEASIBLE_TIME_LIMIT):
        # A feasible incumbent hint rules out both infeasibility and
        # no-incumbent exits; anything else is numerical trouble.
        raise MilpNumericalError(f"restricted solve returned {sol.status!r}")

    candidate, _ = extract_solution(sol, emap, problem)
    cand_ev = evaluate(problem, candidate)
    cand_obj = cand_ev.objective if cand_ev.feasible else None
    improved = cand_ev.feasible and cand_ev.objective > state.mu + config.improvement_tol

    if improved:
        new_point, new_mu = candidate, cand_ev.objective
        new_eps = (eps_eff[0] / config.expand_factor,
                   eps_eff[1] / config.expand_factor)
        stale = 0
    else:
        new_point, new_mu = state.point, state.mu
        new_eps = (eps_eff[0] * config.expand_factor,
                   eps_eff[1] * config.expand_factor)
        stale = state.stale_count + 1

    record = IterationRecord(
        nu=state.nu,
        eps_requested=eps_req,
        eps_effective=eps_eff,
        n_lt=len(sets.lt), n_inb=len(sets.inb), n_gt=len(sets.gt),
        n_binaries=emap.n_free_binaries,
        n_binaries_total=model.n_binaries,
        cap=cap, cap_violated=cap_violated,
        mu_before=state.mu,
        candidate_objective=cand_obj,
        candidate_feasible=cand_ev.feasible,
        mu_after=new_mu,
        status=sol.status,
        improved=improved,
        full_coverage=len(sets.inb) == k,
        wall_time=time.perf_counter() - t0,
    )
    return PipState(
        nu=state.nu + 1,
        point=new_point,
        mu=new_mu,
        eps1=new_eps[0],
        eps2=new_eps[1],
        stale_count=stale,
        tainted=state.tainted or (improved and sol.status == FEASIBLE_TIME_LIMIT),
        history=state.history + (record,),
    )


def run_pip(problem: HscopProblem, config: PipConfig | None = None,
            start: Point | None = None,
            tolerances: Tolerances | None = None) -> PipResult:
    """Run the progressive method to termination.

    Terminates after ``max_stale_expansions`` consecutive stale steps, after
    a stale optimal solve whose band covered every atom (which certifies the
    global optimum of the problem), or at the iteration/time budget.  The
    local-optimality certificate is set only when the terminal solve was
    optimal, stale, and no accepted step relied on a time-limited solve.
    """
    config = config or PipConfig()
    point = initial_point(problem, start)
    mu0 = evaluate(problem, point).objective
    state = PipState(nu=0, point=point, mu=mu0, eps1=config.eps1,
                     eps2=config.eps2, stale_count=0)
    t0 = time.perf_counter()
    certificate = False
    global_opt = False
    aborted = False
    while state.nu < config.max_iterations:
        if (config.total_time_limit is not None
                and time.perf_counter() - t0 >= config.total_time_limit):
            break
        try:
            state = pip_step(problem, state, config, tolerances)
        except MilpNumericalError as exc:
            log.error("progressive run aborted: %s", exc)
            aborted = True
            break
        rec = state.history[-1]
        if not rec.improved and rec.full_coverage and rec.status == OPTIMAL:
            certificate = not state.tainted
            global_opt = True
            break
        if state.stale_count >= config.max_stale_expansions:
            certificate = (not state.tainted) and rec.status == OPTIMAL
            break
    total_binaries = sum(r.n_binaries for r in state.history)
    return PipResult(
        point=state.point,
        objective=state.mu,
        certificate=certificate,
        global_optimal=global_opt,
        iterations=len(state.history),
        total_binaries=total_binaries,
        history=state.history,
        aborted=aborted,
    )
