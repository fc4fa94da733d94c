"""Mixed-binary linear programming engine.

``MilpModel`` is an explicit maximize-form model with finitely bounded
continuous variables, binary variables and sparse linear rows.  Solves are
delegated to the HiGHS solvers behind ``scipy.optimize`` (dual simplex for
LP relaxations, branch-and-cut for mixed-binary models); ``solve_enumeration``
is a self-contained exhaustive oracle used to verify them.

Contract notes:
- objective sense is always maximize; ``obj_offset`` is added to reported
  objective values,
- a feasible incumbent hint is never lost: if the backend terminates with a
  worse (or no) solution, the hint is returned instead,
- numerical trouble raises ``MilpNumericalError`` and is never reported as
  infeasibility,
- a single solve is deterministic given fixed tolerances.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as sopt
import scipy.sparse as sp

log = logging.getLogger(__name__)

__all__ = [
    "OPTIMAL",
    "FEASIBLE_TIME_LIMIT",
    "INFEASIBLE",
    "UNBOUNDED",
    "NO_INCUMBENT",
    "Tolerances",
    "MilpNumericalError",
    "Constraint",
    "MilpModel",
    "MilpSolution",
    "solve_lp",
    "solve_milp",
    "solve_enumeration",
    "check_assignment",
]

OPTIMAL = "optimal"
FEASIBLE_TIME_LIMIT = "feasible_time_limit"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NO_INCUMBENT = "no_incumbent"

_SENSES = ("<=", ">=", "=")


class MilpNumericalError(RuntimeError):
    """The backend failed numerically or returned an inconsistent answer."""


@dataclass(frozen=True)
class Tolerances:
    integrality: float = 1e-6
    feasibility: float = 1e-7
    rel_gap: float = 1e-6
    abs_gap: float = 1e-8


@dataclass(frozen=True)
class Constraint:
    var_ids: np.ndarray
    coefs: np.ndarray
    sense: str
    rhs: float
    name: str = ""


@dataclass
class MilpModel:
    """Mixed-binary linear program, maximize form, built incrementally."""

    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    obj: list = field(default_factory=list)
    binary: list = field(default_factory=list)
    names: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    obj_offset: float = 0.0
    incumbent: np.ndarray | None = None
    time_limit: float | None = None
    node_limit: int | None = None

    def add_continuous(self, lb: float, ub: float, obj: float = 0.0,
                       name: str = "") -> int:
        lb, ub, obj = float(lb), float(ub), float(obj)
        if not (np.isfinite(lb) and np.isfinite(ub)):
            raise ValueError("continuous variables require finite bounds")
        if lb > ub:
            raise ValueError(f"empty variable range [{lb}, {ub}]")
        if not np.isfinite(obj):
            raise ValueError("objective coefficient must be finite")
        self.lb.append(lb)
        self.ub.append(ub)
        self.obj.append(obj)
        self.binary.append(False)
        self.names.append(name or f"x{len(self.lb) - 1}")
        return len(self.lb) - 1

    def add_binary(self, obj: float = 0.0, name: str = "") -> int:
        obj = float(obj)
        if not np.isfinite(obj):
            raise ValueError("objective coefficient must be finite")
        self.lb.append(0.0)
        self.ub.append(1.0)
        self.obj.append(obj)
        self.binary.append(True)
        self.names.append(name or f"z{len(self.lb) - 1}")
        return len(self.lb) - 1

    def add_constraint(self, coeffs: dict[int, float], sense: str, rhs: float,
                       name: str = "") -> int:
        if sense not in _SENSES:
            raise ValueError(f"sense must be one of {_SENSES}")
        rhs = float(rhs)
        if not np.isfinite(rhs):
            raise ValueError("rhs must be finite")
        ids = np.fromiter(coeffs.keys(), dtype=np.int64, count=len(coeffs))
        vals = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_vars):
            raise ValueError("constraint references an unknown variable")
        if not np.all(np.isfinite(vals)):
            raise ValueError("constraint coefficients must be finite")
        self.constraints.append(Constraint(ids, vals, sense, rhs, name))
        return len(self.constraints) - 1

    @property
    def n_vars(self) -> int:
        return len(self.lb)

    @property
    def n_binaries(self) -> int:
        return sum(self.binary)

    def binary_ids(self) -> list[int]:
        return [i for i, b in enumerate(self.binary) if b]

    def to_lp_text(self) -> str:
        """Plain-text dump, CPLEX-LP flavored, for debugging only.

        Grammar: a Maximize section with one ``obj:`` expression, a Subject To
        section with one ``name: expr sense rhs`` line per row, a Bounds
        section with one ``lb <= name <= ub`` line per variable, a Binaries
        section listing binary variable names, then End.  Numeric formatting
        is not bit-stable across versions.
        """
        def term(c, name):
            return f"{'+' if c >= 0 else '-'} {abs(c):.12g} {name} "

        out = ["Maximize", " obj: " + "".join(
            term(c, n) for c, n in zip(self.obj, self.names) if c != 0.0)]
        if self.obj_offset:
            out[-1] += term(self.obj_offset, "")
        out.append("Subject To")
        sense_txt = {"<=": "<=", ">=": ">=", "=": "="}
        for i, con in enumerate(self.constraints):
            expr = "".join(term(c, self.names[j]) for j, c in zip(con.var_ids, con.coefs))
            out.append(f" {con.name or f'c{i}'}: {expr}{sense_txt[con.sense]} {con.rhs:.12g}")
        out.append("Bounds")
        for i in range(self.n_vars):
            if not self.binary[i]:
                out.append(f" {self.lb[i]:.12g} <= {self.names[i]} <= {self.ub[i]:.12g}")
        binaries = [self.names[i] for i in range(self.n_vars) if self.binary[i]]
        if binaries:
            out.append("Binaries")
            out.append(" " + " ".join(binaries))
        out.append("End")
        return "\n".join(out) + "\n"


@dataclass(frozen=True)
class MilpSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    dual_bound: float | None
    gap: float | None


def _assemble_rows(model: MilpModel):
    """Stack all rows into one sparse matrix with per-row lower/upper bounds."""
    m = len(model.constraints)
    n = model.n_vars
    if m == 0:
        return None, None, None
    rows, cols, vals = [], [], []
    lo = np.empty(m)
    hi = np.empty(m)
    for i, con in enumerate(model.constraints):
        rows.extend([i] * con.var_ids.size)
        cols.extend(con.var_ids.tolist())
        vals.extend(con.coefs.tolist())
        if con.sense == "<=":
            lo[i], hi[i] = -np.inf, con.rhs
        elif con.sense == ">=":
            lo[i], hi[i] = con.rhs, np.inf
        else:
            lo[i], hi[i] = con.rhs, con.rhs
    a = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    return a, lo, hi


def check_assignment(model: MilpModel, x: np.ndarray, tol: Tolerances | None = None
                     ) -> tuple[bool, float]:
    """Check bounds, rows and binary integrality; returns (ok, worst violation)."""
    tol = tol or Tolerances()
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_vars,):
        return False, np.inf
    lb = np.asarray(model.lb)
    ub = np.asarray(model.ub)
    worst = max(float(np.max(lb - x, initial=0.0)), float(np.max(x - ub, initial=0.0)))
    for i, is_bin in enumerate(model.binary):
        if is_bin:
            worst = max(worst, abs(x[i] - round(x[i])))
    a, lo, hi = _assemble_rows(model)
    if a is not None:
        ax = a @ x
        scale = np.maximum(1.0, np.abs(np.where(np.isfinite(lo), lo, 0.0))
                           + np.abs(np.where(np.isfinite(hi), hi, 0.0)))
        under = np.where(np.isfinite(lo), (lo - ax) / scale, 0.0)
        over = np.where(np.isfinite(hi), (ax - hi) / scale, 0.0)
        worst = max(worst, float(np.max(under, initial=0.0)),
                    float(np.max(over, initial=0.0)))
    return worst <= 10.0 * max(tol.feasibility, tol.integrality), worst


def _objective(model: MilpModel, x: np.ndarray) -> float:
    return float(np.asarray(model.obj) @ x + model.obj_offset)


def solve_lp(model: MilpModel, tolerances: Tolerances | None = None) -> MilpSolution:
    """Solve the LP relaxation (binaries relaxed to [0, 1])."""
    tolerances = tolerances or Tolerances()
    if model.n_vars == 0:
        raise ValueError("model has no variables")
    a, lo, hi = _assemble_rows(model)
    a_ub, b_ub, a_eq, b_eq = None, None, None, None
    if a is not None:
        ub_rows = np.isfinite(hi) & ~np.isfinite(lo)
        ge_rows = np.isfinite(lo) & ~np.isfinite(hi)
        eq_rows = np.isfinite(lo) & np.isfinite(hi)
        blocks, rhs = [], []
        if ub_rows.any():
            blocks.append(a[ub_rows])
            rhs.append(hi[ub_rows])
        if ge_rows.any():
            blocks.append(-a[ge_rows])
            rhs.append(-lo[ge_rows])
        if blocks:
            a_ub = sp.vstack(blocks, format="csr")
            b_ub = np.concatenate(rhs)
        if eq_rows.any():
            a_eq = a[eq_rows]
            b_eq = hi[eq_rows]
    options = {"presolve": True}
    if model.time_limit is not None:
        options["time_limit"] = float(model.time_limit)
    res = sopt.linprog(
        c=-np.asarray(model.obj),
        A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
        bounds=list(zip(model.lb, model.ub)),
        method="highs-ds",
        options=options,
    )
    if res.status == 2:
        return MilpSolution(INFEASIBLE, None, None, None, None)
    if res.status == 3:
        return MilpSolution(UNBOUNDED, None, None, None, None)
    if res.status != 0:
        raise MilpNumericalError(f"LP backend failure: {res.message}")
    x = np.asarray(res.x, dtype=float)
    obj = _objective(model, x)
    return MilpSolution(OPTIMAL, x, obj, obj, 0.0)


def _snap_binaries(model: MilpModel, x: np.ndarray, tolerances: Tolerances) -> np.ndarray:
    x = np.array(x, dtype=float)
    for i, is_bin in enumerate(model.binary):
        if is_bin:
            rounded = round(x[i])
            if abs(x[i] - rounded) > 10.0 * tolerances.integrality:
                raise MilpNumericalError(
                    f"binary variable {model.names[i]} returned {x[i]!r}")
            x[i] = rounded
    return x


def _merge_hint(model: MilpModel, sol: MilpSolution,
                tolerances: Tolerances) -> MilpSolution:
    """Guarantee the result is never worse than a feasible incumbent hint."""
    hint = model.incumbent
    if hint is None:
        return sol
    hint = np.asarray(hint, dtype=float)
    ok, viol = check_assignment(model, hint, tolerances)
    if not ok:
        log.warning("incumbent hint rejected (violation %.3g)", viol)
        return sol
    hint_obj = _objective(model, hint)
    if sol.status in (INFEASIBLE, UNBOUNDED):
        raise MilpNumericalError(
            f"backend reported {sol.status} but a feasible hint exists")
    if sol.status == NO_INCUMBENT:
        bound = sol.dual_bound
        if bound is not None and bound < hint_obj - tolerances.abs_gap:
            bound = hint_obj
        return MilpSolution(FEASIBLE_TIME_LIMIT, hint, hint_obj, bound, None)
    if sol.objective is not None and sol.objective < hint_obj - tolerances.abs_gap:
        bound = sol.dual_bound
        if bound is not None and bound < hint_obj:
            bound = hint_obj
        return MilpSolution(sol.status, hint, hint_obj, bound, None)
    return sol


def solve_milp(model: MilpModel, tolerances: Tolerances | None = None) -> MilpSolution:
    """Solve the mixed-binary model to the configured tolerances.

    Returns OPTIMAL, FEASIBLE_TIME_LIMIT (best incumbent at the wall-clock
    limit), INFEASIBLE, UNBOUNDED, or NO_INCUMBENT (limit hit before any
    feasible point); see module notes for the incumbent-hint guarantee.
    """
    tolerances = tolerances or Tolerances()
    if model.n_vars == 0:
        raise ValueError("model has no variables")
    a, lo, hi = _assemble_rows(model)
    constraints = []
    if a is not None:
        constraints.append(sopt.LinearConstraint(a, lo, hi))
    options = {"presolve": True, "mip_rel_gap": tolerances.rel_gap}
    if model.time_limit is not None:
        options["time_limit"] = float(model.time_limit)
    if model.node_limit is not None:
        options["node_limit"] = int(model.node_limit)
    res = sopt.milp(
        c=-np.asarray(model.obj),
        constraints=constraints,
        integrality=np.asarray(model.binary, dtype=np.uint8),
        bounds=sopt.Bounds(np.asarray(model.lb), np.asarray(model.ub)),
        options=options,
    )
    has_x = res.x is not None
    bound = None
    if getattr(res, "mip_dual_bound", None) is not None and np.isfinite(res.mip_dual_bound):
        bound = -float(res.mip_dual_bound) + model.obj_offset
    if res.status == 0:
        x = _snap_binaries(model, res.x, tolerances)
        ok, viol = check_assignment(model, x, tolerances)
        if not ok:
            raise MilpNumericalError(f"backend solution violates rows by {viol:.3g}")
        obj = _objective(model, x)
        if bound is None or bound < obj:
            bound = obj
        gap = float(res.mip_gap) if getattr(res, "mip_gap", None) is not None else 0.0
        sol = MilpSolution(OPTIMAL, x, obj, bound, gap)
    elif res.status == 1 and has_x:
        x = _snap_binaries(model, res.x, tolerances)
        ok, viol = check_assignment(model, x, tolerances)
        if not ok:
            raise MilpNumericalError(f"backend solution violates rows by {viol:.3g}")
        obj = _objective(model, x)
        if bound is None or bound < obj:
            bound = obj
        gap = float(res.mip_gap) if getattr(res, "mip_gap", None) is not None else None
        sol = MilpSolution(FEASIBLE_TIME_LIMIT, x, obj, bound, gap)
    elif res.status == 1:
        sol = MilpSolution(NO_INCUMBENT, None, None, bound, None)
    elif res.status == 2:
        sol = MilpSolution(INFEASIBLE, None, None, None, None)
    elif res.status == 3:
        sol = MilpSolution(UNBOUNDED, None, None, None, None)
    elif (res.status == 4 and not has_x
          and (model.node_limit is not None or model.time_limit is not None)
          and "limit" in str(res.message).lower()):
        # scipy passes some backend limit exits through as unrecognized.
        sol = MilpSolution(NO_INCUMBENT, None, None, bound, None)
    else:
        raise MilpNumericalError(f"MIP backend failure: {res.message}")
    return _merge_hint(model, sol, tolerances)


def solve_enumeration(model: MilpModel, tolerances: Tolerances | None = None,
                      max_binaries: int = 20) -> MilpSolution:
    """Exhaustive oracle: every binary assignment, one residual LP each.

    Exact up to LP tolerance; refuses models with more than ``max_binaries``
    binaries.  With zero binaries this reduces to ``solve_lp``.
    """
    tolerances = tolerances or Tolerances()
    bin_ids = model.binary_ids()
    k = len(bin_ids)
    if k > max_binaries:
        raise ValueError(f"enumeration refuses {k} binaries (limit {max_binaries})")
    if k == 0:
        return solve_lp(model, tolerances)
    best: MilpSolution | None = None
    work = MilpModel(
        lb=list(model.lb), ub=list(model.ub), obj=list(model.obj),
        binary=[False] * model.n_vars, names=list(model.names),
        constraints=list(model.constraints), obj_offset=model.obj_offset,
    )
    for mask in range(1 << k):
        for pos, var in enumerate(bin_ids):
            val = float((mask >> pos) & 1)
            work.lb[var] = val
            work.ub[var] = val
        sol = solve_lp(work, tolerances)
        if sol.status != OPTIMAL:
            continue
        if best is None or sol.objective > best.objective + tolerances.abs_gap:
            x = np.array(sol.x)
            for var in bin_ids:
                x[var] = round(x[var])
            best = MilpSolution(OPTIMAL, x, sol.objective, sol.objective, 0.0)
    if best is None:
        return MilpSolution(INFEASIBLE, None, None, None, None)
    return best
