"""Exact mixed-binary encodings of Heaviside composite problems.

``build_full_mip`` assigns one binary per atom and activates each atom's
pieces through big-M rows; concave (min-of-affine) atoms linearize without
auxiliary binaries, while difference-of-convex atoms get the epigraph
machinery (one continuous epigraph variable per side plus piece-selection
binaries).  ``build_restricted_mip`` keeps binaries only for atoms inside an
epsilon band around a reference point, fixing the rest at the values the
point dictates.  Indicator products are linearized exactly with McCormick
rows over continuous [0, 1] variables.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hscop import ACTIVATION_TOL, HscopProblem, IndexSets, Point, evaluate
from .milp import FEASIBLE_TIME_LIMIT, OPTIMAL, MilpModel, MilpSolution
from .pwa import DcPwa, MinAffine, lower_bound_on_box, upper_bound_on_box

__all__ = [
    "FIXED0",
    "FIXED1",
    "BigMConstants",
    "EncodingMap",
    "build_full_mip",
    "build_restricted_mip",
    "extract_solution",
    "incumbent_hint",
]

FIXED0 = "fixed0"
FIXED1 = "fixed1"


@dataclass(frozen=True)
class BigMConstants:
    """Activation constants, all validated on the box by interval arithmetic.

    ``atom_bounds[k]`` is a nonpositive lower bound on atom k over the box
    (never looser than ``global_bound``); ``dc_spans[k]`` bounds the gap
    between the plus-part epigraph variable and any single plus piece.
    """

    global_bound: float
    atom_bounds: dict
    dc_spans: dict


@dataclass
class EncodingMap:
    """Where every model variable came from."""

    x_vars: list
    gamma_var: int | None
    atom_binary: dict          # atom id -> var id, FIXED0 or FIXED1
    dc_vars: dict              # atom id -> (t var, m var, [v vars])
    product_vars: dict         # (u, v) with u < v -> w var id
    l1_vars: dict              # objective group index -> [s var ids]
    big_m: BigMConstants

    @property
    def n_free_binaries(self) -> int:
        return sum(1 for v in self.atom_binary.values() if not isinstance(v, str))


def _big_m_constants(problem: HscopProblem) -> BigMConstants:
    atom_bounds = {}
    dc_spans = {}
    for atom in problem.atoms:
        atom_bounds[atom.id] = min(lower_bound_on_box(atom.phi, problem.box), 0.0)
        if isinstance(atom.phi, DcPwa):
            plus_hi = upper_bound_on_box(atom.phi.plus, problem.box)
            piece_lo = min(lower_bound_on_box(p, problem.box)
                           for p in atom.phi.plus.pieces)
            dc_spans[atom.id] = max(plus_hi - piece_lo, 0.0)
    global_bound = min(atom_bounds.values(), default=0.0)
    return BigMConstants(min(global_bound, 0.0), atom_bounds, dc_spans)


def _emit_atom(model: MilpModel, emap: EncodingMap, problem: HscopProblem,
               atom_id: int, mode: str, obj_weight: float) -> None:
    atom = problem.atoms[atom_id]
    if mode == FIXED0:
        emap.atom_binary[atom_id] = FIXED0
        return
    if mode == FIXED1:
        emap.atom_binary[atom_id] = FIXED1
        model.obj_offset += obj_weight
        z = None
    else:
        z = model.add_binary(obj=obj_weight, name=f"z{atom_id}")
        emap.atom_binary[atom_id] = z
    big_m = emap.big_m.atom_bounds[atom_id]

    if isinstance(atom.phi, MinAffine):
        # min of pieces >= B(1-z) iff every piece >= B(1-z).
        for p_idx, p in enumerate(atom.phi.pieces):
            coeffs = {emap.x_vars[i]: w for i, w in enumerate(p.weights) if w != 0.0}
            if z is None:
                model.add_constraint(coeffs, ">=", -p.offset,
                                     name=f"act{atom_id}_{p_idx}")
            else:
                coeffs[z] = big_m
                model.add_constraint(coeffs, ">=", big_m - p.offset,
                                     name=f"act{atom_id}_{p_idx}")
        return

    phi: DcPwa = atom.phi
    span = emap.big_m.dc_spans[atom_id]
    t = model.add_continuous(lower_bound_on_box(phi.plus, problem.box),
                             upper_bound_on_box(phi.plus, problem.box),
                             name=f"t{atom_id}")
    m = model.add_continuous(lower_bound_on_box(phi.minus, problem.box),
                             upper_bound_on_box(phi.minus, problem.box),
                             name=f"m{atom_id}")
    v_ids = []
    for p_idx, p in enumerate(phi.plus.pieces):
        # t sits in the epigraph of every plus piece ...
        coeffs = {emap.x_vars[i]: -w for i, w in enumerate(p.weights) if w != 0.0}
        coeffs[t] = 1.0
        model.add_constraint(coeffs, ">=", p.offset, name=f"epi{atom_id}_{p_idx}")
        # ... and the selection binaries pin it to the attained maximum.
        v = model.add_binary(name=f"v{atom_id}_{p_idx}")
        v_ids.append(v)
        coeffs = {emap.x_vars[i]: -w for i, w in enumerate(p.weights) if w != 0.0}
        coeffs[t] = 1.0
        coeffs[v] = -span
        model.add_constraint(coeffs, "<=", p.offset, name=f"sel{atom_id}_{p_idx}")
    model.add_constraint({v: 1.0 for v in v_ids}, "<=", len(v_ids) - 1,
                         name=f"pick{atom_id}")
    for q_idx, q in enumerate(phi.minus.pieces):
        coeffs = {emap.x_vars[i]: -w for i, w in enumerate(q.weights) if w != 0.0}
        coeffs[m] = 1.0
        model.add_constraint(coeffs, ">=", q.offset, name=f"mepi{atom_id}_{q_idx}")
    # Activation: plus max minus minus max stays above B(1-z).
    coeffs = {t: 1.0, m: -1.0}
    if z is None:
        model.add_constraint(coeffs, ">=", 0.0, name=f"dc{atom_id}")
    else:
        coeffs[z] = big_m
        model.add_constraint(coeffs, ">=", big_m, name=f"dc{atom_id}")
    emap.dc_vars[atom_id] = (t, m, v_ids)


def _product_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def _build(problem: HscopProblem, modes: dict) -> tuple[MilpModel, EncodingMap]:
    model = MilpModel()
    big_m = _big_m_constants(problem)
    emap = EncodingMap(x_vars=[], gamma_var=None, atom_binary={}, dc_vars={},
                       product_vars={}, l1_vars={}, big_m=big_m)

    for i in range(problem.n):
        emap.x_vars.append(model.add_continuous(
            problem.box.lower[i], problem.box.upper[i],
            obj=problem.objective.linear[i], name=f"x{i}"))

    for g, (indices, weight) in enumerate(problem.objective.l1_groups):
        if weight == 0.0:
            continue
        s_ids = []
        for i in indices:
            bound = max(abs(problem.box.lower[i]), abs(problem.box.upper[i]))
            s = model.add_continuous(0.0, bound, obj=-weight, name=f"s{g}_{i}")
            model.add_constraint({s: 1.0, emap.x_vars[i]: -1.0}, ">=", 0.0)
            model.add_constraint({s: 1.0, emap.x_vars[i]: 1.0}, ">=", 0.0)
            s_ids.append(s)
        emap.l1_vars[g] = s_ids

    residual_rows = [r for r in problem.rows if r.residual_allowed]
    if residual_rows:
        if problem.objective.residual_penalty <= 0:
            raise ValueError("residual rows require a positive residual penalty")
        gamma_ub = max(0.0, max(r.rhs for r in residual_rows))
        emap.gamma_var = model.add_continuous(
            0.0, gamma_ub, obj=-problem.objective.residual_penalty, name="gamma")

    obj_weight = {a.id: 0.0 for a in problem.atoms}
    for term in problem.objective.heaviside:
        obj_weight[term.atom_id] += term.weight
    for atom in problem.atoms:
        _emit_atom(model, emap, problem, atom.id, modes[atom.id],
                   obj_weight[atom.id])

    for row_idx, row in enumerate(problem.rows):
        coeffs: dict[int, float] = {}
        rhs = row.rhs

        def _accumulate(var: int, w: float):
            coeffs[var] = coeffs.get(var, 0.0) + w

        for term in row.linear:
            state = emap.atom_binary[term.atom_id]
            if state == FIXED0:
                continue
            if state == FIXED1:
                rhs -= term.weight
            else:
                _accumulate(state, term.weight)
        for term in row.products:
            su = emap.atom_binary[term.atom_u]
            sv = emap.atom_binary[term.atom_v]
            if FIXED0 in (su, sv):
                continue
            if su == FIXED1 and sv == FIXED1:
                rhs -= term.weight
            elif su == FIXED1:
                _accumulate(sv, term.weight)
            elif sv == FIXED1:
                _accumulate(su, term.weight)
            else:
                key = _product_key(term.atom_u, term.atom_v)
                w_var = emap.product_vars.get(key)
                if w_var is None:
                    w_var = model.add_continuous(0.0, 1.0, name=f"w{key[0]}_{key[1]}")
                    emap.product_vars[key] = w_var
                    tag = f"mc{key[0]}_{key[1]}"
                    model.add_constraint({w_var: 1.0, su: -1.0}, "<=", 0.0,
                                         name=tag + "a")
                    model.add_constraint({w_var: 1.0, sv: -1.0}, "<=", 0.0,
                                         name=tag + "b")
                    model.add_constraint({w_var: 1.0, su: -1.0, sv: -1.0}, ">=",
                                         -1.0, name=tag + "c")
                _accumulate(w_var, term.weight)
        if row.residual_allowed:
            _accumulate(emap.gamma_var, 1.0)
        if coeffs:
            model.add_constraint(coeffs, ">=", rhs, name=f"row{row_idx}")
        elif rhs > 0:
            # Every term dropped or folded and the remainder cannot be met.
            infeasible_marker = model.add_continuous(0.0, 0.0, name=f"row{row_idx}_stub")
            model.add_constraint({infeasible_marker: 1.0}, ">=", rhs)

    for r_idx, row in enumerate(problem.extra_rows):
        coeffs = {emap.x_vars[int(i)]: float(c) for i, c in row.coeffs.items()}
        model.add_constraint(coeffs, row.sense, row.rhs, name=f"poly{r_idx}")

    return model, emap


def build_full_mip(problem: HscopProblem) -> tuple[MilpModel, EncodingMap]:
    """Encode the whole problem: one free binary per atom."""
    modes = {a.id: "free" for a in problem.atoms}
    return _build(problem, modes)


def build_restricted_mip(problem: HscopProblem, point: Point, sets: IndexSets,
                         ) -> tuple[MilpModel, EncodingMap]:
    """Encode the band-restricted problem at a feasible reference point.

    Atoms above the band keep their activation (binary fixed to one, value
    rows enforced), atoms below it are switched off and left unconstrained,
    and only in-band atoms receive free binaries.
    """
    ev = evaluate(problem, point)
    if not ev.feasible:
        raise ValueError("reference point is infeasible for the problem")
    covered = sets.lt | sets.inb | sets.gt
    if covered != set(range(problem.n_atoms)):
        raise ValueError("index sets must partition the atoms")
    modes = {}
    for k in sets.gt:
        modes[k] = FIXED1
    for k in sets.lt:
        modes[k] = FIXED0
    for k in sets.inb:
        modes[k] = "free"
    model, emap = _build(problem, modes)
    if emap.gamma_var is not None and point.gamma > model.ub[emap.gamma_var]:
        model.ub[emap.gamma_var] = float(point.gamma)
    return model, emap


def extract_solution(solution: MilpSolution, emap: EncodingMap,
                     problem: HscopProblem) -> tuple[Point, np.ndarray]:
    """Pull (x, gamma) and the atom indicator vector out of a solver result."""
    if solution.status not in (OPTIMAL, FEASIBLE_TIME_LIMIT):
        raise ValueError(f"no solution to extract from status {solution.status!r}")
    full = solution.x
    x = np.clip(full[emap.x_vars], problem.box.lower, problem.box.upper)
    gamma = 0.0
    if emap.gamma_var is not None:
        gamma = max(0.0, float(full[emap.gamma_var]))
    z = np.zeros(problem.n_atoms)
    for atom_id, state in emap.atom_binary.items():
        if state == FIXED1:
            z[atom_id] = 1.0
        elif state != FIXED0:
            z[atom_id] = round(float(full[state]))
    return Point(x, gamma), z


def incumbent_hint(problem: HscopProblem, model: MilpModel, emap: EncodingMap,
                   point: Point) -> np.ndarray:
    """Full variable assignment realizing a feasible problem point."""
    hint = np.zeros(model.n_vars)
    x = np.asarray(point.x, dtype=float)
    for i, var in enumerate(emap.x_vars):
        hint[var] = x[i]
    for g, (indices, weight) in enumerate(problem.objective.l1_groups):
        if g in emap.l1_vars:
            for i, s in zip(indices, emap.l1_vars[g]):
                hint[s] = abs(x[i])
    if emap.gamma_var is not None:
        hint[emap.gamma_var] = point.gamma
    phi = problem.atom_values(x)
    act = {}
    for atom_id, state in emap.atom_binary.items():
        if state == FIXED0:
            act[atom_id] = 0.0
            continue
        a = 1.0 if phi[atom_id] >= -ACTIVATION_TOL else 0.0
        act[atom_id] = 1.0 if state == FIXED1 else a
        if not isinstance(state, str):
            hint[state] = a
    for atom_id, (t, m, v_ids) in emap.dc_vars.items():
        dc: DcPwa = problem.atoms[atom_id].phi
        piece_vals = [p.value(x) for p in dc.plus.pieces]
        best = int(np.argmax(piece_vals))
        hint[t] = max(piece_vals)
        hint[m] = dc.minus.value(x)
        for p_idx, v in enumerate(v_ids):
            hint[v] = 0.0 if p_idx == best else 1.0
    for (u, v), w_var in emap.product_vars.items():
        hint[w_var] = act[u] * act[v]
    return hint
