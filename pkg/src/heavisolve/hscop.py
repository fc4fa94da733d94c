"""The Heaviside composite problem model.

A problem maximizes a concave part (linear cost, L1 penalty groups, residual
penalty) plus a nonnegative-weighted sum of closed Heaviside indicators of
piecewise-affine atom functions, subject to rows of the same Heaviside form
(optionally coupled through pairwise products of indicators) over a finite
box.  This module owns exact evaluation, the epsilon-band index sets driving
the progressive solver, atom lower bounds, and a JSON wire format.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .pwa import (AffineFn, Box, DcPwa, MaxAffine, MinAffine,
                  lower_bound_on_box)

# Solver-computed optima sit exactly on activation boundaries; values this
# close below zero are floating-point boundary hits and count as active.
# Matches the engine's feasibility tolerance.
ACTIVATION_TOL = 1e-7

__all__ = [
    "ACTIVATION_TOL",
    "Atom",
    "LinearHeavisideTerm",
    "ProductHeavisideTerm",
    "ConstraintRow",
    "LinearRow",
    "HscopObjective",
    "HscopProblem",
    "Point",
    "IndexSets",
    "Evaluation",
    "evaluate",
    "index_sets",
    "phi_lower_bound",
    "problem_to_json",
    "problem_from_json",
]


@dataclass(frozen=True)
class Atom:
    """One Heaviside argument function, shared by objective and rows."""

    id: int
    phi: MinAffine | DcPwa

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("atom ids must be nonnegative")
        if not isinstance(self.phi, (MinAffine, DcPwa)):
            raise TypeError("atom functions must be MinAffine or DcPwa")


@dataclass(frozen=True)
class LinearHeavisideTerm:
    atom_id: int
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("Heaviside weights must be nonnegative")


@dataclass(frozen=True)
class ProductHeavisideTerm:
    atom_u: int
    atom_v: int
    weight: float

    def __post_init__(self):
        if self.atom_u == self.atom_v:
            raise ValueError("diagonal products must be folded into linear terms")
        if self.weight < 0:
            raise ValueError("product weights must be nonnegative")


@dataclass(frozen=True)
class ConstraintRow:
    """Sum of weighted indicators (and indicator products) >= rhs.

    ``residual_allowed`` marks rows that may be relaxed by the nonnegative
    residual variable gamma, which the objective penalizes.
    """

    linear: tuple[LinearHeavisideTerm, ...]
    products: tuple[ProductHeavisideTerm, ...] = ()
    rhs: float = 0.0
    residual_allowed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "linear", tuple(self.linear))
        object.__setattr__(self, "products", tuple(self.products))
        if not np.isfinite(self.rhs):
            raise ValueError("row rhs must be finite")


@dataclass(frozen=True)
class LinearRow:
    """Extra polyhedral restriction on x beyond the box: coeffs . x sense rhs."""

    coeffs: dict
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in ("<=", ">=", "="):
            raise ValueError("sense must be <=, >= or =")

    def value(self, x: np.ndarray) -> float:
        return float(sum(c * x[int(i)] for i, c in self.coeffs.items()))

    def holds(self, x: np.ndarray, tol: float) -> bool:
        v = self.value(x)
        if self.sense == "<=":
            return v <= self.rhs + tol
        if self.sense == ">=":
            return v >= self.rhs - tol
        return abs(v - self.rhs) <= tol


@dataclass(frozen=True)
class HscopObjective:
    """Concave part plus the objective Heaviside row.

    linear: cost vector c over x.  l1_groups: (index tuple, weight) pairs,
    each contributing -weight * sum |x_i|.  heaviside: nonnegative-weight
    indicator terms.  residual_penalty: the coefficient of -gamma.
    """

    linear: np.ndarray
    l1_groups: tuple[tuple[tuple[int, ...], float], ...] = ()
    heaviside: tuple[LinearHeavisideTerm, ...] = ()
    residual_penalty: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.linear, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValueError("objective cost vector must be finite")
        object.__setattr__(self, "linear", c)
        groups = tuple((tuple(int(i) for i in idx), float(w))
                       for idx, w in self.l1_groups)
        if any(w < 0 for _, w in groups):
            raise ValueError("L1 group weights must be nonnegative")
        object.__setattr__(self, "l1_groups", groups)
        object.__setattr__(self, "heaviside", tuple(self.heaviside))


@dataclass
class HscopProblem:
    n: int
    box: Box
    atoms: list[Atom]
    objective: HscopObjective
    rows: list[ConstraintRow] = field(default_factory=list)
    extra_rows: list[LinearRow] = field(default_factory=list)

    def __post_init__(self):
        if self.box.dim != self.n:
            raise ValueError("box dimension must equal the decision dimension")
        ids = [a.id for a in self.atoms]
        if ids != list(range(len(self.atoms))):
            raise ValueError("atom ids must be dense 0..K-1 in order")
        for a in self.atoms:
            if a.phi.dim != self.n:
                raise ValueError(f"atom {a.id} has dimension {a.phi.dim}, expected {self.n}")
        k = len(self.atoms)
        for term in self.objective.heaviside:
            if not 0 <= term.atom_id < k:
                raise ValueError("objective references an unknown atom")
        for row in self.rows:
            for term in row.linear:
                if not 0 <= term.atom_id < k:
                    raise ValueError("row references an unknown atom")
            for term in row.products:
                if not (0 <= term.atom_u < k and 0 <= term.atom_v < k):
                    raise ValueError("product references an unknown atom")
        if self.objective.linear.shape != (self.n,):
            raise ValueError("objective cost vector has the wrong length")
        if any(self.rows) and any(r.residual_allowed for r in self.rows):
            if self.objective.residual_penalty <= 0:
                raise ValueError("residual rows require a positive residual penalty")
        # Per-row dense arrays, precomputed once; evaluation is array math.
        self._row_cache = []
        for row in self.rows:
            lin_ids = np.array([t.atom_id for t in row.linear], dtype=np.int64)
            lin_w = np.array([t.weight for t in row.linear], dtype=float)
            pu = np.array([t.atom_u for t in row.products], dtype=np.int64)
            pv = np.array([t.atom_v for t in row.products], dtype=np.int64)
            pw = np.array([t.weight for t in row.products], dtype=float)
            self._row_cache.append((lin_ids, lin_w, pu, pv, pw))

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def atom_values(self, x: np.ndarray) -> np.ndarray:
        """phi_k(x) for every atom, in id order."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.n},)")
        return np.array([a.phi.value(x) for a in self.atoms])


@dataclass(frozen=True)
class Point:
    """A decision point: x in the box plus the residual value gamma >= 0."""

    x: np.ndarray
    gamma: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "x", x)
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError("gamma must be finite and nonnegative")


@dataclass(frozen=True)
class IndexSets:
    """Partition of atom ids by phi(x) against the (-eps2, eps1] band."""

    lt: frozenset
    inb: frozenset
    gt: frozenset


@dataclass(frozen=True)
class Evaluation:
    objective: float
    row_values: np.ndarray
    feasible: bool
    active: np.ndarray


def evaluate(problem: HscopProblem, point: Point, row_tol: float = 1e-7,
             activation_tol: float = ACTIVATION_TOL) -> Evaluation:
    """Evaluation of the problem at a point.

    Activations follow the closed Heaviside (phi = 0 counts as active), with
    values within ``activation_tol`` below zero treated as boundary hits; a
    row is satisfied when its value reaches rhs within ``row_tol`` scaled by
    the rhs magnitude.
    """
    if not problem.box.contains(point.x, 1e-9):
        raise ValueError("point lies outside the box")
    if point.gamma > 0 and not any(r.residual_allowed for r in problem.rows):
        raise ValueError("gamma > 0 but no row accepts a residual")
    phi = problem.atom_values(point.x)
    active = phi >= -activation_tol
    act = active.astype(float)

    obj = float(problem.objective.linear @ point.x)
    for idx, w in problem.objective.l1_groups:
        obj -= w * float(np.abs(point.x[list(idx)]).sum())
    obj -= problem.objective.residual_penalty * point.gamma
    for term in problem.objective.heaviside:
        obj += term.weight * act[term.atom_id]

    values = np.zeros(len(problem.rows))
    feasible = True
    for i, row in enumerate(problem.rows):
        lin_ids, lin_w, pu, pv, pw = problem._row_cache[i]
        v = float(lin_w @ act[lin_ids]) if lin_ids.size else 0.0
        if pu.size:
            v += float(pw @ (act[pu] * act[pv]))
        if row.residual_allowed:
            v += point.gamma
        values[i] = v
        if v < row.rhs - row_tol * (1.0 + abs(row.rhs)):
            feasible = False
    for row in problem.extra_rows:
        if not row.holds(point.x, row_tol * (1.0 + abs(row.rhs))):
            feasible = False
    return Evaluation(float(obj), values, feasible, active)


def index_sets(problem: HscopProblem, x: np.ndarray, eps1: float, eps2: float
               ) -> IndexSets:
    """Split atoms into below-band, in-band and above-band sets at x.

    Membership is closed on both band edges: phi == -eps2 and phi == eps1
    both land in the in-between set.
    """
    if eps1 < 0 or eps2 < 0:
        raise ValueError("epsilons must be nonnegative")
    phi = problem.atom_values(x)
    lt = frozenset(np.flatnonzero(phi < -eps2).tolist())
    gt = frozenset(np.flatnonzero(phi > eps1).tolist())
    inb = frozenset(range(problem.n_atoms)) - lt - gt
    return IndexSets(lt=lt, inb=inb, gt=gt)


def phi_lower_bound(problem: HscopProblem) -> float:
    """Global lower bound on every atom over the box, clamped nonpositive."""
    if not problem.atoms:
        return 0.0
    b = min(lower_bound_on_box(a.phi, problem.box) for a in problem.atoms)
    return min(b, 0.0)


# --- JSON wire format (documented in the README) ---------------------------

def _piece_to_json(p: AffineFn) -> dict:
    return {"w": p.weights.tolist(), "b": p.offset}


def _piece_from_json(d: dict) -> AffineFn:
    return AffineFn(np.asarray(d["w"], dtype=float), float(d["b"]))


def _atom_to_json(atom: Atom) -> dict:
    if isinstance(atom.phi, MinAffine):
        return {"id": atom.id, "kind": "min_affine",
                "pieces": [_piece_to_json(p) for p in atom.phi.pieces]}
    return {"id": atom.id, "kind": "dc",
            "plus": [_piece_to_json(p) for p in atom.phi.plus.pieces],
            "minus": [_piece_to_json(p) for p in atom.phi.minus.pieces]}


def _atom_from_json(d: dict) -> Atom:
    if d["kind"] == "min_affine":
        phi = MinAffine(tuple(_piece_from_json(p) for p in d["pieces"]))
    elif d["kind"] == "dc":
        phi = DcPwa(MaxAffine(tuple(_piece_from_json(p) for p in d["plus"])),
                    MaxAffine(tuple(_piece_from_json(p) for p in d["minus"])))
    else:
        raise ValueError(f"unknown atom kind {d['kind']!r}")
    return Atom(int(d["id"]), phi)


def problem_to_json(problem: HscopProblem) -> str:
    doc = {
        "schema_version": 1,
        "n": problem.n,
        "box": {"lower": problem.box.lower.tolist(),
                "upper": problem.box.upper.tolist()},
        "atoms": [_atom_to_json(a) for a in problem.atoms],
        "objective": {
            "linear": problem.objective.linear.tolist(),
            "l1_groups": [{"indices": list(idx), "weight": w}
                          for idx, w in problem.objective.l1_groups],
            "heaviside": [{"atom": t.atom_id, "weight": t.weight}
                          for t in problem.objective.heaviside],
            "residual_penalty": problem.objective.residual_penalty,
        },
        "rows": [
            {
                "linear": [{"atom": t.atom_id, "weight": t.weight} for t in r.linear],
                "products": [{"u": t.atom_u, "v": t.atom_v, "weight": t.weight}
                             for t in r.products],
                "rhs": r.rhs,
                "residual": r.residual_allowed,
            }
            for r in problem.rows
        ],
        "extra_rows": [
            {"coeffs": {str(i): c for i, c in r.coeffs.items()},
             "sense": r.sense, "rhs": r.rhs}
            for r in problem.extra_rows
        ],
    }
    return json.dumps(doc, indent=1)


def problem_from_json(text: str) -> HscopProblem:
    doc = json.loads(text)
    if doc.get("schema_version") != 1:
        raise ValueError("unsupported problem schema version")
    obj = doc["objective"]
    objective = HscopObjective(
        linear=np.asarray(obj["linear"], dtype=float),
        l1_groups=tuple((tuple(g["indices"]), float(g["weight"]))
                        for g in obj["l1_groups"]),
        heaviside=tuple(LinearHeavisideTerm(int(t["atom"]), float(t["weight"]))
                        for t in obj["heaviside"]),
        residual_penalty=float(obj["residual_penalty"]),
    )
    rows = [
        ConstraintRow(
            linear=tuple(LinearHeavisideTerm(int(t["atom"]), float(t["weight"]))
                         for t in r["linear"]),
            products=tuple(ProductHeavisideTerm(int(t["u"]), int(t["v"]),
                                                float(t["weight"]))
                           for t in r["products"]),
            rhs=float(r["rhs"]),
            residual_allowed=bool(r["residual"]),
        )
        for r in doc["rows"]
    ]
    extra = [LinearRow({int(i): float(c) for i, c in r["coeffs"].items()},
                       r["sense"], float(r["rhs"]))
             for r in doc.get("extra_rows", [])]
    return HscopProblem(
        n=int(doc["n"]),
        box=Box(np.asarray(doc["box"]["lower"], dtype=float),
                np.asarray(doc["box"]["upper"], dtype=float)),
        atoms=[_atom_from_json(a) for a in doc["atoms"]],
        objective=objective,
        rows=rows,
        extra_rows=extra,
    )
