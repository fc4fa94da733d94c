"""Heaviside composite builders for multi-class classification.

Three rule families: score-based classification maximizing per-class correct
rates, its constrained variant with asymmetric error control over a split of
the misclassification pairs (which routes the convex negated scores through
the difference-of-convex encoding), and axis-shared oblique decision trees
whose leaf labels are swept by exhaustive tuple enumeration.
"""
from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .hscop import (ACTIVATION_TOL, Atom, ConstraintRow, HscopObjective,
                    HscopProblem, LinearHeavisideTerm)
from .pwa import AffineFn, Box, DcPwa, MaxAffine, MinAffine
from .scores import margin_score

log = logging.getLogger(__name__)

__all__ = [
    "LabeledDataset",
    "NpSpec",
    "TreeShape",
    "build_standard_classification",
    "build_np_classification",
    "build_tree_hscop",
    "enumerate_label_tuples",
    "sweep_label_tuples",
    "tree_predict",
    "read_labeled_csv",
    "write_labeled_csv",
]


@dataclass
class LabeledDataset:
    """Feature rows with 0-based integer labels."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be (N, p) with one label per row")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.n_classes):
            raise ValueError("labels must lie in [0, n_classes)")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def _class_sizes(data: LabeledDataset, referenced: set) -> dict:
    sizes = {}
    for i in referenced:
        idx = data.class_indices(i)
        if idx.size == 0:
            raise ValueError(f"class {i} has no samples")
        sizes[i] = idx.size
    return sizes


def build_standard_classification(data: LabeledDataset, tau: float = 0.0,
                                  lam: float = 0.0,
                                  base_scores: np.ndarray | None = None,
                                  beta_bound: float = 1.0
                                  ) -> tuple[HscopProblem, list]:
    """Maximize the sum of per-class correct-classification rates.

    One concave margin-score atom per sample with weight 1/|class|; tau
    defaults to zero (no margin) and may be set positive.
    """
    j_count = data.n_classes
    p = data.n_features
    base = np.zeros(j_count) if base_scores is None else np.asarray(base_scores, float)
    sizes = _class_sizes(data, set(range(j_count)))
    atoms, weights, info = [], [], []
    for s in range(data.n_samples):
        i = int(data.labels[s])
        phi = margin_score(data.features[s], i, j_count, base, tau)
        atoms.append(Atom(len(atoms), phi))
        weights.append(1.0 / sizes[i])
        info.append(s)
    dim = j_count * p
    objective = HscopObjective(
        linear=np.zeros(dim),
        l1_groups=tuple((tuple(range(j * p, (j + 1) * p)), lam)
                        for j in range(j_count)),
        heaviside=tuple(LinearHeavisideTerm(k, w) for k, w in enumerate(weights)),
        residual_penalty=1.0,
    )
    problem = HscopProblem(n=dim, box=Box.cube(dim, -beta_bound, beta_bound),
                           atoms=atoms, objective=objective, rows=[])
    return problem, info


@dataclass(frozen=True)
class NpSpec:
    """Asymmetric error control: pairs in ``e1`` are capped, ``e2`` minimized.

    The two sets must be disjoint and together cover every ordered pair of
    distinct labels.  ``weights[(i, j)]`` scales the (true class i, predicted
    j) error; ``gamma`` is the cap on the weighted e1 error.
    """

    n_classes: int
    e1: tuple
    e2: tuple
    weights: dict
    gamma: float
    tau: np.ndarray = None
    lam: float = 0.0
    beta_bound: float = 1.0

    def __post_init__(self):
        e1 = tuple(tuple(p) for p in self.e1)
        e2 = tuple(tuple(p) for p in self.e2)
        all_pairs = {(i, j) for i in range(self.n_classes)
                     for j in range(self.n_classes) if i != j}
        if set(e1) & set(e2):
            raise ValueError("e1 and e2 must be disjoint")
        if set(e1) | set(e2) != all_pairs:
            raise ValueError("e1 and e2 must cover all off-diagonal label pairs")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("error weights must be nonnegative")
        tau = (np.full(self.n_classes, 1e-3) if self.tau is None
               else np.broadcast_to(np.asarray(self.tau, dtype=float),
                                    (self.n_classes,)).copy())
        if np.any(tau <= 0):
            raise ValueError("margins must be positive")
        object.__setattr__(self, "e1", e1)
        object.__setattr__(self, "e2", e2)
        object.__setattr__(self, "tau", tau)


def _negated_margin(xi: np.ndarray, j: int, n_classes: int,
                    base: np.ndarray, tau: float) -> DcPwa:
    # -h_j(xi, .) - tau is convex max-affine; encoders take it as a DC pair
    # with a zero minus part.
    plus = margin_score(xi, j, n_classes, base, -tau).negated()
    zero = MaxAffine((AffineFn(np.zeros(plus.dim), 0.0),))
    return DcPwa(plus, zero)


def build_np_classification(data: LabeledDataset, spec: NpSpec,
                            base_scores: np.ndarray | None = None
                            ) -> tuple[HscopProblem, list]:
    """Maximize the complemented weighted e2 errors under the e1 cap.

    Open-Heaviside error terms are complemented into closed indicators of the
    negated margins, turning the cap into one row with rhs
    sum of e1 weights minus gamma (vacuous rhs values are permitted but
    logged).
    """
    j_count = spec.n_classes
    if j_count != data.n_classes:
        raise ValueError("spec and data disagree on the number of classes")
    p = data.n_features
    base = np.zeros(j_count) if base_scores is None else np.asarray(base_scores, float)
    sizes = _class_sizes(data, {i for i, _ in spec.e1} | {i for i, _ in spec.e2})
    atoms, info = [], []
    obj_terms = []
    row_terms = []
    for (i, j) in sorted(spec.e2):
        w = spec.weights.get((i, j), 0.0)
        for s in data.class_indices(i):
            phi = _negated_margin(data.features[s], j, j_count, base, spec.tau[j])
            atoms.append(Atom(len(atoms), phi))
            obj_terms.append(LinearHeavisideTerm(len(atoms) - 1, w / sizes[i]))
            info.append((int(s), i, j))
    e1_total = 0.0
    for (i, j) in sorted(spec.e1):
        w = spec.weights.get((i, j), 0.0)
        e1_total += w
        for s in data.class_indices(i):
            phi = _negated_margin(data.features[s], j, j_count, base, spec.tau[j])
            atoms.append(Atom(len(atoms), phi))
            row_terms.append(LinearHeavisideTerm(len(atoms) - 1, w / sizes[i]))
            info.append((int(s), i, j))
    rows = []
    if spec.e1:
        rhs = e1_total - spec.gamma
        if rhs <= 0:
            log.warning("error cap row is vacuous (rhs %.6g <= 0)", rhs)
        rows.append(ConstraintRow(linear=tuple(row_terms), rhs=rhs))
    dim = j_count * p
    objective = HscopObjective(
        linear=np.zeros(dim),
        l1_groups=tuple((tuple(range(j * p, (j + 1) * p)), spec.lam)
                        for j in range(j_count)),
        heaviside=tuple(obj_terms),
        residual_penalty=1.0,
    )
    problem = HscopProblem(n=dim, box=Box.cube(dim, -spec.beta_bound, spec.beta_bound),
                           atoms=atoms, objective=objective, rows=rows)
    return problem, info


@dataclass(frozen=True)
class TreeShape:
    """A fixed binary tree topology over branch nodes and leaves.

    ``right_ancestors[t]`` / ``left_ancestors[t]`` list the branch nodes whose
    right / left side leaf t hangs on; together they are the root-to-leaf
    path.  A point follows the right branch of node k when a_k . x >= b_k and
    the left when a_k . x <= b_k - branch_eps.
    """

    n_branch: int
    right_ancestors: tuple
    left_ancestors: tuple
    branch_eps: float = 1e-3

    def __post_init__(self):
        if self.n_branch < 1:
            raise ValueError("a tree needs at least one branch node")
        if self.branch_eps <= 0:
            raise ValueError("branch margin must be positive")
        right = tuple(tuple(a) for a in self.right_ancestors)
        left = tuple(tuple(a) for a in self.left_ancestors)
        if len(right) != len(left) or len(right) < 2:
            raise ValueError("need matching ancestor lists for >= 2 leaves")
        for rs, ls in zip(right, left):
            path = set(rs) | set(ls)
            if len(path) != len(rs) + len(ls):
                raise ValueError("a branch cannot be on both sides of one path")
            if any(not 0 <= k < self.n_branch for k in path):
                raise ValueError("ancestor index out of range")
        object.__setattr__(self, "right_ancestors", right)
        object.__setattr__(self, "left_ancestors", left)

    @property
    def n_leaves(self) -> int:
        return len(self.right_ancestors)

    @classmethod
    def complete(cls, depth: int, branch_eps: float = 1e-3) -> "TreeShape":
        """Complete binary tree of the given depth (>= 1)."""
        if depth < 1:
            raise ValueError("tree depth must be at least 1")
        n_branch = 2 ** depth - 1
        right, left = [], []
        for leaf in range(2 ** depth, 2 ** (depth + 1)):
            rs, ls = [], []
            node = leaf
            while node > 1:
                parent = node // 2
                (rs if node % 2 == 1 else ls).append(parent - 1)
                node = parent
            right.append(tuple(sorted(rs)))
            left.append(tuple(sorted(ls)))
        return cls(n_branch, tuple(right), tuple(left), branch_eps)


def build_tree_hscop(data: LabeledDataset, shape: TreeShape, leaf_labels,
                     lam: float = 0.0, bound: float = 1.0
                     ) -> tuple[HscopProblem, list]:
    """Count correct classifications of the tree under fixed leaf labels.

    Decision variables are the branch hyperplanes (a_k, b_k); each sample
    whose label matches its leaf's assignment contributes one concave atom,
    the minimum of its root-to-leaf branch margins.
    """
    leaf_labels = tuple(int(j) for j in leaf_labels)
    if len(leaf_labels) != shape.n_leaves:
        raise ValueError("one label per leaf required")
    if any(not 0 <= j < data.n_classes for j in leaf_labels):
        raise ValueError("leaf label out of range")
    p = data.n_features
    stride = p + 1
    dim = shape.n_branch * stride

    def branch_piece(k: int, x: np.ndarray, right: bool) -> AffineFn:
        w = np.zeros(dim)
        if right:
            w[k * stride:k * stride + p] = x
            w[k * stride + p] = -1.0
            return AffineFn(w, 0.0)
        w[k * stride:k * stride + p] = -x
        w[k * stride + p] = 1.0
        return AffineFn(w, -shape.branch_eps)

    atoms, info = [], []
    for t in range(shape.n_leaves):
        for s in np.flatnonzero(data.labels == leaf_labels[t]):
            x = data.features[s]
            pieces = [branch_piece(k, x, True) for k in shape.right_ancestors[t]]
            pieces += [branch_piece(k, x, False) for k in shape.left_ancestors[t]]
            atoms.append(Atom(len(atoms), MinAffine(tuple(pieces))))
            info.append((int(s), t))
    objective = HscopObjective(
        linear=np.zeros(dim),
        l1_groups=tuple((tuple(range(k * stride, k * stride + p)), lam)
                        for k in range(shape.n_branch)),
        heaviside=tuple(LinearHeavisideTerm(k, 1.0) for k in range(len(atoms))),
        residual_penalty=1.0,
    )
    problem = HscopProblem(n=dim, box=Box.cube(dim, -bound, bound),
                           atoms=atoms, objective=objective, rows=[])
    return problem, info


def enumerate_label_tuples(shape: TreeShape, n_classes: int,
                           budget: int = 256):
    """All leaf-label tuples, guarded by an enumeration budget."""
    total = n_classes ** shape.n_leaves
    if total > budget:
        raise ValueError(
            f"{total} label tuples exceed the budget {budget}; "
            "reduce the tree depth or the class count")
    return itertools.product(range(n_classes), repeat=shape.n_leaves)


@dataclass(frozen=True)
class TupleSweep:
    per_tuple: tuple          # (labels, objective) in enumeration order
    best_labels: tuple
    best_objective: float
    best_point: object


def sweep_label_tuples(data: LabeledDataset, shape: TreeShape, solve_fn,
                       lam: float = 0.0, bound: float = 1.0,
                       budget: int = 256) -> TupleSweep:
    """Solve every leaf-label assignment and keep the argmax.

    ``solve_fn(problem) -> (objective, point)`` decides how each tuple's
    problem is solved; tuples are independent, so callers may parallelize.
    """
    results = []
    best = None
    for labels in enumerate_label_tuples(shape, data.n_classes, budget):
        problem, _ = build_tree_hscop(data, shape, labels, lam, bound)
        value, point = solve_fn(problem)
        results.append((labels, value))
        if best is None or value > best[1]:
            best = (labels, value, point)
    return TupleSweep(tuple(results), best[0], best[1], best[2])


def tree_predict(shape: TreeShape, leaf_labels, x: np.ndarray,
                 features: np.ndarray) -> np.ndarray:
    """Labels the fitted tree assigns to each feature row, -1 if unrouted.

    A sample reaches a leaf only when every branch margin on the path holds
    (right: a_k . x >= b_k, left: a_k . x <= b_k - branch_eps); points inside
    a branch's dead band reach no leaf.
    """
    x = np.asarray(x, dtype=float)
    features = np.asarray(features, dtype=float)
    p = features.shape[1]
    stride = p + 1
    a = np.stack([x[k * stride:k * stride + p] for k in range(shape.n_branch)])
    b = np.asarray([x[k * stride + p] for k in range(shape.n_branch)])
    margins = features @ a.T - b[None, :]
    out = np.full(features.shape[0], -1, dtype=np.int64)
    for t in range(shape.n_leaves):
        ok = np.ones(features.shape[0], dtype=bool)
        for k in shape.right_ancestors[t]:
            ok &= margins[:, k] >= -ACTIVATION_TOL
        for k in shape.left_ancestors[t]:
            ok &= margins[:, k] <= -shape.branch_eps + ACTIVATION_TOL
        out[ok] = leaf_labels[t]
    return out


def write_labeled_csv(data: LabeledDataset, path) -> None:
    """Columns: x_0..x_{p-1}, label (header row)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{i}" for i in range(data.n_features)] + ["label"])
        for s in range(data.n_samples):
            writer.writerow([repr(float(v)) for v in data.features[s]]
                            + [int(data.labels[s])])


def read_labeled_csv(path, n_classes: int | None = None) -> LabeledDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label":
            raise ValueError("unrecognized labeled CSV header")
        p = len(header) - 1
        feats, labels = [], []
        for row in reader:
            feats.append([float(v) for v in row[:p]])
            labels.append(int(row[p]))
    labels = np.asarray(labels, dtype=np.int64)
    j_count = n_classes or int(labels.max()) + 1
    return LabeledDataset(np.asarray(feats), labels, j_count)
