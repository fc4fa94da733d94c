"""Multi-action treatment learning under an inequality (Gini) cap.

Observational samples are reweighted by inverse propensity scores to
estimate the welfare of a margin-based assignment policy; the empirical Gini
coefficient of the treated-outcome distribution is capped through one
pairwise constraint row with a penalized residual, so the assembled problem
is always feasible and a zero residual certifies the cap.  Treatment arms
are 0-based everywhere, including the CSV formats.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .hscop import (ACTIVATION_TOL, Atom, ConstraintRow, HscopObjective,
                    HscopProblem, LinearHeavisideTerm, ProductHeavisideTerm)
from .pwa import Box
from .scores import margin_score, margin_values

__all__ = [
    "Dataset",
    "TreatmentSpec",
    "PolicyParams",
    "estimate_propensities",
    "score_functions",
    "build_treatment_hscop",
    "policy_assign",
    "assignments",
    "welfare_ipw",
    "gini_ipw",
    "write_dataset_csv",
    "read_dataset_csv",
    "write_propensity_csv",
    "read_propensity_csv",
]


@dataclass
class Dataset:
    """Observational samples over a table of distinct covariate vectors.

    covariates: (n_distinct, p) in [0, 1]; cov_id/treatment/outcome are
    per-sample arrays; propensities is the (n_distinct, n_arms) table of
    estimated assignment probabilities; outcomes live in [0, M].
    """

    covariates: np.ndarray
    cov_id: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    propensities: np.ndarray
    outcome_bound: float
    kappa: float = 0.05

    def __post_init__(self):
        self.covariates = np.asarray(self.covariates, dtype=float)
        self.cov_id = np.asarray(self.cov_id, dtype=np.int64)
        self.treatment = np.asarray(self.treatment, dtype=np.int64)
        self.outcome = np.asarray(self.outcome, dtype=float)
        self.propensities = np.asarray(self.propensities, dtype=float)
        n = self.cov_id.shape[0]
        if self.treatment.shape != (n,) or self.outcome.shape != (n,):
            raise ValueError("sample arrays must share one length")
        if self.cov_id.min(initial=0) < 0 or (
                n and self.cov_id.max() >= self.covariates.shape[0]):
            raise ValueError("covariate id out of range")
        if n and (self.treatment.min() < 0 or self.treatment.max() >= self.n_arms):
            raise ValueError("treatment arm out of range")
        if np.any(self.outcome < 0) or np.any(self.outcome > self.outcome_bound + 1e-12):
            raise ValueError("outcomes must lie in [0, outcome_bound]")
        if np.any(self.propensities <= 0.0) or np.any(self.propensities > 1.0):
            raise ValueError("propensities must lie in (0, 1]")

    @property
    def n_samples(self) -> int:
        return self.cov_id.shape[0]

    @property
    def n_distinct(self) -> int:
        return self.covariates.shape[0]

    @property
    def n_features(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_arms(self) -> int:
        return self.propensities.shape[1]

    def sample_propensity(self) -> np.ndarray:
        """e_{j_s}(xi_s) for every sample."""
        return self.propensities[self.cov_id, self.treatment]


@dataclass(frozen=True)
class TreatmentSpec:
    """Configuration of the assignment-learning problem."""

    n_arms: int
    base_scores: np.ndarray = None
    tau: np.ndarray = None
    alpha: float = 0.7
    lam: float = 0.01
    rho: float = 1e8
    beta_bound: float = 1.0

    def __post_init__(self):
        base = (np.zeros(self.n_arms) if self.base_scores is None
                else np.asarray(self.base_scores, dtype=float))
        tau = (np.full(self.n_arms, 1e-3) if self.tau is None
               else np.broadcast_to(np.asarray(self.tau, dtype=float),
                                    (self.n_arms,)).copy())
        if base.shape != (self.n_arms,):
            raise ValueError("base_scores must have one entry per arm")
        if np.any(tau <= 0):
            raise ValueError("margins must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.lam < 0 or self.rho <= 0:
            raise ValueError("lam must be >= 0 and rho > 0")
        object.__setattr__(self, "base_scores", base)
        object.__setattr__(self, "tau", tau)


@dataclass(frozen=True)
class PolicyParams:
    """Per-arm weight matrix beta of shape (n_arms, p)."""

    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 2:
            raise ValueError("beta must be a (n_arms, p) matrix")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def from_stacked(cls, x: np.ndarray, n_arms: int) -> "PolicyParams":
        x = np.asarray(x, dtype=float)
        return cls(x.reshape(n_arms, -1))

    @property
    def stacked(self) -> np.ndarray:
        return self.beta.reshape(-1)


def estimate_propensities(cov_id: np.ndarray, treatment: np.ndarray,
                          n_distinct: int, n_arms: int,
                          mode: str = "empirical",
                          values: np.ndarray | float | None = None,
                          kappa: float = 0.05) -> np.ndarray:
    """Propensity table, either caller-supplied or clamped empirical rates.

    Empirical mode computes the per-covariate arm frequencies, clamps them
    into [kappa, 1 - kappa] and renormalizes each covariate's row to sum to
    one (the clamp keeps every cell strictly positive; after renormalization
    floored cells can sit slightly below kappa).
    """
    if mode == "true_known":
        if values is None:
            raise ValueError("true_known mode needs propensity values")
        table = np.broadcast_to(np.asarray(values, dtype=float),
                                (n_distinct, n_arms)).copy()
        return table
    if mode != "empirical":
        raise ValueError("mode must be 'empirical' or 'true_known'")
    counts = np.zeros((n_distinct, n_arms))
    np.add.at(counts, (cov_id, treatment), 1.0)
    totals = counts.sum(axis=1)
    if np.any(totals < 1):
        missing = int(np.flatnonzero(totals < 1)[0])
        raise ValueError(f"covariate {missing} has no samples")
    rates = counts / totals[:, None]
    rates = np.clip(rates, kappa, 1.0 - kappa)
    return rates / rates.sum(axis=1, keepdims=True)


def score_functions(xi: np.ndarray, spec: TreatmentSpec) -> list:
    """Margin scores h_j(xi, .) for every arm, as MinAffine in stacked beta."""
    return [margin_score(xi, j, spec.n_arms, spec.base_scores, spec.tau[j])
            for j in range(spec.n_arms)]


def _atom_table(dataset: Dataset) -> tuple[list, np.ndarray]:
    """Observed (covariate, arm) pairs in sorted order plus per-sample index."""
    keys = dataset.cov_id * dataset.n_arms + dataset.treatment
    unique, inverse = np.unique(keys, return_inverse=True)
    pairs = [(int(k) // dataset.n_arms, int(k) % dataset.n_arms) for k in unique]
    return pairs, inverse


def build_treatment_hscop(dataset: Dataset, spec: TreatmentSpec
                          ) -> tuple[HscopProblem, list]:
    """Assemble the welfare-maximization problem with the capped-Gini row.

    One atom per observed (covariate, arm) pair; the row couples atoms
    through pairwise products weighted by the inverse-propensity pair sums,
    with diagonal products folded into linear weights (an indicator squared
    is itself).  Returns the problem and the atom -> (covariate, arm) table.
    """
    if spec.n_arms != dataset.n_arms:
        raise ValueError("spec and dataset disagree on the number of arms")
    n = dataset.n_samples
    if n == 0:
        raise ValueError("dataset has no samples")
    pairs, sample_atom = _atom_table(dataset)
    k = len(pairs)
    p = dataset.n_features
    dim = spec.n_arms * p

    e_s = dataset.sample_propensity()
    inv_e = 1.0 / e_s
    m_bound = dataset.outcome_bound

    # Objective indicator weights: (1/N) sum of Y/e over each atom's samples.
    psi0 = np.bincount(sample_atom, weights=dataset.outcome * inv_e,
                       minlength=k) / n
    # Pairwise row weights over ordered sample pairs, aggregated per atom pair.
    g = _kernels.pair_matrix(sample_atom.astype(np.int64), dataset.outcome,
                             inv_e, m_bound, k) / (n * n)

    atoms = []
    for atom_id, (xi_id, arm) in enumerate(pairs):
        phi = margin_score(dataset.covariates[xi_id], arm, spec.n_arms,
                           spec.base_scores, spec.tau[arm])
        atoms.append(Atom(atom_id, phi))

    linear_terms = []
    for u in range(k):
        w = g[u, u] + (1.0 + spec.alpha) * psi0[u]
        linear_terms.append(LinearHeavisideTerm(u, float(w)))
    product_terms = []
    for u in range(k):
        for v in range(u + 1, k):
            w = g[u, v] + g[v, u]
            if w > 0.0:
                product_terms.append(ProductHeavisideTerm(u, v, float(w)))
    gini_row = ConstraintRow(linear=tuple(linear_terms),
                             products=tuple(product_terms),
                             rhs=float(m_bound), residual_allowed=True)

    l1_groups = tuple((tuple(range(j * p, (j + 1) * p)), spec.lam)
                      for j in range(spec.n_arms))
    objective = HscopObjective(
        linear=np.zeros(dim),
        l1_groups=l1_groups,
        heaviside=tuple(LinearHeavisideTerm(u, float(psi0[u])) for u in range(k)),
        residual_penalty=spec.rho,
    )
    problem = HscopProblem(
        n=dim,
        box=Box.cube(dim, -spec.beta_bound, spec.beta_bound),
        atoms=atoms,
        objective=objective,
        rows=[gini_row],
    )
    return problem, pairs


def policy_assign(xi: np.ndarray, params: PolicyParams, spec: TreatmentSpec
                  ) -> int | None:
    """The unique arm whose margin score is nonnegative at xi, if any."""
    h = margin_values(np.asarray(xi, dtype=float)[None, :], params.beta,
                      spec.base_scores, spec.tau)[0]
    hits = np.flatnonzero(h >= -ACTIVATION_TOL)
    if hits.size == 0:
        return None
    return int(hits[0])


def assignments(dataset: Dataset, params: PolicyParams, spec: TreatmentSpec
                ) -> np.ndarray:
    """Per-sample indicator that the policy assigns the observed arm."""
    h = margin_values(dataset.covariates, params.beta, spec.base_scores, spec.tau)
    return h[dataset.cov_id, dataset.treatment] >= -ACTIVATION_TOL


def welfare_ipw(dataset: Dataset, params: PolicyParams, spec: TreatmentSpec
                ) -> float:
    """Inverse-propensity-weighted welfare of the policy on the dataset."""
    agree = assignments(dataset, params, spec)
    inv_e = 1.0 / dataset.sample_propensity()
    return float((dataset.outcome * inv_e * agree).sum() / dataset.n_samples)


def gini_ipw(dataset: Dataset, params: PolicyParams, spec: TreatmentSpec
             ) -> float:
    """Empirical Gini coefficient of the treated outcomes under the policy.

    Computed as (M - G2) / E - 1 with G2 the pairwise inverse-propensity sum
    over treated samples and E the welfare estimate; by construction it is at
    most alpha exactly when the assembled row holds with a zero residual.
    Raises when the welfare estimate is zero (the statistic is undefined).
    """
    agree = assignments(dataset, params, spec)
    welfare = welfare_ipw(dataset, params, spec)
    if welfare <= 0.0:
        raise ValueError("welfare estimate is zero; Gini is undefined")
    inv_e = 1.0 / dataset.sample_propensity()
    n = dataset.n_samples
    g2 = _kernels.pair_sum(dataset.outcome[agree], inv_e[agree],
                           dataset.outcome_bound) / (n * n)
    return (dataset.outcome_bound - g2) / welfare - 1.0


# --- CSV formats ------------------------------------------------------------

def write_dataset_csv(dataset: Dataset, path) -> None:
    """Columns: covariate_id, x_0..x_{p-1}, treatment, outcome (header row)."""
    p = dataset.n_features
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["covariate_id"] + [f"x_{i}" for i in range(p)]
                        + ["treatment", "outcome"])
        for s in range(dataset.n_samples):
            xi = dataset.covariates[dataset.cov_id[s]]
            writer.writerow([int(dataset.cov_id[s])]
                            + [repr(float(v)) for v in xi]
                            + [int(dataset.treatment[s]),
                               repr(float(dataset.outcome[s]))])


def read_dataset_csv(path, n_arms: int | None = None,
                     propensities: np.ndarray | None = None,
                     propensity_mode: str = "uniform",
                     outcome_bound: float | None = None,
                     kappa: float = 0.05) -> Dataset:
    """Read the dataset CSV; propensities come from a table, the uniform
    rule, or the clamped empirical estimator."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "covariate_id" or header[-1] != "outcome":
            raise ValueError("unrecognized dataset CSV header")
        p = len(header) - 3
        cov_rows = {}
        cov_id, treatment, outcome = [], [], []
        for row in reader:
            cid = int(row[0])
            xi = np.asarray([float(v) for v in row[1:1 + p]])
            seen = cov_rows.get(cid)
            if seen is None:
                cov_rows[cid] = xi
            elif not np.array_equal(seen, xi):
                raise ValueError(f"covariate id {cid} maps to two vectors")
            cov_id.append(cid)
            treatment.append(int(row[1 + p]))
            outcome.append(float(row[2 + p]))
    n_distinct = max(cov_rows) + 1
    covariates = np.zeros((n_distinct, p))
    for cid, xi in cov_rows.items():
        covariates[cid] = xi
    cov_id = np.asarray(cov_id, dtype=np.int64)
    treatment = np.asarray(treatment, dtype=np.int64)
    outcome = np.asarray(outcome, dtype=float)
    arms = n_arms or int(treatment.max()) + 1
    if propensities is not None:
        table = np.asarray(propensities, dtype=float)
    elif propensity_mode == "uniform":
        table = np.full((n_distinct, arms), 1.0 / arms)
    elif propensity_mode == "empirical":
        table = estimate_propensities(cov_id, treatment, n_distinct, arms,
                                      mode="empirical", kappa=kappa)
    else:
        raise ValueError("propensity_mode must be 'uniform' or 'empirical'")
    bound = float(outcome.max()) if outcome_bound is None else float(outcome_bound)
    return Dataset(covariates, cov_id, treatment, outcome, table, bound, kappa)


def write_propensity_csv(table: np.ndarray, path) -> None:
    """Columns: covariate_id, e_0..e_{J-1} (header row)."""
    table = np.asarray(table, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["covariate_id"] + [f"e_{j}" for j in range(table.shape[1])])
        for cid in range(table.shape[0]):
            writer.writerow([cid] + [repr(float(v)) for v in table[cid]])


def read_propensity_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "covariate_id":
            raise ValueError("unrecognized propensity CSV header")
        rows = {int(r[0]): [float(v) for v in r[1:]] for r in reader}
    table = np.zeros((max(rows) + 1, len(header) - 1))
    for cid, vals in rows.items():
        table[cid] = vals
    return table
