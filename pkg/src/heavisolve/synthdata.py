"""Synthetic treatment datasets.

Covariates are drawn uniformly on the unit hypercube; every distinct
covariate receives an equal number of samples whose arms are assigned
uniformly at random (so the true propensities are exactly 1/J), and outcomes
follow a fixed nonlinear response with arm-specific adjustments plus a
lognormal disturbance with median one.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .treatment import Dataset

log = logging.getLogger(__name__)

__all__ = ["SynthConfig", "generate", "outcome_base", "write_manifest"]


@dataclass(frozen=True)
class SynthConfig:
    n_distinct: int = 25
    n_samples: int = 1000
    n_features: int = 30
    n_arms: int = 4
    seed: int = 0
    noise_mu: float = 0.0
    noise_sigma: float = 0.001
    outcome_bound: float | None = None   # None: use the max observed outcome

    def __post_init__(self):
        if self.n_distinct < 1 or self.n_samples < 1:
            raise ValueError("sizes must be positive")
        if self.n_samples % self.n_distinct != 0:
            raise ValueError("n_samples must be divisible by n_distinct")
        if self.n_features < 6:
            raise ValueError("the outcome formula uses covariates up to index 5")
        if self.n_arms != 4:
            raise ValueError("the outcome formula defines exactly 4 arms")


def outcome_base(x: np.ndarray, arm: int) -> float:
    """Deterministic part of the outcome for one covariate vector and arm."""
    x = np.asarray(x, dtype=float)
    base = x[5] + np.exp(2.0 + 0.2 * x[0] - 0.1 * x[1] + 2.0 * x[0] * x[1])
    arm_terms = (
        -0.8 + 1.8 * x[1] - 0.2 * x[2],
        -1.0 + 2.1 * x[1] - 1.2 * x[0],
        -0.8 + 1.3 * x[0] * x[2],
        -0.4 + 1.8 * x[0] - 1.2 * x[1] * x[2],
    )
    return float(base + arm_terms[arm])


def generate(config: SynthConfig) -> Dataset:
    """Deterministic dataset for a seed; see the module docstring."""
    rng = np.random.default_rng(config.seed)
    covariates = rng.uniform(size=(config.n_distinct, config.n_features))
    reps = config.n_samples // config.n_distinct
    cov_id = np.repeat(np.arange(config.n_distinct), reps)
    treatment = rng.integers(0, config.n_arms, size=config.n_samples)
    noise = rng.lognormal(config.noise_mu, config.noise_sigma, size=config.n_samples)
    outcome = np.array([
        outcome_base(covariates[cov_id[s]], int(treatment[s])) + noise[s]
        for s in range(config.n_samples)
    ])
    if np.any(outcome < 0):
        log.warning("clamping %d negative outcomes to zero", int((outcome < 0).sum()))
        outcome = np.maximum(outcome, 0.0)
    bound = (float(outcome.max()) if config.outcome_bound is None
             else float(config.outcome_bound))
    propensities = np.full((config.n_distinct, config.n_arms), 1.0 / config.n_arms)
    return Dataset(covariates, cov_id, treatment, outcome, propensities, bound)


def write_manifest(config: SynthConfig, dataset_path, manifest_path) -> dict:
    """Generation manifest: config, seed and the dataset file hash."""
    digest = hashlib.sha256()
    with open(dataset_path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    doc = {
        "schema_version": 1,
        "config": asdict(config),
        "dataset_sha256": digest.hexdigest(),
    }
    with open(manifest_path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return doc
