"""Piecewise-affine function algebra.

Value types for affine, max-of-affine (convex), min-of-affine (concave) and
difference-of-convex piecewise affine functions, together with exact
evaluation, Heaviside indicators, structural negation, and sound interval
bounds over boxes.  All types are immutable after construction and reject
non-finite data, so they are safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AffineFn",
    "MaxAffine",
    "MinAffine",
    "DcPwa",
    "Box",
    "evaluate",
    "heaviside_closed",
    "heaviside_open",
    "negate",
    "lower_bound_on_box",
    "upper_bound_on_box",
]


def _as_finite_vector(values, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{what} must be a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite")
    arr.setflags(write=False)
    return arr


def _check_point(x, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (dim,):
        raise ValueError(f"point has shape {arr.shape}, expected ({dim},)")
    return arr


@dataclass(frozen=True, eq=False)
class AffineFn:
    """The affine map x -> weights . x + offset."""

    weights: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "weights", _as_finite_vector(self.weights, "weights"))
        offset = float(self.offset)
        if not math.isfinite(offset):
            raise ValueError("offset must be finite")
        object.__setattr__(self, "offset", offset)

    def __eq__(self, other):
        return (isinstance(other, AffineFn)
                and self.offset == other.offset
                and np.array_equal(self.weights, other.weights))

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def value(self, x) -> float:
        x = _check_point(x, self.dim)
        return float(self.weights @ x + self.offset)

    def negated(self) -> "AffineFn":
        return AffineFn(-self.weights, -self.offset)


def _check_pieces(pieces, what: str) -> tuple[AffineFn, ...]:
    pieces = tuple(pieces)
    if not pieces:
        raise ValueError(f"{what} needs at least one affine piece")
    dim = pieces[0].dim
    if any(p.dim != dim for p in pieces):
        raise ValueError(f"{what} pieces must share one ambient dimension")
    return pieces


@dataclass(frozen=True)
class MaxAffine:
    """Pointwise maximum of finitely many affine pieces (convex)."""

    pieces: tuple[AffineFn, ...]

    def __post_init__(self):
        object.__setattr__(self, "pieces", _check_pieces(self.pieces, "MaxAffine"))

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    def value(self, x) -> float:
        return max(p.value(x) for p in self.pieces)

    def negated(self) -> "MinAffine":
        return MinAffine(tuple(p.negated() for p in self.pieces))


@dataclass(frozen=True)
class MinAffine:
    """Pointwise minimum of finitely many affine pieces (concave)."""

    pieces: tuple[AffineFn, ...]

    def __post_init__(self):
        object.__setattr__(self, "pieces", _check_pieces(self.pieces, "MinAffine"))

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    def value(self, x) -> float:
        return min(p.value(x) for p in self.pieces)

    def negated(self) -> "MaxAffine":
        return MaxAffine(tuple(p.negated() for p in self.pieces))


@dataclass(frozen=True)
class DcPwa:
    """Difference plus(x) - minus(x) of two max-of-affine functions."""

    plus: MaxAffine
    minus: MaxAffine

    def __post_init__(self):
        if self.plus.dim != self.minus.dim:
            raise ValueError("plus and minus parts must share one dimension")

    @property
    def dim(self) -> int:
        return self.plus.dim

    def value(self, x) -> float:
        x = _check_point(x, self.dim)
        return self.plus.value(x) - self.minus.value(x)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box {x : lower <= x <= upper}, finite on both sides."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _as_finite_vector(self.lower, "lower")
        hi = _as_finite_vector(self.upper, "upper")
        if lo.shape != hi.shape:
            raise ValueError("lower and upper must have equal length")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = _check_point(x, self.dim)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @classmethod
    def cube(cls, dim: int, lo: float, hi: float) -> "Box":
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))


PwaFn = AffineFn | MaxAffine | MinAffine | DcPwa


def evaluate(f: PwaFn, x) -> float:
    """Exact value of f at x; max/min are taken over all pieces."""
    return f.value(x)


def heaviside_closed(t: float) -> int:
    """Indicator of [0, inf): 1 if t >= 0 else 0.  NaN is rejected."""
    t = float(t)
    if math.isnan(t):
        raise ValueError("heaviside argument must not be NaN")
    return 1 if t >= 0.0 else 0


def heaviside_open(t: float) -> int:
    """Indicator of (0, inf): 1 if t > 0 else 0.

    Satisfies heaviside_open(t) == 1 - heaviside_closed(-t) for every finite t.
    """
    t = float(t)
    if math.isnan(t):
        raise ValueError("heaviside argument must not be NaN")
    return 1 if t > 0.0 else 0


def negate(f: MinAffine | MaxAffine) -> MaxAffine | MinAffine:
    """Structural negation: min-of-affine <-> max-of-affine, term-wise."""
    return f.negated()


def _affine_bounds(p: AffineFn, box: Box) -> tuple[float, float]:
    # Interval arithmetic: each coordinate contributes min/max of w*l, w*u.
    lo_terms = np.minimum(p.weights * box.lower, p.weights * box.upper)
    hi_terms = np.maximum(p.weights * box.lower, p.weights * box.upper)
    return float(lo_terms.sum() + p.offset), float(hi_terms.sum() + p.offset)


def lower_bound_on_box(f: PwaFn, box: Box) -> float:
    """A sound lower bound: f(x) >= result for every x in box."""
    if f.dim != box.dim:
        raise ValueError("function and box dimensions differ")
    if isinstance(f, AffineFn):
        return _affine_bounds(f, box)[0]
    if isinstance(f, MaxAffine):
        return max(_affine_bounds(p, box)[0] for p in f.pieces)
    if isinstance(f, MinAffine):
        return min(_affine_bounds(p, box)[0] for p in f.pieces)
    if isinstance(f, DcPwa):
        return lower_bound_on_box(f.plus, box) - upper_bound_on_box(f.minus, box)
    raise TypeError(f"unsupported function type {type(f).__name__}")


def upper_bound_on_box(f: PwaFn, box: Box) -> float:
    """A sound upper bound: f(x) <= result for every x in box."""
    if f.dim != box.dim:
        raise ValueError("function and box dimensions differ")
    if isinstance(f, AffineFn):
        return _affine_bounds(f, box)[1]
    if isinstance(f, MaxAffine):
        return max(_affine_bounds(p, box)[1] for p in f.pieces)
    if isinstance(f, MinAffine):
        return min(_affine_bounds(p, box)[1] for p in f.pieces)
    if isinstance(f, DcPwa):
        return upper_bound_on_box(f.plus, box) - lower_bound_on_box(f.minus, box)
    raise TypeError(f"unsupported function type {type(f).__name__}")
