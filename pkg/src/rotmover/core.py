"""Shared types, error classes and histogram/divergence primitives.

Everything downstream (regularizers, projections, solvers, CLI) speaks the
vocabulary defined here: validated marginal histograms, cost matrices,
transport plans, solver options and reports, plus the Bregman divergence
and Bregman information sums used for diagnostics and primal bisection.

All arithmetic is float64. Large accumulations go through ``np.sum`` /
``np.vdot``, which use pairwise (respectively blocked BLAS) summation, so
m*n-term reductions stay accurate at the sizes we care about (up to 4096).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

NORMALIZATION_TOL = 1e-9   # gate for sum(p) == 1 in validate_histogram
DEFAULT_MAIN_TOL = 1e-8


class RotError(Exception):
    """Base class for all errors raised by this package."""


class NegativeEntry(RotError):
    pass


class NotNormalized(RotError):
    pass


class EmptyInput(RotError):
    pass


class ShapeMismatch(RotError):
    pass


class DomainViolation(RotError):
    pass


class ParamOutOfRange(RotError):
    pass


class MissingParam(RotError):
    pass


class WrongClass(RotError):
    pass


class AuxDidNotConverge(RotError):
    pass


class DomainEscape(RotError):
    pass


class NumericalUnderflow(RotError):
    pass


class BracketTooNarrow(RotError):
    pass


class AlphaAboveAlphaPrime(RotError):
    pass


class AllMassRemoved(RotError):
    pass


class OracleDidNotConverge(RotError):
    pass


def _frozen_array(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Histogram:
    """A validated discrete probability vector.

    Construct through :func:`validate_histogram`; the raw constructor does
    not re-check anything.
    """

    values: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Nonnegative finite ground costs, shape (m, n)."""

    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """A coupling with recorded marginal defects.

    ``row_marginal_error`` / ``col_marginal_error`` are the max-norm gaps
    between the plan's marginals and the target histograms at the moment
    the solver stopped.
    """

    entries: np.ndarray
    row_marginal_error: float
    col_marginal_error: float


class Termination(enum.Enum):
    MARGINAL_LINF = "marginal"
    PLAN_VARIATION = "plan"
    DISTANCE_VARIATION = "distance"


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by every solver entry point.

    ``lam`` is the regularization penalty used by :func:`solve_dual`;
    the solvers that take an explicit penalty argument ignore it.
    ``aux_tol`` defaults to ``main_tol**2`` (None means "derive it"),
    which for variation-based termination keeps the inner projections at
    least as tight as the square of the outer tolerance.
    """

    lam: float = 1.0
    main_tol: float = DEFAULT_MAIN_TOL
    aux_tol: float | None = None
    max_main_iters: int = 10000
    max_aux_iters: int = 50
    termination: Termination = Termination.MARGINAL_LINF
    check_every: int = 1
    symmetrize: bool = False

    def __post_init__(self):
        if not self.lam > 0:
            raise ParamOutOfRange(f"lam must be positive, got {self.lam}")
        if self.main_tol <= 0:
            raise ParamOutOfRange("main_tol must be positive")
        if self.effective_aux_tol() > self.main_tol:
            raise ParamOutOfRange("aux_tol must not exceed main_tol")
        if self.max_main_iters < 1 or self.max_aux_iters < 1:
            raise ParamOutOfRange("iteration budgets must be >= 1")
        if self.check_every < 1:
            raise ParamOutOfRange("check_every must be >= 1")

    def effective_aux_tol(self) -> float:
        return self.main_tol ** 2 if self.aux_tol is None else self.aux_tol

    def with_lam(self, lam: float) -> "SolverOptions":
        return replace(self, lam=lam)


@dataclass(frozen=True)
class SolverReport:
    """What a solve did: iteration count, final defect, distance, flag.

    ``converged`` is only set when the final marginal error meets
    ``main_tol``, whichever termination criterion stopped the loop.
    """

    main_iterations: int
    final_marginal_error: float
    distance: float
    lambda_used: float
    converged: bool


def _as_vector(p) -> np.ndarray:
    if isinstance(p, Histogram):
        return p.values
    return np.asarray(p, dtype=np.float64)


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, (CostMatrix, TransportPlan)):
        a = a.values if isinstance(a, CostMatrix) else a.entries
    return np.asarray(a, dtype=np.float64)


def validate_histogram(raw) -> Histogram:
    """Check a raw vector and wrap it; never renormalizes.

    Raises EmptyInput, NegativeEntry, or NotNormalized (sum off by more
    than 1e-9). Call :func:`normalize` first if the input is unnormalized
    on purpose.
    """
    v = np.asarray(raw, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise EmptyInput("histogram must be a non-empty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise DomainViolation("histogram entries must be finite")
    if np.any(v < 0):
        i = int(np.argmax(v < 0))
        raise NegativeEntry(f"entry {i} is negative ({v[i]!r})")
    s = float(np.sum(v))
    if abs(s - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"entries sum to {s!r}, expected 1")
    return Histogram(_frozen_array(v))


def normalize(raw) -> Histogram:
    """Explicitly rescale nonnegative weights to sum to one."""
    v = np.asarray(raw, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise EmptyInput("histogram must be a non-empty 1-d vector")
    if np.any(v < 0):
        raise NegativeEntry("cannot normalize a vector with negative entries")
    s = float(np.sum(v))
    if s <= 0 or not math.isfinite(s):
        raise DomainViolation("cannot normalize, total mass is not positive and finite")
    return validate_histogram(v / s)


def validate_cost(raw) -> CostMatrix:
    """Wrap a cost matrix, rejecting negatives, non-finite entries and bad shapes."""
    g = np.asarray(raw, dtype=np.float64)
    if g.ndim != 2 or g.size == 0:
        raise EmptyInput("cost must be a non-empty 2-d matrix")
    if not np.all(np.isfinite(g)):
        raise DomainViolation("cost entries must be finite")
    if np.any(g < 0):
        raise DomainViolation("cost entries must be nonnegative")
    return CostMatrix(_frozen_array(g))


def marginal_error(plan, p, q) -> float:
    """Max-norm marginal defect of ``plan`` against targets ``p`` and ``q``."""
    pi = _as_matrix(plan)
    pv = _as_vector(p)
    qv = _as_vector(q)
    if pi.ndim != 2 or pi.shape != (pv.shape[0], qv.shape[0]):
        raise ShapeMismatch(
            f"plan shape {pi.shape} does not match marginals ({pv.shape[0]}, {qv.shape[0]})"
        )
    row = float(np.max(np.abs(pi.sum(axis=1) - pv)))
    col = float(np.max(np.abs(pi.sum(axis=0) - qv)))
    return max(row, col)


def bregman_divergence(reg, pi, xi) -> float:
    """Sum of element-wise Bregman divergences B_phi(pi_ij || xi_ij).

    ``pi`` must lie in dom phi and ``xi`` in its interior (the divergence
    needs phi'(xi)). Scalars and matrices both work.
    """
    piv = np.atleast_1d(_as_matrix(pi))
    xiv = np.atleast_1d(_as_matrix(xi))
    if piv.shape != xiv.shape:
        raise ShapeMismatch(f"shapes {piv.shape} and {xiv.shape} differ")
    _require_primal_domain(reg, piv, interior=False)
    _require_primal_domain(reg, xiv, interior=True)
    val = (
        np.sum(reg.phi(piv))
        - np.sum(reg.phi(xiv))
        - np.sum((piv - xiv) * reg.phi_prime(xiv))
    )
    return float(val)


def bregman_information(reg, pi) -> float:
    """Sum of phi over the entries of ``pi`` (phi of the plan)."""
    piv = np.atleast_1d(_as_matrix(pi))
    _require_primal_domain(reg, piv, interior=False)
    return float(np.sum(reg.phi(piv)))


def _require_primal_domain(reg, x: np.ndarray, interior: bool) -> None:
    lo, hi = reg.primal_domain_lo, reg.primal_domain_hi
    lo_open, hi_open = reg.primal_open_lo, reg.primal_open_hi
    if interior:
        bad = (x <= lo) | (x >= hi)
    else:
        bad = (x < lo) | (x > hi)
        if lo_open:
            bad |= x == lo
        if hi_open:
            bad |= x == hi
    if np.any(bad):
        where = "interior of dom phi" if interior else "dom phi"
        raise DomainViolation(
            f"value {float(x[bad][0])!r} outside {where} [{lo}, {hi}] for {reg.kind.name}"
        )
