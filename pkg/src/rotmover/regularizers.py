"""Regularizer families: phi, phi', psi' and psi'' for each supported divergence.

Each family is described by a convex element-wise potential phi with conjugate
psi; the solvers only ever touch the four maps

    phi(x), phi_prime(x), psi_prime(theta) = (phi')^{-1}(theta), psi_prime2(theta),

so a :class:`Regularizer` bundles those callables with the metadata the
projection and solver layers dispatch on (assumption class, Newton strategy,
domains, phi'(0)).

The callables are unchecked fast paths operating on numpy arrays; use
:func:`evaluate` for scalar access with domain validation. Exponentials clamp
their argument at ``EXP_CLAMP`` to avoid overflow; the practical consequence
is a minimum usable penalty of roughly ``max(gamma) / EXP_CLAMP`` for the
entropic families (BSKL, FDLOG), below which the dual saturates and the
solvers report numerical underflow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DomainViolation, MissingParam, ParamOutOfRange

EXP_CLAMP = 700.0  # exp(709) is the float64 ceiling; keep headroom


class Kind(enum.Enum):
    BSKL = "bskl"      # Boltzmann-Shannon entropy / KL
    BIS = "bis"        # Burg entropy / Itakura-Saito
    FDLOG = "fdlog"    # Fermi-Dirac entropy / logistic loss
    BETA = "beta"      # beta potential, 0 < beta < 1
    LPQN = "lpqn"      # lp quasi-norm, 0 < p < 1
    LPN = "lpn"        # lp norm, 1 < p < inf
    EUC = "euc"        # Euclidean
    HELL = "hell"      # Hellinger
    WEUC = "weuc"      # weighted Euclidean


class AssumptionClass(enum.Enum):
    A = "A"  # dom phi subset of the nonnegatives, alternate scaling applies
    B = "B"  # signed dual, needs the nonnegativity projection


class NewtonStrategy(enum.Enum):
    CLOSED_FORM = "closed_form"
    GLOBAL_NEWTON = "global_newton"
    SPLIT_CONVEX_CONCAVE = "split_convex_concave"


CLASS_A = frozenset({Kind.BSKL, Kind.BIS, Kind.FDLOG, Kind.BETA, Kind.LPQN})
CLASS_B = frozenset({Kind.LPN, Kind.EUC, Kind.HELL, Kind.WEUC})


@dataclass(frozen=True, eq=False)
class Regularizer:
    kind: Kind
    assumption_class: AssumptionClass
    newton_strategy: NewtonStrategy
    phi: Callable[[np.ndarray], np.ndarray]
    phi_prime: Callable[[np.ndarray], np.ndarray]
    psi_prime: Callable[[np.ndarray], np.ndarray]
    psi_prime2: Callable[[np.ndarray], np.ndarray]
    primal_domain_lo: float
    primal_domain_hi: float
    primal_open_lo: bool
    primal_open_hi: bool
    dual_domain_hi: float        # sup dom psi, exclusive when finite
    phi_prime_at_zero: float     # -inf for class A, 0 for class B
    beta: float | None = None
    power: float | None = None
    weights: np.ndarray | None = None

    def in_dual_domain(self, theta) -> bool:
        t = np.asarray(theta, dtype=np.float64)
        return bool(np.all(np.isfinite(t)) and np.all(t < self.dual_domain_hi))


def _safe_xlogx(x: np.ndarray) -> np.ndarray:
    # x*log(x) with the 0*log(0) = 0 convention, no warnings
    xx = np.asarray(x, dtype=np.float64)
    return xx * np.log(np.where(xx > 0, xx, 1.0))


def _bskl():
    def phi(x):
        return _safe_xlogx(x) - np.asarray(x, dtype=np.float64) + 1.0

    def phi_prime(x):
        return np.log(x)

    def psi_prime(t):
        return np.exp(np.minimum(t, EXP_CLAMP))

    return phi, phi_prime, psi_prime, psi_prime


def _bis():
    def phi(x):
        return x - np.log(x) - 1.0

    def phi_prime(x):
        return 1.0 - 1.0 / np.asarray(x, dtype=np.float64)

    def psi_prime(t):
        return 1.0 / (1.0 - np.asarray(t, dtype=np.float64))

    def psi_prime2(t):
        # square of the element-wise inverse, cheaper than a fresh power
        r = 1.0 / (1.0 - np.asarray(t, dtype=np.float64))
        return r * r

    return phi, phi_prime, psi_prime, psi_prime2


def _fdlog():
    def phi(x):
        xx = np.asarray(x, dtype=np.float64)
        return _safe_xlogx(xx) + _safe_xlogx(1.0 - xx)

    def phi_prime(x):
        xx = np.asarray(x, dtype=np.float64)
        return np.log(xx) - np.log(1.0 - xx)

    def psi_prime(t):
        e = np.exp(np.minimum(t, EXP_CLAMP))
        return e / (1.0 + e)

    def psi_prime2(t):
        e = np.exp(np.minimum(t, EXP_CLAMP))
        return e / (1.0 + e) ** 2

    return phi, phi_prime, psi_prime, psi_prime2


def _beta_family(b: float):
    c = 1.0 / (b * (b - 1.0))
    e = 1.0 / (b - 1.0)  # negative

    def phi(x):
        xx = np.asarray(x, dtype=np.float64)
        return (np.power(xx, b) - b * xx + b - 1.0) * c

    def phi_prime(x):
        return (np.power(x, b - 1.0) - 1.0) * e

    def psi_prime(t):
        u = (b - 1.0) * np.asarray(t, dtype=np.float64) + 1.0
        return np.power(u, e)

    def psi_prime2(t):
        u = (b - 1.0) * np.asarray(t, dtype=np.float64) + 1.0
        return np.power(u, e - 1.0)

    return phi, phi_prime, psi_prime, psi_prime2


def _lpqn(p: float):
    e = 1.0 / (p - 1.0)               # negative
    c = math.pow(p, -e)               # p^(-1/(p-1))
    c2 = -c * e                       # positive: -c/(p-1)

    def phi(x):
        return -np.power(x, p)

    def phi_prime(x):
        return -p * np.power(x, p - 1.0)

    def psi_prime(t):
        return c * np.power(-np.asarray(t, dtype=np.float64), e)

    def psi_prime2(t):
        return c2 * np.power(-np.asarray(t, dtype=np.float64), e - 1.0)

    return phi, phi_prime, psi_prime, psi_prime2


def _lpn(p: float):
    e = 1.0 / (p - 1.0)
    c = math.pow(p, -e)
    c2 = c * e

    def phi(x):
        return np.power(np.abs(x), p)

    def phi_prime(x):
        xx = np.asarray(x, dtype=np.float64)
        return p * np.sign(xx) * np.power(np.abs(xx), p - 1.0)

    def psi_prime(t):
        tt = np.asarray(t, dtype=np.float64)
        return c * np.sign(tt) * np.power(np.abs(tt), e)

    def psi_prime2(t):
        # at p == 2 the exponent is 0 and 0**0 == 1 keeps this the constant 1/2
        return c2 * np.power(np.abs(t), e - 1.0)

    return phi, phi_prime, psi_prime, psi_prime2


def _euc():
    def phi(x):
        xx = np.asarray(x, dtype=np.float64)
        return 0.5 * xx * xx

    def phi_prime(x):
        return np.asarray(x, dtype=np.float64) + 0.0

    def psi_prime(t):
        return np.asarray(t, dtype=np.float64) + 0.0

    def psi_prime2(t):
        return np.ones_like(np.asarray(t, dtype=np.float64))

    return phi, phi_prime, psi_prime, psi_prime2


def _hell():
    def phi(x):
        xx = np.asarray(x, dtype=np.float64)
        return -np.sqrt(np.maximum(1.0 - xx * xx, 0.0))

    def phi_prime(x):
        xx = np.asarray(x, dtype=np.float64)
        return xx / np.sqrt(1.0 - xx * xx)

    def psi_prime(t):
        tt = np.asarray(t, dtype=np.float64)
        return tt / np.sqrt(1.0 + tt * tt)

    def psi_prime2(t):
        tt = np.asarray(t, dtype=np.float64)
        return np.power(1.0 + tt * tt, -1.5)

    return phi, phi_prime, psi_prime, psi_prime2


def _weuc(w):
    def phi(x):
        xx = np.asarray(x, dtype=np.float64)
        return 0.5 * w * xx * xx

    def phi_prime(x):
        return w * np.asarray(x, dtype=np.float64)

    def psi_prime(t):
        return np.asarray(t, dtype=np.float64) / w

    def psi_prime2(t):
        return np.ones_like(np.asarray(t, dtype=np.float64)) / w

    return phi, phi_prime, psi_prime, psi_prime2


def _check_monotone(reg: Regularizer) -> None:
    # cheap construction-time sanity: psi' strictly increasing on a sample grid
    # stay inside [-25, 25]: sigmoid-shaped psi' saturates to exactly 1.0 in
    # float64 further out, which would fake a monotonicity failure
    hi = reg.dual_domain_hi
    top = 25.0 if not math.isfinite(hi) else hi - max(1e-6, abs(hi) * 1e-6)
    grid = np.linspace(min(-25.0, top - 50.0), top, 41)
    if reg.weights is not None and np.ndim(reg.weights) > 0:
        vals = grid / np.asarray(reg.weights).flat[0]  # matrix weights share one sign
    else:
        vals = np.asarray(reg.psi_prime(grid), dtype=np.float64)
    if not np.all(np.diff(vals) > 0):
        raise ParamOutOfRange(f"psi_prime not strictly increasing for {reg.kind.name}")


def make_regularizer(kind, beta: float | None = None, power: float | None = None,
                     weights=None) -> Regularizer:
    """Build a validated :class:`Regularizer`.

    ``beta`` applies to BETA only (open interval (0, 1)), ``power`` to LPQN
    (0 < p < 1) and LPN (1 < p < inf), ``weights`` to WEUC (positive scalar
    or matrix, broadcast against the plan). LPN with p == 2 is flagged
    closed-form; the dual solver routes it to the Euclidean fast path with
    a doubled penalty, everything else about it is plain LPN.
    """
    if isinstance(kind, str):
        try:
            kind = Kind(kind.lower())
        except ValueError as exc:
            raise ParamOutOfRange(f"unknown regularizer kind {kind!r}") from exc

    if beta is not None and kind is not Kind.BETA:
        raise ParamOutOfRange("beta parameter only applies to the BETA family")
    if power is not None and kind not in (Kind.LPQN, Kind.LPN):
        raise ParamOutOfRange("power parameter only applies to LPQN and LPN")
    if weights is not None and kind is not Kind.WEUC:
        raise ParamOutOfRange("weights only apply to WEUC")

    inf = math.inf
    if kind is Kind.BSKL:
        fns = _bskl()
        reg = Regularizer(kind, AssumptionClass.A, NewtonStrategy.CLOSED_FORM, *fns,
                          primal_domain_lo=0.0, primal_domain_hi=inf,
                          primal_open_lo=False, primal_open_hi=True,
                          dual_domain_hi=inf, phi_prime_at_zero=-inf)
    elif kind is Kind.BIS:
        fns = _bis()
        reg = Regularizer(kind, AssumptionClass.A, NewtonStrategy.GLOBAL_NEWTON, *fns,
                          primal_domain_lo=0.0, primal_domain_hi=inf,
                          primal_open_lo=True, primal_open_hi=True,
                          dual_domain_hi=1.0, phi_prime_at_zero=-inf)
    elif kind is Kind.FDLOG:
        fns = _fdlog()
        reg = Regularizer(kind, AssumptionClass.A, NewtonStrategy.SPLIT_CONVEX_CONCAVE, *fns,
                          primal_domain_lo=0.0, primal_domain_hi=1.0,
                          primal_open_lo=False, primal_open_hi=False,
                          dual_domain_hi=inf, phi_prime_at_zero=-inf)
    elif kind is Kind.BETA:
        if beta is None:
            raise MissingParam("BETA requires beta")
        if not 0.0 < beta < 1.0:
            raise ParamOutOfRange(f"beta must lie strictly inside (0, 1), got {beta}")
        fns = _beta_family(beta)
        reg = Regularizer(kind, AssumptionClass.A, NewtonStrategy.GLOBAL_NEWTON, *fns,
                          primal_domain_lo=0.0, primal_domain_hi=inf,
                          primal_open_lo=False, primal_open_hi=True,
                          dual_domain_hi=1.0 / (1.0 - beta), phi_prime_at_zero=-inf,
                          beta=beta)
    elif kind is Kind.LPQN:
        if power is None:
            raise MissingParam("LPQN requires power")
        if not 0.0 < power < 1.0:
            raise ParamOutOfRange(f"LPQN power must lie strictly inside (0, 1), got {power}")
        fns = _lpqn(power)
        reg = Regularizer(kind, AssumptionClass.A, NewtonStrategy.GLOBAL_NEWTON, *fns,
                          primal_domain_lo=0.0, primal_domain_hi=inf,
                          primal_open_lo=False, primal_open_hi=True,
                          dual_domain_hi=0.0, phi_prime_at_zero=-inf,
                          power=power)
    elif kind is Kind.LPN:
        if power is None:
            raise MissingParam("LPN requires power")
        if not (1.0 < power < inf):
            raise ParamOutOfRange(f"LPN power must lie strictly inside (1, inf), got {power}")
        strategy = (NewtonStrategy.CLOSED_FORM if power == 2.0
                    else NewtonStrategy.SPLIT_CONVEX_CONCAVE)
        fns = _lpn(power)
        reg = Regularizer(kind, AssumptionClass.B, strategy, *fns,
                          primal_domain_lo=-inf, primal_domain_hi=inf,
                          primal_open_lo=True, primal_open_hi=True,
                          dual_domain_hi=inf, phi_prime_at_zero=0.0,
                          power=power)
    elif kind is Kind.EUC:
        fns = _euc()
        reg = Regularizer(kind, AssumptionClass.B, NewtonStrategy.CLOSED_FORM, *fns,
                          primal_domain_lo=-inf, primal_domain_hi=inf,
                          primal_open_lo=True, primal_open_hi=True,
                          dual_domain_hi=inf, phi_prime_at_zero=0.0)
    elif kind is Kind.HELL:
        fns = _hell()
        reg = Regularizer(kind, AssumptionClass.B, NewtonStrategy.SPLIT_CONVEX_CONCAVE, *fns,
                          primal_domain_lo=-1.0, primal_domain_hi=1.0,
                          primal_open_lo=False, primal_open_hi=False,
                          dual_domain_hi=inf, phi_prime_at_zero=0.0)
    elif kind is Kind.WEUC:
        if weights is None:
            raise MissingParam("WEUC requires weights")
        w = np.asarray(weights, dtype=np.float64)
        if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ParamOutOfRange("WEUC weights must be positive and finite")
        if w.ndim == 0:
            w = float(w)
        else:
            w = w.copy()
            w.setflags(write=False)
        fns = _weuc(w)
        reg = Regularizer(kind, AssumptionClass.B, NewtonStrategy.CLOSED_FORM, *fns,
                          primal_domain_lo=-inf, primal_domain_hi=inf,
                          primal_open_lo=True, primal_open_hi=True,
                          dual_domain_hi=inf, phi_prime_at_zero=0.0,
                          weights=w if isinstance(w, np.ndarray) else np.float64(w))
    else:  # pragma: no cover
        raise ParamOutOfRange(f"unknown regularizer kind {kind!r}")

    _check_monotone(reg)
    return reg


_FN_NAMES = ("phi", "phi_prime", "psi_prime", "psi_prime2")


def evaluate(reg: Regularizer, fn: str, x: float) -> float:
    """Scalar evaluation with domain checks.

    ``fn`` is one of phi, phi_prime, psi_prime, psi_prime2. phi accepts the
    closed domain (with the usual 0*log(0) style conventions), phi_prime
    needs the interior, the psi maps need theta < sup dom psi. Out-of-domain
    input raises DomainViolation.
    """
    if fn not in _FN_NAMES:
        raise ParamOutOfRange(f"fn must be one of {_FN_NAMES}, got {fn!r}")
    if reg.weights is not None and np.ndim(reg.weights) > 0:
        raise ParamOutOfRange("scalar evaluate is undefined for matrix-weight WEUC")
    xv = float(x)
    if not math.isfinite(xv):
        raise DomainViolation(f"{fn} argument must be finite, got {xv!r}")
    if fn in ("phi", "phi_prime"):
        lo, hi = reg.primal_domain_lo, reg.primal_domain_hi
        interior = fn == "phi_prime"
        if interior:
            ok = lo < xv < hi
        else:
            ok = (lo < xv or (xv == lo and not reg.primal_open_lo)) and \
                 (xv < hi or (xv == hi and not reg.primal_open_hi))
        if not ok:
            raise DomainViolation(f"{xv!r} outside dom phi of {reg.kind.name}")
    else:
        if not xv < reg.dual_domain_hi:
            raise DomainViolation(f"{xv!r} outside dom psi of {reg.kind.name}")
    out = getattr(reg, fn)(np.float64(xv))
    return float(out)
