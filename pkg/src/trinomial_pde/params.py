"""Monotonicity-preserving choice of the trinomial weight ``p`` and scale ``sigma0``.

The scheme is monotone when the scaled diagonal derivatives ``alpha_i`` of
``sigma0^-1 G_gamma sigma0^-1`` stay inside ``[alpha_lo, alpha_hi]``, the
ratio ``Lambda = alpha_hi / alpha_lo`` is below ``lambda(p, theta)`` and
``sigma0`` is scaled so that ``alpha_hi = Lambda / (2 p (Lambda - 1) + alpha_p)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .symmat import as_sym, min_eigenvalue

_REL_EQ = 1e-12


class MonotonicityWarning(UserWarning):
    """The chosen parameters do not guarantee a monotone scheme."""


@dataclass(frozen=True)
class GeneratorBounds:
    """Bounds on the diagonal of ``sigma_base^-1 G_gamma sigma_base^-1``.

    ``theta`` is the diagonal dominance defect: ``D[G~] <= (1 + theta) G~``.
    """

    theta: float
    alpha_lo: float
    alpha_hi: float
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.alpha_lo > 0.0:
            raise ValueError(f"alpha_lo must be > 0, got {self.alpha_lo}")
        if self.alpha_hi < self.alpha_lo:
            raise ValueError("alpha_hi must be >= alpha_lo")
        if self.theta < 0.0:
            raise ValueError("theta must be >= 0")

    @property
    def Lambda(self) -> float:
        return self.alpha_hi / self.alpha_lo

    def rescaled(self, factor: float) -> "GeneratorBounds":
        """Bounds seen through ``factor * sigma_base`` (they scale as factor**-2)."""
        f2 = factor * factor
        return GeneratorBounds(self.theta, self.alpha_lo / f2, self.alpha_hi / f2, self.dim)


@dataclass(frozen=True)
class MonotonicityParams:
    p: float
    sigma0: np.ndarray
    Lambda: float
    alpha_p: float
    lambda_at_p: float
    strict: bool
    theta: float = 0.0
    alpha_lo: float = float("nan")
    alpha_hi: float = float("nan")
    feasible: bool = True
    notes: tuple = field(default_factory=tuple)

    @property
    def dim(self) -> int:
        return self.sigma0.shape[0]


def lambda_of(p: float, theta: float, d: int) -> float:
    """Monotonicity threshold ``lambda(p, theta)`` for dimension ``d``."""
    if p <= 0.0:
        raise ValueError(f"p must be positive, got {p}")
    if d == 1:
        return math.inf
    num = 2.0 * p - theta - p * (d - 3) * theta
    return 1.0 + num / (2.0 * p * p * (1.0 + theta) * (d - 1))


def alpha_p_of(p: float, theta: float) -> float:
    return (p * (2.0 + 3.0 * theta) - theta) / (p * (1.0 + theta))


def p_lower(theta: float) -> float:
    return theta / (2.0 * (1.0 + theta))


def _argmax_lambda(theta: float, d: int) -> float:
    # d/dp of (a p - theta) / p^2 vanishes at p = 2 theta / a, a = 2 - (d-3) theta
    a = 2.0 - (d - 3) * theta
    return 2.0 * theta / a if a > 6.0 * theta else 1.0 / 3.0


def select_p(theta: float, Lambda: float, d: int) -> float:
    """Default ``p``: optimal for monotonicity, clamped to the admissible range."""
    if theta < 0.0 or Lambda < 1.0 or d < 1:
        raise ValueError("need theta >= 0, Lambda >= 1, d >= 1")
    if d == 1:
        theta = 0.0
    if theta >= 2.0 / d:
        warnings.warn(
            f"theta={theta:g} >= 2/d={2.0 / d:g}: monotonicity assumption violated, using p=1/3",
            MonotonicityWarning,
            stacklevel=2,
        )
        return 1.0 / 3.0
    if theta == 0.0:
        if Lambda == 1.0 or d == 1:
            p = 1.0 / 3.0
        else:
            p = min(1.0 / ((Lambda - 1.0) * (d - 1)), 1.0 / 3.0)
    else:
        p = _argmax_lambda(theta, d)
    return float(min(max(p, p_lower(theta)), 1.0 / 3.0))


def lambda_theta(theta: float, d: int) -> float:
    """``sup_p lambda(p, theta)`` over the admissible ``p`` range."""
    if d == 1 or theta == 0.0:
        return math.inf
    if theta >= 2.0 / d:
        return lambda_of(1.0 / 3.0, theta, d)
    return lambda_of(min(max(_argmax_lambda(theta, d), p_lower(theta)), 1.0 / 3.0), theta, d)


def build_params(
    bounds: GeneratorBounds,
    base_sigma0=None,
    *,
    p: float | None = None,
    sigma0_scale: float | None = None,
) -> MonotonicityParams:
    """Choose ``p`` and rescale ``base_sigma0`` per the monotonicity recipe.

    ``bounds`` are relative to ``base_sigma0`` (identity when omitted).
    Passing ``p`` or ``sigma0_scale`` overrides the automatic choice.
    """
    d = bounds.dim
    base = np.eye(d) if base_sigma0 is None else as_sym(base_sigma0)
    if base.shape != (d, d):
        raise ValueError(f"sigma0 has shape {base.shape}, bounds have dim {d}")
    if min_eigenvalue(base) <= 0.0:
        raise ValueError("base sigma0 must be positive definite")

    theta = 0.0 if d == 1 else bounds.theta
    Lam = bounds.Lambda
    notes = []
    feasible = theta < 2.0 / d
    if not feasible:
        notes.append(f"theta={theta:g} >= 2/d: monotonicity assumption violated")

    if p is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MonotonicityWarning)
            p = select_p(theta, Lam, d)
    if not 0.0 < p <= 1.0 / 3.0:
        raise ValueError(f"p must lie in (0, 1/3], got {p}")
    a_p = alpha_p_of(p, theta)
    lam_p = lambda_of(p, theta, d)

    if sigma0_scale is None:
        target_hi = Lam / (2.0 * p * (Lam - 1.0) + a_p)
        scale = math.sqrt(bounds.alpha_hi / target_hi)
    else:
        scale = float(sigma0_scale)
        if scale <= 0.0:
            raise ValueError("sigma0_scale must be positive")
    sigma0 = scale * base
    alpha_hi = bounds.alpha_hi / scale**2
    alpha_lo = bounds.alpha_lo / scale**2

    strict = Lam < lam_p and not math.isclose(Lam, lam_p, rel_tol=_REL_EQ)
    if not strict:
        notes.append(f"Lambda={Lam:g} is not strictly below lambda(p, theta)={lam_p:g}")
    if Lam >= lambda_theta(theta, d) and feasible:
        feasible = False
        notes.append(f"Lambda={Lam:g} >= Lambda_theta={lambda_theta(theta, d):g}")
    for msg in notes:
        warnings.warn(msg, MonotonicityWarning, stacklevel=2)

    return MonotonicityParams(
        p=float(p),
        sigma0=sigma0,
        Lambda=Lam,
        alpha_p=a_p,
        lambda_at_p=lam_p,
        strict=strict,
        theta=theta,
        alpha_lo=alpha_lo,
        alpha_hi=alpha_hi,
        feasible=feasible,
        notes=tuple(notes),
    )


def _worst_terms(alpha: np.ndarray, p: float, alpha_p: float) -> np.ndarray:
    # xi_i^2 is 0 or 1/p; take the larger of the two per component
    return np.maximum(2.0 * alpha, 1.0 / p + 2.0 * alpha - alpha_p * alpha / p)


def monotone_weight(params: MonotonicityParams, gen_diag, h: float, lipschitz_bound: float) -> np.ndarray:
    """Smallest step weight ``1 - C sqrt(h) + I / (1 - p)`` over the support, per row."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    alpha = np.atleast_2d(np.asarray(gen_diag, dtype=np.float64))
    p = params.p
    d = alpha.shape[1]
    low_i = p * d - p * np.sum(_worst_terms(alpha, p, params.alpha_p), axis=1)
    return 1.0 - lipschitz_bound * math.sqrt(h) + low_i / (1.0 - p)


def check_monotone_coefficient(params: MonotonicityParams, gen_diag, h: float, lipschitz_bound: float) -> bool:
    """True iff every step weight is nonnegative for the given scaled diagonal(s)."""
    return bool(np.all(monotone_weight(params, gen_diag, h, lipschitz_bound) >= 0.0))


def worst_case_monotone(params: MonotonicityParams, h: float, lipschitz_bound: float) -> bool:
    """Coefficient check with each ``alpha_i`` at its least favourable bound."""
    d = params.dim
    lo = np.full(d, params.alpha_lo)
    hi = np.full(d, params.alpha_hi)
    terms = np.maximum(_worst_terms(lo, params.p, params.alpha_p), _worst_terms(hi, params.p, params.alpha_p))
    low_i = params.p * d - params.p * np.sum(terms)
    w = 1.0 - lipschitz_bound * math.sqrt(h) + low_i / (1.0 - params.p)
    return bool(w >= 0.0)
