"""Trinomial increments, the derivative kernels and the one-step operator.

For ``xi`` with i.i.d. components taking ``+-1/sqrt(p)`` with probability
``p/2`` each and ``0`` otherwise, a function ``phi`` sampled at
``x + sqrt(h) sigma0 xi`` yields

* ``D0 = E[phi]``,
* ``D1 = E[phi K1]`` with ``K1 = sigma0^-1 xi / sqrt(h)``,
* ``D2 = E[phi K2]`` with
  ``K2 = sigma0^-1 [(1-p) xi xi^T - (1-3p) D[xi xi^T] - 2p I] sigma0^-1 / ((1-p) h)``,

and one step of the scheme is ``D0 + h F(t, x, D0, D1, D2)`` where
``F = G - sigma0^2 : gamma / 2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import _accel
from .symmat import as_sym, sym_inv

MAX_ENUM_DIM = 12


class BudgetExceededError(RuntimeError):
    """Requested exact enumeration or lattice is larger than the allowed budget."""


@dataclass(frozen=True)
class SparsityMask:
    """Which Hessian entries a generator reads. ``pairs`` are ``(i, j)`` with ``i <= j``."""

    dim: int
    pairs: tuple
    kind: str = "custom"

    @classmethod
    def diagonal(cls, d: int) -> "SparsityMask":
        return cls(d, tuple((i, i) for i in range(d)), "diagonal")

    @classmethod
    def tridiagonal(cls, d: int) -> "SparsityMask":
        pairs = [(i, i) for i in range(d)] + [(i, i + 1) for i in range(d - 1)]
        return cls(d, tuple(sorted(pairs)), "tridiagonal")

    @classmethod
    def full(cls, d: int) -> "SparsityMask":
        return cls(d, tuple((i, j) for i in range(d) for j in range(i, d)), "full")

    @property
    def count(self) -> int:
        """Number of matrix entries covered, counting ``(i, j)`` and ``(j, i)`` separately."""
        return sum(1 if i == j else 2 for i, j in self.pairs)

    @property
    def is_diagonal(self) -> bool:
        return all(i == j for i, j in self.pairs)

    def union(self, other: "SparsityMask") -> "SparsityMask":
        pairs = tuple(sorted(set(self.pairs) | set(other.pairs)))
        kind = self.kind if set(pairs) == set(self.pairs) else "custom"
        return SparsityMask(self.dim, pairs, kind)

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim), dtype=bool)
        for i, j in self.pairs:
            m[i, j] = m[j, i] = True
        return m

    @classmethod
    def from_matrix(cls, m) -> "SparsityMask":
        m = np.asarray(m, dtype=bool)
        m = m | m.T
        d = m.shape[0]
        return cls(d, tuple((i, j) for i in range(d) for j in range(i, d) if m[i, j]))


@dataclass(frozen=True, eq=False)
class TrinomialSpec:
    p: float
    sigma0: np.ndarray
    sigma0_inv: np.ndarray

    @classmethod
    def create(cls, p: float, sigma0) -> "TrinomialSpec":
        if not 0.0 < p <= 1.0 / 3.0:
            raise ValueError(f"p must lie in (0, 1/3], got {p}")
        s = as_sym(sigma0)
        return cls(float(p), s, sym_inv(s))

    @classmethod
    def from_params(cls, params) -> "TrinomialSpec":
        return cls.create(params.p, params.sigma0)

    @property
    def dim(self) -> int:
        return self.sigma0.shape[0]

    @property
    def jump(self) -> float:
        return 1.0 / math.sqrt(self.p)

    @property
    def sigma0_diagonal(self) -> bool:
        return bool(np.all(self.sigma0 == np.diag(np.diag(self.sigma0))))


class Outcome(NamedTuple):
    codes: np.ndarray
    probability: float
    xi: np.ndarray


class StepEvaluation(NamedTuple):
    d0: np.ndarray | float
    d1: np.ndarray
    d2: np.ndarray


def support_arrays(spec: TrinomialSpec, max_dim: int = MAX_ENUM_DIM):
    """All ``3**d`` outcomes as ``(codes, probabilities, xi)`` in lexicographic code order."""
    d = spec.dim
    if d > max_dim:
        raise BudgetExceededError(f"3^{d} outcomes exceed the enumeration budget (d <= {max_dim})")
    codes = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int8).reshape(-1, d)
    single = np.where(codes != 0, spec.p / 2.0, 1.0 - spec.p)
    probs = np.prod(single, axis=1)
    return codes, probs, codes * spec.jump


def enumerate_support(spec: TrinomialSpec, max_dim: int = MAX_ENUM_DIM) -> list[Outcome]:
    codes, probs, xi = support_arrays(spec, max_dim)
    return [Outcome(c, float(q), x) for c, q, x in zip(codes, probs, xi)]


class CounterStream:
    """Keyed draws: the code for ``(seed, path, step, component)`` is a pure function of the key."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def codes(self, paths, step: int, dim: int, p: float) -> np.ndarray:
        return _accel.ternary_codes(self.seed, np.atleast_1d(np.asarray(paths, dtype=np.int64)), step, dim, p)


def sample_xi(spec: TrinomialSpec, stream: CounterStream, path: int = 0, step: int = 0) -> Outcome:
    codes = stream.codes([path], step, spec.dim, spec.p)[0]
    prob = float(np.prod(np.where(codes != 0, spec.p / 2.0, 1.0 - spec.p)))
    return Outcome(codes, prob, codes * spec.jump)


def _xi_of(outcome) -> np.ndarray:
    if isinstance(outcome, Outcome):
        return np.asarray(outcome.xi, dtype=np.float64)
    return np.asarray(outcome, dtype=np.float64)


def kernel_k1(spec: TrinomialSpec, outcome, h: float) -> np.ndarray:
    """``sigma0^-1 xi / sqrt(h)``; accepts one outcome or an ``(m, d)`` stack of xi."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    xi = _xi_of(outcome)
    return xi @ spec.sigma0_inv.T / math.sqrt(h)


def kernel_k2(spec: TrinomialSpec, outcome, h: float, mask: SparsityMask | None = None) -> np.ndarray:
    """Second-derivative kernel, zero outside ``mask``; ``(d, d)`` or ``(m, d, d)``."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    p = spec.p
    xi = _xi_of(outcome)
    single = xi.ndim == 1
    xi = np.atleast_2d(xi)
    d = xi.shape[1]
    outer = xi[:, :, None] * xi[:, None, :]
    m = (1.0 - p) * outer
    idx = np.arange(d)
    m[:, idx, idx] -= (1.0 - 3.0 * p) * xi * xi + 2.0 * p
    s = spec.sigma0_inv
    k2 = s @ m @ s / ((1.0 - p) * h)
    if mask is not None:
        k2 = k2 * mask.matrix()
    return k2[0] if single else k2


def k2_pairs(spec: TrinomialSpec, xi: np.ndarray, h: float, pairs: Sequence) -> np.ndarray:
    """K2 entries at ``pairs`` for an ``(m, d)`` stack of xi, without forming ``(m, d, d)``."""
    p = spec.p
    s = spec.sigma0_inv
    xi = np.atleast_2d(xi)
    a = np.array([i for i, _ in pairs], dtype=np.intp)
    b = np.array([j for _, j in pairs], dtype=np.intp)
    scale = 1.0 / ((1.0 - p) * h)
    if spec.sigma0_diagonal:
        sd = np.diag(s)
        same = a == b
        if same.all():
            # (1-p) xi^2 - (1-3p) xi^2 - 2p = 2p (xi^2 - 1)
            return (xi[:, a] ** 2 - 1.0) * (2.0 * p * sd[a] * sd[a] * scale)
        out = (1.0 - p) * xi[:, a] * xi[:, b]
        if same.any():
            out[:, same] -= (1.0 - 3.0 * p) * xi[:, a[same]] ** 2 + 2.0 * p
        return out * (sd[a] * sd[b] * scale)
    eta = xi @ s.T
    sq = s[a, :] * s[:, b].T  # (P, d): S_ak S_kb
    s2 = (s @ s)[a, b]
    out = (1.0 - p) * eta[:, a] * eta[:, b] - (1.0 - 3.0 * p) * (xi * xi) @ sq.T - 2.0 * p * s2
    return out * scale


def step_expectations(
    spec: TrinomialSpec,
    values,
    h: float,
    mask: SparsityMask | None = None,
    xi: np.ndarray | None = None,
) -> StepEvaluation:
    """``(D0, D1, D2)`` from function values at the children.

    Exact mode (``xi`` is None): ``values`` follow :func:`support_arrays` order.
    Monte Carlo mode: ``values[k]`` pairs with sampled ``xi[k]``; sample means.
    """
    values = np.asarray(values, dtype=np.float64)
    if xi is None:
        _, probs, xs = support_arrays(spec)
        if values.shape[0] != probs.shape[0]:
            raise ValueError(f"expected {probs.shape[0]} values, got {values.shape[0]}")
        w = probs
    else:
        xs = np.atleast_2d(np.asarray(xi, dtype=np.float64))
        if values.shape[0] != xs.shape[0]:
            raise ValueError(f"{values.shape[0]} values for {xs.shape[0]} outcomes")
        w = np.full(xs.shape[0], 1.0 / xs.shape[0])
    mask = mask or SparsityMask.full(spec.dim)
    wv = w * values
    d0 = float(np.sum(wv))
    d1 = wv @ kernel_k1(spec, xs, h)
    d2 = np.zeros((spec.dim, spec.dim))
    entries = wv @ k2_pairs(spec, xs, h, mask.pairs)
    for (i, j), v in zip(mask.pairs, entries):
        d2[i, j] = d2[j, i] = v
    return StepEvaluation(d0, d1, d2)


def effective_mask(spec: TrinomialSpec, mask: SparsityMask) -> SparsityMask:
    """``mask`` plus the entries read by the ``sigma0^2 : gamma`` correction."""
    s2 = spec.sigma0 @ spec.sigma0
    return mask.union(SparsityMask.from_matrix(np.abs(s2) > 0.0))


Generator = Callable[..., np.ndarray]


def scheme_nonlinearity(generator: Generator, sigma0) -> Generator:
    """``F(t, x, y, z, gamma) = G(t, x, y, z, gamma) - sigma0^2 : gamma / 2`` (vectorized)."""
    s2 = np.asarray(sigma0) @ np.asarray(sigma0)

    def F(t, x, y, z, gamma):
        return generator(t, x, y, z, gamma) - 0.5 * np.einsum("ij,nij->n", s2, gamma)

    return F


def one_step(
    spec: TrinomialSpec,
    f_eval: Generator,
    t: float,
    x,
    h: float,
    next_values,
    mask: SparsityMask | None = None,
    xi: np.ndarray | None = None,
) -> float:
    """``D0 + h F(t, x, D0, D1, D2)`` at a single point ``x``.

    ``f_eval`` is vectorized over a leading node axis (see :func:`scheme_nonlinearity`).
    """
    if h <= 0.0:
        raise ValueError("h must be positive")
    mask = effective_mask(spec, mask or SparsityMask.full(spec.dim))
    ev = step_expectations(spec, next_values, h, mask, xi)
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    f = f_eval(t, x, np.array([ev.d0]), ev.d1[None, :], ev.d2[None, :, :])
    return float(ev.d0 + h * np.asarray(f).reshape(-1)[0])


def child_points(spec: TrinomialSpec, x, h: float) -> np.ndarray:
    """Children ``x + sqrt(h) sigma0 xi`` in :func:`support_arrays` order."""
    _, _, xs = support_arrays(spec)
    return np.asarray(x, dtype=np.float64)[None, :] + math.sqrt(h) * xs @ spec.sigma0.T
