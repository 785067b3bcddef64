"""Least-squares Monte Carlo solver for high dimension.

Paths follow the same trinomial recursion as the lattice, so each path is an
integer offset vector ``k`` with ``X_i = x0 + sqrt(h) sigma0 k_i / sqrt(p)``.
Only final offsets are stored; codes are regenerated from the keyed stream
and the path is walked backwards with ``k_i = k_{i+1} - code_i``.

Work is split into fixed path chunks. Regression Gram matrices are summed
over chunks in chunk order, so results do not depend on the thread count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _accel
from .generator import PdeProblem, scheme_params
from .kernels import CounterStream, TrinomialSpec, effective_mask, k2_pairs
from .params import MonotonicityParams

PATH_CHUNK = 1 << 15
COND_LIMIT = 1e12
RIDGE_REL = 1e-10


class DegenerateRegressionError(ArithmeticError):
    """The design matrix carries no information (all columns zero)."""


# ---------------------------------------------------------------------------
# basis functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BasisSet:
    """Ordered basis ``phi_j(t, x)``; each evaluator maps ``(t, x(L, d)) -> (L,)``."""

    functions: tuple
    names: tuple

    def __post_init__(self):
        if len(self.functions) == 0:
            raise ValueError("a basis needs at least one function")
        if len(self.functions) != len(self.names):
            raise ValueError("functions and names differ in length")

    @property
    def size(self) -> int:
        return len(self.functions)

    def design(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.empty((x.shape[0], self.size))
        for j, f in enumerate(self.functions):
            out[:, j] = f(t, x)
        return out

    @classmethod
    def linear(cls, d: int) -> "BasisSet":
        funcs = [lambda t, x: np.ones(x.shape[0])]
        funcs += [(lambda t, x, j=j: x[:, j]) for j in range(d)]
        return cls(tuple(funcs), ("1",) + tuple(f"x{j}" for j in range(d)))

    @classmethod
    def linear_trig(cls, d: int, weights=None) -> "BasisSet":
        """``1, x_1..x_d, sin(t + w.x), cos(t + w.x)``."""
        w = np.ones(d) if weights is None else np.asarray(weights, dtype=float)
        lin = cls.linear(d)
        funcs = lin.functions + (
            lambda t, x: np.sin(t + x @ w),
            lambda t, x: np.cos(t + x @ w),
        )
        return cls(funcs, lin.names + ("sin(t+w.x)", "cos(t+w.x)"))

    @classmethod
    def lattice_indicators(cls, params: MonotonicityParams, x0, h: float, n: int) -> "BasisSet":
        """One indicator per lattice offset in ``{-n..n}^d`` (saturating basis)."""
        x0 = np.asarray(x0, dtype=float)
        d = x0.shape[0]
        to_k = np.linalg.inv(math.sqrt(h) * params.sigma0 / math.sqrt(params.p))

        def offsets(x):
            return np.rint((x - x0[None, :]) @ to_k.T).astype(np.int64)

        grids = np.meshgrid(*([np.arange(-n, n + 1)] * d), indexing="ij")
        ks = np.stack([g.reshape(-1) for g in grids], axis=1)
        funcs = tuple(
            (lambda t, x, k=k: np.all(offsets(x) == k[None, :], axis=1).astype(float)) for k in ks
        )
        return cls(funcs, tuple(str(tuple(k)) for k in ks))


def default_basis(problem: PdeProblem) -> BasisSet:
    if problem.basis_weights is None:
        return BasisSet.linear(problem.dim)
    return BasisSet.linear_trig(problem.dim, problem.basis_weights)


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------

def _solve_normal(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``gram @ c = rhs`` after equilibration; zero columns get zero coefficients."""
    diag = np.diag(gram).copy()
    if not np.any(diag > 0.0):
        raise DegenerateRegressionError("design matrix is identically zero")
    live = diag > 0.0
    scale = np.sqrt(diag[live])
    g = gram[np.ix_(live, live)] / np.outer(scale, scale)
    r = rhs[live] / scale[:, None]
    lam = np.linalg.eigvalsh(g)
    if lam[0] <= 0.0 or lam[-1] / lam[0] > COND_LIMIT:
        g = g + RIDGE_REL * np.trace(g) / g.shape[0] * np.eye(g.shape[0])
    coef = np.zeros((gram.shape[0], rhs.shape[1]))
    coef[live] = cho_solve(cho_factor(g, lower=True), r) / scale[:, None]
    return coef


def regress(targets, features, weights=None) -> np.ndarray:
    """Least-squares coefficients of ``targets`` on the columns of ``features``.

    ``targets`` may be ``(L,)`` or ``(L, T)``; the result is ``(J,)`` or ``(J, T)``.
    """
    phi = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    single = y.ndim == 1
    y = y.reshape(phi.shape[0], -1)
    L, J = phi.shape
    if L < J:
        raise ValueError(f"need at least as many samples as basis functions (L={L}, J={J})")
    w = np.ones(L) if weights is None else np.asarray(weights, dtype=np.float64)
    wphi = phi * w[:, None]
    coef = _solve_normal(wphi.T @ phi, wphi.T @ y)
    return coef[:, 0] if single else coef


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PathEnsemble:
    """``L`` trinomial paths of ``n`` steps, stored as final integer offsets."""

    x0: np.ndarray
    step: np.ndarray  # sqrt(h) sigma0 / sqrt(p)
    jump: float
    p: float
    n: int
    L: int
    seed: int
    final_offsets: np.ndarray
    injected: Optional[np.ndarray] = None  # (L, n, d) int8 codes
    weights: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.x0.shape[0]

    def codes(self, i: int, rows: slice | None = None) -> np.ndarray:
        """Codes of the increment from ``t_i`` to ``t_{i+1}``."""
        rows = rows or slice(0, self.L)
        if self.injected is not None:
            return self.injected[rows, i, :]
        return _accel.ternary_codes(self.seed, np.arange(rows.start, rows.stop, dtype=np.int64), i, self.dim, self.p)

    def positions(self, offsets: np.ndarray) -> np.ndarray:
        return self.x0[None, :] + offsets @ self.step.T

    @property
    def paths(self) -> np.ndarray:
        """Dense ``(L, n+1, d)`` state array; intended for small ensembles."""
        out = np.empty((self.L, self.n + 1, self.dim))
        k = np.zeros((self.L, self.dim), dtype=np.int64)
        out[:, 0] = self.x0
        for i in range(self.n):
            k += self.codes(i)
            out[:, i + 1] = self.positions(k)
        return out

    @property
    def increments(self) -> np.ndarray:
        """Dense ``(L, n, d)`` increments ``sqrt(h) sigma0 xi``."""
        return np.stack([self.codes(i) @ self.step.T for i in range(self.n)], axis=1)


def _chunks(L: int, size: int = PATH_CHUNK) -> list[slice]:
    return [slice(a, min(a + size, L)) for a in range(0, L, size)]


def _pmap(fn, items):
    threads = _accel.thread_count()
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def simulate_paths(
    problem: PdeProblem,
    params: MonotonicityParams,
    x0,
    n: int,
    L: int,
    seed: int,
    *,
    codes: np.ndarray | None = None,
    weights: np.ndarray | None = None,
) -> PathEnsemble:
    """Simulate ``L`` paths (or wrap injected ``(L, n, d)`` codes with optional weights)."""
    if n < 1 or L < 1:
        raise ValueError("need n >= 1 and L >= 1")
    d = problem.dim
    x0 = np.asarray(problem.x0 if x0 is None else x0, dtype=np.float64)
    h = problem.horizon / n
    step = math.sqrt(h) * params.sigma0 / math.sqrt(params.p)
    if codes is not None:
        codes = np.asarray(codes, dtype=np.int8)
        if codes.shape != (L, n, d):
            raise ValueError(f"injected codes must have shape {(L, n, d)}")
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (L,):
            raise ValueError("weights must have shape (L,)")
    ens = PathEnsemble(x0, step, 1.0 / math.sqrt(params.p), params.p, n, L, int(seed),
                       np.zeros((L, d), dtype=np.int32), codes, weights)

    def final(rows):
        k = np.zeros((rows.stop - rows.start, d), dtype=np.int32)
        for i in range(n):
            k += ens.codes(i, rows)
        return k

    parts = _pmap(final, _chunks(L))
    ens.final_offsets = np.concatenate(parts, axis=0)
    return ens


# ---------------------------------------------------------------------------
# backward induction
# ---------------------------------------------------------------------------

def backward_induct(
    problem: PdeProblem,
    params: MonotonicityParams,
    ensemble: PathEnsemble,
    basis: BasisSet | None = None,
    *,
    diagnostics: list | None = None,
) -> float:
    """Regression-based backward induction; returns ``Y_0``.

    At ``t_0`` every path sits at ``x0``, so the conditional expectations are
    (weighted) sample means rather than regressions.
    """
    basis = basis or default_basis(problem)
    spec = TrinomialSpec.from_params(params)
    d, n, L = problem.dim, ensemble.n, ensemble.L
    if ensemble.dim != d:
        raise ValueError("ensemble and problem dimensions differ")
    h = problem.horizon / n
    pairs = list(effective_mask(spec, problem.mask).pairs)
    npair = len(pairs)
    ntarget = 1 + d + npair
    s2 = spec.sigma0 @ spec.sigma0
    upper_flat = np.array([a * d + b for a, b in pairs], dtype=np.intp)
    lower_flat = np.array([b * d + a for a, b in pairs], dtype=np.intp)
    # sigma0^2 : gamma / 2 restricted to the stored pairs
    corr = np.array([0.5 * s2[a, b] * (1.0 if a == b else 2.0) for a, b in pairs])
    inv_sqrt_h = 1.0 / math.sqrt(h)
    weights = ensemble.weights
    chunks = _chunks(L)

    flag_level = 10.0 * (1.0 + problem.lipschitz_bound * h) ** n * (
        problem.terminal_bound + problem.horizon * problem.source_bound
    )

    k = ensemble.final_offsets.astype(np.int64)
    y = np.asarray(problem.terminal(ensemble.positions(k)), dtype=np.float64)

    def targets_for(rows, codes):
        yc = y[rows]
        xi = codes * ensemble.jump
        out = np.empty((yc.shape[0], ntarget))
        out[:, 0] = yc
        out[:, 1:1 + d] = yc[:, None] * (xi @ spec.sigma0_inv.T) * inv_sqrt_h
        out[:, 1 + d:] = yc[:, None] * k2_pairs(spec, xi, h, pairs)
        return out

    for i in range(n - 1, -1, -1):
        t = i * h

        def stage1(rows, i=i, t=t):
            codes = ensemble.codes(i, rows)
            ki = k[rows] - codes
            tg = targets_for(rows, codes)
            wc = None if weights is None else weights[rows]
            if i == 0:
                w = np.ones(tg.shape[0]) if wc is None else wc
                return ki, None, tg, w @ tg, float(np.sum(w))
            x = ensemble.positions(ki)
            phi = basis.design(t, x)
            wphi = phi if wc is None else phi * wc[:, None]
            return ki, (phi, x), tg, wphi.T @ phi, wphi.T @ tg

        parts = _pmap(stage1, chunks)
        k = np.concatenate([pt[0] for pt in parts], axis=0)

        if i == 0:
            total = sum(pt[3] for pt in parts)
            mass = sum(pt[4] for pt in parts)
            cond = (total / mass)[None, :]
        else:
            gram = parts[0][3].copy()
            rhs = parts[0][4].copy()
            for pt in parts[1:]:
                gram += pt[3]
                rhs += pt[4]
            try:
                coef = _solve_normal(gram, rhs)
            except (DegenerateRegressionError, np.linalg.LinAlgError) as exc:
                raise type(exc)(f"regression failed at layer {i}: {exc}") from exc

        def stage2(j, i=i, t=t):
            rows = chunks[j]
            ki = parts[j][0]
            m = ki.shape[0]
            if i == 0:
                fit = np.repeat(cond, m, axis=0)
                x = ensemble.positions(ki)
            else:
                phi, x = parts[j][1]
                fit = phi @ coef
            g2 = fit[:, 1 + d:]
            gamma = np.zeros((m, d * d))
            gamma[:, upper_flat] = g2
            gamma[:, lower_flat] = g2
            d0 = fit[:, 0]
            z = fit[:, 1:1 + d]
            fval = problem.generator(t, x, d0, z, gamma.reshape(m, d, d)) - g2 @ corr
            return d0 + h * fval

        new = _pmap(stage2, list(range(len(chunks))))
        y = np.concatenate(new)
        if diagnostics is not None and math.isfinite(flag_level):
            worst = float(np.max(np.abs(y)))
            if worst > flag_level:
                diagnostics.append(f"layer {i}: |Y| reached {worst:.3g} (> 10x stability bound)")

    if weights is None:
        return float(np.mean(y))
    return float(weights @ y / np.sum(weights))


# ---------------------------------------------------------------------------
# repeated runs
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    n: int
    L: int
    K: int
    avg: float
    var_avg: Optional[float]
    per_run: np.ndarray
    seconds: float
    abs_error: Optional[float] = None
    flags: tuple = ()


def summarize(n: int, L: int, values: Sequence[float], seconds: float, true_value=None, flags=()) -> RunReport:
    vals = np.asarray(values, dtype=np.float64)
    K = vals.shape[0]
    avg = float(np.mean(vals))
    var_avg = float(np.var(vals, ddof=1) / K) if K > 1 else None
    err = None if true_value is None else abs(avg - true_value)
    return RunReport(n, L, K, avg, var_avg, vals, seconds, err, tuple(flags))


def run_repeats(
    problem: PdeProblem,
    params: MonotonicityParams | None,
    x0,
    n: int,
    L: int,
    K: int,
    seed: int,
    *,
    basis: BasisSet | None = None,
    seeds: Sequence[int] | None = None,
) -> RunReport:
    """``K`` independent runs with seeds derived from ``seed`` (or given explicitly)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if params is None:
        params = scheme_params(problem)
    x0 = np.asarray(problem.x0 if x0 is None else x0, dtype=np.float64)
    if seeds is None:
        seeds = [_accel.derive_seed(seed, r) for r in range(K)]
    elif len(seeds) != K:
        raise ValueError("need exactly K seeds")
    basis = basis or default_basis(problem)
    start = time.perf_counter()
    values, flags = [], []
    for r, s in enumerate(seeds):
        ens = simulate_paths(problem, params, x0, n, L, s)
        diag: list = []
        values.append(backward_induct(problem, params, ens, basis, diagnostics=diag))
        flags.extend(f"run {r}: {m}" for m in diag)
    true_value = problem.true_value(x0) if problem.true_solution is not None else None
    return summarize(n, L, values, time.perf_counter() - start, true_value, flags)
