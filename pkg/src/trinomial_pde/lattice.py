"""Recombining trinomial lattice solver for low dimension.

After ``i`` steps the reachable points are ``x0 + sqrt(h) sigma0 k / sqrt(p)``
for integer offsets ``k`` in ``{-i..i}^d``, so layer ``i`` has ``(2i+1)^d``
nodes and children are found by index arithmetic.

The ``3^d``-point conditional expectations factor over coordinates: every
needed moment ``E[phi xi^e]`` (``e`` in ``{0,1,2}^d`` with ``|e| <= 2``) is a
tensor product of one-dimensional three-point stencils. Stencils are applied
axis by axis with shared prefixes cached, slab by slab along axis 0.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _accel
from .generator import PdeProblem, epsilon_truncate, scheme_params
from .kernels import BudgetExceededError, SparsityMask, TrinomialSpec, effective_mask
from .params import MonotonicityParams, MonotonicityWarning, worst_case_monotone

DEFAULT_MEMORY_BUDGET = 2 * 1024**3  # bytes for the two live layers
CHUNK_NODES = 1 << 17
MAX_TREE_DIM = 3


class StabilityError(ArithmeticError):
    """Lattice values left the a priori stability bound."""


@dataclass
class LatticeLayer:
    time_index: int
    values: np.ndarray  # shape (2i+1,)*d, axis j holds offset k_j + i
    origin: np.ndarray
    step: np.ndarray  # sqrt(h) sigma0 / sqrt(p); node = origin + step @ k

    def offsets(self) -> np.ndarray:
        i, d = self.time_index, self.origin.shape[0]
        grids = np.meshgrid(*([np.arange(-i, i + 1)] * d), indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def coordinates(self) -> np.ndarray:
        return self.origin[None, :] + self.offsets() @ self.step.T

    def value_at(self, k) -> float:
        idx = tuple(int(kj) + self.time_index for kj in k)
        return float(self.values[idx])


@dataclass
class TreeResult:
    value: float
    n: int
    h: float
    params: MonotonicityParams
    monotone: bool
    sup_norm: float
    stability_bound: float
    seconds: float
    warnings: tuple = ()
    field: Optional[list] = None


# one-dimensional stencils for xi_j^e: children at offsets -1, 0, +1
def _axis_weights(p: float):
    sp = math.sqrt(p)
    return {
        0: (0.5 * p, 1.0 - p, 0.5 * p),
        1: (-0.5 * sp, 0.0, 0.5 * sp),
        2: (0.5, 0.0, 0.5),
    }


def _needed_exponents(d: int, pairs) -> list[tuple]:
    out = {tuple([0] * d)}
    for a in range(d):
        e = [0] * d
        e[a] = 1
        out.add(tuple(e))
    for a, b in pairs:
        e = [0] * d
        if a == b:
            e[a] = 2
        else:
            e[a] = e[b] = 1
        out.add(tuple(e))
    return sorted(out)


def _apply_axis(a: np.ndarray, axis: int, w) -> np.ndarray:
    shape = a.shape
    pre = int(np.prod(shape[:axis], dtype=np.int64))
    post = int(np.prod(shape[axis + 1:], dtype=np.int64))
    out = _accel.stencil3(a.reshape(pre, shape[axis], post), *w)
    return out.reshape(shape[:axis] + (shape[axis] - 2,) + shape[axis + 1:])


def _moments(slab: np.ndarray, exponents: list[tuple], weights) -> dict:
    """``E[phi xi^e]`` on a slab for each exponent vector, sharing prefixes."""
    d = slab.ndim
    cache = {(): slab}

    def get(prefix):
        if prefix not in cache:
            cache[prefix] = _apply_axis(get(prefix[:-1]), len(prefix) - 1, weights[prefix[-1]])
        return cache[prefix]

    res = {e: get(e) for e in exponents}
    del cache
    # stencil along an unprocessed axis is never needed: every e has length d
    assert all(r.ndim == d for r in res.values())
    return res


class _LayerStepper:
    def __init__(self, problem: PdeProblem, spec: TrinomialSpec, x0: np.ndarray, h: float):
        self.problem = problem
        self.spec = spec
        self.x0 = x0
        self.h = h
        self.d = spec.dim
        self.p = spec.p
        self.weights = _axis_weights(spec.p)
        mask = effective_mask(spec, problem.mask)
        self.diag_s = spec.sigma0_diagonal
        if self.diag_s:
            self.pairs = list(mask.pairs)
        else:
            self.pairs = list(SparsityMask.full(self.d).pairs)
        self.out_pairs = list(mask.pairs)
        self.exponents = _needed_exponents(self.d, self.pairs)
        self.s_inv = spec.sigma0_inv
        self.s2 = spec.sigma0 @ spec.sigma0
        self.step = math.sqrt(h) * spec.sigma0 / math.sqrt(spec.p)
        d = self.d
        sd = np.diag(self.s_inv)
        self.pair_scale = np.array([sd[a] * sd[b] for a, b in self.pairs])
        self.up_full = np.array([a * d + b for a, b in self.pairs], dtype=np.intp)
        self.lo_full = np.array([b * d + a for a, b in self.pairs], dtype=np.intp)
        self.up_out = np.array([a * d + b for a, b in self.out_pairs], dtype=np.intp)
        self.lo_out = np.array([b * d + a for a, b in self.out_pairs], dtype=np.intp)
        # sigma0^2 : gamma / 2 over the stored pairs
        self.corr_weights = np.array([0.5 * self.s2[a, b] * (1.0 if a == b else 2.0) for a, b in self.out_pairs])

    def _key(self, a, b):
        e = [0] * self.d
        if a == b:
            e[a] = 2
        else:
            e[a] += 1
            e[b] += 1
        return tuple(e)

    def chunk(self, nxt: np.ndarray, i: int, t: float, lo: int, hi: int) -> np.ndarray:
        d, p, h = self.d, self.p, self.h
        m = 2 * i + 1
        res = _moments(nxt[lo:hi + 2], self.exponents, self.weights)
        shape = (hi - lo,) + (m,) * (d - 1)
        nn = int(np.prod(shape))
        e0 = res[tuple([0] * d)].reshape(nn)

        e1 = np.empty((nn, d))
        for a in range(d):
            e = [0] * d
            e[a] = 1
            e1[:, a] = res[tuple(e)].reshape(nn)
        z = e1 @ self.s_inv.T / math.sqrt(h)

        # E[phi M] with M = (1-p) xi xi^T - (1-3p) D[xi xi^T] - 2p I
        scale = 1.0 / ((1.0 - p) * h)
        em = np.empty((nn, len(self.pairs)))
        for c, (a, b) in enumerate(self.pairs):
            r = res[self._key(a, b)].reshape(nn)
            em[:, c] = 2.0 * p * (r - e0) if a == b else (1.0 - p) * r
        del res
        if self.diag_s:
            vals = em * self.pair_scale * scale
        else:
            full = np.zeros((nn, d * d))
            full[:, self.up_full] = em
            full[:, self.lo_full] = em
            full = full.reshape(nn, d, d)
            full = np.einsum("ik,nkl,jl->nij", self.s_inv, full, self.s_inv, optimize=True) * scale
            vals = full.reshape(nn, d * d)[:, self.up_out]
        gamma = np.zeros((nn, d * d))
        gamma[:, self.up_out] = vals
        gamma[:, self.lo_out] = vals
        corr = vals @ self.corr_weights

        axes = [np.arange(lo, hi) - i] + [np.arange(m) - i] * (d - 1)
        x = np.broadcast_to(self.x0, shape + (d,)).copy()
        for j, kj in enumerate(axes):
            view = [1] * d
            view[j] = kj.shape[0]
            x += kj.reshape(view + [1]) * self.step[:, j]
        x = x.reshape(nn, d)

        g_val = self.problem.generator(t, x, e0, z, gamma.reshape(nn, d, d))
        return (e0 + h * (g_val - corr)).reshape(shape)


def _check_budget(d: int, n: int, budget: int, keep_field: bool) -> None:
    layer = (2 * n + 1) ** d * 8
    need = 2 * layer
    if keep_field:
        need += sum((2 * i + 1) ** d for i in range(n + 1)) * 8
    if need > budget:
        raise BudgetExceededError(
            f"lattice with d={d}, n={n} needs about {need / 2**20:.0f} MiB, budget is {budget / 2**20:.0f} MiB"
        )


def solve_tree(
    problem: PdeProblem,
    params: MonotonicityParams | None = None,
    x0=None,
    n: int = 20,
    *,
    keep_field: bool = False,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
    check_stability: bool = True,
) -> TreeResult:
    """Backward induction on the full lattice; returns ``u_h(0, x0)``.

    Failing the worst-case monotone-coefficient check only attaches a warning.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    d = problem.dim
    if d > MAX_TREE_DIM:
        raise BudgetExceededError(f"tree solver supports d <= {MAX_TREE_DIM}, got d={d}")
    _check_budget(d, n, memory_budget, keep_field)
    if params is None:
        params = scheme_params(problem)
    x0 = np.asarray(problem.x0 if x0 is None else x0, dtype=np.float64)
    if x0.shape != (d,):
        raise ValueError(f"x0 must have shape ({d},)")
    spec = TrinomialSpec.from_params(params)
    T = problem.horizon
    h = T / n
    start = time.perf_counter()

    notes = list(params.notes)
    monotone = worst_case_monotone(params, h, problem.lipschitz_bound) if math.isfinite(problem.lipschitz_bound) else False
    if not monotone:
        msg = f"monotone-coefficient check fails at h={h:g}"
        notes.append(msg)
        warnings.warn(msg, MonotonicityWarning, stacklevel=2)

    stepper = _LayerStepper(problem, spec, x0, h)
    top = LatticeLayer(n, np.empty(0), x0, stepper.step)
    cur = np.asarray(problem.terminal(top.coordinates()), dtype=np.float64).reshape((2 * n + 1,) * d)
    sup_norm = float(np.max(np.abs(cur)))
    stack = [cur] if keep_field else None

    threads = _accel.thread_count()
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for i in range(n - 1, -1, -1):
            m = 2 * i + 1
            rows = max(1, CHUNK_NODES // max(1, m ** (d - 1)))
            bounds = [(a, min(a + rows, m)) for a in range(0, m, rows)]
            out = np.empty((m,) * d)
            t = i * h

            def work(b, nxt=cur, i=i, t=t, out=out):
                out[b[0]:b[1]] = stepper.chunk(nxt, i, t, b[0], b[1])

            if pool is None:
                for b in bounds:
                    work(b)
            else:
                list(pool.map(work, bounds))
            cur = out
            sup_norm = max(sup_norm, float(np.max(np.abs(cur))))
            if keep_field:
                stack.append(cur)
    finally:
        if pool is not None:
            pool.shutdown()

    C = problem.lipschitz_bound
    bound = (1.0 + C * h) ** n * (problem.terminal_bound + T * problem.source_bound)
    if check_stability and math.isfinite(bound) and not sup_norm <= bound * (1.0 + 1e-12):
        raise StabilityError(f"sup |u_h| = {sup_norm:g} exceeds the stability bound {bound:g}")

    field_layers = None
    if keep_field:
        field_layers = [LatticeLayer(n - j, v, x0, stepper.step) for j, v in enumerate(stack)][::-1]
    return TreeResult(
        value=float(cur.reshape(-1)[0]),
        n=n,
        h=h,
        params=params,
        monotone=monotone,
        sup_norm=sup_norm,
        stability_bound=bound,
        seconds=time.perf_counter() - start,
        warnings=tuple(notes),
        field=field_layers,
    )


def solve_tree_truncated(problem: PdeProblem, eps: float, params: MonotonicityParams | None = None, x0=None, n: int = 20, **kw) -> TreeResult:
    """Truncate with :func:`epsilon_truncate` and solve on the lattice.

    Without ``params`` the scheme parameters are chosen for the truncated
    problem. Additive truncation uses ``params.sigma0`` (identity if absent).
    """
    sigma0 = params.sigma0 if params is not None else np.eye(problem.dim)
    truncated = epsilon_truncate(problem, eps, sigma0)
    if params is None:
        params = scheme_params(truncated)
    return solve_tree(truncated, params, x0, n, **kw)
