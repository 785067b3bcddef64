"""Reference computations that share no code with the package."""

from __future__ import annotations

import itertools
import math

import numpy as np


def trinomial_law(p):
    """Single-component outcomes as ``(value, probability)``."""
    s = 1.0 / math.sqrt(p)
    return [(-s, p / 2.0), (0.0, 1.0 - p), (s, p / 2.0)]


def brute_support(d, p):
    """All ``3**d`` outcomes by nested enumeration."""
    law = trinomial_law(p)
    out = []
    for combo in itertools.product(law, repeat=d):
        xi = np.array([c[0] for c in combo])
        prob = 1.0
        for c in combo:
            prob *= c[1]
        out.append((xi, prob))
    return out


def k2_direct(xi, p, sigma0_inv, h):
    """Second-derivative kernel written out entry by entry."""
    d = xi.shape[0]
    m = np.empty((d, d))
    for a in range(d):
        for b in range(d):
            if a == b:
                m[a, b] = (1.0 - p) * xi[a] ** 2 - (1.0 - 3.0 * p) * xi[a] ** 2 - 2.0 * p
            else:
                m[a, b] = (1.0 - p) * xi[a] * xi[b]
    return sigma0_inv @ m @ sigma0_inv / ((1.0 - p) * h)


def brute_step(p, sigma0, h, phi, x):
    """``(D0, D1, D2)`` of ``phi`` at ``x`` by explicit summation over the support."""
    d = x.shape[0]
    s_inv = np.linalg.inv(sigma0)
    d0, d1, d2 = 0.0, np.zeros(d), np.zeros((d, d))
    for xi, prob in brute_support(d, p):
        v = phi(x + math.sqrt(h) * sigma0 @ xi)
        d0 += prob * v
        d1 += prob * v * (s_inv @ xi) / math.sqrt(h)
        d2 += prob * v * k2_direct(xi, p, s_inv, h)
    return d0, d1, d2


def brute_tree(F, g, p, sigma0, x0, T, n):
    """Scheme value at ``(0, x0)`` by recursion over every path (tiny d and n only).

    ``F(t, x, y, z, gamma)`` is scalar here.
    """
    h = T / n
    x0 = np.asarray(x0, dtype=float)
    d = x0.shape[0]
    support = brute_support(d, p)
    s_inv = np.linalg.inv(sigma0)
    memo = {}

    def value(i, k):
        key = (i, k)
        if key in memo:
            return memo[key]
        x = x0 + math.sqrt(h) * sigma0 @ (np.array(k) / math.sqrt(p))
        if i == n:
            out = g(x)
        else:
            d0, d1, d2 = 0.0, np.zeros(d), np.zeros((d, d))
            for xi, prob in support:
                kk = tuple(int(a) for a in np.rint(np.array(k) + xi * math.sqrt(p)))
                v = value(i + 1, kk)
                d0 += prob * v
                d1 += prob * v * (s_inv @ xi) / math.sqrt(h)
                d2 += prob * v * k2_direct(xi, p, s_inv, h)
            out = d0 + h * F(i * h, x, d0, d1, d2)
        memo[key] = out
        return out

    return value(0, (0,) * d)


def heat_sine_scheme(p, sigma0_diag, w, T, n, s0, source=None):
    """Closed-form scheme value for ``G = sigma0^2 : gamma / 2 + source(t, s)`` and
    ``g = sin(T + w.x)``, where ``s = t + w.x`` and ``source = a cos(s) + b sin(s)``.

    Uses ``E[sin(s + c xi)] = sin(s) * (1 - p + p cos(c / sqrt(p)))``.
    """
    h = T / n
    c = math.sqrt(h) * np.asarray(sigma0_diag) * np.asarray(w)
    phi = float(np.prod(1.0 - p + p * np.cos(c / math.sqrt(p))))
    v = math.sin(T + s0) * phi**n
    if source is not None:
        a, b = source
        for i in range(n):
            t = i * h
            v += h * phi**i * (a * math.cos(t + s0) + b * math.sin(t + s0))
    return v


# fourth-order central stencils
_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_OFF = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])


def fd_jet(u, t, x, step=1e-2):
    """``(u, u_t, Du, D2u)`` of a scalar ``u(t, x)`` by fourth-order differences."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    e = np.eye(d)
    ut = sum(c * u(t + o * step, x) for c, o in zip(_D1, _OFF)) / step
    du = np.array([sum(c * u(t, x + o * step * e[i]) for c, o in zip(_D1, _OFF)) / step for i in range(d)])
    hess = np.empty((d, d))
    for i in range(d):
        hess[i, i] = sum(c * u(t, x + o * step * e[i]) for c, o in zip(_D2, _OFF)) / step**2
        for j in range(i + 1, d):
            acc = 0.0
            for ca, oa in zip(_D1, _OFF):
                for cb, ob in zip(_D1, _OFF):
                    if ca and cb:
                        acc += ca * cb * u(t, x + oa * step * e[i] + ob * step * e[j])
            hess[i, j] = hess[j, i] = acc / step**2
    return u(t, x), ut, du, hess


def sample_interval(lo, hi, rng, count):
    """Feasible ``s`` with ``lo <= s <= hi``: ``lo + R M R^T`` for ``0 <= M <= I``."""
    d = lo.shape[0]
    lam, vec = np.linalg.eigh(hi - lo)
    r = vec * np.sqrt(np.clip(lam, 0.0, None))
    out = []
    for _ in range(count):
        q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        u = rng.uniform(0.0, 1.0, size=d)
        if rng.uniform() < 0.3:
            u = np.round(u)
        out.append(lo + r @ (q * u) @ q.T @ r.T)
    return out
