"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``TRINOMIAL_PDE_NO_NUMBA=1`` before import to force the numpy path.
Both paths produce bit-identical integers (RNG codes) and agree to rounding
on floating point kernels.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

_DISABLED = os.environ.get("TRINOMIAL_PDE_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("numba disabled by TRINOMIAL_PDE_NO_NUMBA")
    import numba

    # an outdated system TBB only disables that threading layer; nothing to act on
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    njit = numba.njit
    prange = numba.prange
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


BACKEND = "numba" if HAVE_NUMBA else "numpy"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 1.0 / 9007199254740992.0


def thread_count() -> int:
    """Worker threads for chunked sweeps (``TRINOMIAL_PDE_THREADS``, default 1)."""
    try:
        return max(1, int(os.environ.get("TRINOMIAL_PDE_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# counter-based hash stream: splitmix64 finalizer over (seed, path, counter)
# ---------------------------------------------------------------------------

def _mix_np(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _seed_key_np(seed: int) -> np.uint64:
    with np.errstate(over="ignore"):
        return _mix_np(np.uint64(seed % (1 << 64)) * _GOLDEN + np.uint64(1))


def _codes_numpy(seed, paths, step, dim, p):
    key = _seed_key_np(seed)
    with np.errstate(over="ignore"):
        kp = _mix_np(key + paths.astype(np.uint64) * _GOLDEN)
        ctr = (np.uint64(step) * np.uint64(dim) + np.arange(dim, dtype=np.uint64) + np.uint64(1)) * _GOLDEN
        z = _mix_np(kp[:, None] + ctr[None, :])
    u = (z >> np.uint64(11)).astype(np.float64) * _TWO_M53
    out = np.zeros(z.shape, dtype=np.int8)
    out[u < p] = -1
    out[u < 0.5 * p] = 1
    return out


def _uniforms_numpy(seed, paths, step, dim):
    key = _seed_key_np(seed)
    with np.errstate(over="ignore"):
        kp = _mix_np(key + paths.astype(np.uint64) * _GOLDEN)
        ctr = (np.uint64(step) * np.uint64(dim) + np.arange(dim, dtype=np.uint64) + np.uint64(1)) * _GOLDEN
        z = _mix_np(kp[:, None] + ctr[None, :])
    return (z >> np.uint64(11)).astype(np.float64) * _TWO_M53


if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _mix_nb(z):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    @njit(cache=True, parallel=True)
    def _codes_numba(key, paths, step, dim, p, out):
        g = np.uint64(0x9E3779B97F4A7C15)
        half = 0.5 * p
        for r in prange(paths.shape[0]):
            kp = _mix_nb(key + np.uint64(paths[r]) * g)
            for c in range(dim):
                ctr = (np.uint64(step) * np.uint64(dim) + np.uint64(c) + np.uint64(1)) * g
                z = _mix_nb(kp + ctr)
                u = np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
                if u < half:
                    out[r, c] = 1
                elif u < p:
                    out[r, c] = -1
                else:
                    out[r, c] = 0


def ternary_codes(seed: int, paths: np.ndarray, step: int, dim: int, p: float) -> np.ndarray:
    """Codes in {-1, 0, +1} for each (path, component) at one time step.

    P(+1) = P(-1) = p/2. The draw for (seed, path, step, component) is a pure
    function of that key, so any partition of ``paths`` gives the same codes.
    """
    paths = np.ascontiguousarray(paths, dtype=np.int64)
    if HAVE_NUMBA:
        out = np.empty((paths.shape[0], dim), dtype=np.int8)
        _codes_numba(_seed_key_np(seed), paths, int(step), int(dim), float(p), out)
        return out
    return _codes_numpy(seed, paths, step, dim, p)


def uniforms(seed: int, paths: np.ndarray, step: int, dim: int) -> np.ndarray:
    """The underlying U[0,1) values of the same keyed stream (numpy only)."""
    return _uniforms_numpy(seed, np.asarray(paths, dtype=np.int64), step, dim)


def derive_seed(seed: int, index: int) -> int:
    """Independent child seed for repeat ``index``."""
    with np.errstate(over="ignore"):
        z = _mix_np(_seed_key_np(seed) ^ (np.uint64(index + 1) * _M2))
    return int(z >> np.uint64(1))


# ---------------------------------------------------------------------------
# three-point stencil along the middle axis of a (pre, m + 2, post) block
# ---------------------------------------------------------------------------

def _stencil_numpy(a, w0, w1, w2):
    m = a.shape[1] - 2
    out = None
    for w, lo in ((w0, 0), (w1, 1), (w2, 2)):
        if w == 0.0:
            continue
        term = a[:, lo:lo + m, :]
        if out is None:
            out = w * term
        else:
            out += w * term
    if out is None:
        out = np.zeros((a.shape[0], m, a.shape[2]))
    return out


if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _stencil_numba(a, w0, w1, w2, out):
        pre, m, post = out.shape
        for i in prange(pre):
            for j in range(m):
                for k in range(post):
                    out[i, j, k] = w0 * a[i, j, k] + w1 * a[i, j + 1, k] + w2 * a[i, j + 2, k]


def stencil3(a: np.ndarray, w0: float, w1: float, w2: float) -> np.ndarray:
    """``out[:, j, :] = w0 a[:, j] + w1 a[:, j+1] + w2 a[:, j+2]`` on a 3-d view."""
    if HAVE_NUMBA:
        a = np.ascontiguousarray(a)
        out = np.empty((a.shape[0], a.shape[1] - 2, a.shape[2]))
        _stencil_numba(a, float(w0), float(w1), float(w2), out)
        return out
    return _stencil_numpy(a, w0, w1, w2)


# ---------------------------------------------------------------------------
# batched cyclic Jacobi eigenvalues for stacks of small symmetric matrices
# ---------------------------------------------------------------------------

def _jacobi_eigvalsh_numpy(a, tol, max_sweeps):
    a = np.array(a, dtype=np.float64, copy=True)
    n, d, _ = a.shape
    scale = np.sqrt(np.einsum("nij,nij->n", a, a))
    thresh = tol * np.where(scale > 0.0, scale, 1.0)
    idx = np.arange(n)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2, axis=(1, 2)))
        if np.all(off <= thresh):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[:, p, q]
                active = np.abs(apq) > 1e-300
                if not active.any():
                    continue
                app = a[:, p, p]
                aqq = a[:, q, q]
                safe = np.where(active, apq, 1.0)
                tau = (aqq - app) / (2.0 * safe)
                t = np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                t = np.where(tau == 0.0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap = a[:, :, p].copy()
                aq = a[:, :, q].copy()
                a[:, :, p] = c[:, None] * ap - s[:, None] * aq
                a[:, :, q] = s[:, None] * ap + c[:, None] * aq
                rp = a[:, p, :].copy()
                rq = a[:, q, :].copy()
                a[:, p, :] = c[:, None] * rp - s[:, None] * rq
                a[:, q, :] = s[:, None] * rp + c[:, None] * rq
                a[idx, p, q] = 0.0
                a[idx, q, p] = 0.0
    return np.einsum("nii->ni", a).copy()


if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _jacobi_eigvalsh_numba(a, tol, max_sweeps, out):
        n, d, _ = a.shape
        for r in prange(n):
            m = a[r].copy()
            fro = 0.0
            for i in range(d):
                for j in range(d):
                    fro += m[i, j] * m[i, j]
            thresh = tol * (np.sqrt(fro) if fro > 0.0 else 1.0)
            for _sweep in range(max_sweeps):
                off = 0.0
                for i in range(d):
                    for j in range(d):
                        if i != j:
                            off += m[i, j] * m[i, j]
                if np.sqrt(off) <= thresh:
                    break
                for p in range(d - 1):
                    for q in range(p + 1, d):
                        apq = m[p, q]
                        if abs(apq) <= 1e-300:
                            continue
                        tau = (m[q, q] - m[p, p]) / (2.0 * apq)
                        if tau == 0.0:
                            t = 1.0
                        else:
                            t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                        c = 1.0 / np.sqrt(1.0 + t * t)
                        s = t * c
                        for k in range(d):
                            mkp = m[k, p]
                            mkq = m[k, q]
                            m[k, p] = c * mkp - s * mkq
                            m[k, q] = s * mkp + c * mkq
                        for k in range(d):
                            mpk = m[p, k]
                            mqk = m[q, k]
                            m[p, k] = c * mpk - s * mqk
                            m[q, k] = s * mpk + c * mqk
                        m[p, q] = 0.0
                        m[q, p] = 0.0
            for i in range(d):
                out[r, i] = m[i, i]


def jacobi_eigvalsh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Unsorted eigenvalues of each matrix in an ``(n, d, d)`` symmetric stack."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    if HAVE_NUMBA:
        out = np.empty(a.shape[:2])
        _jacobi_eigvalsh_numba(a, float(tol), int(max_sweeps), out)
        return out
    return _jacobi_eigvalsh_numpy(a, tol, max_sweeps)
