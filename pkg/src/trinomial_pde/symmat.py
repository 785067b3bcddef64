"""Dense symmetric linear algebra used by the scheme and the generators.

Matrices are plain ``(d, d)`` float arrays. The upper triangle is treated as
authoritative: :func:`as_sym` mirrors it onto the lower one.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import _accel

PSD_RTOL = 1e-10
PIVOT_RTOL = 1e-12
EIG_RTOL = 1e-12
MAX_SWEEPS = 100


class NotPositiveSemidefiniteError(ValueError):
    """Raised when a matrix that must be PSD has a clearly negative eigenvalue."""


class ConvergenceError(ArithmeticError):
    """Raised when the Jacobi iteration does not converge."""


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns


def as_sym(a) -> np.ndarray:
    """Return a float copy of ``a`` with the lower triangle copied from the upper."""
    a = np.array(a, dtype=np.float64, ndmin=2)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    upper = np.triu(a)
    return upper + np.triu(a, 1).T


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def frobenius(a, b) -> float:
    """``a : b = tr(a b)`` for symmetric ``a`` and ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_dim(a, b)
    return float(np.sum(a * b))


def diag_part(a) -> np.ndarray:
    """Diagonal matrix carrying the diagonal of ``a``."""
    a = np.asarray(a, dtype=np.float64)
    return np.diag(np.diag(a))


def sym_eig(a) -> EigenDecomposition:
    """Cyclic Jacobi eigendecomposition, eigenvalues sorted descending."""
    m = as_sym(a)
    d = m.shape[0]
    v = np.eye(d)
    norm = np.linalg.norm(m)
    thresh = EIG_RTOL * norm if norm > 0.0 else 0.0
    for _ in range(MAX_SWEEPS + 1):
        off = np.sqrt(np.sum(np.triu(m, 1) ** 2) * 2.0)
        if off <= thresh:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                tau = (m[q, q] - m[p, p]) / (2.0 * apq)
                t = 1.0 if tau == 0.0 else np.sign(tau) / (abs(tau) + np.hypot(1.0, tau))
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                mp, mq = m[:, p].copy(), m[:, q].copy()
                m[:, p] = c * mp - s * mq
                m[:, q] = s * mp + c * mq
                mp, mq = m[p, :].copy(), m[q, :].copy()
                m[p, :] = c * mp - s * mq
                m[q, :] = s * mp + c * mq
                m[p, q] = m[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise ConvergenceError(f"Jacobi did not converge in {MAX_SWEEPS} sweeps")
    lam = np.diag(m).copy()
    order = np.argsort(-lam, kind="stable")
    return EigenDecomposition(lam[order], v[:, order])


def eigvalsh_batch(stack: np.ndarray) -> np.ndarray:
    """Unsorted eigenvalues for an ``(n, d, d)`` stack (accelerated Jacobi)."""
    return _accel.jacobi_eigvalsh(stack, EIG_RTOL, MAX_SWEEPS)


def min_eigenvalue(a) -> float:
    return float(sym_eig(a).eigenvalues[-1])


def is_psd(a) -> bool:
    a = as_sym(a)
    return min_eigenvalue(a) >= -PSD_RTOL * np.linalg.norm(a)


def cholesky_lower(a) -> np.ndarray:
    """Lower factor ``L`` with ``L L^T = a`` for symmetric PSD ``a``.

    Pivots below ``1e-12 * max(diag)`` are treated as zero and their column
    is zeroed, so singular PSD input is accepted.
    """
    a = as_sym(a)
    if not is_psd(a):
        raise NotPositiveSemidefiniteError(
            f"matrix has eigenvalue {min_eigenvalue(a):.3e} below -{PSD_RTOL:g}*|a|_F"
        )
    d = a.shape[0]
    tol = PIVOT_RTOL * max(float(np.max(np.diag(a))), 0.0)
    low = np.zeros_like(a)
    for j in range(d):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if pivot <= tol:
            continue
        ljj = np.sqrt(pivot)
        low[j, j] = ljj
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / ljj
    return low


def is_psd_interval(lo, hi) -> bool:
    """True iff ``lo >= 0`` and ``hi - lo >= 0`` in the PSD order."""
    lo = as_sym(lo)
    hi = as_sym(hi)
    _check_same_dim(lo, hi)
    return is_psd(lo) and is_psd(hi - lo)


def sym_sqrt(a) -> np.ndarray:
    """Principal square root of a PSD matrix."""
    lam, vec = sym_eig(a)
    return (vec * np.sqrt(np.clip(lam, 0.0, None))) @ vec.T


def sym_inv(a) -> np.ndarray:
    lam, vec = sym_eig(a)
    if np.min(np.abs(lam)) <= EIG_RTOL * max(np.max(np.abs(lam)), 1e-300):
        raise np.linalg.LinAlgError("matrix is singular")
    return (vec / lam) @ vec.T
