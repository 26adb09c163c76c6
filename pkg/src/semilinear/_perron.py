"""Perron root of an irreducible Metzler matrix by shifted inverse iteration.

The shift is always placed above the upper Collatz-Wielandt bound
``max_i (Bx)_i / x_i``, which dominates the spectral bound of any Metzler
matrix ``B`` for positive ``x``; every solve therefore applies a positive
operator and the iterate stays strictly positive.
"""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence


def collatz_wielandt(B: np.ndarray, x: np.ndarray) -> tuple[float, float]:
    r = (B @ x) / x
    return float(r.min()), float(r.max())


def metzler_perron(
    B: np.ndarray,
    tol: float = 1e-12,
    maxiter: int = 100_000,
    x0: np.ndarray | None = None,
) -> tuple[float, np.ndarray, int]:
    """Return ``(s, v, iterations)`` with ``B v = s v``, ``v > 0``, ``max(v) = 1``.

    ``B`` must be an irreducible Metzler matrix (nonnegative off-diagonal).
    Convergence is declared when the Collatz-Wielandt bracket has width at
    most ``tol * scale``; a stalled bracket above ``1e3 * tol * scale`` raises
    :class:`NoConvergence`.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    if n == 1:
        return float(B[0, 0]), np.ones(1), 0
    scale = max(1.0, float(np.abs(B).max()))
    x = np.ones(n) if x0 is None else np.abs(np.asarray(x0, dtype=float)) + 1e-300
    x = x / x.max()
    eye = np.eye(n)
    best_width, best = np.inf, None
    stall = 0
    for it in range(1, maxiter + 1):
        lo, hi = collatz_wielandt(B, x)
        width = hi - lo
        if width < best_width:
            best_width, best = width, (0.5 * (lo + hi), x.copy())
            stall = 0
        else:
            stall += 1
        if width <= tol * scale:
            break
        if stall > 25:
            if best_width <= 1e3 * tol * scale:
                break
            raise NoConvergence("Perron inverse iteration", it, best_width / scale)
        gap = max(width, 64 * np.finfo(float).eps * scale)
        for _ in range(60):
            y = np.linalg.solve((hi + gap) * eye - B, x)
            if np.all(y > 0) and np.all(np.isfinite(y)):
                break
            gap *= 4.0
        else:  # pragma: no cover - pathological conditioning
            raise NoConvergence("Perron inverse iteration (positivity lost)", it)
        x = y / y.max()
    else:
        if best_width > 1e3 * tol * scale:
            raise NoConvergence("Perron inverse iteration", maxiter, best_width / scale)
    s, v = best
    return s, v, it


def dense_spectral_bound(B: np.ndarray) -> float:
    """Maximal real part of the spectrum (general dense eigensolver)."""
    return float(np.linalg.eigvals(np.asarray(B, dtype=float)).real.max())
