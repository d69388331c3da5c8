"""Chebyshev application of matrix functions and the time propagator.

Large boxes cannot afford dense functional calculus, so smooth windows
and the evolution semigroup are applied to vectors through three-term
Chebyshev recurrences on the affinely rescaled operator.  The propagator
coefficients are Bessel functions; their superexponential tail gives an
a-priori per-step error bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import jv

__all__ = [
    "ChebyshevPropagator",
    "chebyshev_coefficients",
    "chebyshev_apply",
    "function_degree",
    "spectral_bounds",
]


def spectral_bounds(mat: sp.spmatrix, pad_rel: float = 1e-3) -> tuple[float, float]:
    """Interval certainly containing the spectrum of a hermitian matrix."""
    if mat.shape[0] <= 128:
        evals = np.linalg.eigvalsh(mat.toarray())
        lo, hi = float(evals[0]), float(evals[-1])
    else:
        hi = float(spla.eigsh(mat, k=1, which="LA", return_eigenvectors=False)[0])
        lo = float(spla.eigsh(mat, k=1, which="SA", return_eigenvectors=False)[0])
    span = max(hi - lo, 1e-12)
    pad = pad_rel * span + 1e-12
    return lo - pad, hi + pad


def chebyshev_coefficients(f: Callable[[np.ndarray], np.ndarray], lo: float,
                           hi: float, degree: int) -> np.ndarray:
    """Chebyshev interpolation coefficients of f on [lo, hi]."""
    m = degree + 1
    theta = np.pi * (np.arange(m) + 0.5) / m
    x = np.cos(theta)
    vals = f(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
    coeffs = np.empty(m, dtype=vals.dtype)
    for j in range(m):
        coeffs[j] = (2.0 / m) * np.sum(vals * np.cos(j * theta))
    coeffs[0] *= 0.5
    return coeffs


def function_degree(f: Callable, lo: float, hi: float, tol: float = 1e-8,
                    max_degree: int = 8192) -> int:
    """Smallest power-of-two-ish degree with sup-norm fit error <= tol."""
    xs = np.linspace(lo, hi, 4001)
    target = f(xs)
    degree = 16
    while degree <= max_degree:
        c = chebyshev_coefficients(f, lo, hi, degree)
        fit = np.polynomial.chebyshev.chebval(
            (2.0 * xs - (hi + lo)) / (hi - lo), c)
        if np.max(np.abs(fit - target)) <= tol:
            return degree
        degree *= 2
    raise ValueError(f"no Chebyshev degree <= {max_degree} reaches tol {tol}")


def chebyshev_apply(mat: sp.spmatrix, lo: float, hi: float,
                    coeffs: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Evaluate sum_j coeffs[j] T_j(rescaled mat) applied to vec."""
    alpha = 2.0 / (hi - lo)
    beta = -(hi + lo) / (hi - lo)

    def xop(v):
        return alpha * (mat @ v) + beta * v

    t_prev = vec
    out = coeffs[0] * vec
    if len(coeffs) == 1:
        return out
    t_cur = xop(vec)
    out = out + coeffs[1] * t_cur
    for c in coeffs[2:]:
        t_next = 2.0 * xop(t_cur) - t_prev
        t_prev, t_cur = t_cur, t_next
        out = out + c * t_cur
    return out


@dataclass
class ChebyshevPropagator:
    """exp(-i t H) on vectors, stepped with Bessel-coefficient expansions.

    The degree per step is chosen so the coefficient tail is below
    ``tol_step``; the accumulated propagation error over n steps is then
    bounded by n * tol_step.
    """

    mat: sp.spmatrix
    lo: float
    hi: float
    tol_step: float = 1e-12

    @classmethod
    def for_operator(cls, mat: sp.spmatrix, tol_step: float = 1e-12):
        lo, hi = spectral_bounds(mat)
        return cls(mat=mat, lo=lo, hi=hi, tol_step=tol_step)

    def step_coefficients(self, dt: float) -> np.ndarray:
        a = 0.5 * (self.hi - self.lo)
        b = 0.5 * (self.hi + self.lo)
        arg = a * dt
        m_max = int(np.ceil(arg + 50.0 + 15.0 * arg ** (1.0 / 3.0)))
        orders = np.arange(m_max + 1)
        bessel = jv(orders, arg)
        # keep the shortest head whose discarded tail is below tol_step
        mags = 2.0 * np.abs(bessel)
        suffix = np.cumsum(mags[::-1])[::-1]
        small = np.nonzero(suffix <= 0.5 * self.tol_step)[0]
        keep = max(int(small[0]) - 1, 1) if small.size else m_max
        coeffs = (2.0 - (orders[: keep + 1] == 0)) * (-1j) ** orders[: keep + 1] \
            * bessel[: keep + 1]
        return np.exp(-1j * b * dt) * coeffs

    def step(self, vec: np.ndarray, dt: float,
             coeffs: np.ndarray | None = None) -> np.ndarray:
        if coeffs is None:
            coeffs = self.step_coefficients(dt)
        return chebyshev_apply(self.mat, self.lo, self.hi, coeffs, vec)
