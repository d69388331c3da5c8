"""Smooth test functions with exact derivative jets.

The complex-plane functional calculus needs a handful of derivatives of
its test functions evaluated on large node arrays.  Rather than finite
differences, every function here carries a "jet" evaluator returning the
array of derivatives 0..order at once, assembled by closed-form chain,
product and quotient recursions.  Orders above ``MAX_ORDER`` are refused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gamma, hyp2f1

__all__ = [
    "MAX_ORDER",
    "SmoothFunction",
    "SmoothWindow",
    "bump_window",
    "class_constants",
    "inverse_square",
    "monomial",
    "resolvent_weight",
    "standard_mollifier",
]

MAX_ORDER = 6

# smallest argument at which exp(-1/t) is evaluated; below this the value
# underflows and the whole jet is exactly zero anyway
_T_MIN = 1.0 / 700.0

_BINOM = [[math.comb(n, j) for j in range(n + 1)] for n in range(MAX_ORDER + 2)]


# ---------------------------------------------------------------------------
# jet algebra: arrays of shape (order+1, npts)
# ---------------------------------------------------------------------------

def jet_const(value: float, order: int, x: np.ndarray) -> np.ndarray:
    out = np.zeros((order + 1,) + x.shape)
    out[0] = value
    return out


def jet_product(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    order = f.shape[0] - 1
    out = np.zeros_like(f)
    for n in range(order + 1):
        for j in range(n + 1):
            out[n] += _BINOM[n][j] * f[j] * g[n - j]
    return out


def jet_quotient(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Jet of f/g by the Leibniz recursion; g must be nonvanishing."""
    order = f.shape[0] - 1
    out = np.zeros_like(f)
    out[0] = f[0] / g[0]
    for n in range(1, order + 1):
        acc = f[n].copy()
        for j in range(1, n + 1):
            acc -= _BINOM[n][j] * g[j] * out[n - j]
        out[n] = acc / g[0]
    return out


def jet_affine(jet_fn, a: float, b: float):
    """Jet of t -> f(a*t + b) given the jet of f."""

    def wrapped(t: np.ndarray, order: int) -> np.ndarray:
        inner = jet_fn(a * np.asarray(t) + b, order)
        scale = a ** np.arange(order + 1)
        return inner * scale.reshape((-1,) + (1,) * (inner.ndim - 1))

    return wrapped


# exp(-1/t) for t > 0, extended by zero.  Derivatives are
# exp(-1/t) * P_m(1/t) with P_{m+1}(s) = s^2 (P_m(s) - P_m'(s)).
_EXP_INV_POLYS: list[np.polynomial.Polynomial] = [np.polynomial.Polynomial([1.0])]
while len(_EXP_INV_POLYS) <= MAX_ORDER + 1:
    p = _EXP_INV_POLYS[-1]
    shifted = (p - p.deriv()).coef
    _EXP_INV_POLYS.append(np.polynomial.Polynomial(np.concatenate([[0.0, 0.0], shifted])))


def jet_exp_inv(t: np.ndarray, order: int) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    shape = t.shape
    tf = t.ravel()
    out = np.zeros((order + 1, tf.size))
    pos = tf > _T_MIN
    if pos.any():
        s = 1.0 / tf[pos]
        base = np.exp(-s)
        for m in range(order + 1):
            out[m, pos] = base * _EXP_INV_POLYS[m](s)
    return out.reshape((order + 1,) + shape)


def jet_smoothstep(t: np.ndarray, order: int) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, monotone between."""
    t = np.asarray(t, dtype=float)
    shape = t.shape
    tf = t.ravel()
    f = jet_exp_inv(tf, order)
    g = jet_exp_inv(1.0 - tf, order)
    sign = (-1.0) ** np.arange(order + 1)
    g = g * sign[:, None]
    out = np.zeros((order + 1, tf.size))
    out[0] = np.where(tf >= 1.0, 1.0, 0.0)
    inside = (tf > 0.0) & (tf < 1.0)
    if inside.any():
        quot = jet_quotient(f[:, inside], f[:, inside] + g[:, inside])
        out[:, inside] = quot
    return out.reshape((order + 1,) + shape)


# ---------------------------------------------------------------------------
# function containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothFunction:
    """A C^infinity function with jet evaluator and decay-class metadata.

    ``rho`` is the claimed growth exponent: |f^(j)(x)| <= C_j <x>^(rho-j).
    ``support`` is None for all of R, else the compact interval (lo, hi).
    """

    name: str
    jet_fn: Callable[[np.ndarray, int], np.ndarray]
    rho: float
    support: tuple[float, float] | None = None
    n_max: int = MAX_ORDER

    def jet(self, x, order: int) -> np.ndarray:
        if order > self.n_max:
            raise ValueError(
                f"{self.name}: derivative order {order} unavailable (max {self.n_max})"
            )
        return self.jet_fn(np.asarray(x, dtype=float), order)

    def __call__(self, x):
        return self.jet(x, 0)[0]

    def derivative(self, x, j: int):
        return self.jet(x, j)[j]

    def times(self, other: "SmoothFunction", name: str | None = None) -> "SmoothFunction":
        def jet_fn(x, order):
            return jet_product(self.jet(x, order), other.jet(x, order))

        if self.support is None:
            support = other.support
        elif other.support is None:
            support = self.support
        else:
            support = (max(self.support[0], other.support[0]),
                       min(self.support[1], other.support[1]))
        return SmoothFunction(
            name=name or f"{self.name}*{other.name}",
            jet_fn=jet_fn,
            rho=self.rho + other.rho if support is None else min(self.rho, other.rho),
            support=support,
            n_max=min(self.n_max, other.n_max),
        )


@dataclass(frozen=True)
class SmoothWindow:
    """Plateau bump: 1 on [center-half_width, center+half_width], 0 outside
    the margin-extended support, smooth in between."""

    center: float
    half_width: float
    margin: float

    def __post_init__(self):
        if self.half_width < 0 or self.margin <= 0:
            raise ValueError("need half_width >= 0 and margin > 0")

    @property
    def support(self) -> tuple[float, float]:
        return (self.center - self.half_width - self.margin,
                self.center + self.half_width + self.margin)

    @property
    def core(self) -> tuple[float, float]:
        return (self.center - self.half_width, self.center + self.half_width)

    def jet(self, x, order: int) -> np.ndarray:
        if order > MAX_ORDER:
            raise ValueError(f"window derivative order {order} unavailable (max {MAX_ORDER})")
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        rise = jet_affine(jet_smoothstep, 1.0 / self.margin, -lo / self.margin)(x, order)
        fall = jet_affine(jet_smoothstep, -1.0 / self.margin, hi / self.margin)(x, order)
        return jet_product(rise, fall)

    def __call__(self, x):
        return self.jet(x, 0)[0]

    def derivative(self, x, j: int):
        return self.jet(x, j)[j]

    def as_function(self, name: str | None = None) -> SmoothFunction:
        return SmoothFunction(
            name=name or f"window[{self.center}+-{self.half_width}+{self.margin}]",
            jet_fn=self.jet, rho=0.0, support=self.support,
        )


def bump_window(center: float, half_width: float, margin: float) -> SmoothWindow:
    return SmoothWindow(center=center, half_width=half_width, margin=margin)


def standard_mollifier() -> SmoothWindow:
    """The reference bump: 1 on [-1/2, 1/2], supported in [-1, 1]."""
    return bump_window(0.0, 0.5, 0.5)


# ---------------------------------------------------------------------------
# stock functions
# ---------------------------------------------------------------------------

def inverse_square() -> SmoothFunction:
    """f(t) = 1/(1+t^2), decay class exponent -2."""

    def jet_fn(t, order):
        t = np.asarray(t, dtype=float)
        one = jet_const(1.0, order, t)
        g = np.zeros((order + 1,) + t.shape)
        g[0] = 1.0 + t * t
        if order >= 1:
            g[1] = 2.0 * t
        if order >= 2:
            g[2] = 2.0
        return jet_quotient(one, g)

    return SmoothFunction(name="inverse_square", jet_fn=jet_fn, rho=-2.0)


def _bracket_power_jet(t: np.ndarray, order: int, s: float) -> np.ndarray:
    """Jet of (1+t^2)^(-s) via the ODE recursion (1+t^2) f' + 2 s t f = 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros((order + 1,) + t.shape)
    out[0] = (1.0 + t * t) ** (-s)
    denom = 1.0 + t * t
    for n in range(order):
        # differentiate the ODE n times and solve for f^(n+1)
        acc = (2.0 * n + 2.0 * s) * t * out[n]
        if n >= 1:
            acc += (n * (n - 1.0) + 2.0 * s * n) * out[n - 1]
        out[n + 1] = -acc / denom
    return out


def resolvent_weight(s: float = 1.0) -> SmoothFunction:
    """Antiderivative of <x>^(-2s) vanishing at -infinity (bounded for s > 1/2).

    For s = 1 this is arctan(t) + pi/2.
    """
    if s <= 0.5:
        raise ValueError("resolvent weight needs s > 1/2 to be bounded")
    total = math.sqrt(math.pi) * gamma(s - 0.5) / gamma(s)

    def jet_fn(t, order):
        t = np.asarray(t, dtype=float)
        out = np.zeros((order + 1,) + t.shape)
        out[0] = t * hyp2f1(0.5, s, 1.5, -(t * t)) + 0.5 * total
        if order >= 1:
            out[1:] = _bracket_power_jet(t, order - 1, s)
        return out

    return SmoothFunction(name=f"resolvent_weight[s={s}]", jet_fn=jet_fn, rho=0.0)


def monomial(power: int) -> SmoothFunction:
    if power < 0:
        raise ValueError("power must be nonnegative")

    def jet_fn(t, order):
        t = np.asarray(t, dtype=float)
        out = np.zeros((order + 1,) + t.shape)
        for m in range(min(order, power) + 1):
            out[m] = math.perm(power, m) * t ** (power - m)
        return out

    return SmoothFunction(name=f"t^{power}", jet_fn=jet_fn, rho=float(power))


# ---------------------------------------------------------------------------
# decay-class audit
# ---------------------------------------------------------------------------

def class_constants(fn: SmoothFunction, orders: int, grid: np.ndarray | None = None) -> np.ndarray:
    """Sampled constants C_j = sup |f^(j)(x)| <x>^(j - rho) for j <= orders."""
    if grid is None:
        grid = np.concatenate([np.linspace(-50, 50, 4001), np.geomspace(50, 5000, 200)])
        grid = np.concatenate([grid, -grid])
    jets = fn.jet(grid, orders)
    bracket = np.sqrt(1.0 + grid * grid)
    consts = np.empty(orders + 1)
    for j in range(orders + 1):
        consts[j] = np.max(np.abs(jets[j]) * bracket ** (j - fn.rho))
    return consts
