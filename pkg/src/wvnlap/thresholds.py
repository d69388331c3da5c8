"""Threshold energies and torus-constraint analysis.

Everything here is scalar analysis of the commutator symbol: the pair of
branch functions g attached to a frequency k, their fixed points (the
one-dimensional critical energies), the window-edge energies for the
summed potential in higher dimension, and a brute-force grid oracle over
the torus that recovers the same energies from the defining constraints
with no closed forms involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

__all__ = [
    "Interval",
    "OracleResult",
    "SymbolFunctions",
    "ThresholdReport",
    "DisjointnessResult",
    "critical_points_1d",
    "energy_set_oracle",
    "extremum_lambda",
    "mourre_window",
    "solution_curves_2d",
    "threshold_E",
    "threshold_Eprime",
    "threshold_report",
    "window_disjointness",
]

TWO_PI = 2.0 * math.pi


def _reduce_frequency(k: float) -> float:
    """Fold k into (0, 2pi) and reject multiples of pi."""
    k = float(k) % TWO_PI
    if abs(math.sin(k)) <= 1e-12:
        raise ValueError(f"frequency k={k} is a multiple of pi")
    return k


# ---------------------------------------------------------------------------
# symbol functions for a fixed frequency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolFunctions:
    """Branch functions of one frequency, vectorized over energies x in [0,4]."""

    k: float

    def __post_init__(self):
        object.__setattr__(self, "k", _reduce_frequency(self.k))

    # -- the two branches ---------------------------------------------------

    def g(self, x, y):
        """Two-branch symbol: y = 0 is the minus branch, y = 1 the plus."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y)
        root = np.sqrt(np.clip(x * (4.0 - x), 0.0, None))
        return 2.0 + (x - 2.0) * math.cos(self.k) \
            + (2.0 * y - 1.0) * math.sin(self.k) * root

    def g_minus(self, x):
        return self.g(x, 0)

    def g_plus(self, x):
        return self.g(x, 1)

    def h_minus(self, x):
        return self.g_minus(x) - np.asarray(x, dtype=float)

    def h_plus(self, x):
        return self.g_plus(x) - np.asarray(x, dtype=float)

    # -- scalar constants ----------------------------------------------------

    def alpha(self) -> float:
        return (math.cos(self.k) - 1.0) / math.sin(self.k)

    def beta(self) -> float:
        return math.cos(self.k) / math.sin(self.k)

    def lambda_minus(self) -> float:
        return extremum_lambda(self.k, -1)

    def lambda_plus(self) -> float:
        return extremum_lambda(self.k, +1)

    # -- two-dimensional solution-curve energies ------------------------------

    def f_minus_minus(self, phi):
        phi = np.asarray(phi, dtype=float)
        return 4.0 - 4.0 * math.cos(self.k / 2.0) * np.cos(phi - self.k / 2.0)

    def f_plus_plus(self, phi):
        phi = np.asarray(phi, dtype=float)
        return 4.0 + 4.0 * math.cos(self.k / 2.0) * np.cos(phi - self.k / 2.0)

    def F(self, lam: float, x):
        """Paired branch sum along the diagonal slice of total energy lam."""
        x = np.asarray(x, dtype=float)
        head = (lam - 4.0) * (math.cos(self.k) - 1.0)
        r1 = np.sqrt(np.clip(x * (4.0 - x), 0.0, None))
        r2 = np.sqrt(np.clip((lam - x) * (4.0 + x - lam), 0.0, None))
        sign = -1.0 if self.k < math.pi else 1.0
        return head + sign * math.sin(self.k) * (r1 + r2)

    def f(self, lam):
        """Margin of the summed symbol below the window: F at the midpoint."""
        lam = np.asarray(lam, dtype=float)
        head = (lam - 4.0) * (math.cos(self.k) - 1.0)
        return head - abs(math.sin(self.k)) * np.sqrt(np.clip(lam * (8.0 - lam), 0.0, None))

    def m_minus(self, lam):
        lam = np.asarray(lam, dtype=float)
        return (lam - 4.0) * (math.cos(self.k) - 1.0) \
            - math.sin(self.k) * np.sqrt(np.clip(lam * (8.0 - lam), 0.0, None))

    def m_plus(self, lam):
        lam = np.asarray(lam, dtype=float)
        return (lam - 4.0) * (math.cos(self.k) - 1.0) \
            + math.sin(self.k) * np.sqrt(np.clip(lam * (8.0 - lam), 0.0, None))


# ---------------------------------------------------------------------------
# closed-form threshold energies
# ---------------------------------------------------------------------------

def critical_points_1d(k: float) -> tuple[float, float]:
    """The two fixed-point energies 2 -+ 2 cos(k/2) of the branch pair."""
    k = _reduce_frequency(k)
    c = math.cos(k / 2.0)
    return 2.0 - 2.0 * c, 2.0 + 2.0 * c


def extremum_lambda(k: float, sign: int) -> float:
    """Unique critical point of the minus branch (sign=-1) or its mirror."""
    k = _reduce_frequency(k)
    if (0 < k <= math.pi / 2.0) or (math.pi < k <= 1.5 * math.pi):
        lam_minus = 2.0 - 2.0 * abs(math.cos(k))
    else:
        lam_minus = 2.0 + 2.0 * abs(math.cos(k))
    if sign < 0:
        return lam_minus
    return 4.0 - lam_minus


def threshold_E(k: float) -> float:
    """Window edge for the summed symbol in dimension >= 2."""
    k = _reduce_frequency(k)
    if k < math.pi:
        return 4.0 - 4.0 * math.cos(k / 2.0)
    return 4.0 + 4.0 * math.cos(k / 2.0)


def _ell(k: float) -> float:
    k = _reduce_frequency(k)
    if k <= 2.0 * math.pi / 3.0:
        return 2.0 - 2.0 * math.cos(k / 2.0)
    if k <= 4.0 * math.pi / 3.0:
        return 2.0 + 2.0 * math.cos(k)
    return 2.0 + 2.0 * math.cos(k / 2.0)


def threshold_Eprime(ks) -> float:
    """Componentwise window edge for the product-form potential."""
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    return float(min(_ell(k) for k in ks))


# ---------------------------------------------------------------------------
# report container and window list
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    def contains(self, x: float) -> bool:
        left = self.lo <= x if self.lo_closed else self.lo < x
        right = x <= self.hi if self.hi_closed else x < self.hi
        return left and right

    def as_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi,
                "lo_closed": self.lo_closed, "hi_closed": self.hi_closed}


def mourre_window(d: int, variant: str, k) -> list[Interval]:
    """Energy windows where the localized commutator estimate holds."""
    if d == 1:
        e_lo, e_hi = sorted(critical_points_1d(np.atleast_1d(k)[0]))
        return [Interval(0.0, e_lo), Interval(e_lo, e_hi), Interval(e_hi, 4.0)]
    if variant == "W":
        edge = threshold_E(np.atleast_1d(k)[0])
    elif variant == "Wprime":
        edge = threshold_Eprime(k)
    else:
        raise ValueError("window list needs variant W or Wprime when d >= 2")
    top = 4.0 * d
    return [Interval(0.0, edge, lo_closed=True),
            Interval(top - edge, top, hi_closed=True)]


@dataclass
class ThresholdReport:
    d: int
    variant: str
    k: tuple
    E_minus: float | None = None
    E_plus: float | None = None
    E_of_k: float | None = None
    E_prime: float | None = None
    mu_intervals: list = field(default_factory=list)
    oracle_min_positive: float | None = None
    oracle_max: float | None = None
    oracle_energy_step: float | None = None

    def as_dict(self) -> dict:
        out = {
            "d": self.d, "variant": self.variant, "k": list(self.k),
            "mu_intervals": [iv.as_dict() for iv in self.mu_intervals],
        }
        for key in ("E_minus", "E_plus", "E_of_k", "E_prime",
                    "oracle_min_positive", "oracle_max", "oracle_energy_step"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out


def threshold_report(d: int, variant: str, k, oracle: "OracleResult | None" = None
                     ) -> ThresholdReport:
    ks = tuple(np.atleast_1d(np.asarray(k, dtype=float)))
    rep = ThresholdReport(d=d, variant=variant, k=ks,
                          mu_intervals=mourre_window(d, variant, ks))
    if d == 1 or variant == "W":
        e_minus, e_plus = critical_points_1d(ks[0])
        rep.E_minus, rep.E_plus = e_minus, e_plus
    if variant == "W":
        rep.E_of_k = threshold_E(ks[0])
    if variant == "Wprime":
        rep.E_prime = threshold_Eprime(ks)
    if oracle is not None:
        rep.oracle_min_positive = oracle.min_positive
        rep.oracle_max = oracle.max_energy
        rep.oracle_energy_step = oracle.energy_step
    return rep


# ---------------------------------------------------------------------------
# brute-force torus oracle
# ---------------------------------------------------------------------------

@dataclass
class OracleResult:
    energies: np.ndarray
    points: np.ndarray
    min_positive: float
    max_energy: float
    refined_min: float | None
    refined_max: float | None
    energy_step: float
    grid_n: int
    tol_constraint: float


def _energy(xi: np.ndarray) -> np.ndarray:
    return (2.0 - 2.0 * np.cos(xi)).sum(axis=-1)


def energy_set_oracle(d: int, k: float, grid_n: int = 512,
                      tol_constraint: float | None = None,
                      refine: bool = True, chunk_rows: int = 64) -> OracleResult:
    """Grid scan of the torus for points where shifting every momentum
    component by +-k preserves the total energy; returns the attained
    energies plus penalty-refined extremes.
    """
    if grid_n < 64:
        raise ValueError("oracle needs grid_n >= 64 per axis")
    k = _reduce_frequency(k)
    h = TWO_PI / grid_n
    if tol_constraint is None:
        tol_constraint = 4.0 * h
    axis = -math.pi + h * np.arange(grid_n)
    kept_pts: list[np.ndarray] = []
    kept_en: list[np.ndarray] = []
    # scan in row chunks to keep the d-dimensional grid memory bounded
    lead_chunks = [axis[i:i + chunk_rows] for i in range(0, grid_n, chunk_rows)]
    rest = [axis] * (d - 1)
    for lead in lead_chunks:
        grids = np.meshgrid(lead, *rest, indexing="ij")
        xi = np.stack([g.ravel() for g in grids], axis=-1)
        en = _energy(xi)
        res_plus = np.abs(_energy(xi + k) - en)
        res_minus = np.abs(_energy(xi - k) - en)
        keep = (res_plus <= tol_constraint) | (res_minus <= tol_constraint)
        kept_pts.append(xi[keep])
        kept_en.append(en[keep])
    points = np.concatenate(kept_pts, axis=0)
    energies = np.concatenate(kept_en)
    order = np.argsort(energies, kind="stable")
    points, energies = points[order], energies[order]
    positive_idx = np.flatnonzero(energies > 1e-9)
    min_positive = float(energies[positive_idx[0]]) if positive_idx.size else math.inf
    max_energy = float(energies[-1]) if energies.size else -math.inf
    refined_min = refined_max = None
    if refine and positive_idx.size:
        refined_min = _penalty_refine(points[positive_idx[0]], k, sense=+1.0)
        refined_max = _penalty_refine(points[-1], k, sense=-1.0)
    return OracleResult(
        energies=energies, points=points, min_positive=min_positive,
        max_energy=max_energy, refined_min=refined_min, refined_max=refined_max,
        energy_step=4.0 * d / grid_n, grid_n=grid_n, tol_constraint=tol_constraint,
    )


def _penalty_refine(xi0: np.ndarray, k: float, sense: float,
                    stages: int = 5, mu0: float = 100.0) -> float:
    """Penalty descent on +-energy with the shift constraint; weight x10 per stage."""
    best = np.asarray(xi0, dtype=float)
    shift = k if abs(_energy(best + k) - _energy(best)) \
        <= abs(_energy(best - k) - _energy(best)) else -k

    def objective(xi, mu):
        en = _energy(xi)
        gap = _energy(xi + shift) - en
        grad_en = 2.0 * np.sin(xi)
        grad_gap = 2.0 * np.sin(xi + shift) - grad_en
        val = sense * en + mu * gap * gap
        grad = sense * grad_en + 2.0 * mu * gap * grad_gap
        return val, grad

    mu = mu0
    for _ in range(stages):
        res = minimize(lambda v: objective(v, mu), best, jac=True, method="L-BFGS-B")
        best = res.x
        mu *= 10.0
    return float(_energy(best))


# ---------------------------------------------------------------------------
# solution curves (two dimensions)
# ---------------------------------------------------------------------------

def solution_curves_2d(k: float, n_points: int = 400) -> dict[str, dict]:
    """The four branch-pair solution families as sampled (x1, x2) paths."""
    k = _reduce_frequency(k)
    sym = SymbolFunctions(k)
    if k < math.pi:
        j_main = np.linspace(0.0, k, n_points)
        j_cross = np.linspace(k, math.pi, n_points)
    else:
        j_main = np.linspace(k - math.pi, math.pi, n_points)
        j_cross = np.linspace(0.0, k - math.pi, n_points)

    def curve(phi):
        return 2.0 - 2.0 * np.cos(phi), 2.0 - 2.0 * np.cos(k - phi)

    x1m, x2m = curve(j_main)
    t = np.linspace(0.0, 4.0, n_points)
    xc1, xc2 = curve(j_cross)
    families = {
        "minus_minus": {
            "x1": x1m, "x2": x2m,
            "isolated": [(0.0, 4.0), (4.0, 0.0)],
        },
        "plus_plus": {
            "x1": 4.0 - x1m, "x2": 4.0 - x2m,
            "isolated": [(0.0, 4.0), (4.0, 0.0)],
        },
        "minus_plus": {
            "x1": np.concatenate([t, xc1]),
            "x2": np.concatenate([4.0 - t, xc2]),
            "isolated": [],
        },
    }
    families["plus_minus"] = {
        "x1": families["minus_plus"]["x2"].copy(),
        "x2": families["minus_plus"]["x1"].copy(),
        "isolated": [],
    }
    for fam in families.values():
        fam["energy"] = fam["x1"] + fam["x2"]
        fam["energy_range"] = (float(fam["energy"].min()), float(fam["energy"].max()))
    return families


# ---------------------------------------------------------------------------
# window disjointness probe
# ---------------------------------------------------------------------------

@dataclass
class DisjointnessResult:
    accepted: bool
    epsilon: float
    witness: tuple | None
    certificate: float | None

    def __bool__(self):
        return self.accepted


def _branch_values_1d(sym: SymbolFunctions, xs: np.ndarray) -> np.ndarray:
    return np.concatenate([sym.g_minus(xs), sym.g_plus(xs)])


def _window_violation(sym_list, d: int, lo: float, hi: float,
                      samples: int) -> tuple | None:
    """Search the constrained region for a summed-branch value inside (lo, hi)."""
    if d == 1:
        xs = np.linspace(max(lo, 0.0), min(hi, 4.0), samples)
        if not xs.size:
            return None
        for y, branch in ((0, sym_list[0].g_minus), (1, sym_list[0].g_plus)):
            vals = branch(xs)
            bad = (vals > lo) & (vals < hi)
            if bad.any():
                i = int(np.argmax(bad))
                return (float(xs[i]), y, float(vals[i]))
        return None
    sym = sym_list[0]
    lams = np.linspace(max(lo, 0.0), min(hi, 4.0 * d), samples)
    inner = max(64, samples // 8)
    for lam in lams:
        if d == 2:
            x1 = np.linspace(max(0.0, lam - 4.0), min(4.0, lam), inner)
            comps = [x1, lam - x1]
        elif d == 3:
            g1, g2 = np.meshgrid(np.linspace(0.0, 4.0, 65),
                                 np.linspace(0.0, 4.0, 65), indexing="ij")
            comps = [g1.ravel(), g2.ravel(), lam - g1.ravel() - g2.ravel()]
        else:
            raise ValueError("window probe supports d <= 3")
        valid = np.ones_like(comps[0], dtype=bool)
        for c in comps:
            valid &= (c >= 0.0) & (c <= 4.0)
        if not valid.any():
            continue
        comps = [c[valid] for c in comps]
        for branches in range(2 ** d):
            total = np.zeros_like(comps[0])
            for i, c in enumerate(comps):
                total += sym.g(c, (branches >> i) & 1)
            bad = (total > lo) & (total < hi)
            if bad.any():
                i = int(np.argmax(bad))
                point = tuple(float(c[i]) for c in comps)
                return (point, branches, float(total[i]))
    return None


def window_disjointness(E: float, k, d: int, variant: str = "W",
                        samples: int = 801, eps_hi: float | None = None,
                        bisect_steps: int = 30) -> DisjointnessResult:
    """Largest window half-width around E whose branch image avoids the window.

    Probes the defining avoidance condition by dense sampling; refuses
    with a witness when every half-width fails (E inside the attained
    energy set).  For the product-form variant the window is one-sided,
    [0, E + eps), checked per component frequency.
    """
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    syms = [SymbolFunctions(kk) for kk in ks]

    if variant == "Wprime" and d >= 2:
        def ok(eps: float):
            lam = E + eps
            for sym in syms:
                xs = np.linspace(0.0, lam, samples)
                for branch in (sym.g_minus, sym.g_plus):
                    vals = branch(xs)
                    bad = (vals >= 0.0) & (vals < lam)
                    if bad.any():
                        i = int(np.argmax(bad))
                        return (float(xs[i]), float(vals[i]))
            return None

        def certificate(eps: float):
            return threshold_Eprime(ks) - (E + eps)
    else:
        def ok(eps: float):
            return _window_violation(syms, d, E - eps, E + eps, samples)

        def certificate(eps: float):
            if d >= 2 and 0.0 <= E + eps <= 8.0:
                return float(syms[0].f(E + eps))
            return None

    eps_max = eps_hi if eps_hi is not None else 1.0
    floor = 1e-7
    witness = ok(floor)
    if witness is not None:
        return DisjointnessResult(False, 0.0, witness, certificate(0.0))
    lo, hi = floor, eps_max
    if ok(eps_max) is None:
        lo = eps_max
    else:
        for _ in range(bisect_steps):
            mid = 0.5 * (lo + hi)
            if ok(mid) is None:
                lo = mid
            else:
                hi = mid
    # shrink until the monotone margin certificate is strictly positive,
    # so the reported half-width is covered by it and not only by sampling
    cert = certificate(lo)
    while cert is not None and cert <= 0.0 and lo > floor:
        lo *= 0.995
        cert = certificate(lo)
    return DisjointnessResult(True, lo, None, cert)
