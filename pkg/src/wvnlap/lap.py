"""Weighted resolvent scans and local-decay propagation probes.

Finite boxes cannot take the boundary-value limit directly: below the
level spacing the truncated resolvent sees individual eigenvalues.  The
scans therefore take the sup over imaginary parts down to a floor of ten
mean level spacings and watch how that sup grows as the box doubles: a
flat trend is the boundedness signature, growth marks a threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chebyshev import ChebyshevPropagator, spectral_bounds
from .lattice import (
    DENSE_DIM_LIMIT,
    CapacityError,
    LatticeBox,
    LinearOperator,
)
from .mourre import SpectralWindow, window_apply

__all__ = [
    "DecayRecord",
    "LapScanResult",
    "ScanRecord",
    "SolverError",
    "compact_difference_profile",
    "lap_scan",
    "local_decay",
    "weighted_resolvent_norm",
    "y_floor",
]


class SolverError(RuntimeError):
    """Sparse factorization failed; carries the shift that was attempted."""


@dataclass(frozen=True)
class ScanRecord:
    E: float
    y: float
    s: float
    weight_kind: str
    half_width: int
    norm: float
    solver_iterations: int

    def __post_init__(self):
        if self.y <= 0:
            raise ValueError("scan records require y > 0")
        if self.norm < 0 or self.norm > (1.0 + 1e-9) / self.y:
            raise ValueError(
                f"norm {self.norm} violates the resolvent bound 1/y = {1.0 / self.y}"
            )


def _position_weight(box: LatticeBox, s: float) -> np.ndarray:
    c = box.coords()
    return (1.0 + (c * c).sum(axis=1)) ** (-s / 2.0)


def _dilation_weight(A: LinearOperator, s: float) -> np.ndarray:
    if A.dim > DENSE_DIM_LIMIT:
        raise CapacityError(
            f"dilation weight needs dense diagonalization; dim {A.dim} too large"
        )
    evals, vecs = np.linalg.eigh(A.dense())
    return (vecs * (1.0 + evals ** 2) ** (-s / 2.0)) @ vecs.conj().T


def eigenvalues_of(H: LinearOperator) -> np.ndarray:
    """All eigenvalues; banded path for narrow-band matrices above the
    dense capacity limit."""
    mat = H.entries
    if H.dim <= DENSE_DIM_LIMIT:
        return np.linalg.eigvalsh(mat.toarray())
    coo = mat.tocoo()
    bandwidth = int(np.abs(coo.row - coo.col).max())
    if bandwidth <= 4:
        dtype = complex if np.abs(coo.data.imag).max() > 0 else float
        bands = np.zeros((bandwidth + 1, H.dim), dtype=dtype)
        for i in range(bandwidth + 1):
            dvals = mat.diagonal(-i)
            bands[i, : len(dvals)] = dvals if dtype is complex else dvals.real
        return scipy.linalg.eig_banded(bands, lower=True, eigvals_only=True)
    raise CapacityError(f"eigenvalue extraction at dim {H.dim} unsupported")


def y_floor(box: LatticeBox, H: LinearOperator, w: SpectralWindow,
            evals: np.ndarray | None = None) -> float:
    """Ten mean level spacings of the truncated operator inside the window."""
    if evals is None:
        evals = eigenvalues_of(H)
    lo = max(w.lo, float(evals[0]))
    hi = min(w.hi, float(evals[-1]))
    count = int(np.count_nonzero((evals >= lo) & (evals <= hi)))
    if count == 0 or hi <= lo:
        raise ValueError(f"window ({w.lo}, {w.hi}) contains no spectrum")
    return 10.0 * (hi - lo) / count


def weighted_resolvent_norm(H: LinearOperator, box: LatticeBox, E: float,
                            y: float, s: float, weight_kind: str = "position",
                            A: LinearOperator | None = None,
                            pperp: np.ndarray | None = None,
                            y_floor_value: float | None = None,
                            tol: float = 1e-9, maxiter: int = 400) -> ScanRecord:
    """Largest singular value of  weight (H - E - iy)^-1 P-perp weight.

    The solve is a sparse complex factorization; the singular value comes
    from power iteration on the normal operator.  ``pperp`` deflates the
    given orthonormal columns (flagged localized states); the position
    weight is the diagonal <n>^-s, the dilation weight is <A>^-s.
    """
    if s <= 0.5:
        raise ValueError("weight exponent must satisfy s > 1/2")
    if y_floor_value is not None and y < y_floor_value:
        raise ValueError(
            f"y={y} below the spacing floor {y_floor_value}; scans are "
            "meaningless beneath the discrete level spacing"
        )
    if weight_kind == "position":
        weight = _position_weight(box, s)

        def apply_w(v):
            return weight * v
    elif weight_kind == "dilation":
        if A is None:
            raise ValueError("dilation weight needs the generator operator")
        wmat = _dilation_weight(A, s)

        def apply_w(v):
            return wmat @ v
    else:
        raise ValueError(f"unknown weight kind {weight_kind!r}")

    shift = E + 1j * y
    try:
        lu = spla.splu((H.entries - shift * sp.identity(H.dim, dtype=complex)).tocsc())
    except RuntimeError as exc:
        raise SolverError(f"factorization failed at shift {shift}") from exc

    def project(v):
        if pperp is None or pperp.size == 0:
            return v
        return v - pperp @ (pperp.conj().T @ v)

    def forward(v):
        return apply_w(lu.solve(project(apply_w(v))))

    def adjoint(v):
        return apply_w(project(lu.solve(apply_w(v), trans="H")))

    rng_free = np.cos(0.7 * np.arange(H.dim) + 0.3) + 0.1
    v = rng_free / np.linalg.norm(rng_free)
    sigma2 = 0.0
    iters = 0
    for iters in range(1, maxiter + 1):
        u = adjoint(forward(v))
        new = float(np.linalg.norm(u))
        if new == 0.0:
            sigma2 = 0.0
            break
        v = u / new
        if abs(new - sigma2) <= tol * max(new, 1e-300):
            sigma2 = new
            break
        sigma2 = new
    norm = math.sqrt(sigma2)
    return ScanRecord(E=E, y=y, s=s, weight_kind=weight_kind,
                      half_width=box.half_width, norm=min(norm, 1.0 / y),
                      solver_iterations=iters)


@dataclass
class LapScanResult:
    records: list
    sup_norms: dict          # (E, half_width) -> sup over y
    exponents: dict          # E -> fitted growth exponent across boxes
    verdicts: dict           # E -> "lap-consistent" | "divergent" | "inconclusive"


def lap_scan(h_builder: Callable[[LatticeBox], LinearOperator],
             boxes: Sequence[LatticeBox], E_grid: Sequence[float], s: float = 0.6,
             y_max: float = 1.0, n_y: int = 10, weight_kind: str = "position",
             window_half_width: float = 0.2,
             deflate: dict | None = None,
             pass_exponent: float = 0.1, fail_exponent: float = 0.3) -> LapScanResult:
    """Sup-over-y weighted resolvent norms across increasing boxes.

    Fits log(sup norm) against log(box size) per energy; an exponent near
    zero is consistent with a bounded boundary value, growth beyond the
    fail threshold marks threshold or eigenvalue behavior.
    """
    if not E_grid:
        raise ValueError("empty energy grid")
    records: list[ScanRecord] = []
    sup_norms: dict = {}
    for box in boxes:
        H = h_builder(box)
        evals = eigenvalues_of(H)
        for E in E_grid:
            w = SpectralWindow.centered(E, window_half_width)
            floor = y_floor(box, H, w, evals=evals)
            ys = np.geomspace(floor, max(y_max, 2.0 * floor), n_y)
            pperp = None if deflate is None else deflate.get(box.half_width)
            best = 0.0
            for y in ys:
                rec = weighted_resolvent_norm(
                    H, box, E, float(y), s, weight_kind=weight_kind,
                    pperp=pperp, y_floor_value=floor)
                records.append(rec)
                best = max(best, rec.norm)
            sup_norms[(E, box.half_width)] = best
    exponents: dict = {}
    verdicts: dict = {}
    sizes = np.array([b.half_width for b in boxes], dtype=float)
    for E in E_grid:
        sups = np.array([sup_norms[(E, b.half_width)] for b in boxes])
        slope = float(np.polyfit(np.log(sizes), np.log(sups), 1)[0])
        exponents[E] = slope
        if slope <= pass_exponent:
            verdicts[E] = "lap-consistent"
        elif slope >= fail_exponent:
            verdicts[E] = "divergent"
        else:
            verdicts[E] = "inconclusive"
    return LapScanResult(records=records, sup_norms=sup_norms,
                         exponents=exponents, verdicts=verdicts)


# ---------------------------------------------------------------------------
# local decay
# ---------------------------------------------------------------------------

@dataclass
class DecayRecord:
    T_max: float
    s: float
    half_width: int
    integral: float
    saturation_ratio: float
    unitarity_drift: float
    propagation_error_bound: float
    initial_norm: float
    times: np.ndarray = field(repr=False, default=None)
    integrand: np.ndarray = field(repr=False, default=None)
    integral_series: np.ndarray = field(repr=False, default=None)


def local_decay(H: LinearOperator, box: LatticeBox, w: SpectralWindow,
                u: np.ndarray, s: float, T_max: float, dt_report: float = 1.0,
                pperp: np.ndarray | None = None,
                tol_step: float = 1e-12) -> DecayRecord:
    """Time integral of the weighted, window-filtered evolution of u.

    The state theta(H) u (with optional deflation) is normalized before
    propagation, so the s = 0 control integral grows with unit slope.
    Propagation is stepped polynomial expansion with a per-step tail
    bound; the reported error bound is the accumulated tail.
    """
    lo_b, hi_b = spectral_bounds(H.entries)
    if w.lo < lo_b - 1.0 or w.hi > hi_b + 1.0:
        raise ValueError(
            f"window ({w.lo}, {w.hi}) far outside the spectrum [{lo_b}, {hi_b}]"
        )
    u = np.asarray(u, dtype=complex)
    v = window_apply(H, w, u)
    if pperp is not None and pperp.size:
        v = v - pperp @ (pperp.conj().T @ v)
    v_norm = float(np.linalg.norm(v))
    if v_norm == 0.0:
        raise ValueError("window annihilates the initial state")
    v = v / v_norm
    weight = _position_weight(box, s) if s != 0.0 else np.ones(box.dim)
    prop = ChebyshevPropagator(mat=H.entries, lo=lo_b, hi=hi_b, tol_step=tol_step)
    coeffs = prop.step_coefficients(dt_report)
    n_steps = int(round(T_max / dt_report))
    times = np.zeros(n_steps + 1)
    integrand = np.zeros(n_steps + 1)
    drift = 0.0
    integrand[0] = float(np.linalg.norm(weight * v) ** 2)
    state = v
    for step in range(1, n_steps + 1):
        state = prop.step(state, dt_report, coeffs=coeffs)
        times[step] = step * dt_report
        integrand[step] = float(np.linalg.norm(weight * state) ** 2)
        drift = max(drift, abs(np.linalg.norm(state) - 1.0))
    integral_series = np.concatenate(
        [[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * dt_report)])
    total = float(integral_series[-1])
    half = float(np.interp(T_max / 2.0, times, integral_series))
    ratio = total / half if half > 0 else math.inf
    return DecayRecord(
        T_max=T_max, s=s, half_width=box.half_width, integral=total,
        saturation_ratio=ratio, unitarity_drift=drift,
        propagation_error_bound=n_steps * tol_step, initial_norm=v_norm,
        times=times, integrand=integrand, integral_series=integral_series,
    )


# ---------------------------------------------------------------------------
# compact-difference profile (window swap between full and free operator)
# ---------------------------------------------------------------------------

def compact_difference_profile(H: LinearOperator, delta: LinearOperator,
                               box: LatticeBox, w: SpectralWindow, eps: float,
                               radii: Sequence[int]) -> list[tuple[int, float]]:
    """Norm of (theta(H) - theta(Delta)) <N>^eps restricted to far tails.

    Decay of this profile with the tail radius is the compactness
    signature of the windowed difference.
    """
    if H.dim > DENSE_DIM_LIMIT:
        raise CapacityError("compact-difference profile needs the dense path")
    evals_h, vecs_h = np.linalg.eigh(H.dense())
    evals_d, vecs_d = np.linalg.eigh(delta.dense())
    th_h = (vecs_h * w.theta(evals_h)) @ vecs_h.conj().T
    th_d = (vecs_d * w.theta(evals_d)) @ vecs_d.conj().T
    c = box.coords()
    bracket = np.sqrt(1.0 + (c * c).sum(axis=1).astype(float))
    diff = (th_h - th_d) * (bracket ** eps)[None, :]
    dist = np.abs(c).max(axis=1)
    out = []
    for r in radii:
        cols = dist >= r
        block = diff[:, cols]
        out.append((int(r), float(np.linalg.norm(block, 2)) if block.size else 0.0))
    return out
