"""Finite lattice geometry and operator assembly.

Everything downstream works with complex sparse matrices on a cube of
lattice sites centered at the origin, ``{n : |n_i| <= L}``.  Two boundary
modes are supported: ``dirichlet`` (plain truncation of the infinite
matrix) and ``periodic`` (sites wrap with circumference ``2L+1``).  All
builders are pure functions of the box and the model parameters; the
returned operators are never mutated afterwards, so they are safe to
share between scan workers.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "CapacityError",
    "LatticeBox",
    "LinearOperator",
    "ModelSpec",
    "build_dilation_generator",
    "build_hamiltonian",
    "build_laplacian",
    "build_modulation",
    "build_position",
    "build_potential",
    "build_shift",
    "build_sign_weight",
    "build_wigner",
    "build_wtilde",
    "diagonal_operator",
    "dump_operator",
    "load_operator",
    "potential_values",
    "wigner_values",
]

# Beyond this dense diagonalization / dense projectors are refused.
DENSE_DIM_LIMIT = 4096

SIN_TOL = 1e-12  # admissibility of a frequency: |sin(k)| must exceed this
HERMITIAN_TOL = 1e-14


class CapacityError(RuntimeError):
    """A requested computation exceeds the configured dense-size limits."""


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeBox:
    """Cube of sites ``{n in Z^d : |n_i| <= half_width}`` with an index map.

    Site indices are row-major over coordinates shifted by ``half_width``,
    axis 0 slowest, so the map is a bijection onto ``range(dim)``.
    """

    d: int
    half_width: int
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.half_width < 1:
            raise ValueError(f"half_width must be >= 1, got {self.half_width}")
        if self.boundary not in ("dirichlet", "periodic"):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")

    @property
    def side(self) -> int:
        return 2 * self.half_width + 1

    @property
    def dim(self) -> int:
        return self.side ** self.d

    def coords(self) -> np.ndarray:
        """All site coordinates, shape (dim, d), in index order."""
        side = self.side
        grid = np.indices((side,) * self.d).reshape(self.d, -1).T
        return grid - self.half_width

    def index_of(self, sites: np.ndarray) -> np.ndarray:
        """Map site coordinates (..., d) to flat indices."""
        sites = np.asarray(sites)
        strides = self.side ** np.arange(self.d - 1, -1, -1)
        return (sites + self.half_width) @ strides

    def site_of(self, indices) -> np.ndarray:
        """Inverse of :meth:`index_of`."""
        idx = np.asarray(indices)
        out = np.empty(idx.shape + (self.d,), dtype=np.int64)
        rem = idx
        for axis in range(self.d - 1, -1, -1):
            out[..., axis] = rem % self.side - self.half_width
            rem = rem // self.side
        return out

    def interior_mask(self, depth: int = 2) -> np.ndarray:
        """Sites at distance >= ``depth`` from every box face (and seam)."""
        c = self.coords()
        return (np.abs(c) <= self.half_width - depth).all(axis=1)

    def descriptor(self) -> str:
        return f"d={self.d} L={self.half_width} boundary={self.boundary}"


# ---------------------------------------------------------------------------
# model parameters
# ---------------------------------------------------------------------------

def _as_tuple(x) -> tuple:
    if np.isscalar(x):
        return (float(x),)
    return tuple(float(v) for v in x)


@dataclass(frozen=True)
class ModelSpec:
    """Physical parameters: oscillating potential variant and long-range tail.

    ``variant`` is one of ``W`` (coupling q, frequency k, envelope 1/|n|),
    ``Wprime`` (per-axis couplings/frequencies, envelope 1/n_i per factor)
    or ``none``.  The tail ``V`` is selected by ``v_kind``:
    ``inverse_power`` is exactly ``C <n>^-rho``, ``short_range`` is
    ``C <n>^-(1+rho)``, ``custom_table`` reads per-site values.
    """

    variant: str = "none"
    q: tuple = (1.0,)
    k: tuple = (math.pi / 3,)
    v_kind: str = "none"
    v_C: float = 0.0
    v_rho: float = 1.0
    v_table: Mapping[tuple, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "q", _as_tuple(self.q))
        object.__setattr__(self, "k", _as_tuple(self.k))
        if self.variant not in ("W", "Wprime", "none"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.v_kind not in ("none", "inverse_power", "short_range", "custom_table"):
            raise ValueError(f"unknown v_kind {self.v_kind!r}")
        if self.variant != "none":
            for k in self.k:
                if abs(math.sin(k)) <= SIN_TOL:
                    raise ValueError(
                        f"frequency k={k} is a multiple of pi (sin(k)={math.sin(k):.2e})"
                    )
            for q in self.q:
                if q == 0.0:
                    raise ValueError("coupling q must be nonzero")
        if self.v_kind in ("inverse_power", "short_range"):
            if self.v_rho <= 0:
                raise ValueError(f"v_rho must be positive, got {self.v_rho}")
            if self.v_C < 0:
                raise ValueError(f"v_C must be nonnegative, got {self.v_C}")

    def validate_for(self, box: LatticeBox) -> None:
        """Arity checks that need the lattice dimension."""
        if self.variant == "W" and len(self.q) != 1:
            raise ValueError("variant W takes a scalar coupling q")
        if self.variant == "W" and len(self.k) != 1:
            raise ValueError("variant W takes a scalar frequency k")
        if self.variant == "Wprime":
            if len(self.q) != box.d or len(self.k) != box.d:
                raise ValueError(
                    f"variant Wprime needs q and k vectors of length d={box.d}, "
                    f"got lengths {len(self.q)} and {len(self.k)}"
                )


# ---------------------------------------------------------------------------
# operator container
# ---------------------------------------------------------------------------

@dataclass
class LinearOperator:
    """A complex sparse matrix together with its provenance label."""

    dim: int
    entries: sp.csr_matrix
    hermitian: bool
    label: str

    @classmethod
    def wrap(cls, mat, hermitian: bool, label: str, check: bool = True) -> "LinearOperator":
        mat = sp.csr_matrix(mat, dtype=np.complex128)
        mat.sum_duplicates()
        mat.sort_indices()
        if mat.shape[0] != mat.shape[1]:
            raise ValueError(f"operator must be square, got shape {mat.shape}")
        op = cls(dim=mat.shape[0], entries=mat, hermitian=hermitian, label=label)
        if hermitian and check:
            dev = op.hermiticity_defect()
            if dev > HERMITIAN_TOL:
                raise ValueError(f"{label}: hermiticity defect {dev:.3e} > {HERMITIAN_TOL}")
        return op

    def hermiticity_defect(self) -> float:
        diff = self.entries - self.entries.getH()
        return 0.0 if diff.nnz == 0 else float(np.abs(diff.data).max())

    def dense(self) -> np.ndarray:
        if self.dim > DENSE_DIM_LIMIT:
            raise CapacityError(f"dense form of dim {self.dim} exceeds {DENSE_DIM_LIMIT}")
        return self.entries.toarray()

    def norm2(self) -> float:
        """Spectral norm (dense path, capacity limited)."""
        if self.entries.nnz == 0:
            return 0.0
        return float(np.linalg.norm(self.dense(), 2))


def diagonal_operator(box: LatticeBox, values: np.ndarray, label: str) -> LinearOperator:
    values = np.asarray(values)
    if values.shape != (box.dim,):
        raise ValueError(f"diagonal length {values.shape} does not match box dim {box.dim}")
    herm = bool(np.isrealobj(values) or np.abs(values.imag).max() == 0.0)
    return LinearOperator.wrap(
        sp.diags(values.astype(np.complex128), 0, format="csr"), herm, label, check=False
    )


# ---------------------------------------------------------------------------
# shift / position / modulation builders
# ---------------------------------------------------------------------------

def _shift_pairs(box: LatticeBox, axis: int, dirichlet: bool | None = None):
    """Index pairs (row, col) of the forward shift along ``axis``.

    The shift maps the basis vector at site n to the one at n + e_axis.
    """
    if not 1 <= axis <= box.d:
        raise ValueError(f"axis {axis} out of range [1, {box.d}]")
    a = axis - 1
    coords = box.coords()
    target = coords.copy()
    target[:, a] += 1
    use_dirichlet = box.boundary == "dirichlet" if dirichlet is None else dirichlet
    if use_dirichlet:
        keep = target[:, a] <= box.half_width
        rows = box.index_of(target[keep])
        cols = np.flatnonzero(keep)
    else:
        over = target[:, a] > box.half_width
        target[over, a] = -box.half_width
        rows = box.index_of(target)
        cols = np.arange(box.dim)
    return rows, cols


def build_shift(box: LatticeBox, axis: int, adjoint: bool = False,
                dirichlet: bool | None = None) -> LinearOperator:
    """Shift operator S_axis (or its adjoint) respecting the boundary mode."""
    rows, cols = _shift_pairs(box, axis, dirichlet)
    if adjoint:
        rows, cols = cols, rows
    data = np.ones(len(rows), dtype=np.complex128)
    mat = sp.csr_matrix((data, (rows, cols)), shape=(box.dim, box.dim))
    name = f"shift{'_adj' if adjoint else ''}[axis={axis},{box.descriptor()}]"
    return LinearOperator.wrap(mat, hermitian=False, label=name, check=False)


def build_position(box: LatticeBox, axis: int) -> LinearOperator:
    if not 1 <= axis <= box.d:
        raise ValueError(f"axis {axis} out of range [1, {box.d}]")
    vals = box.coords()[:, axis - 1].astype(float)
    return diagonal_operator(box, vals, f"position[axis={axis},{box.descriptor()}]")


def build_sign_weight(box: LatticeBox, axis: int) -> LinearOperator:
    """Direction cosine n_axis/|n| (plain sign in 1d), zero at the origin."""
    if not 1 <= axis <= box.d:
        raise ValueError(f"axis {axis} out of range [1, {box.d}]")
    c = box.coords().astype(float)
    r = np.sqrt((c * c).sum(axis=1))
    vals = np.zeros(box.dim)
    nz = r > 0
    vals[nz] = c[nz, axis - 1] / r[nz]
    return diagonal_operator(box, vals, f"sign_weight[axis={axis},{box.descriptor()}]")


def build_modulation(box: LatticeBox, k: float) -> LinearOperator:
    """Unitary diagonal exp(i k (n_1 + ... + n_d))."""
    phase = k * box.coords().sum(axis=1)
    vals = np.exp(1j * phase)
    return LinearOperator.wrap(
        sp.diags(vals, 0, format="csr"), hermitian=False,
        label=f"modulation[k={k!r},{box.descriptor()}]", check=False,
    )


# ---------------------------------------------------------------------------
# model operators
# ---------------------------------------------------------------------------

def build_laplacian(box: LatticeBox) -> LinearOperator:
    """Nearest-neighbor Laplacian: diagonal 2d, -1 toward each neighbor."""
    dim = box.dim
    mat = sp.diags([2.0 * box.d] * dim, 0, format="csr", dtype=np.complex128)
    for axis in range(1, box.d + 1):
        rows, cols = _shift_pairs(box, axis)
        ones = np.ones(len(rows), dtype=np.complex128)
        hop = sp.csr_matrix((ones, (rows, cols)), shape=(dim, dim))
        mat = mat - hop - hop.T
    return LinearOperator.wrap(mat, hermitian=True, label=f"laplacian[{box.descriptor()}]")


def build_axis_laplacian(box: LatticeBox, axis: int) -> LinearOperator:
    """One-dimensional Laplacian acting along a single axis of the box."""
    rows, cols = _shift_pairs(box, axis)
    ones = np.ones(len(rows), dtype=np.complex128)
    hop = sp.csr_matrix((ones, (rows, cols)), shape=(box.dim, box.dim))
    mat = sp.diags([2.0] * box.dim, 0, format="csr", dtype=np.complex128) - hop - hop.T
    return LinearOperator.wrap(
        mat, hermitian=True, label=f"laplacian_axis[axis={axis},{box.descriptor()}]"
    )


def wigner_values(box: LatticeBox, spec: ModelSpec) -> np.ndarray:
    """Diagonal of the oscillating potential, with sin(0)/0 := 1 conventions."""
    spec.validate_for(box)
    c = box.coords()
    if spec.variant == "W":
        q, k = spec.q[0], spec.k[0]
        r = np.sqrt((c * c).sum(axis=1).astype(float))
        s = np.sin(k * c.sum(axis=1))
        vals = np.empty(box.dim)
        nz = r > 0
        vals[nz] = q * s[nz] / r[nz]
        vals[~nz] = q  # single site n = 0
        return vals
    if spec.variant == "Wprime":
        vals = np.ones(box.dim)
        for a in range(box.d):
            q, k = spec.q[a], spec.k[a]
            n = c[:, a].astype(float)
            factor = np.full(box.dim, q)
            nz = n != 0
            factor[nz] = q * np.sin(k * n[nz]) / n[nz]
            vals *= factor
        return vals
    raise ValueError("wigner_values needs variant W or Wprime")


def build_wigner(box: LatticeBox, spec: ModelSpec) -> LinearOperator:
    if spec.variant not in ("W", "Wprime"):
        raise ValueError("build_wigner requires spec.variant in {W, Wprime}")
    return diagonal_operator(
        box, wigner_values(box, spec), f"wigner[{spec.variant},{box.descriptor()}]"
    )


def build_wtilde(box: LatticeBox, spec: ModelSpec) -> LinearOperator:
    """Undamped oscillation q sin(k (n_1+...+n_d)) (variant W, any d; Wprime in 1d)."""
    spec.validate_for(box)
    c = box.coords()
    if spec.variant == "W" or (spec.variant == "Wprime" and box.d == 1):
        q, k = spec.q[0], spec.k[0]
        vals = q * np.sin(k * c.sum(axis=1))
        return diagonal_operator(box, vals, f"wtilde[{box.descriptor()}]")
    raise ValueError("build_wtilde is defined for variant W (any d) or 1d Wprime")


def potential_values(box: LatticeBox, spec: ModelSpec) -> np.ndarray:
    c = box.coords()
    bracket = np.sqrt(1.0 + (c * c).sum(axis=1).astype(float))
    if spec.v_kind == "none":
        return np.zeros(box.dim)
    if spec.v_kind == "inverse_power":
        return spec.v_C * bracket ** (-spec.v_rho)
    if spec.v_kind == "short_range":
        return spec.v_C * bracket ** (-1.0 - spec.v_rho)
    if spec.v_kind == "custom_table":
        if spec.v_table is None:
            raise ValueError("v_kind=custom_table but no site-value table supplied")
        vals = np.empty(box.dim)
        for i, site in enumerate(map(tuple, c)):
            if site not in spec.v_table:
                raise ValueError(f"custom potential table is missing site {site}")
            vals[i] = spec.v_table[site]
        return vals
    raise ValueError(f"unknown v_kind {spec.v_kind!r}")


def build_potential(box: LatticeBox, spec: ModelSpec) -> LinearOperator:
    return diagonal_operator(
        box, potential_values(box, spec), f"potential[{spec.v_kind},{box.descriptor()}]"
    )


def build_hamiltonian(box: LatticeBox, spec: ModelSpec) -> LinearOperator:
    """Laplacian plus whatever potentials the spec switches on."""
    mat = build_laplacian(box).entries
    parts = ["laplacian"]
    if spec.variant != "none":
        mat = mat + build_wigner(box, spec).entries
        parts.append(spec.variant)
    if spec.v_kind != "none":
        mat = mat + build_potential(box, spec).entries
        parts.append(spec.v_kind)
    return LinearOperator.wrap(
        mat, hermitian=True, label=f"hamiltonian[{'+'.join(parts)},{box.descriptor()}]"
    )


def build_dilation_generator(box: LatticeBox) -> LinearOperator:
    """Dilation-type conjugate operator, symmetrized over each axis.

    Assembled as (i/2) sum_i [(S_i - S_i*) N_i + N_i (S_i - S_i*)] with
    Dirichlet-truncated shifts regardless of the box boundary mode, which
    makes hermiticity structural.  Rows within one site of the cut differ
    from the infinite-volume operator; the label records the truncation.
    """
    dim = box.dim
    total = sp.csr_matrix((dim, dim), dtype=np.complex128)
    for axis in range(1, box.d + 1):
        s = build_shift(box, axis, dirichlet=True).entries
        n = sp.diags(box.coords()[:, axis - 1].astype(np.complex128), 0, format="csr")
        diff = s - s.getH()
        total = total + 0.5j * (diff @ n + n @ diff)
    return LinearOperator.wrap(
        total, hermitian=True,
        label=f"dilation[dirichlet-truncated,{box.descriptor()}]",
    )


# ---------------------------------------------------------------------------
# text export
# ---------------------------------------------------------------------------

def dump_operator(op: LinearOperator, box: LatticeBox, fh) -> None:
    """Write header plus 'row col re im' COO lines sorted by (row, col)."""
    coo = op.entries.tocoo()
    order = np.lexsort((coo.col, coo.row))
    fh.write(f"# label: {op.label}\n")
    fh.write(f"# dim: {op.dim}\n")
    fh.write(f"# hermitian: {'true' if op.hermitian else 'false'}\n")
    fh.write(f"# box: {box.descriptor()}\n")
    for i in order:
        v = coo.data[i]
        fh.write(f"{coo.row[i]} {coo.col[i]} {v.real:.17g} {v.imag:.17g}\n")


def dumps_operator(op: LinearOperator, box: LatticeBox) -> str:
    buf = io.StringIO()
    dump_operator(op, box, buf)
    return buf.getvalue()


def load_operator(fh) -> LinearOperator:
    """Inverse of :func:`dump_operator` (round-trip helper)."""
    header: dict[str, str] = {}
    rows, cols, vals = [], [], []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
            continue
        r, c, re_, im_ = line.split()
        rows.append(int(r))
        cols.append(int(c))
        vals.append(float(re_) + 1j * float(im_))
    dim = int(header["dim"])
    mat = sp.csr_matrix(
        (np.array(vals, dtype=np.complex128), (rows, cols)), shape=(dim, dim)
    )
    return LinearOperator.wrap(
        mat, hermitian=header.get("hermitian") == "true",
        label=header.get("label", "loaded"), check=False,
    )
