"""Closed-form commutators with the dilation generator, plus checks.

Each closed form below reproduces i(TA - AT) exactly on sites at least
two steps from a box cut (the generator and the Laplacian each reach one
neighbor, so products reach two).  The verification harness measures the
worst residual over such interior basis vectors; the non-compactness
probe evaluates the bounded part on the runaway basis sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lattice import (
    LatticeBox,
    LinearOperator,
    ModelSpec,
    build_axis_laplacian,
    build_dilation_generator,
    build_potential,
    build_shift,
    build_sign_weight,
    build_wigner,
    build_wtilde,
    potential_values,
    wigner_values,
)

__all__ = [
    "CommutatorSet",
    "assemble_commutators",
    "laplacian_commutator",
    "noncompactness_probe",
    "potential_commutator",
    "verify_form_commutator",
    "wigner_commutator",
]

INTERIOR_DEPTH = 2


@dataclass
class CommutatorSet:
    delta_comm: LinearOperator
    wigner_K: LinearOperator | None
    wigner_B: LinearOperator | None
    potential_comm: LinearOperator | None
    interior_mask: np.ndarray


def laplacian_commutator(box: LatticeBox) -> LinearOperator:
    """Sum over axes of the one-dimensional polynomial D(4 - D)."""
    dim = box.dim
    total = sp.csr_matrix((dim, dim), dtype=np.complex128)
    eye4 = sp.identity(dim, dtype=np.complex128, format="csr") * 4.0
    for axis in range(1, box.d + 1):
        d_axis = build_axis_laplacian(box, axis).entries
        total = total + d_axis @ (eye4 - d_axis)
    return LinearOperator.wrap(
        total, hermitian=True, label=f"laplacian_comm[{box.descriptor()}]"
    )


def wigner_commutator(box: LatticeBox, spec: ModelSpec
                      ) -> tuple[LinearOperator, LinearOperator]:
    """Split of the oscillating-potential commutator into K (decaying
    row norms) and B (bounded, non-compact) parts."""
    if spec.variant not in ("W", "Wprime"):
        raise ValueError("wigner_commutator requires variant W or Wprime")
    spec.validate_for(box)
    dim = box.dim
    w_diag = wigner_values(box, spec)
    w_op = sp.diags(w_diag.astype(np.complex128), 0, format="csr")
    coords = box.coords()
    k_total = sp.csr_matrix((dim, dim), dtype=np.complex128)
    b_total = sp.csr_matrix((dim, dim), dtype=np.complex128)
    for axis in range(1, box.d + 1):
        s = build_shift(box, axis).entries
        splus = s.getH() + s
        sminus = s.getH() - s
        k_total = k_total + 0.5 * (w_op @ splus + splus @ w_op)
        # the axis weight n_i * W(n) vanishes at n_i = 0 in both variants
        hat = coords[:, axis - 1] * w_diag
        hat_op = sp.diags(hat.astype(np.complex128), 0, format="csr")
        b_total = b_total + (hat_op @ sminus - sminus @ hat_op)
    label = f"wigner_comm[{spec.variant},{box.descriptor()}]"
    k_op = LinearOperator.wrap(k_total, hermitian=True, label=label + ".K")
    b_op = LinearOperator.wrap(b_total, hermitian=True, label=label + ".B")
    return k_op, b_op


def potential_commutator(box: LatticeBox, spec: ModelSpec) -> LinearOperator:
    """Closed form built from first differences of the tail potential.

    Per axis the nonzero entries sit one step off the diagonal:
    row m, column m - e_i carries -(m_i - 1/2)(V(m) - V(m - e_i)) and
    row m, column m + e_i carries  (m_i + 1/2)(V(m) - V(m + e_i)).
    """
    dim = box.dim
    vals = potential_values(box, spec)
    coords = box.coords()
    total = sp.csr_matrix((dim, dim), dtype=np.complex128)
    for axis in range(1, box.d + 1):
        s = build_shift(box, axis).entries
        v_down = s @ vals        # at row m: V(m - e_i), zero-padded at the cut
        v_up = s.getH() @ vals   # at row m: V(m + e_i)
        n_i = coords[:, axis - 1]
        d_minus = sp.diags((-(n_i - 0.5) * (vals - v_down)).astype(np.complex128), 0)
        d_plus = sp.diags(((n_i + 0.5) * (vals - v_up)).astype(np.complex128), 0)
        total = total + d_minus @ s + d_plus @ s.getH()
    return LinearOperator.wrap(
        total, hermitian=True,
        label=f"potential_comm[{spec.v_kind},{box.descriptor()}]",
    )


def assemble_commutators(box: LatticeBox, spec: ModelSpec) -> CommutatorSet:
    wk = wb = pc = None
    if spec.variant != "none":
        wk, wb = wigner_commutator(box, spec)
    if spec.v_kind != "none":
        pc = potential_commutator(box, spec)
    return CommutatorSet(
        delta_comm=laplacian_commutator(box),
        wigner_K=wk,
        wigner_B=wb,
        potential_comm=pc,
        interior_mask=box.interior_mask(INTERIOR_DEPTH),
    )


def verify_form_commutator(T: LinearOperator, A: LinearOperator,
                           closed: LinearOperator, box: LatticeBox,
                           sites: np.ndarray | str = "interior") -> float:
    """Worst-case ||(i(TA - AT) - closed) delta_n|| over selected sites.

    ``sites`` is ``interior`` (distance >= 2 from any cut), ``near_origin``
    (the opposite report for the |n| <= 1 block), or an explicit boolean
    mask over box sites.
    """
    for op in (T, A, closed):
        if op.dim != box.dim:
            raise ValueError(
                f"dimension mismatch: {op.label} has dim {op.dim}, box has {box.dim}"
            )
    if isinstance(sites, str):
        if sites == "interior":
            mask = box.interior_mask(INTERIOR_DEPTH)
        elif sites == "near_origin":
            mask = (np.abs(box.coords()) <= 1).all(axis=1)
        else:
            raise ValueError(f"unknown site selector {sites!r}")
    else:
        mask = np.asarray(sites, dtype=bool)
    diff = 1j * (T.entries @ A.entries - A.entries @ T.entries) - closed.entries
    cols = np.flatnonzero(mask)
    if not cols.size:
        return 0.0
    sub = diff.tocsc()[:, cols]
    col_norms = np.sqrt(np.asarray(sub.multiply(sub.conj()).sum(axis=0)).real)
    return float(col_norms.max())


def noncompactness_probe(B: LinearOperator, box: LatticeBox, j_max: int) -> np.ndarray:
    """Norms ||B delta_j|| along the axis-1 runaway sequence j = 2..j_max.

    A compact operator would force these to zero; a positive floor over
    growing j exhibits the obstruction.
    """
    if j_max > box.half_width - 1:
        raise ValueError(f"j_max={j_max} leaves no interior margin at L={box.half_width}")
    sites = np.zeros((j_max - 1, box.d), dtype=np.int64)
    sites[:, 0] = np.arange(2, j_max + 1)
    cols = box.index_of(sites)
    sub = B.entries.tocsc()[:, cols]
    return np.sqrt(np.asarray(sub.multiply(sub.conj()).sum(axis=0)).real).ravel()
