"""Truncated tight-binding Hamiltonian of the bilayer: nearest-neighbor
intralayer hopping -t0 plus the exponentially decaying interlayer kernel
h(r; L) = h0 exp(-alpha0 sqrt(|r|^2 + L^2)).

The assembled operator is Hermitian by construction (entries stored once
with row <= col) and has an exactly zero diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import TextIO

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .geometry import LatticeParams, SiteTable

#: relative tolerance for nearest-neighbor distance detection; positions are
#: closed forms, so this only guards float rounding
TOL_GEOM_REL = 1e-9


@dataclass(frozen=True)
class HoppingModel:
    """Hopping kernel parameters (eV, 1/Angstrom, Angstrom)."""

    t0: float = 3.048
    h0: float = 83.135
    alpha0: float = 1.0
    L: float = 3.5
    interlayer_cutoff: float = 15.0

    def __post_init__(self):
        if min(self.t0, self.h0, self.alpha0) <= 0:
            raise ValueError("t0, h0, alpha0 must be positive")
        if self.interlayer_cutoff <= 0:
            raise ValueError("interlayer_cutoff must be positive")

    def with_h0(self, h0: float) -> "HoppingModel":
        return replace(self, h0=h0)

    def decay_constants(self, params: LatticeParams) -> tuple[float, float]:
        """(h_eff, alpha0) such that every matrix element obeys
        |H_xy| <= h_eff * exp(-alpha0 |pos_x - pos_y|)."""
        h_eff = max(self.t0 * np.exp(self.alpha0 * params.delta), self.h0 * np.exp(self.alpha0 * self.L))
        return h_eff, self.alpha0

    def interlayer(self, inplane_dist):
        """Interlayer kernel at given in-plane distance(s), ignoring the cutoff."""
        return self.h0 * np.exp(-self.alpha0 * np.sqrt(np.asarray(inplane_dist, dtype=float) ** 2 + self.L**2))

    def dropped_mass_estimate(self, params: LatticeParams) -> float:
        """Integral estimate of the per-row interlayer hopping mass dropped by the cutoff.

        Density-of-sites approximation (2 orbitals per cell area on the other
        layer): 2/|Gamma| * 2 pi h0 (1 + u0) e^{-u0} / alpha0^2 with
        u0 = alpha0 sqrt(cutoff^2 + L^2).
        """
        u0 = self.alpha0 * np.sqrt(self.interlayer_cutoff**2 + self.L**2)
        return float(
            (2.0 / params.cell_area) * 2 * np.pi * self.h0 * (1 + u0) * np.exp(-u0) / self.alpha0**2
        )

    def dropped_mass_bound(self, params: LatticeParams) -> float:
        """Rigorous per-row bound on the dropped interlayer mass.

        Covers the lattice sum by the plane integral inflated by e^{delta alpha0}
        over the widened region |x| >= cutoff - delta, and uses
        sqrt(d^2+L^2) >= d + (sqrt(c^2+L^2) - c) for d >= c.
        """
        c = self.interlayer_cutoff
        shift = np.sqrt(c**2 + self.L**2) - c
        s = self.alpha0 * (c - params.delta)
        integral = 2 * np.pi * (1 + s) * np.exp(-s) / self.alpha0**2
        return float(
            np.exp(-self.alpha0 * shift)
            * (2.0 / params.cell_area)
            * np.exp(params.delta * self.alpha0)
            * self.h0
            * integral
        )


def intralayer_element(disp, model: HoppingModel, params: LatticeParams):
    """-t0 when |disp| equals the nearest-neighbor distance delta, else 0."""
    disp = np.atleast_2d(np.asarray(disp, dtype=float))
    dist = np.hypot(disp[:, 0], disp[:, 1])
    tol = TOL_GEOM_REL * params.a
    vals = np.where(np.abs(dist - params.delta) <= tol, -model.t0, 0.0)
    return vals if vals.size > 1 else float(vals[0])


def interlayer_element(disp, model: HoppingModel):
    """h(r; L) for in-plane displacement r, zero beyond the in-plane cutoff."""
    disp = np.atleast_2d(np.asarray(disp, dtype=float))
    dist = np.hypot(disp[:, 0], disp[:, 1])
    vals = np.where(dist <= model.interlayer_cutoff, model.interlayer(dist), 0.0)
    return vals if vals.size > 1 else float(vals[0])


def hopping_fourier(xi, model: HoppingModel) -> float | np.ndarray:
    """2D Fourier transform of the interlayer kernel at wavevector(s) xi.

    hat h(xi; L) = 2 pi h0 alpha0 e^{-L q} (1 + L q) / q^3 with
    q = sqrt(|xi|^2 + alpha0^2); units eV * Angstrom^2.
    """
    xi = np.asarray(xi, dtype=float)
    norm2 = xi**2 if xi.ndim == 0 else np.sum(np.atleast_2d(xi) ** 2, axis=-1)
    q = np.sqrt(norm2 + model.alpha0**2)
    val = 2 * np.pi * model.h0 * model.alpha0 * np.exp(-model.L * q) * (1 + model.L * q) / q**3
    return float(val) if np.ndim(val) == 0 or val.size == 1 else val


def norm_bound(model: HoppingModel, params: LatticeParams) -> float:
    """Analytic operator-norm bound 8 pi h0 e^{delta alpha0} / (|Gamma| alpha0^2).

    Loose at physical parameters; prefer the row-sum bound of an assembled
    operator for contour placement when one is available.
    """
    return float(
        8 * np.pi * model.h0 * np.exp(params.delta * model.alpha0) / (params.cell_area * model.alpha0**2)
    )


@dataclass(frozen=True)
class SparseHermitian:
    """Hermitian operator on a SiteTable; off-diagonal entries stored once with row < col."""

    table: SiteTable
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @property
    def n(self) -> int:
        return len(self.table)

    @property
    def nnz_stored(self) -> int:
        return self.rows.shape[0]

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Full Hermitian matrix in CSR form."""
        upper = sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=(self.n, self.n))
        full = (upper + upper.conj().T).tocsr()
        full.sum_duplicates()
        return full

    @cached_property
    def gershgorin_bound(self) -> float:
        """Max absolute row sum; all eigenvalues lie in [-bound, bound]."""
        m = self.matrix
        return float(np.max(np.abs(m).sum(axis=1))) if self.n else 0.0

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def write_coordinate(self, fh: TextIO) -> None:
        """Coordinate text dump: header '# n nnz' then 'row col re im' per stored entry."""
        fh.write(f"# {self.n} {self.nnz_stored}\n")
        for r, c, v in zip(self.rows, self.cols, self.vals):
            fh.write(f"{int(r)} {int(c)} {v.real!r} {v.imag!r}\n")


def assemble(table: SiteTable, model: HoppingModel) -> SparseHermitian:
    """Assemble H_R on the table: intralayer nearest neighbors and interlayer
    hops within the in-plane cutoff, in deterministic (row, col) order."""
    if len(table) == 0:
        raise ValueError("site table is empty")
    params = table.params
    pos = table.positions
    idx_all = np.arange(len(table))

    rows_parts, cols_parts, vals_parts = [], [], []

    tol = TOL_GEOM_REL * params.a
    for layer in (1, 2):
        sel = idx_all[table.layer == layer]
        if sel.size < 2:
            continue
        tree = cKDTree(pos[sel])
        pairs = tree.query_pairs(params.delta + tol, output_type="ndarray")
        if pairs.size == 0:
            continue
        d = np.linalg.norm(pos[sel[pairs[:, 0]]] - pos[sel[pairs[:, 1]]], axis=1)
        keep = np.abs(d - params.delta) <= tol
        gi, gj = sel[pairs[keep, 0]], sel[pairs[keep, 1]]
        r = np.minimum(gi, gj)
        c = np.maximum(gi, gj)
        rows_parts.append(r)
        cols_parts.append(c)
        vals_parts.append(np.full(r.shape, -model.t0, dtype=complex))

    sel1 = idx_all[table.layer == 1]
    sel2 = idx_all[table.layer == 2]
    if sel1.size and sel2.size:
        tree1 = cKDTree(pos[sel1])
        tree2 = cKDTree(pos[sel2])
        dists = tree1.sparse_distance_matrix(tree2, model.interlayer_cutoff, output_type="coo_matrix")
        gi = sel1[dists.row]
        gj = sel2[dists.col]
        vals = model.interlayer(dists.data).astype(complex)
        # layer-1 index is always below any layer-2 index in table order
        rows_parts.append(gi)
        cols_parts.append(gj)
        vals_parts.append(vals)

    if rows_parts:
        rows = np.concatenate(rows_parts)
        cols = np.concatenate(cols_parts)
        vals = np.concatenate(vals_parts)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
    else:
        rows = np.zeros(0, dtype=np.int64)
        cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0, dtype=complex)

    return SparseHermitian(table=table, rows=rows, cols=cols, vals=vals)
