"""Lattice, reciprocal, and moire geometry of twisted bilayer graphene.

Conventions (stamped into all run metadata):
  * lengths in Angstrom, wavevectors in 1/Angstrom
  * layer 1 is rotated by -theta/2, layer 2 by +theta/2
  * site ordering is lexicographic on (layer, sublattice, n1, n2)
  * moire K point fixed as K_m = (2*b_m1 + b_m2)/3
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import TextIO

import numpy as np

from .errors import DegenerateAngleError

SQRT3 = np.sqrt(3.0)

#: stamped convention strings, exported through run metadata
CONVENTIONS = {
    "K_m": "(2*b_m1 + b_m2)/3",
    "site_order": "lexicographic (layer, sublattice, n1, n2)",
    "layer_rotation": "layer 1 by -theta/2, layer 2 by +theta/2",
    "boundary": "sites with |position| == R are included",
}


def rotation(eta: float) -> np.ndarray:
    """Counter-clockwise rotation matrix by angle eta (radians)."""
    c, s = np.cos(eta), np.sin(eta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class LatticeParams:
    """Monolayer lattice constant a, twist angle theta (radians), interlayer distance L.

    theta may be negative (mirror-image bilayer) which is needed for the
    chirality experiments; the geometry repeats beyond |theta| = pi/3.
    """

    a: float = 2.5
    theta: float = np.deg2rad(1.05)
    L: float = 3.5

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError(f"lattice constant must be positive, got {self.a}")
        if self.L < 0:
            raise ValueError(f"interlayer distance must be nonnegative, got {self.L}")
        if not abs(self.theta) < np.pi / 3:
            raise ValueError(f"|theta| must be below pi/3, got {self.theta}")

    @property
    def delta(self) -> float:
        """Nearest-neighbor carbon distance a/sqrt(3)."""
        return self.a / SQRT3

    @property
    def cell_area(self) -> float:
        """Area of the monolayer unit cell, sqrt(3) a^2 / 2."""
        return SQRT3 * self.a**2 / 2

    @property
    def k_dirac(self) -> float:
        """Magnitude of the monolayer Dirac momentum, 4 pi / (3 a)."""
        return 4 * np.pi / (3 * self.a)

    @property
    def delta_k(self) -> float:
        """Distance between the two layers' Dirac points, 2 |K| |sin(theta/2)|."""
        return 2 * self.k_dirac * abs(np.sin(self.theta / 2))


@dataclass(frozen=True)
class MonolayerBasis:
    A: np.ndarray          # (2,2) lattice vectors as columns (a1, a2)
    B: np.ndarray          # (2,2) reciprocal vectors as columns (b1, b2)
    K: np.ndarray
    K_prime: np.ndarray
    tau_A: np.ndarray
    tau_B: np.ndarray


def monolayer_basis(params: LatticeParams) -> MonolayerBasis:
    """Unrotated graphene basis: a1 = (a/2)(1, sqrt3), a2 = (a/2)(-1, sqrt3)."""
    a = params.a
    a1 = 0.5 * a * np.array([1.0, SQRT3])
    a2 = 0.5 * a * np.array([-1.0, SQRT3])
    A = np.column_stack([a1, a2])
    B = 2 * np.pi * np.linalg.inv(A).T        # a_i . b_j = 2 pi delta_ij
    K = params.k_dirac * np.array([1.0, 0.0])
    tau_A = np.zeros(2)
    tau_B = np.array([0.0, params.delta])
    return MonolayerBasis(A=A, B=B, K=K, K_prime=-K, tau_A=tau_A, tau_B=tau_B)


@dataclass(frozen=True)
class LayerBasis:
    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    tau: dict  # sublattice label 'A'/'B' -> 2-vector


def tbg_basis(params: LatticeParams) -> tuple[LayerBasis, LayerBasis]:
    """Per-layer bases: layer 1 rotated by -theta/2, layer 2 by +theta/2."""
    mono = monolayer_basis(params)
    layers = []
    for sign in (-1.0, +1.0):
        R = rotation(sign * params.theta / 2)
        layers.append(
            LayerBasis(
                A=R @ mono.A,
                B=R @ mono.B,
                K=R @ mono.K,
                tau={"A": R @ mono.tau_A, "B": R @ mono.tau_B},
            )
        )
    return layers[0], layers[1]


@dataclass(frozen=True)
class MoireData:
    """Moire reciprocal/lattice vectors and the K_m convention."""

    b_m1: np.ndarray
    b_m2: np.ndarray
    a_m1: np.ndarray
    a_m2: np.ndarray
    K_m: np.ndarray
    convention: str = CONVENTIONS["K_m"]

    @property
    def B_m(self) -> np.ndarray:
        return np.column_stack([self.b_m1, self.b_m2])

    @property
    def A_m(self) -> np.ndarray:
        return np.column_stack([self.a_m1, self.a_m2])


def moire_data(params: LatticeParams) -> MoireData:
    """Moire vectors b_mi = b_1i - b_2i; lattice vectors from a_mi . b_mj = 2 pi d_ij."""
    if params.theta == 0:
        raise DegenerateAngleError("moire cell is infinite at theta = 0")
    l1, l2 = tbg_basis(params)
    B_m = l1.B - l2.B
    A_m = 2 * np.pi * np.linalg.inv(B_m).T
    b_m1, b_m2 = B_m[:, 0], B_m[:, 1]
    K_m = (2 * b_m1 + b_m2) / 3
    return MoireData(b_m1=b_m1, b_m2=b_m2, a_m1=A_m[:, 0], a_m2=A_m[:, 1], K_m=K_m)


SUBLATTICES = ("A", "B")


@dataclass(frozen=True)
class SiteTable:
    """Orbitals of the truncated index set: all sites with |position| <= radius.

    Arrays are aligned and ordered lexicographically on
    (layer, sublattice, n1, n2) so operators built on the table are
    reproducible bit-for-bit.
    """

    params: LatticeParams
    radius: float
    layer: np.ndarray        # (n,) int8, values 1 / 2
    sublattice: np.ndarray   # (n,) int8, 0 = A, 1 = B
    cell: np.ndarray         # (n, 2) int64
    positions: np.ndarray    # (n, 2) float64

    def __len__(self) -> int:
        return self.layer.shape[0]

    @cached_property
    def component(self) -> np.ndarray:
        """Envelope component index 2*(layer-1) + sublattice, in (f1A, f1B, f2A, f2B) order."""
        return (2 * (self.layer.astype(np.int64) - 1) + self.sublattice).astype(np.int64)

    @cached_property
    def keys(self) -> np.ndarray:
        """Packed int64 site keys, usable to match sites across tables."""
        return pack_site_keys(self.layer, self.sublattice, self.cell)

    def index_of(self, other: "SiteTable") -> np.ndarray:
        """Positions of ``other``'s sites inside this table (other must be a subset)."""
        pos = np.searchsorted(self.keys, other.keys)
        if pos.size and (pos >= len(self)).any():
            raise ValueError("site table is not a subset")
        if not np.array_equal(self.keys[pos], other.keys):
            raise ValueError("site table is not a subset")
        return pos

    def write_csv(self, fh: TextIO, header_comment: str | None = None) -> None:
        """Emit columns layer,sublattice,n1,n2,x,y."""
        if header_comment:
            fh.write(header_comment.rstrip("\n") + "\n")
        writer = csv.writer(fh)
        writer.writerow(["layer", "sublattice", "n1", "n2", "x", "y"])
        for i in range(len(self)):
            writer.writerow(
                [
                    int(self.layer[i]),
                    SUBLATTICES[self.sublattice[i]],
                    int(self.cell[i, 0]),
                    int(self.cell[i, 1]),
                    repr(float(self.positions[i, 0])),
                    repr(float(self.positions[i, 1])),
                ]
            )


_KEY_OFFSET = 1 << 20  # cell indices fit comfortably below this for any radius we build


def pack_site_keys(layer: np.ndarray, sublattice: np.ndarray, cell: np.ndarray) -> np.ndarray:
    n1 = cell[:, 0].astype(np.int64) + _KEY_OFFSET
    n2 = cell[:, 1].astype(np.int64) + _KEY_OFFSET
    return (
        ((layer.astype(np.int64) - 1) << 43)
        | (sublattice.astype(np.int64) << 42)
        | (n1 << 21)
        | n2
    )


def enumerate_sites(params: LatticeParams, radius: float) -> SiteTable:
    """All orbitals with |R_i + tau_i^sigma| <= radius, deterministically ordered.

    Scans a square window of integer cells wide enough to cover the disc
    (half-width ceil(R / row spacing) + 2, row spacing sqrt(3) a / 2) and
    filters by the radius; boundary ties are included.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    layers = tbg_basis(params)
    half = int(np.ceil(radius / (SQRT3 * params.a / 2))) + 2
    n1, n2 = np.meshgrid(np.arange(-half, half + 1), np.arange(-half, half + 1), indexing="ij")
    cells = np.column_stack([n1.ravel(), n2.ravel()]).astype(np.int64)

    parts = []
    for layer_idx, basis in enumerate(layers, start=1):
        lattice_pts = cells @ basis.A.T
        for sub_idx, sub in enumerate(SUBLATTICES):
            pos = lattice_pts + basis.tau[sub]
            mask = np.hypot(pos[:, 0], pos[:, 1]) <= radius
            kept_cells = cells[mask]
            kept_pos = pos[mask]
            order = np.lexsort((kept_cells[:, 1], kept_cells[:, 0]))
            parts.append((layer_idx, sub_idx, kept_cells[order], kept_pos[order]))

    layer_arr = np.concatenate([np.full(len(c), li, dtype=np.int8) for li, _, c, _ in parts])
    sub_arr = np.concatenate([np.full(len(c), si, dtype=np.int8) for _, si, c, _ in parts])
    cell_arr = np.concatenate([c for _, _, c, _ in parts])
    pos_arr = np.concatenate([p for _, _, _, p in parts])
    return SiteTable(
        params=params,
        radius=radius,
        layer=layer_arr,
        sublattice=sub_arr,
        cell=cell_arr,
        positions=pos_arr,
    )
