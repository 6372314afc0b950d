"""Complex amplitude vectors over a SiteTable."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .geometry import SUBLATTICES, SiteTable


@dataclass
class LatticeState:
    """Truncated wavefunction: one complex amplitude per table site."""

    table: SiteTable
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (len(self.table),):
            raise ValueError(
                f"state has {self.values.shape} amplitudes for {len(self.table)} sites"
            )

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def normalized(self) -> "LatticeState":
        n = self.norm
        if n == 0:
            raise ValueError("cannot normalize the zero state")
        return LatticeState(self.table, self.values / n)

    def copy(self) -> "LatticeState":
        return LatticeState(self.table, self.values.copy())

    def tail_mass(self, r: float) -> float:
        """l2 mass outside the ball of radius r: phi(r) of this state."""
        outside = np.hypot(self.table.positions[:, 0], self.table.positions[:, 1]) > r
        return float(np.linalg.norm(self.values[outside]))

    def restrict_ball(self, r: float) -> "LatticeState":
        """Zero all amplitudes outside the ball of radius r (same table)."""
        keep = np.hypot(self.table.positions[:, 0], self.table.positions[:, 1]) <= r
        return LatticeState(self.table, np.where(keep, self.values, 0.0))

    def centroid(self) -> np.ndarray:
        """Probability-weighted mean position."""
        w = np.abs(self.values) ** 2
        total = w.sum()
        if total == 0:
            return np.zeros(2)
        return (self.table.positions * w[:, None]).sum(axis=0) / total

    def restrict_to(self, sub: SiteTable) -> "LatticeState":
        """Amplitudes on a subset table."""
        return LatticeState(sub, self.values[self.table.index_of(sub)])

    def extend_to(self, big: SiteTable) -> "LatticeState":
        """Zero-extend onto a superset table."""
        vals = np.zeros(len(big), dtype=complex)
        vals[big.index_of(self.table)] = self.values
        return LatticeState(big, vals)

    def write_csv(self, fh: TextIO, header_comment: str | None = None) -> None:
        """Snapshot columns layer,sublattice,n1,n2,x,y,re,im,abs."""
        if header_comment:
            fh.write(header_comment.rstrip("\n") + "\n")
        writer = csv.writer(fh)
        writer.writerow(["layer", "sublattice", "n1", "n2", "x", "y", "re", "im", "abs"])
        t = self.table
        for i in range(len(t)):
            v = self.values[i]
            writer.writerow(
                [
                    int(t.layer[i]),
                    SUBLATTICES[t.sublattice[i]],
                    int(t.cell[i, 0]),
                    int(t.cell[i, 1]),
                    repr(float(t.positions[i, 0])),
                    repr(float(t.positions[i, 1])),
                    repr(float(v.real)),
                    repr(float(v.imag)),
                    repr(float(abs(v))),
                ]
            )
