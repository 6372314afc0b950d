"""Bistritzer-MacDonald continuum model: plane-wave Bloch bands,
eigenfunctions, group velocities, and split-step envelope evolution.

The 4-component envelope is ordered (f1A, f1B, f2A, f2B).  Momentum k is
measured from the layer-1 Dirac point; with the layer-2 phase convention
e^{i s1 . r}, the layer-2 Dirac cone sits at k = -s1, which is equivalent to
the moire K_m point of our convention modulo the moire reciprocal lattice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ContainmentError, DegenerateBandError
from .geometry import LatticeParams, MoireData, moire_data, tbg_basis
from .hamiltonian import HoppingModel, hopping_fourier

SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)

_OMEGA = np.exp(2j * np.pi / 3)
T_MATRICES = (
    np.array([[1, 1], [1, 1]], dtype=complex),
    np.array([[1, _OMEGA.conjugate()], [_OMEGA, 1]], dtype=complex),
    np.array([[1, _OMEGA], [_OMEGA.conjugate(), 1]], dtype=complex),
)


@dataclass(frozen=True)
class BmParams:
    """Dirac velocity v (eV Angstrom), interlayer strength w (eV), lattice geometry."""

    v: float
    w: float
    lattice: LatticeParams

    @classmethod
    def from_hopping(cls, model: HoppingModel, params: LatticeParams) -> "BmParams":
        """Parameter-consistent construction: v = (3/2) t0 delta, w = hhat(K; L)/|Gamma|."""
        K = params.k_dirac * np.array([1.0, 0.0])
        return cls(
            v=1.5 * model.t0 * params.delta,
            w=float(hopping_fourier(K, model) / params.cell_area),
            lattice=params,
        )

    @cached_property
    def moire(self) -> MoireData:
        return moire_data(self.lattice)

    @cached_property
    def s_vectors(self) -> np.ndarray:
        """(3, 2) momentum hops: s1 = K1 - K2, s2 = s1 + b_m2, s3 = s1 - b_m1."""
        l1, l2 = tbg_basis(self.lattice)
        s1 = l1.K - l2.K
        return np.stack([s1, s1 + self.moire.b_m2, s1 - self.moire.b_m1])

    def interlayer_potential(self, positions: np.ndarray) -> np.ndarray:
        """T(r) = w sum_n T_n e^{-i s_n . r} at each position; shape (..., 2, 2)."""
        pos = np.asarray(positions, dtype=float)
        out = np.zeros(pos.shape[:-1] + (2, 2), dtype=complex)
        for s, T in zip(self.s_vectors, T_MATRICES):
            phase = np.exp(-1j * (pos @ s))
            out += phase[..., None, None] * (self.w * T)
        return out


def _basis_n(cutoff: int) -> np.ndarray:
    """Square infinity-norm shells of integer coefficients, |n|_inf <= cutoff."""
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    rng = np.arange(-cutoff, cutoff + 1)
    n1, n2 = np.meshgrid(rng, rng, indexing="ij")
    return np.column_stack([n1.ravel(), n2.ravel()])


def _sigma_dot(q: np.ndarray) -> np.ndarray:
    return q[0] * SIGMA1 + q[1] * SIGMA2


def bm_matrix(k: np.ndarray, bm: BmParams, cutoff: int) -> np.ndarray:
    """Plane-wave Bloch matrix at momentum k.

    Layer-1 diagonal blocks are v sigma.(k+G), layer-2 blocks v sigma.(k+G+s1);
    the interlayer blocks couple the layer-2 coefficient at G, G + b_m2 and
    G - b_m1 into the layer-1 row at G with w T1, w T2, w T3.
    """
    k = np.asarray(k, dtype=float)
    ns = _basis_n(cutoff)
    ng = ns.shape[0]
    index = {(int(n1), int(n2)): i for i, (n1, n2) in enumerate(ns)}
    Gs = ns @ bm.moire.B_m.T
    s1 = bm.s_vectors[0]

    H = np.zeros((4 * ng, 4 * ng), dtype=complex)
    for i in range(ng):
        q1 = k + Gs[i]
        H[4 * i : 4 * i + 2, 4 * i : 4 * i + 2] = bm.v * _sigma_dot(q1)
        q2 = q1 + s1
        H[4 * i + 2 : 4 * i + 4, 4 * i + 2 : 4 * i + 4] = bm.v * _sigma_dot(q2)

    hops = ((0, 0), (0, 1), (-1, 0))  # coefficient shifts for T1, T2, T3
    for i, (n1, n2) in enumerate(ns):
        for (dn1, dn2), T in zip(hops, T_MATRICES):
            j = index.get((int(n1) + dn1, int(n2) + dn2))
            if j is None:
                continue
            block = bm.w * T
            H[4 * i : 4 * i + 2, 4 * j + 2 : 4 * j + 4] = block
            H[4 * j + 2 : 4 * j + 4, 4 * i : 4 * i + 2] = block.conj().T
    return H


def band_index_to_position(n: int, dim: int) -> int:
    """Signed band label -> index in the ascending eigenvalue list.

    +1 is the first band at/above mid-spectrum, -1 the first below; the two
    flat bands at the magic angle are -1 and +1.
    """
    if n == 0:
        raise ValueError("band labels are signed and nonzero")
    mid = dim // 2
    return mid + n - 1 if n > 0 else mid + n


def bands(
    path: np.ndarray, bm: BmParams, cutoff: int, n_bands: int = 8
) -> tuple[np.ndarray, list[int]]:
    """Eigenvalues along a k path: (len(path), n_bands) array of the middle
    bands plus their signed labels, ordered ascending."""
    if len(path) == 0:
        raise ValueError("empty k path")
    half = n_bands // 2
    labels = [n for n in range(-half, half + 1) if n != 0][: n_bands]
    energies = np.empty((len(path), len(labels)))
    for ik, k in enumerate(np.atleast_2d(path)):
        ev = np.linalg.eigvalsh(bm_matrix(k, bm, cutoff))
        energies[ik] = [ev[band_index_to_position(n, ev.size)] for n in labels]
    return energies, labels


def folded_dirac_spectrum(k: np.ndarray, bm: BmParams, cutoff: int) -> np.ndarray:
    """Analytic w=0 spectrum: {+-v|k+G|} union {+-v|k+G+s1|}, sorted."""
    k = np.asarray(k, dtype=float)
    Gs = _basis_n(cutoff) @ bm.moire.B_m.T
    e1 = bm.v * np.linalg.norm(k + Gs, axis=1)
    e2 = bm.v * np.linalg.norm(k + bm.s_vectors[0] + Gs, axis=1)
    singles = np.concatenate([e1, e2])
    return np.sort(np.concatenate([singles, -singles]))


@dataclass
class BlochState:
    """Plane-wave eigenfunction Phi_n(r; k) of the Bloch problem."""

    k: np.ndarray
    band: int
    energy: float
    coeffs: np.ndarray        # (NG, 4)
    Gs: np.ndarray            # (NG, 2)
    s1: np.ndarray
    degenerate: bool = False
    partner_coeffs: np.ndarray | None = None  # second basis vector of a 2d degenerate subspace

    def evaluate(self, positions: np.ndarray) -> np.ndarray:
        """Sample the 4 components at arbitrary positions; (npts, 4)."""
        pos = np.atleast_2d(np.asarray(positions, dtype=float))
        phase1 = np.exp(1j * (pos @ (self.k + self.Gs).T))            # (npts, NG)
        phase2 = phase1 * np.exp(1j * (pos @ self.s1))[:, None]
        out = np.empty((pos.shape[0], 4), dtype=complex)
        out[:, 0] = phase1 @ self.coeffs[:, 0]
        out[:, 1] = phase1 @ self.coeffs[:, 1]
        out[:, 2] = phase2 @ self.coeffs[:, 2]
        out[:, 3] = phase2 @ self.coeffs[:, 3]
        return out


DEGENERACY_GAP = 1e-9


def eigenfunction(n: int, k: np.ndarray, bm: BmParams, cutoff: int) -> BlochState:
    """Eigenfunction of band n at k, phase-fixed by making the largest
    plane-wave coefficient real positive.

    The returned state is marked degenerate when the gap to an adjacent band
    is below 1e-9 eV; the partner eigenvector spanning the 2d subspace is
    then recorded, and comparisons at such points should project onto the
    subspace rather than use the raw vector.
    """
    k = np.asarray(k, dtype=float)
    H = bm_matrix(k, bm, cutoff)
    evals, evecs = np.linalg.eigh(H)
    pos = band_index_to_position(n, evals.size)
    gaps = []
    if pos > 0:
        gaps.append(evals[pos] - evals[pos - 1])
    if pos + 1 < evals.size:
        gaps.append(evals[pos + 1] - evals[pos])
    degenerate = bool(min(gaps) < DEGENERACY_GAP) if gaps else False

    vec = evecs[:, pos]
    imax = int(np.argmax(np.abs(vec)))
    vec = vec * np.exp(-1j * np.angle(vec[imax]))
    coeffs = vec.reshape(-1, 4)

    partner = None
    if degenerate:
        partner_pos = pos - 1 if (pos > 0 and evals[pos] - evals[pos - 1] < DEGENERACY_GAP) else pos + 1
        pvec = evecs[:, partner_pos]
        pvec = pvec * np.exp(-1j * np.angle(pvec[int(np.argmax(np.abs(pvec)))]))
        partner = pvec.reshape(-1, 4)

    ns = _basis_n(cutoff)
    Gs = ns @ bm.moire.B_m.T
    return BlochState(
        k=k,
        band=n,
        energy=float(evals[pos]),
        coeffs=coeffs,
        Gs=Gs,
        s1=bm.s_vectors[0],
        degenerate=degenerate,
        partner_coeffs=partner,
    )


def _band_energy(n: int, k: np.ndarray, bm: BmParams, cutoff: int) -> float:
    ev = np.linalg.eigvalsh(bm_matrix(k, bm, cutoff))
    return float(ev[band_index_to_position(n, ev.size)])


def group_velocity(n: int, k: np.ndarray, bm: BmParams, cutoff: int) -> np.ndarray:
    """grad_k E_n by central differences (step 1e-4 |b_m1|), one Richardson pass.

    Raises DegenerateBandError at band crossings, where the sorted-band
    gradient is not well defined.
    """
    k = np.asarray(k, dtype=float)
    ev = np.linalg.eigvalsh(bm_matrix(k, bm, cutoff))
    pos = band_index_to_position(n, ev.size)
    gaps = []
    if pos > 0:
        gaps.append(ev[pos] - ev[pos - 1])
    if pos + 1 < ev.size:
        gaps.append(ev[pos + 1] - ev[pos])
    if gaps and min(gaps) < DEGENERACY_GAP:
        raise DegenerateBandError(
            f"band {n} is degenerate at k={k}; gradient undefined (gap={min(gaps):.2e} eV)"
        )
    h = 1e-4 * np.linalg.norm(bm.moire.b_m1)

    def central(step: float) -> np.ndarray:
        g = np.empty(2)
        for axis in range(2):
            dk = np.zeros(2)
            dk[axis] = step
            g[axis] = (
                _band_energy(n, k + dk, bm, cutoff) - _band_energy(n, k - dk, bm, cutoff)
            ) / (2 * step)
        return g

    d1 = central(h)
    d2 = central(h / 2)
    return (4 * d2 - d1) / 3


def cone_slope(n: int, k: np.ndarray, bm: BmParams, cutoff: int, n_dirs: int = 6) -> float:
    """Mean one-sided slope |E(k + h u) - E(k)| / h over directions u.

    Meaningful at conical degeneracies (e.g. the flat-band touching at K_m)
    where the central-difference gradient of a sorted band vanishes.
    """
    k = np.asarray(k, dtype=float)
    h = 1e-4 * np.linalg.norm(bm.moire.b_m1)
    e0 = _band_energy(n, k, bm, cutoff)
    slopes = []
    for ang in np.linspace(0, 2 * np.pi, n_dirs, endpoint=False):
        u = np.array([np.cos(ang), np.sin(ang)])
        slopes.append(abs(_band_energy(n, k + h * u, bm, cutoff) - e0) / h)
    return float(np.mean(slopes))


def k_path(moire: MoireData, n_per_segment: int = 24) -> tuple[np.ndarray, list[tuple[int, str]]]:
    """Gamma_m -> K_m -> M_m -> Gamma_m path with node indices for plotting."""
    gamma = np.zeros(2)
    km = moire.K_m
    mm = moire.b_m1 / 2
    nodes = [(gamma, "Gamma_m"), (km, "K_m"), (mm, "M_m"), (gamma, "Gamma_m")]
    pts = []
    marks = []
    for (start, name), (end, _) in zip(nodes[:-1], nodes[1:]):
        marks.append((len(pts), name))
        for s in np.linspace(0.0, 1.0, n_per_segment, endpoint=False):
            pts.append((1 - s) * start + s * end)
    pts.append(nodes[-1][0])
    marks.append((len(pts) - 1, nodes[-1][1]))
    return np.array(pts), marks


# ---------------------------------------------------------------------------
# envelope fields and split-step evolution
# ---------------------------------------------------------------------------


@dataclass
class Envelope:
    """4-component field on a periodic square box of side ``box`` with N x N
    points; values[ix, iy, comp], grid coordinate x = -box/2 + ix * box/N."""

    box: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 3 or self.values.shape[2] != 4 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError(f"envelope values must be (N, N, 4), got {self.values.shape}")

    @property
    def n_grid(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return self.box / self.n_grid

    @cached_property
    def coords(self) -> np.ndarray:
        return -self.box / 2 + self.dx * np.arange(self.n_grid)

    @property
    def norm(self) -> float:
        """L2 norm over the box, sqrt(sum |f|^2 dx^2)."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.dx**2))

    def boundary_fraction(self) -> float:
        """Max |f| on the outermost two grid rings relative to the global max."""
        mag = np.abs(self.values).max(axis=2)
        peak = mag.max()
        if peak == 0:
            return 0.0
        ring = np.concatenate([mag[:2].ravel(), mag[-2:].ravel(), mag[:, :2].ravel(), mag[:, -2:].ravel()])
        return float(ring.max() / peak)

    def boundary_mass(self) -> float:
        """l2 mass fraction carried by the outermost two grid rings."""
        dens = np.sum(np.abs(self.values) ** 2, axis=2)
        total = dens.sum()
        if total == 0:
            return 0.0
        interior = dens[2:-2, 2:-2].sum()
        return float((total - interior) / total)

    def copy(self) -> "Envelope":
        return Envelope(self.box, self.values.copy())


class EnvelopeEvolver:
    """Strang split-step integrator for the continuum model on a periodic box.

    Kinetic half-steps are exact per Fourier mode (2x2 Dirac blocks applied to
    both layers); the interlayer potential step is the exact pointwise 4x4
    exponential of [[0, T(r)], [T(r)^dag, 0]], diagonalized once per grid.
    Both substeps are unitary, so the scheme conserves the box norm to
    rounding and is second order in the step size.
    """

    def __init__(self, bm: BmParams, box: float, n_grid: int):
        self.bm = bm
        self.box = float(box)
        self.n = int(n_grid)
        k1 = 2 * np.pi * np.fft.fftfreq(self.n, d=self.box / self.n)
        kx, ky = np.meshgrid(k1, k1, indexing="ij")
        self.kabs = np.hypot(kx, ky)
        with np.errstate(invalid="ignore", divide="ignore"):
            phase = np.where(self.kabs > 0, (kx + 1j * ky) / np.where(self.kabs > 0, self.kabs, 1.0), 1.0)
        self.kphase = phase

        x = -self.box / 2 + (self.box / self.n) * np.arange(self.n)
        X, Y = np.meshgrid(x, x, indexing="ij")
        pos = np.stack([X, Y], axis=-1)
        T = bm.interlayer_potential(pos)                      # (N, N, 2, 2)
        U = np.zeros((self.n, self.n, 4, 4), dtype=complex)
        U[..., 0:2, 2:4] = T
        U[..., 2:4, 0:2] = np.conj(np.swapaxes(T, -1, -2))
        self._pot_evals, self._pot_evecs = np.linalg.eigh(U)

    def _kinetic_multipliers(self, tau: float):
        arg = self.bm.v * self.kabs * tau
        return np.cos(arg), -1j * np.sin(arg) * np.conj(self.kphase), -1j * np.sin(arg) * self.kphase

    def _apply_kinetic(self, F: np.ndarray, mult) -> None:
        C, Mab, Mba = mult
        for lo in (0, 2):
            fa = F[:, :, lo].copy()
            fb = F[:, :, lo + 1]
            F[:, :, lo] = C * fa + Mab * fb
            F[:, :, lo + 1] = Mba * fa + C * fb

    def _potential_matrix(self, tau: float) -> np.ndarray:
        phases = np.exp(-1j * self._pot_evals * tau)
        return np.einsum(
            "xyij,xyj,xykj->xyik", self._pot_evecs, phases, np.conj(self._pot_evecs)
        )

    def run(self, values: np.ndarray, t: float, n_steps: int) -> np.ndarray:
        if n_steps < 1:
            raise ValueError("need at least one step")
        tau = t / n_steps
        half = self._kinetic_multipliers(tau / 2)
        full = self._kinetic_multipliers(tau)
        pot = self._potential_matrix(tau)

        F = np.fft.fft2(values, axes=(0, 1))
        self._apply_kinetic(F, half)
        for step in range(n_steps):
            f = np.fft.ifft2(F, axes=(0, 1))
            f = np.einsum("xyik,xyk->xyi", pot, f)
            F = np.fft.fft2(f, axes=(0, 1))
            self._apply_kinetic(F, full if step < n_steps - 1 else half)
        return np.fft.ifft2(F, axes=(0, 1))


@dataclass(frozen=True)
class EnvelopeStepOptions:
    tol: float = 1e-6
    dt_start: float = 0.25
    max_doublings: int = 12
    containment_threshold: float = 1e-6


def evolve_envelope(
    f0: Envelope,
    t: float,
    bm: BmParams,
    opts: EnvelopeStepOptions = EnvelopeStepOptions(),
    evolver: EnvelopeEvolver | None = None,
) -> Envelope:
    """Envelope at time t; the step count is doubled until one more doubling
    changes the result by less than opts.tol in relative L2."""
    _check_contained(f0, opts.containment_threshold, when="initially")
    if t == 0:
        return f0.copy()
    ev = evolver or EnvelopeEvolver(bm, f0.box, f0.n_grid)
    n = max(1, int(np.ceil(abs(t) / opts.dt_start)))
    prev = ev.run(f0.values, t, n)
    scale = np.linalg.norm(f0.values)
    for _ in range(opts.max_doublings):
        n *= 2
        cur = ev.run(f0.values, t, n)
        if np.linalg.norm(cur - prev) <= opts.tol * scale:
            out = Envelope(f0.box, cur)
            _check_contained(out, opts.containment_threshold, when=f"at t={t}")
            return out
        prev = cur
    raise ContainmentError(
        f"split-step did not converge to tol={opts.tol} within {opts.max_doublings} doublings"
    )


def evolve_envelope_snapshots(
    f0: Envelope,
    times: tuple[float, ...],
    bm: BmParams,
    opts: EnvelopeStepOptions = EnvelopeStepOptions(),
) -> list[Envelope]:
    """Snapshots at the given nondecreasing times, advanced incrementally."""
    ev = EnvelopeEvolver(bm, f0.box, f0.n_grid)
    out = []
    cur = f0
    prev_t = 0.0
    for t in times:
        dt = t - prev_t
        if dt < 0:
            raise ValueError("snapshot times must be nondecreasing")
        cur = evolve_envelope(cur, dt, bm, opts, evolver=ev) if dt else cur.copy()
        prev_t = t
        out.append(cur)
    return out


def _check_contained(f: Envelope, threshold: float, when: str) -> None:
    frac = f.boundary_mass()
    if frac > threshold:
        raise ContainmentError(
            f"envelope boundary mass fraction {frac:.2e} exceeds {threshold:.0e} {when}"
        )
