"""Initial conditions for both models and the maps between them.

A lattice wavefunction is induced from a 4-component envelope by

    psi(site) = f_comp(position) * exp(i K_layer . position)

where K_layer is the rotated Dirac point of the site's layer and comp is the
(layer, sublattice) component.  The inverse map strips the phases and fits a
band-limited field (diagnostic only).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bm import BlochState, BmParams, Envelope, eigenfunction
from .errors import ContainmentError, DimensionMismatchError
from .geometry import LatticeParams, SiteTable, tbg_basis
from .state import LatticeState

#: relative amplitude below which an envelope Fourier mode is dropped when
#: interpolating to site positions
MODE_PRUNE_REL = 1e-12
_CHUNK = 1024


@dataclass(frozen=True)
class WavepacketSpec:
    """Gaussian or band-concentrated wave-packet.

    sigma_r is taken as (1/epsilon) Angstrom when built from epsilon
    (sigma_units="inverse_epsilon_angstrom"); the alternative reading
    sigma_r = a/epsilon is available as sigma_units="a_over_epsilon".
    """

    kind: str = "gaussian"
    coefficients: tuple[complex, complex, complex, complex] = (0.5, 0.5, 0.5, 0.5)
    band: int = 1
    k: tuple[float, float] = (0.0, 0.0)
    epsilon: float | None = 0.1
    sigma_r: float | None = None
    sigma_units: str = "inverse_epsilon_angstrom"

    def __post_init__(self):
        if self.kind not in ("gaussian", "band_concentrated"):
            raise ValueError(f"unknown wavepacket kind {self.kind!r}")
        if self.sigma_r is None and self.epsilon is None:
            raise ValueError("need sigma_r or epsilon")
        if self.sigma_units not in ("inverse_epsilon_angstrom", "a_over_epsilon"):
            raise ValueError(f"unknown sigma_units {self.sigma_units!r}")

    def sigma(self, params: LatticeParams) -> float:
        if self.sigma_r is not None:
            return float(self.sigma_r)
        if self.sigma_units == "a_over_epsilon":
            return params.a / self.epsilon
        return 1.0 / self.epsilon


def gaussian_profile(positions: np.ndarray, sigma: float) -> np.ndarray:
    pos = np.atleast_2d(positions)
    return np.exp(-(pos[:, 0] ** 2 + pos[:, 1] ** 2) / (2 * sigma**2))


def _layer_phases(table: SiteTable) -> np.ndarray:
    l1, l2 = tbg_basis(table.params)
    K = np.where((table.layer == 1)[:, None], l1.K, l2.K)
    return np.exp(1j * np.einsum("ij,ij->i", table.positions, K))


@dataclass
class PacketBuild:
    """A matched initial-condition pair: unit-norm lattice state and the
    consistently scaled envelope that induces it."""

    spec: WavepacketSpec
    envelope: Envelope
    state: LatticeState
    scale: float                  # factor applied to the raw envelope
    bloch: BlochState | None = None

    def phi_tail(self, r: float) -> float:
        return self.state.tail_mass(r)


def _raw_envelope_at(
    spec: WavepacketSpec, params: LatticeParams, bm: BmParams | None, positions: np.ndarray,
    bloch: BlochState | None = None,
) -> np.ndarray:
    """Unscaled envelope components at arbitrary positions; (npts, 4)."""
    sigma = spec.sigma(params)
    G = gaussian_profile(positions, sigma)
    if spec.kind == "gaussian":
        c = np.asarray(spec.coefficients, dtype=complex)
        return G[:, None] * c[None, :]
    if bloch is None:
        raise ValueError("band_concentrated packets need a BlochState")
    return bloch.evaluate(positions) * G[:, None]


def build_packet(
    spec: WavepacketSpec,
    table: SiteTable,
    bm: BmParams,
    box: float,
    n_grid: int,
    cutoff: int = 6,
) -> PacketBuild:
    """Construct the matched (envelope, lattice state) pair.

    The raw envelope is evaluated exactly (closed form) at the site positions
    and on the box grid; both are divided by the induced lattice norm, so the
    lattice state has unit norm and the envelope induces it exactly.
    """
    params = table.params
    sigma = spec.sigma(params)
    if box < 8 * sigma:
        raise ContainmentError(f"box side {box} is below 8 sigma_r = {8 * sigma}")
    max_pos = float(np.max(np.hypot(table.positions[:, 0], table.positions[:, 1]))) if len(table) else 0.0
    if box / 2 <= max_pos:
        raise ContainmentError(f"box half-side {box / 2} does not cover the table radius {max_pos}")

    bloch = None
    if spec.kind == "band_concentrated":
        bloch = eigenfunction(spec.band, np.asarray(spec.k, dtype=float), bm, cutoff)

    site_values = _raw_envelope_at(spec, params, bm, table.positions, bloch)
    amp = site_values[np.arange(len(table)), table.component]
    raw_state = amp * _layer_phases(table)
    norm = float(np.linalg.norm(raw_state))
    if norm == 0:
        raise ValueError("wavepacket induces the zero lattice state")

    dx = box / n_grid
    x = -box / 2 + dx * np.arange(n_grid)
    X, Y = np.meshgrid(x, x, indexing="ij")
    grid_pos = np.column_stack([X.ravel(), Y.ravel()])
    grid_vals = _raw_envelope_at(spec, params, bm, grid_pos, bloch) / norm
    env = Envelope(box, grid_vals.reshape(n_grid, n_grid, 4))

    state = LatticeState(table, raw_state / norm)
    return PacketBuild(spec=spec, envelope=env, state=state, scale=1.0 / norm, bloch=bloch)


def make_envelope(
    spec: WavepacketSpec,
    params: LatticeParams,
    bm: BmParams,
    box: float,
    n_grid: int,
    table: SiteTable | None = None,
    cutoff: int = 6,
) -> Envelope:
    """Envelope on the box grid; normalized against the lattice state induced
    on ``table`` when one is given, otherwise to unit box L2 norm."""
    if table is not None:
        return build_packet(spec, table, bm, box, n_grid, cutoff).envelope
    sigma = spec.sigma(params)
    if box < 8 * sigma:
        raise ContainmentError(f"box side {box} is below 8 sigma_r = {8 * sigma}")
    bloch = None
    if spec.kind == "band_concentrated":
        bloch = eigenfunction(spec.band, np.asarray(spec.k, dtype=float), bm, cutoff)
    dx = box / n_grid
    x = -box / 2 + dx * np.arange(n_grid)
    X, Y = np.meshgrid(x, x, indexing="ij")
    grid_pos = np.column_stack([X.ravel(), Y.ravel()])
    vals = _raw_envelope_at(spec, params, bm, grid_pos, bloch).reshape(n_grid, n_grid, 4)
    env = Envelope(box, vals)
    n = env.norm
    if n == 0:
        raise ValueError("zero envelope")
    return Envelope(box, vals / n)


def envelope_values_at(f: Envelope, positions: np.ndarray, prune_rel: float = MODE_PRUNE_REL) -> np.ndarray:
    """Trigonometric interpolation of the envelope at arbitrary positions.

    Exact for fields that are band-limited on the box; modes with relative
    amplitude below prune_rel are dropped, and the evaluation streams over
    mode chunks to bound memory.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    n = f.n_grid
    F = np.fft.fft2(f.values, axes=(0, 1)) / n**2
    k1 = 2 * np.pi * np.fft.fftfreq(n, d=f.dx)
    KX, KY = np.meshgrid(k1, k1, indexing="ij")
    amp = np.abs(F).sum(axis=2)
    keep = amp > prune_rel * amp.max() if amp.max() > 0 else np.zeros_like(amp, dtype=bool)
    kxs = KX[keep]
    kys = KY[keep]
    coefs = F[keep]                      # (nmodes, 4)

    # grid origin is at -box/2 in both axes
    rel = pos + f.box / 2
    out = np.zeros((pos.shape[0], 4), dtype=complex)
    for start in range(0, kxs.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        phase = np.exp(1j * (np.outer(rel[:, 0], kxs[sl]) + np.outer(rel[:, 1], kys[sl])))
        out += phase @ coefs[sl]
    return out


def envelope_to_lattice(f: Envelope, table: SiteTable, params: LatticeParams | None = None) -> LatticeState:
    """Induced lattice state (no renormalization): component sampled at the
    site position times the layer Dirac phase."""
    max_pos = float(np.max(np.hypot(table.positions[:, 0], table.positions[:, 1]))) if len(table) else 0.0
    if f.box / 2 <= max_pos:
        raise ContainmentError(f"table radius {max_pos} outside envelope box half-side {f.box / 2}")
    vals = envelope_values_at(f, table.positions)
    amp = vals[np.arange(len(table)), table.component]
    return LatticeState(table, amp * _layer_phases(table))


def lattice_to_envelope(
    psi: LatticeState,
    box: float,
    n_grid: int,
    k_max: float | None = None,
    cg_iters: int = 40,
) -> Envelope:
    """Least-squares band-limited envelope estimate from a lattice state.

    Strips the layer Dirac phases, then fits, per component, Fourier
    coefficients on modes with |k| <= k_max (default half the grid Nyquist)
    by conjugate gradients on the normal equations.  Diagnostic only; the
    sites of one component class form a near-uniform lattice, so the normal
    matrix is well conditioned and CG converges in a few iterations.
    """
    stripped = psi.values * np.conj(_layer_phases(psi.table))
    return _band_limited_fit(psi.table, stripped, box, n_grid, k_max, cg_iters)


def _band_limited_fit(
    table: SiteTable,
    stripped: np.ndarray,
    box: float,
    n_grid: int,
    k_max: float | None = None,
    cg_iters: int = 40,
    cg_tol: float = 1e-8,
) -> Envelope:
    dx = box / n_grid
    nyquist = np.pi / dx
    if k_max is None:
        k_max = 0.5 * nyquist
    if k_max > nyquist:
        raise ValueError("k_max above the grid Nyquist")
    k1 = 2 * np.pi * np.fft.fftfreq(n_grid, d=dx)
    KX, KY = np.meshgrid(k1, k1, indexing="ij")
    keep = np.hypot(KX, KY) <= k_max
    kxs, kys = KX[keep], KY[keep]

    values = np.zeros((n_grid, n_grid, 4), dtype=complex)
    Fgrid = np.zeros((n_grid, n_grid), dtype=complex)
    for comp in range(4):
        sel = table.component == comp
        pos = table.positions[sel]
        y = stripped[sel]
        n_sites = pos.shape[0]
        if n_sites == 0:
            continue
        rel = pos + box / 2

        def apply(modes_vec: np.ndarray) -> np.ndarray:
            out = np.zeros(n_sites, dtype=complex)
            for start in range(0, kxs.size, _CHUNK):
                sl = slice(start, start + _CHUNK)
                phase = np.exp(1j * (np.outer(rel[:, 0], kxs[sl]) + np.outer(rel[:, 1], kys[sl])))
                out += phase @ modes_vec[sl]
            return out

        def apply_adj(site_vec: np.ndarray) -> np.ndarray:
            out = np.zeros(kxs.size, dtype=complex)
            for start in range(0, kxs.size, _CHUNK):
                sl = slice(start, start + _CHUNK)
                phase = np.exp(-1j * (np.outer(kxs[sl], rel[:, 0]) + np.outer(kys[sl], rel[:, 1])))
                out[sl] = phase @ site_vec
            return out

        # CG on A^H A x = A^H y with Jacobi scaling by the site count
        b = apply_adj(y)
        x = b / n_sites
        r = b - apply_adj(apply(x))
        p = r.copy()
        rs = np.vdot(r, r).real
        b_norm = np.sqrt(np.vdot(b, b).real) or 1.0
        for _ in range(cg_iters):
            Ap = apply_adj(apply(p))
            alpha = rs / np.vdot(p, Ap).real
            x += alpha * p
            r -= alpha * Ap
            rs_new = np.vdot(r, r).real
            if np.sqrt(rs_new) <= cg_tol * b_norm * n_sites:
                break
            p = r + (rs_new / rs) * p
            rs = rs_new
        Fgrid[:] = 0.0
        Fgrid[keep] = x
        values[:, :, comp] = np.fft.ifft2(Fgrid) * n_grid**2
    return Envelope(box, values)


def comparison_error(psi_tb: LatticeState, f_bm: Envelope, table: SiteTable) -> float:
    """l2(Omega_R) distance between the tight-binding state and the lattice
    state induced by the continuum envelope (no renormalization)."""
    if psi_tb.table is not table and len(psi_tb.table) != len(table):
        raise DimensionMismatchError("tight-binding state not on the comparison table")
    psi_bm = envelope_to_lattice(f_bm, table)
    return float(np.linalg.norm(psi_bm.values - psi_tb.values))


# ---------------------------------------------------------------------------
# mirror construction and the angular-momentum (chirality) diagnostic
# ---------------------------------------------------------------------------


def mirror_params(params: LatticeParams) -> LatticeParams:
    """Geometry of the mirror-image bilayer (theta -> -theta)."""
    return LatticeParams(a=params.a, theta=-params.theta, L=params.L)


def mirror_state(psi: LatticeState) -> LatticeState:
    """The state reflected through the y axis, expressed on the -theta table.

    The reflection x -> -x maps the +theta bilayer onto the -theta bilayer
    site-by-site (layer and sublattice preserved, cell (n1, n2) -> (n2, n1)),
    and the hopping kernel depends only on distances, so evolving the mirrored
    state under the mirrored Hamiltonian reproduces the mirrored dynamics
    exactly.  The mirrored state occupies the opposite valley: strip its
    envelope with valley=-1.
    """
    from .geometry import enumerate_sites, pack_site_keys

    src = psi.table
    dst = enumerate_sites(mirror_params(src.params), src.radius)
    swapped = dst.cell[:, ::-1]
    want = pack_site_keys(dst.layer, dst.sublattice, swapped)
    pos = np.searchsorted(src.keys, want)
    if not np.array_equal(src.keys[pos], want):
        raise ValueError("mirror table does not match the source table")
    return LatticeState(dst, psi.values[pos])


def mirror_envelope(f: Envelope) -> Envelope:
    """The envelope under x -> -x on the same box grid."""
    n = f.n_grid
    idx = (n - np.arange(n)) % n
    return Envelope(f.box, f.values[idx, :, :])


def envelope_angular_momentum(f: Envelope) -> float:
    """<L_z> per unit probability of a grid envelope:
    sum_c Int Im(f_c^* (x d_y - y d_x) f_c) / Int sum_c |f_c|^2,
    with spectral derivatives."""
    n = f.n_grid
    k1 = 2 * np.pi * np.fft.fftfreq(n, d=f.dx)
    KX, KY = np.meshgrid(k1, k1, indexing="ij")
    x = f.coords
    X, Y = np.meshgrid(x, x, indexing="ij")
    F = np.fft.fft2(f.values, axes=(0, 1))
    dfx = np.fft.ifft2(1j * KX[:, :, None] * F, axes=(0, 1))
    dfy = np.fft.ifft2(1j * KY[:, :, None] * F, axes=(0, 1))
    dens = np.sum(np.abs(f.values) ** 2)
    if dens == 0:
        return 0.0
    lz = np.sum(
        np.imag(np.conj(f.values) * (X[:, :, None] * dfy - Y[:, :, None] * dfx))
    )
    return float(lz / dens)


def state_angular_momentum(
    psi: LatticeState,
    box: float,
    n_grid: int,
    k_max: float,
    valley: int = +1,
    cg_iters: int = 40,
) -> float:
    """Chirality diagnostic of a lattice state: the angular momentum of its
    fitted band-limited envelope.

    valley=-1 strips conjugated Dirac phases, which is what a mirrored
    (theta -> -theta) state occupies.
    """
    table = psi.table
    phases = _layer_phases(table)
    if valley == -1:
        phases = np.conj(phases)
    stripped = psi.values * np.conj(phases)
    fitted = _band_limited_fit(table, stripped, box, n_grid, k_max, cg_iters)
    return envelope_angular_momentum(fitted)
