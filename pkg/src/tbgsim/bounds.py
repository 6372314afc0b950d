"""Computable certified bounds for the truncated dynamics: resolvent decay
rate, propagation speed, orbital counting, lattice tail sums, and the full
truncation-error certificate, plus a planner that picks a radius for a
requested accuracy.

All formulas are closed forms; d and energies in eV, lengths in Angstrom,
times in hbar/eV, rates in 1/Angstrom.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import InfeasibleRadiusError
from .geometry import LatticeParams
from .hamiltonian import HoppingModel, norm_bound

#: default spectral split parameter; overridable everywhere it appears
DEFAULT_NU = 0.5


@dataclass(frozen=True)
class ContourSpec:
    """Rectangular contour around [-half_width, half_width] at distance d.

    The rectangle is [-half_width - d, half_width + d] x [-i d, i d]; its
    length is 4*half_width + 8*d and its distance to the interval is exactly d.
    """

    half_width: float
    d: float

    def __post_init__(self):
        if self.half_width <= 0 or self.d <= 0:
            raise ValueError("half_width and d must be positive")

    @property
    def length(self) -> float:
        return 2 * (2 * self.half_width + 2 * self.d) + 2 * (2 * self.d)


def _kernel_prefactor(model: HoppingModel, params: LatticeParams) -> float:
    return 8 * np.pi * model.h0 * np.exp(params.delta * model.alpha0) / params.cell_area


def solve_alpha_max(d: float, nu: float, model: HoppingModel, params: LatticeParams) -> float:
    """Decay rate alpha_max in (0, alpha0): unique root of

        pref * [e^{delta a}/(alpha0-a)^2 - 1/alpha0^2] = (1-nu) d

    with pref = 8 pi h0 e^{delta alpha0} / |Gamma|.  The left side is strictly
    increasing from 0 to infinity on (0, alpha0), so bisection converges to
    the unique solution; iterated to 1e-12 relative.
    """
    if not 0 < nu < 1:
        raise ValueError(f"nu must be in (0, 1), got {nu}")
    if d <= 0:
        raise ValueError(f"spectral distance d must be positive, got {d}")
    pref = _kernel_prefactor(model, params)
    a0 = model.alpha0
    delta = params.delta
    target = (1 - nu) * d

    def lhs(a: float) -> float:
        return pref * (math.exp(delta * a) / (a0 - a) ** 2 - 1.0 / a0**2)

    lo, hi = 0.0, a0 * (1 - 1e-15)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if lhs(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(lo, 1e-300):
            break
    return 0.5 * (lo + hi)


def resolvent_decay_bound(
    d: float, nu: float, distance: float, model: HoppingModel, params: LatticeParams
) -> float:
    """Entrywise resolvent bound (1/(nu d)) exp(-alpha_max * distance) for any
    z at spectral distance >= d."""
    alpha = solve_alpha_max(d, nu, model, params)
    return float(np.exp(-alpha * distance) / (nu * d))


def v_max(model: HoppingModel, params: LatticeParams) -> float:
    """Propagation speed bound 16 pi e^{delta alpha0} (2 + delta alpha0) h0 / (|Gamma| alpha0^3),
    in Angstrom per hbar/eV."""
    da = params.delta * model.alpha0
    return float(
        16 * np.pi * np.exp(da) * (2 + da) * model.h0 / (params.cell_area * model.alpha0**3)
    )


def counting_bound(r: float, params: LatticeParams) -> int:
    """Upper bound 4 * ceil(4 r / (sqrt(3) a))^2 on the number of orbitals within radius r."""
    if r <= 0:
        raise ValueError(f"radius must be positive, got {r}")
    return int(4 * math.ceil(4 * r / (math.sqrt(3) * params.a)) ** 2)


def c2_coefficient(alpha: float, R: float, params: LatticeParams) -> float:
    """C2(alpha, R) = (1 + R alpha - delta alpha) / alpha^2."""
    return (1 + R * alpha - params.delta * alpha) / alpha**2


def lattice_sum_bound(
    R: float, r: float, alpha: float, params: LatticeParams, omega_r: int | None = None
) -> float:
    """Bound on the double tail sum over x outside B_R, y inside B_r of
    e^{-alpha |x-y|}:

        (8 pi e^{2 delta alpha} |Omega_r| / |Gamma|) * C2(alpha, R) * e^{-alpha (R - r)}.

    |Omega_r| defaults to the counting bound.
    """
    if R <= r:
        raise ValueError(f"need R > r, got R={R}, r={r}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if omega_r is None:
        omega_r = counting_bound(r, params)
    return float(
        8
        * np.pi
        * np.exp(2 * params.delta * alpha)
        * omega_r
        / params.cell_area
        * c2_coefficient(alpha, R, params)
        * np.exp(-alpha * (R - r))
    )


@dataclass(frozen=True)
class BoundCertificate:
    """Everything needed to reproduce the truncation-error certificate."""

    d: float
    nu: float
    alpha_max: float
    C_gamma: float
    R: float
    r: float
    t: float
    omega_R_count: int
    omega_r_count: int
    C1: float
    psi0_norm_inside: float
    phi_r: float
    bound_value: float

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(asdict(self), indent=indent)


def truncation_bound(
    R: float,
    r: float,
    t: float,
    contour: ContourSpec,
    nu: float,
    psi0_norm_inside: float,
    phi_r: float,
    model: HoppingModel,
    params: LatticeParams,
) -> BoundCertificate:
    """Evaluate the certified truncation-error bound

        sqrt(2/pi) C_gamma C1(alpha, R) (h0 |Omega_R| / (nu d)^2 + 1/(nu d))
            * sqrt(|Omega_r| / |Gamma|) * e^{-(alpha (R-r) - d t)} * |psi0 inside| + phi(r)

    with C1(alpha, R) = e^{delta alpha} sqrt(1 + 2 R alpha - 2 delta alpha) / (2 alpha)
    and orbital counts from the counting bound.
    """
    if R <= r:
        raise ValueError(f"need R > r, got R={R}, r={r}")
    d = contour.d
    alpha = solve_alpha_max(d, nu, model, params)
    if alpha <= 0 or not np.isfinite(alpha):
        raise FloatingPointError(f"alpha_max underflowed for d={d}")
    delta = params.delta
    omega_R = counting_bound(R, params)
    omega_r = counting_bound(r, params)
    c1 = math.exp(delta * alpha) * math.sqrt(1 + 2 * R * alpha - 2 * delta * alpha) / (2 * alpha)
    prefactor = (
        math.sqrt(2 / math.pi)
        * contour.length
        * c1
        * (model.h0 * omega_R / (nu * d) ** 2 + 1.0 / (nu * d))
        * math.sqrt(omega_r / params.cell_area)
    )
    exponent = d * t - alpha * (R - r)
    value = prefactor * math.exp(exponent) * psi0_norm_inside + phi_r
    return BoundCertificate(
        d=d,
        nu=nu,
        alpha_max=alpha,
        C_gamma=contour.length,
        R=R,
        r=r,
        t=t,
        omega_R_count=omega_R,
        omega_r_count=omega_r,
        C1=c1,
        psi0_norm_inside=psi0_norm_inside,
        phi_r=phi_r,
        bound_value=float(value),
    )


def best_certificate(
    R: float,
    r: float,
    t: float,
    model: HoppingModel,
    params: LatticeParams,
    half_width: float | None = None,
    nu: float = DEFAULT_NU,
    psi0_norm_inside: float = 1.0,
    phi_r: float = 0.0,
    n_grid: int = 40,
) -> BoundCertificate:
    """Certificate minimized over the contour distance d on a log grid."""
    if half_width is None:
        half_width = norm_bound(model, params)
    best = None
    for d in np.geomspace(1e-3, half_width, n_grid):
        cert = truncation_bound(
            R, r, t, ContourSpec(half_width, float(d)), nu, psi0_norm_inside, phi_r, model, params
        )
        if best is None or cert.bound_value < best.bound_value:
            best = cert
    return best


def plan_radius(
    t: float,
    target_error: float,
    r: float,
    psi0_norm_inside: float,
    phi_r: float,
    model: HoppingModel,
    params: LatticeParams,
    half_width: float | None = None,
    nu: float = DEFAULT_NU,
    R_cap: float = 1e6,
    n_grid: int = 40,
) -> tuple[float, float, BoundCertificate]:
    """Smallest radius R (over a log grid of contour distances d) whose
    certificate meets target_error; returns (R, d, certificate)."""
    if target_error <= phi_r:
        raise InfeasibleRadiusError(
            f"target {target_error} is not above the initial tail phi(r)={phi_r}"
        )
    if half_width is None:
        half_width = norm_bound(model, params)

    def cert_at(R: float, d: float) -> BoundCertificate:
        return truncation_bound(
            R, r, t, ContourSpec(half_width, d), nu, psi0_norm_inside, phi_r, model, params
        )

    best: tuple[float, float, BoundCertificate] | None = None
    for d in np.geomspace(1e-3, half_width, n_grid):
        d = float(d)
        lo = r * (1 + 1e-9) + 1e-9
        if cert_at(R_cap, d).bound_value > target_error:
            continue
        hi = R_cap
        if cert_at(lo, d).bound_value <= target_error:
            hi = lo
        else:
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if cert_at(mid, d).bound_value <= target_error:
                    hi = mid
                else:
                    lo = mid
                if hi - lo <= 1e-9 * hi:
                    break
        if best is None or hi < best[0]:
            best = (hi, d, cert_at(hi, d))
    if best is None:
        raise InfeasibleRadiusError(
            f"no radius up to {R_cap} meets target {target_error} at t={t}"
        )
    return best
