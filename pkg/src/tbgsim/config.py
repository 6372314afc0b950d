"""Run configuration: flat ``section.key = value`` text files, presets, and
typed views onto the physical parameter objects.

All physical quantities are in eV / Angstrom / (hbar/eV). Angles appear in
config files in degrees (``lattice.theta_deg``) for readability and are
converted once, here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bm import BmParams
from .geometry import CONVENTIONS, LatticeParams
from .hamiltonian import HoppingModel, hopping_fourier
from .propagator import PropagatorOptions
from .wavepacket import WavepacketSpec

#: Physical regime of the experiments (monolayer pi-band and interlayer fits).
DEFAULTS: dict[str, object] = {
    "lattice.a": 2.5,
    "lattice.theta_deg": 1.05,
    "lattice.L": 3.5,
    "hopping.t0": 3.048,
    "hopping.h0": 83.135,
    "hopping.alpha0": 1.0,
    "hopping.interlayer_cutoff": 15.0,
    "bm.mode": "derived",
    "bm.v": 6.6,
    "bm.w": 0.11,
    "bm.cutoff": 6,
    "wavepacket.kind": "gaussian",
    "wavepacket.band": 3,
    "wavepacket.kx": 0.0,
    "wavepacket.ky": -0.02,
    "wavepacket.epsilon": 0.1,
    "wavepacket.sigma_units": "inverse_epsilon_angstrom",
    "wavepacket.coefficients": [0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0],
    "wavepacket.seed": 0,
    "propagation.method": "chebyshev",
    "propagation.tol": 1e-10,
    "propagation.snapshot_times": [1.0, 2.0, 4.0],
    "study.kind": "compare",
    "study.R": 86.60,
    "study.r": 10.0,
    "study.nu": 0.5,
    "study.n_initial_conditions": 4,
    "study.envelope_box": 192.0,
    "study.envelope_n": 192,
    "study.bm_tol": 1e-5,
    "study.bm_cutoff": 6,
    "output.dir": "runs",
    "threads": 1,
}

#: Study-specific presets; ``desk`` runs in minutes on a laptop, ``paper``
#: matches the production setting (slow).
PRESETS: dict[str, dict[str, dict[str, object]]] = {
    "truncation": {
        "desk": {
            "study.R_list": [25.0, 35.0, 50.0],
            "study.reference_R": 60.0,
            "study.t_list": [5.0, 10.0, 20.0],
            "study.r": 10.0,
            "wavepacket.kind": "gaussian",
            "wavepacket.sigma_r": 2.5,
        },
        "paper": {
            "study.R_list": [30.0, 40.0, 50.0, 60.0, 70.0],
            "study.reference_R": 86.60,
            "study.t_list": [5.0, 10.0, 20.0],
            "study.r": 10.0,
            "wavepacket.kind": "gaussian",
            "wavepacket.sigma_r": 2.5,
        },
    },
    "bands": {
        "desk": {"study.k_per_segment": 16, "study.flat_grid": 12},
        "paper": {"study.k_per_segment": 32, "study.flat_grid": 12, "study.bm_cutoff": 8},
    },
    "compare": {
        "desk": {
            "study.R": 86.60,
            "study.r": 10.0,
            "study.flat_times": [0.0, 20.0, 40.0],
            "study.band_times": [0.0, 3.0, 6.0],
            "study.envelope_box": 208.0,
            "study.envelope_n": 208,
            "study.chirality_k_max": 0.9,
            "wavepacket.epsilon": 0.1,
        },
        "paper": {
            "study.R": 86.60,
            "study.r": 10.0,
            "study.flat_times": [0.0, 10.0, 20.0, 30.0, 40.0],
            "study.band_times": [0.0, 2.0, 4.0, 6.0, 8.0],
            "study.envelope_box": 208.0,
            "study.envelope_n": 208,
            "study.chirality_k_max": 0.9,
            "wavepacket.epsilon": 0.1,
        },
    },
    "scaling": {
        "desk": {
            "study.R": 86.60,
            "study.t_list": [1.0, 2.0, 4.0],
            "study.eps_list_joint": [0.071, 0.1, 0.141, 0.2],
            "study.hratio_list": [0.042, 0.063, 0.094, 0.141],
            "study.eps_list": [0.08, 0.107, 0.143, 0.19],
            "study.theta_list_deg": [1.05, 1.6, 2.4, 3.5, 5.0],
            "study.lambda0": 0.42,
            "study.lambda1": 0.17,
        },
        "paper": {
            "study.R": 86.60,
            "study.t_list": [1.0, 2.0, 4.0, 8.0],
            "study.eps_list_joint": [0.06, 0.084, 0.118, 0.166],
            "study.hratio_list": [0.042, 0.063, 0.094, 0.141, 0.21],
            "study.eps_list": [0.07, 0.095, 0.13, 0.175],
            "study.theta_list_deg": [1.05, 1.4, 1.9, 2.6, 3.6, 5.0],
            "study.lambda0": 0.42,
            "study.lambda1": 0.17,
        },
    },
    "bound": {
        "desk": {"study.t_list": [5.0, 10.0, 20.0], "study.R_list": [25.0, 35.0, 50.0]},
        "paper": {"study.t_list": [5.0, 10.0, 20.0], "study.R_list": [30.0, 50.0, 70.0, 86.6]},
    },
}


def _parse_scalar(text: str):
    s = text.strip()
    if "," in s:
        return [_parse_scalar(part) for part in s.split(",") if part.strip()]
    for caster in (int, float):
        try:
            return caster(s)
        except ValueError:
            pass
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    return s


def parse_config_text(text: str) -> dict[str, object]:
    """Parse flat ``section.key = value`` lines; '#' starts a comment."""
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not 'key = value': {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_scalar(value)
    return out


@dataclass
class RunConfig:
    """Resolved configuration: defaults, then preset, then file/overrides."""

    values: dict[str, object] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        overrides: dict[str, object] | None = None,
        study: str | None = None,
        preset: str | None = None,
    ) -> "RunConfig":
        values = dict(DEFAULTS)
        overrides = dict(overrides or {})
        kind = study or overrides.get("study.kind") or values["study.kind"]
        values["study.kind"] = kind
        if preset:
            try:
                values.update(PRESETS[str(kind)][preset])
            except KeyError:
                raise ValueError(f"no preset {preset!r} for study {kind!r}") from None
            values["preset"] = preset
        values.update(overrides)
        return cls(values=values)

    @classmethod
    def from_file(
        cls, path: str | Path, study: str | None = None, preset: str | None = None
    ) -> "RunConfig":
        return cls.build(parse_config_text(Path(path).read_text()), study=study, preset=preset)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def require(self, key: str):
        if key not in self.values:
            raise KeyError(f"missing config key {key!r}")
        return self.values[key]

    def float_list(self, key: str) -> list[float]:
        raw = self.require(key)
        if not isinstance(raw, list):
            raw = [raw]
        return [float(v) for v in raw]

    # typed views ----------------------------------------------------------

    def lattice(self) -> LatticeParams:
        return LatticeParams(
            a=float(self.require("lattice.a")),
            theta=float(np.deg2rad(self.require("lattice.theta_deg"))),
            L=float(self.require("lattice.L")),
        )

    def hopping(self) -> HoppingModel:
        return HoppingModel(
            t0=float(self.require("hopping.t0")),
            h0=float(self.require("hopping.h0")),
            alpha0=float(self.require("hopping.alpha0")),
            L=float(self.require("lattice.L")),
            interlayer_cutoff=float(self.require("hopping.interlayer_cutoff")),
        )

    def bm(self, params: LatticeParams | None = None, model: HoppingModel | None = None) -> BmParams:
        params = params or self.lattice()
        if self.get("bm.mode", "derived") == "derived":
            return BmParams.from_hopping(model or self.hopping(), params)
        return BmParams(
            v=float(self.require("bm.v")), w=float(self.require("bm.w")), lattice=params
        )

    def wavepacket(self) -> WavepacketSpec:
        coeffs_raw = self.get("wavepacket.coefficients", [0.5, 0, 0.5, 0, 0.5, 0, 0.5, 0])
        if not isinstance(coeffs_raw, list) or len(coeffs_raw) != 8:
            raise ValueError("wavepacket.coefficients needs 8 reals (re/im pairs)")
        coeffs = tuple(
            complex(float(coeffs_raw[2 * i]), float(coeffs_raw[2 * i + 1])) for i in range(4)
        )
        return WavepacketSpec(
            kind=str(self.require("wavepacket.kind")),
            coefficients=coeffs,
            band=int(self.get("wavepacket.band", 1)),
            k=(float(self.get("wavepacket.kx", 0.0)), float(self.get("wavepacket.ky", 0.0))),
            epsilon=(None if self.get("wavepacket.sigma_r") is not None else float(self.get("wavepacket.epsilon", 0.1))),
            sigma_r=(float(self.get("wavepacket.sigma_r")) if self.get("wavepacket.sigma_r") is not None else None),
            sigma_units=str(self.get("wavepacket.sigma_units", "inverse_epsilon_angstrom")),
        )

    def propagation(self, snapshot_times: tuple[float, ...] | None = None) -> PropagatorOptions:
        times = snapshot_times
        if times is None:
            times = tuple(self.float_list("propagation.snapshot_times"))
        return PropagatorOptions(
            method=str(self.require("propagation.method")),
            tol=float(self.require("propagation.tol")),
            snapshot_times=times,
        )

    def metadata(self) -> dict[str, object]:
        """Everything stamped into outputs: resolved config plus conventions."""
        out = {k: self.values[k] for k in sorted(self.values)}
        out["conventions"] = dict(CONVENTIONS)
        out["units"] = "eV, Angstrom, hbar/eV"
        params = self.lattice()
        model = self.hopping()
        bm = self.bm(params, model)
        out["derived"] = {
            "delta": params.delta,
            "cell_area": params.cell_area,
            "k_dirac": params.k_dirac,
            "delta_k": params.delta_k,
            "v": bm.v,
            "w": bm.w,
            "hratio": params.a * bm.w / bm.v,
            "hhat_K": float(hopping_fourier(params.k_dirac * np.array([1.0, 0.0]), model)),
            "interlayer_dropped_mass_estimate": model.dropped_mass_estimate(params),
            "interlayer_dropped_mass_bound": model.dropped_mass_bound(params),
        }
        return out

    def metadata_line(self) -> str:
        """Single-line serialized config for CSV headers."""
        return "# metadata: " + json.dumps(self.metadata(), separators=(",", ":"), sort_keys=True)
