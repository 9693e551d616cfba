"""Closed-form rate model of a driven atom in a Purcell-regime cavity.

All frequencies are ordinary frequencies in MHz (the omega/2pi values quoted
for the experiment).  Rates derived from them are reported in events per
second by multiplying the MHz figure by 1e6, i.e. without a factor of 2*pi.
This is the convention under which the photon budget of the experiment
(~36 kHz of pairs, ~16 detected pairs/s) is self-consistent.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

MHZ = 1e6

# one-sigma uncertainties of the default parameters, used for tolerance windows
PARAM_UNCERTAINTY = {
    "g": 5.0,
    "kappa": 5.0,
    "delta_a": 0.9,
    "omega": 0.8,
    "cooperativity": 0.8,
    "saturation": 0.004,
}

_JSON_KEYS = {
    "g_mhz": "g",
    "kappa_mhz": "kappa",
    "gamma_mhz": "gamma",
    "delta_a_mhz": "delta_a",
    "delta_c_mhz": "delta_c",
    "omega_mhz": "omega",
    "eta_total": "eta_total",
    "eta_fiber": "eta_fiber",
    "delta_ac_mhz": "delta_ac",
}


class ParameterError(ValueError):
    """Invalid physical parameter values."""


class UnknownParameterError(ParameterError):
    """A parameter file contains a key that is not part of the schema."""

    def __init__(self, keys):
        self.keys = sorted(keys)
        super().__init__(f"unknown parameter key(s): {', '.join(self.keys)}")


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise ParameterError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class SystemParams:
    """Atom-cavity-drive parameters (MHz, omega/2pi).  Defaults are the experiment's."""

    g: float = 63.0
    kappa: float = 164.0
    gamma: float = 3.0
    delta_a: float = 93.7
    delta_c: float = 0.0
    omega: float = 32.2
    eta_total: float = 0.03
    eta_fiber: float = 0.4
    delta_ac: float = 13.7

    def __post_init__(self):
        _check_finite(**asdict(self))
        for name in ("g", "kappa", "gamma", "omega"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        for name in ("eta_total", "eta_fiber"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1]")

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def in_purcell_regime(self) -> bool:
        if self.kappa == 0:
            return False
        return self.kappa > self.g**2 / self.kappa > self.gamma

    def check_purcell_regime(self) -> bool:
        ok = self.in_purcell_regime()
        if not ok:
            warnings.warn(
                f"parameters outside the Purcell regime kappa > g^2/kappa > gamma "
                f"(kappa={self.kappa}, g^2/kappa={self.g**2 / self.kappa if self.kappa else float('inf')}, "
                f"gamma={self.gamma})",
                stacklevel=2,
            )
        return ok

    # JSON parameter files use explicit unit suffixes
    def to_json_dict(self) -> dict:
        return {key: getattr(self, attr) for key, attr in _JSON_KEYS.items()}

    @classmethod
    def from_json_dict(cls, data: dict) -> "SystemParams":
        if not isinstance(data, dict):
            raise ParameterError("parameter file must contain a JSON object")
        unknown = set(data) - set(_JSON_KEYS)
        if unknown:
            raise UnknownParameterError(unknown)
        kwargs = {}
        for key, value in data.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParameterError(f"{key} must be a number")
            kwargs[_JSON_KEYS[key]] = float(value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "SystemParams":
        with open(Path(path)) as fh:
            return cls.from_json_dict(json.load(fh))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class DerivedRates:
    cooperativity: float
    complex_cooperativity: complex
    gamma_purcell: float
    saturation: float
    inelastic_fraction: float
    r_c: float
    pair_rate: float
    r_det2: float
    omega_prime: float

    def to_json_dict(self) -> dict:
        d = asdict(self)
        c = d.pop("complex_cooperativity")
        d["complex_cooperativity"] = {"re": c.real, "im": c.imag}
        return d


def saturation(omega: float, delta_a: float, gamma_eff: float) -> float:
    _check_finite(omega=omega, delta_a=delta_a, gamma_eff=gamma_eff)
    if gamma_eff <= 0:
        raise ParameterError("gamma_eff must be positive")
    return (2 * omega**2 / gamma_eff**2) / (1 + (2 * delta_a / gamma_eff) ** 2)


def cooperativity(g: float, kappa: float, gamma: float) -> float:
    _check_finite(g=g, kappa=kappa, gamma=gamma)
    if kappa <= 0 or gamma <= 0:
        raise ParameterError("kappa and gamma must be positive")
    return g**2 / (2 * kappa * gamma)


def complex_cooperativity(params: SystemParams) -> complex:
    if params.kappa <= 0 or params.gamma <= 0:
        raise ParameterError("kappa and gamma must be positive")
    return params.g**2 / (
        2 * complex(params.kappa, params.delta_c) * complex(params.gamma, params.delta_a)
    )


def purcell_gamma(params: SystemParams) -> float:
    """Purcell-broadened decay rate (2C+1)*2*gamma in MHz."""
    if params.gamma <= 0:
        raise ParameterError("gamma must be positive")
    c = cooperativity(params.g, params.kappa, params.gamma)
    return (2 * c + 1) * 2 * params.gamma


def effective_gamma(params: SystemParams, delta_c: float | None = None) -> float:
    """Purcell-broadened decay rate for a detuned cavity.

    Uses 2*Re(C~)+1 as broadening factor, with C~ evaluated for emission at the
    atomic resonance.  This is C*kappa^2/(kappa^2+delta_c^2), so it equals
    purcell_gamma at delta_c = 0 and falls to 2*gamma far off resonance.
    """
    dc = params.delta_c if delta_c is None else delta_c
    c_res = complex_cooperativity(params.with_(delta_a=0.0, delta_c=dc))
    return (2 * c_res.real + 1) * 2 * params.gamma


def lifetime_ns(gamma_total_mhz: float) -> float:
    """1/e lifetime in ns of a population decaying at gamma_total (MHz, omega/2pi)."""
    return 1e3 / (2 * math.pi * gamma_total_mhz)


def free_space_lifetime_ns(params: SystemParams, override_ns: float | None = None) -> float:
    # a free-space lifetime of 27.7 ns would imply a slightly different gamma;
    # callers who want it pass it explicitly
    if override_ns is not None:
        return float(override_ns)
    return lifetime_ns(2 * params.gamma)


def collection_rate(params: SystemParams) -> float:
    """Total photon rate out of the cavity, events/s."""
    if params.g <= 0:
        raise ParameterError("collection rate is undefined for g = 0")
    ct = complex_cooperativity(params)
    ratio = abs(ct) ** 2 / abs(1 + 2 * ct) ** 2
    return 2 * params.kappa * params.omega**2 / params.g**2 * ratio * MHZ


def detected_pair_rate(params: SystemParams, gamma_eff: float | None = None) -> float:
    """Detected photon-pair rate (eta^2/4) * s * R_c, pairs/s."""
    ge = purcell_gamma(params) if gamma_eff is None else gamma_eff
    s = saturation(params.omega, params.delta_a, ge)
    return params.eta_total**2 / 4 * s * collection_rate(params)


def inelastic_fraction(s: float) -> float:
    if s < 0:
        raise ParameterError("saturation must be non-negative")
    if math.isinf(s):
        return 1.0
    return s / (1 + s)


def rabi_sideband(omega: float, delta_a: float) -> float:
    return math.hypot(omega, delta_a)


def derived_rates(params: SystemParams) -> DerivedRates:
    c = cooperativity(params.g, params.kappa, params.gamma)
    gp = purcell_gamma(params)
    s = saturation(params.omega, params.delta_a, gp)
    rc = collection_rate(params) if params.g > 0 else 0.0
    return DerivedRates(
        cooperativity=c,
        complex_cooperativity=complex_cooperativity(params),
        gamma_purcell=gp,
        saturation=s,
        inelastic_fraction=inelastic_fraction(s),
        r_c=rc,
        pair_rate=s * rc / 2,
        r_det2=params.eta_total**2 / 4 * s * rc,
        omega_prime=rabi_sideband(params.omega, params.delta_a),
    )


@dataclass(frozen=True)
class SweepPoint:
    delta_c: float
    r_c: float
    r_det2: float
    gamma_eff: float

    @property
    def lifetime_ns(self) -> float:
        return lifetime_ns(self.gamma_eff)


def sweep_detuning(params: SystemParams, delta_c_list: Iterable[float]) -> list[SweepPoint]:
    """Evaluate cavity output and detected pair rate at each cavity detuning.

    The saturation parameter at each point uses the detuning-dependent Purcell
    rate, so the delta_c = 0 point coincides with derived_rates().
    """
    points = []
    for dc in delta_c_list:
        p = params.with_(delta_c=float(dc))
        ge = effective_gamma(p)
        rc = collection_rate(p)
        s = saturation(p.omega, p.delta_a, ge)
        points.append(SweepPoint(float(dc), rc, p.eta_total**2 / 4 * s * rc, ge))
    if not points:
        raise ParameterError("detuning list is empty")
    return points


def pair_rate_curve(params: SystemParams, delta_c_list: Sequence[float]) -> list[float]:
    """Undetected pair-rate model s*R_c/4 per detuning (multiply by eta^2 for R_det2)."""
    return [pt.r_det2 for pt in sweep_detuning(params.with_(eta_total=1.0), delta_c_list)]
