"""Analytic two-photon cascade source.

Each inelastic scattering event is modelled as a photon pair: an early photon
in one sideband followed, after an exponentially distributed delay set by the
Purcell-broadened decay rate, by a late photon in the other sideband.  Pair
start times form a Poisson process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import physpar
from ._rng import spawn
from .physpar import SystemParams
from .ttag import ClickStream, DetectorConfig, apply_detector

PS_PER_S = 1e12

EARLY_CHANNEL = 0
LATE_CHANNEL = 1
MERGED_CHANNEL = 0


class Sideband(IntEnum):
    PLUS = 1
    MINUS = -1


@dataclass(frozen=True)
class FilterConfig:
    """Spectral filtering in front of the detectors.

    ``elastic_suppression`` is the fraction of elastic light removed by the
    notch, ``inelastic_transmission`` the fraction of sideband light passed.
    Transmission only enters the background ratio; losses on the pairs
    themselves belong in the detector efficiency.  An explicit
    ``elastic_background_fraction`` overrides the derived value.
    """

    elastic_suppression: float = 0.995
    inelastic_transmission: float = 1.0
    elastic_background_fraction: float | None = None


@dataclass(frozen=True)
class CascadePairModel:
    pair_rate: float  # pairs/s
    gamma_decay: float  # 1/s
    sideband_offset: float  # MHz
    elastic_background_fraction: float
    early_sideband: Sideband = Sideband.PLUS

    def __post_init__(self):
        if self.pair_rate < 0:
            raise ValueError("pair_rate must be non-negative")
        if self.gamma_decay <= 0:
            raise ValueError("gamma_decay must be positive")
        if not 0.0 <= self.elastic_background_fraction <= 1.0:
            raise ValueError("elastic_background_fraction must lie in [0, 1]")

    @property
    def lifetime_ns(self) -> float:
        return 1e9 / self.gamma_decay

    @property
    def late_sideband(self) -> Sideband:
        return Sideband(-int(self.early_sideband))


def pair_model_from_params(params: SystemParams, filter_config: FilterConfig | None = None,
                           early_sideband: Sideband = Sideband.PLUS) -> CascadePairModel:
    fc = filter_config or FilterConfig()
    gamma_eff = physpar.effective_gamma(params)
    s = physpar.saturation(params.omega, params.delta_a, gamma_eff)
    rc = physpar.collection_rate(params) if params.g > 0 else 0.0
    if fc.elastic_background_fraction is not None:
        bg = fc.elastic_background_fraction
    elif s > 0 and fc.inelastic_transmission > 0:
        # elastic/inelastic = 1/s before filtering
        bg = min(1.0, (1 - fc.elastic_suppression) / (s * fc.inelastic_transmission))
    else:
        bg = 0.0
    return CascadePairModel(
        pair_rate=s * rc / 2,
        gamma_decay=2 * math.pi * gamma_eff * physpar.MHZ,
        sideband_offset=abs(params.delta_a),
        elastic_background_fraction=bg,
        early_sideband=early_sideband,
    )


@dataclass(frozen=True, eq=False)
class PairEvents:
    """Struct-of-arrays collection of pairs, sorted by early-photon time."""

    t_early_ps: np.ndarray
    t_late_ps: np.ndarray
    sideband_early: Sideband
    sideband_late: Sideband
    duration_ps: int

    def __len__(self):
        return len(self.t_early_ps)

    def __iter__(self):
        for te, tl in zip(self.t_early_ps.tolist(), self.t_late_ps.tolist()):
            yield PairEvent(te, tl, self.sideband_early, self.sideband_late)

    def delays_ps(self) -> np.ndarray:
        return self.t_late_ps - self.t_early_ps

    def chunk(self, start: int, stop: int) -> "PairEvents":
        """Sub-range re-referenced so its first pair starts near t = 0."""
        te = self.t_early_ps[start:stop]
        tl = self.t_late_ps[start:stop]
        if len(te) == 0:
            return PairEvents(te, tl, self.sideband_early, self.sideband_late, 0)
        t0 = int(te[0])
        end = int(tl.max()) - t0
        return PairEvents(te - t0, tl - t0, self.sideband_early, self.sideband_late, end)


@dataclass(frozen=True)
class PairEvent:
    t_early_ps: int
    t_late_ps: int
    sideband_early: Sideband
    sideband_late: Sideband


def sample_pairs(model: CascadePairModel, duration_s: float, seed) -> PairEvents:
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    duration_ps = int(round(duration_s * PS_PER_S))
    n = rng.poisson(model.pair_rate * duration_s) if model.pair_rate > 0 else 0
    t_early = np.sort(rng.integers(0, duration_ps + 1, size=n, dtype=np.int64))
    delay = np.rint(rng.exponential(PS_PER_S / model.gamma_decay, size=n)).astype(np.int64)
    t_late = t_early + delay
    end = max(duration_ps, int(t_late.max()) if n else 0)
    return PairEvents(t_early, t_late, model.early_sideband, model.late_sideband, end)


def joint_amplitude(tau_ps, model: CascadePairModel):
    """Late-photon amplitude sqrt(G) exp(-G tau / 2) for tau >= 0, in ps^-1/2."""
    g = model.gamma_decay / PS_PER_S
    tau = np.asarray(tau_ps, dtype=float)
    amp = np.where(tau >= 0, np.sqrt(g) * np.exp(-0.5 * g * np.clip(tau, 0, None)), 0.0)
    amp = amp.astype(complex)
    return amp if amp.ndim else complex(amp)


def to_click_streams(pairs: PairEvents, model: CascadePairModel, detector_config: DetectorConfig,
                     seed, *, split: bool = True):
    """Detected clicks for pairs.

    ``split=True`` returns (early-sideband stream, late-sideband stream) on
    channels 0 and 1, as behind a sideband-separating filter cavity.  With
    ``split=False`` all photons share one channel and elastic background is
    added at ``elastic_background_fraction`` times the inelastic photon rate.
    """
    seeds = spawn(seed, 3)
    T = pairs.duration_ps
    if split:
        early = ClickStream(pairs.t_early_ps.astype(np.uint64), np.full(len(pairs), EARLY_CHANNEL),
                            T, {EARLY_CHANNEL: f"sideband{int(pairs.sideband_early):+d}"}, "cascade")
        late = ClickStream.from_unsorted(pairs.t_late_ps, np.full(len(pairs), LATE_CHANNEL),
                                         duration_ps=T,
                                         channel_labels={LATE_CHANNEL: f"sideband{int(pairs.sideband_late):+d}"},
                                         origin="cascade")
        return (apply_detector(early, detector_config, seeds[0]),
                apply_detector(late, detector_config, seeds[1]))
    ts = np.concatenate([pairs.t_early_ps, pairs.t_late_ps])
    rng = np.random.default_rng(seeds[2])
    bg_rate = model.elastic_background_fraction * 2 * model.pair_rate
    n_bg = rng.poisson(bg_rate * T / PS_PER_S) if bg_rate > 0 else 0
    bg = rng.integers(0, T + 1, size=n_bg, dtype=np.int64)
    photons = ClickStream.from_unsorted(np.concatenate([ts, bg]), np.full(len(ts) + n_bg, MERGED_CHANNEL),
                                        duration_ps=T, channel_labels={MERGED_CHANNEL: "merged"},
                                        origin="cascade")
    return apply_detector(photons, detector_config, seeds[0])


__all__ = [
    "CascadePairModel", "FilterConfig", "PairEvent", "PairEvents", "Sideband",
    "joint_amplitude", "pair_model_from_params", "sample_pairs", "to_click_streams",
]
