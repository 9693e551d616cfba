"""Franson interferometer acting on cascade photon pairs.

Each photon of a pair passes its own unbalanced Mach-Zehnder interferometer
(early photon -> side a, late photon -> side b).  Interference is applied at
the coincidence level: short-long and long-short routes are classical and
land in the side peaks at -/+ delta_t; the indistinguishable short-short and
long-long routes reach the monitored ports with probability
(1 + V cos(phi_a + phi_b)) / 2, otherwise the pair leaves through the
unmonitored ports and is counted as discarded.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np

from ._rng import spawn
from .cascade import PairEvents
from .corr import cross_histogram, peak_area
from .ttag import ClickStream

DEFAULT_DELTA_T_PS = 47_000
PEAK_FWHM_PS = 12_000
CHANNEL_A = 0
CHANNEL_B = 1


class PeakClass(IntEnum):
    LEFT = -1
    CENTRAL = 0
    RIGHT = 1


class PathPair(IntEnum):
    SS_OR_LL = 0
    SL = 1
    LS = 2


@dataclass(frozen=True)
class FransonConfig:
    delta_t_ps: int = DEFAULT_DELTA_T_PS
    phi_a: float = 0.0
    phi_b: float = 0.0
    visibility: float = 1.0
    jitter_sigma_ps: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError("visibility must lie in [0, 1]")
        if self.delta_t_ps <= 0 or self.jitter_sigma_ps < 0:
            raise ValueError("delta_t must be positive and jitter non-negative")

    @property
    def phi_sum(self) -> float:
        return self.phi_a + self.phi_b

    def check_delay(self, lifetime_ps: float, factor: float = 5.0) -> bool:
        ok = self.delta_t_ps >= factor * lifetime_ps
        if not ok:
            warnings.warn(f"interferometer delay {self.delta_t_ps} ps is not much longer than the "
                          f"photon lifetime {lifetime_ps:.0f} ps", stacklevel=2)
        return ok


class FransonOutcome(NamedTuple):
    detect_a_ps: int
    detect_b_ps: int
    peak_class: PeakClass
    path_pair: PathPair


@dataclass(frozen=True, eq=False)
class FransonOutcomes:
    detect_a_ps: np.ndarray
    detect_b_ps: np.ndarray
    peak_class: np.ndarray
    path_pair: np.ndarray
    n_discarded: int
    n_pairs: int
    duration_ps: int
    delta_t_ps: int = DEFAULT_DELTA_T_PS

    def __len__(self):
        return len(self.detect_a_ps)

    def __iter__(self):
        for a, b, pc, pp in zip(self.detect_a_ps.tolist(), self.detect_b_ps.tolist(),
                                self.peak_class.tolist(), self.path_pair.tolist()):
            yield FransonOutcome(a, b, PeakClass(pc), PathPair(pp))

    def count(self, peak: PeakClass) -> int:
        return int(np.count_nonzero(self.peak_class == peak))

    def to_csv(self, sink) -> None:
        rows = ["detect_a_ps,detect_b_ps,peak_class,path_pair"]
        for o in self:
            rows.append(f"{o.detect_a_ps},{o.detect_b_ps},{o.peak_class.name},{o.path_pair.name}")
        text = "\n".join(rows) + "\n"
        if isinstance(sink, (str, os.PathLike)):
            with open(sink, "w") as fh:
                fh.write(text)
        else:
            sink.write(text)


def transform_pairs(pairs: PairEvents, config: FransonConfig, seed) -> FransonOutcomes:
    rng = np.random.default_rng(seed)
    n = len(pairs)
    dt = int(config.delta_t_ps)
    route = rng.random(n)
    sl = route < 0.25
    ls = (route >= 0.25) & (route < 0.5)
    cand = route >= 0.5
    p_survive = 0.5 * (1 + config.visibility * math.cos(config.phi_sum))
    survive = cand & (rng.random(n) < p_survive)
    long_long = rng.random(n) < 0.5

    keep = sl | ls | survive
    ta = pairs.t_early_ps.astype(np.int64).copy()
    tb = pairs.t_late_ps.astype(np.int64).copy()
    ta[ls | (survive & long_long)] += dt
    tb[sl | (survive & long_long)] += dt
    peak = np.where(sl, PeakClass.RIGHT, np.where(ls, PeakClass.LEFT, PeakClass.CENTRAL))
    path = np.where(sl, PathPair.SL, np.where(ls, PathPair.LS, PathPair.SS_OR_LL))
    ta, tb, peak, path = ta[keep], tb[keep], peak[keep], path[keep]
    if config.jitter_sigma_ps > 0 and len(ta):
        ta = ta + np.rint(rng.normal(0, config.jitter_sigma_ps, len(ta))).astype(np.int64)
        tb = tb + np.rint(rng.normal(0, config.jitter_sigma_ps, len(tb))).astype(np.int64)
        ta = np.clip(ta, 0, None)
        tb = np.clip(tb, 0, None)
    duration = int(pairs.duration_ps) + dt
    if len(ta):
        duration = max(duration, int(ta.max()), int(tb.max()))
    return FransonOutcomes(ta, tb, peak.astype(np.int8), path.astype(np.int8),
                           int(np.count_nonzero(cand & ~survive)), n, duration, dt)


def outcomes_to_streams(outcomes: FransonOutcomes) -> tuple[ClickStream, ClickStream]:
    a = ClickStream.from_unsorted(outcomes.detect_a_ps, np.full(len(outcomes), CHANNEL_A),
                                  duration_ps=outcomes.duration_ps,
                                  channel_labels={CHANNEL_A: "detector_a"}, origin="franson")
    b = ClickStream.from_unsorted(outcomes.detect_b_ps, np.full(len(outcomes), CHANNEL_B),
                                  duration_ps=outcomes.duration_ps,
                                  channel_labels={CHANNEL_B: "detector_b"}, origin="franson")
    return a, b


def coincidence_histogram(outcomes: FransonOutcomes, bin_width_ps: int = 1000,
                          half_range_ps: int | None = None):
    """Detector a as start, detector b as stop, spanning both side peaks."""
    a, b = outcomes_to_streams(outcomes)
    hr = half_range_ps if half_range_ps is not None else 2 * outcomes.delta_t_ps
    hr = (hr // bin_width_ps) * bin_width_ps
    return cross_histogram(a, b, (-hr, hr), bin_width_ps)


def central_area(outcomes: FransonOutcomes, window_fwhm_ps: int = PEAK_FWHM_PS,
                 bin_width_ps: int = 1000) -> int:
    hist = coincidence_histogram(outcomes, bin_width_ps, half_range_ps=4 * window_fwhm_ps)
    return peak_area(hist, 0, window_fwhm_ps / 2)


def interference_curve(pairs: PairEvents, config_base: FransonConfig, phi_sum_list: Sequence[float],
                       seed, *, window_fwhm_ps: int = PEAK_FWHM_PS) -> list[tuple[float, int]]:
    """Central-peak area versus phi_a + phi_b (phi_b held at its base value)."""
    if len(phi_sum_list) == 0:
        raise ValueError("phase list is empty")
    seeds = spawn(seed, len(phi_sum_list))
    out = []
    for phi, s in zip(phi_sum_list, seeds):
        cfg = replace(config_base, phi_a=float(phi) - config_base.phi_b)
        outcomes = transform_pairs(pairs, cfg, s)
        out.append((float(phi), central_area(outcomes, window_fwhm_ps)))
    return out
