"""Measurement-style analyses built from the simulation and correlation layers.

These are the procedures behind the command line and the experiment scripts:
g2 of a click stream, oscillation and decay-time fits, and a simulated
detuning sweep measured the way a Hanbury Brown-Twiss setup would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cascade, corr, fit, physpar
from ._rng import spawn
from .physpar import SystemParams
from .ttag import ClickStream, DetectorConfig, apply_detector


def g2_histogram(start: ClickStream, stop: ClickStream | None = None, *, bin_ps: int = 1000,
                 half_range_ps: int = 30_000) -> corr.CorrelationHistogram:
    """Normalised g2 with bins centred on integer multiples of the bin width.

    Without ``stop`` this is the autocorrelation of ``start``.
    """
    n = max(1, half_range_ps // bin_ps)
    lo = -n * bin_ps - bin_ps // 2
    hi = n * bin_ps + bin_ps - bin_ps // 2
    if stop is None:
        h = corr.autocorrelation(start, (lo, hi), bin_ps)
    else:
        h = corr.cross_histogram(start, stop, (lo, hi), bin_ps)
    return corr.g2_normalize(h)


def g2_zero(hist: corr.CorrelationHistogram) -> float:
    return hist.g2_at(0)


def oscillation_fit(hist: corr.CorrelationHistogram, tau_min_ps: float = 0.0,
                    tau_max_ps: float | None = None) -> fit.FitResult:
    """Damped-cosine fit of g2(tau) for tau in [tau_min, tau_max]; adds frequency_mhz and decay_time_ns."""
    h = hist if hist.normalized is not None else corr.g2_normalize(hist)
    x = h.centers_ps / 1000.0
    hi = x.max() if tau_max_ps is None else tau_max_ps / 1000.0
    m = (x >= tau_min_ps / 1000.0) & (x <= hi)
    res = fit.fit_damped_cosine(x[m], h.normalized[m])
    derived = {"frequency_mhz": res.params["frequency"] * 1e3,
               "decay_time_ns": 1.0 / res.params["decay"] if res.params["decay"] > 0 else math.inf,
               "model": "damped cosine (chosen fit form for g2 oscillations)"}
    if res.sigmas is not None:
        derived["frequency_mhz_sigma"] = res.sigmas["frequency"] * 1e3
    return fit.FitResult(res.model, res.params, res.sigmas, res.residual_norm, res.converged, res.n_iter,
                         res.initial_residual_norm, derived, res.message)


def wavepacket_histogram(early: ClickStream, late: ClickStream, *, bin_ps: int = 250,
                         tau_min_ps: int = -20_000, tau_max_ps: int = 40_000) -> corr.CorrelationHistogram:
    return corr.cross_histogram(early, late, (tau_min_ps, tau_max_ps), bin_ps)


def decay_time_fit(hist: corr.CorrelationHistogram, tau_start_ps: int = 0) -> fit.FitResult:
    """Poisson-weighted exponential fit to the positive-delay side; decay_time in ns."""
    x = hist.edges_ps[:-1].astype(float)
    m = x >= tau_start_ps
    # a bin starting at t holds e^{-kt}(1 - e^{-k b}) / k: still exponential in t with rate k
    res = fit.fit_exponential(x[m] / 1000.0, hist.counts[m].astype(float))
    return res


@dataclass(frozen=True)
class SweepRow:
    delta_c_mhz: float
    decay_time_ns: float
    decay_time_sigma_ns: float
    model_lifetime_ns: float
    coincidences: int
    pair_rate_per_s: float
    pair_rate_sigma: float
    model_r_det2: float

    CSV_HEADER = ("delta_c_mhz,decay_time_ns,decay_time_sigma_ns,model_lifetime_ns,coincidences,"
                  "pair_rate_per_s,pair_rate_sigma,model_r_det2")

    def csv_row(self) -> str:
        return ",".join(repr(float(v)) if not isinstance(v, int) else str(v) for v in (
            self.delta_c_mhz, self.decay_time_ns, self.decay_time_sigma_ns, self.model_lifetime_ns,
            self.coincidences, self.pair_rate_per_s, self.pair_rate_sigma, self.model_r_det2))


def hbt_coincidences(pairs: cascade.PairEvents, efficiency: float, seed, window_ps: int = 50_000) -> int:
    """Pair coincidences behind a 50:50 beam splitter and two detectors of the given efficiency.

    Both photons share one spectral channel; a pair gives a coincidence only
    when its photons leave through different ports (probability 1/2) and both
    are detected, so the expected count is efficiency^2 * N / 2.
    """
    s_route, s_det = spawn(seed, 2)
    rng = np.random.default_rng(s_route)
    n = len(pairs)
    ts = np.concatenate([pairs.t_early_ps, pairs.t_late_ps])
    ch = rng.integers(0, 2, size=2 * n).astype(np.uint16)
    photons = ClickStream.from_unsorted(ts, ch, duration_ps=pairs.duration_ps, origin="hbt")
    clicks = apply_detector(photons, DetectorConfig(efficiency=efficiency), s_det)
    a, b = clicks.channel(0), clicks.channel(1)
    h = corr.cross_histogram(a, b, (-window_ps, window_ps), window_ps)
    return int(h.counts.sum())


def simulate_sweep(params: SystemParams, delta_c_list, duration_s: float, seed, *,
                   bin_ps: int = 250) -> list[SweepRow]:
    """Per detuning: fitted wavepacket decay time and HBT-detected pair rate."""
    dcs = [float(d) for d in delta_c_list]
    if not dcs:
        raise physpar.ParameterError("detuning list is empty")
    rows = []
    for dc, s in zip(dcs, spawn(seed, len(dcs))):
        s_pairs, s_split, s_hbt = spawn(s, 3)
        p = params.with_(delta_c=dc)
        model = cascade.pair_model_from_params(p)
        pairs = cascade.sample_pairs(model, duration_s, s_pairs)
        early, late = cascade.to_click_streams(pairs, model, DetectorConfig(), s_split)
        fr = decay_time_fit(wavepacket_histogram(early, late, bin_ps=bin_ps))
        k = fr.params["rate"]
        sig = fr.sigmas["rate"] / k**2 if fr.sigmas else math.nan
        gamma_eff = physpar.effective_gamma(p)
        # ten lifetimes: the tail loss is e^-10 while accidentals stay below half a percent
        window = max(20_000, int(10_000 * physpar.lifetime_ns(gamma_eff)))
        n_c = hbt_coincidences(pairs, p.eta_total, s_hbt, window_ps=window)
        r_det2 = p.eta_total**2 / 4 * physpar.saturation(p.omega, p.delta_a, gamma_eff) * physpar.collection_rate(p)
        rows.append(SweepRow(dc, 1.0 / k, sig, physpar.lifetime_ns(gamma_eff), n_c, n_c / duration_s,
                             math.sqrt(max(n_c, 1)) / duration_s, r_det2))
    return rows
