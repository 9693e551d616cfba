"""Start-stop coincidence histograms and g2 normalisation."""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .ttag import ClickStream, UnsortedRecords, _first_unsorted

DEFAULT_BIN_PS = 1000


class CorrelationError(ValueError):
    pass


class ZeroRate(CorrelationError):
    pass


class WindowOutOfRange(CorrelationError):
    pass


@dataclass(frozen=True, eq=False)
class CorrelationHistogram:
    bin_width_ps: int
    tau_min_ps: int
    counts: np.ndarray
    n_start: int
    n_stop: int
    duration_ps: int
    normalized: np.ndarray | None = None

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def tau_max_ps(self) -> int:
        return self.tau_min_ps + self.n_bins * self.bin_width_ps

    @property
    def edges_ps(self) -> np.ndarray:
        return self.tau_min_ps + self.bin_width_ps * np.arange(self.n_bins + 1, dtype=np.int64)

    @property
    def centers_ps(self) -> np.ndarray:
        return self.tau_min_ps + self.bin_width_ps * (np.arange(self.n_bins) + 0.5)

    def bin_index(self, tau_ps: float) -> int:
        return int(np.floor((tau_ps - self.tau_min_ps) / self.bin_width_ps))

    def g2_at(self, tau_ps: float = 0.0) -> float:
        h = self if self.normalized is not None else g2_normalize(self)
        return float(h.normalized[h.bin_index(tau_ps)])

    def __add__(self, other: "CorrelationHistogram") -> "CorrelationHistogram":
        """Elementwise sum of partial histograms over the same bins (e.g. split start ranges)."""
        if (self.bin_width_ps, self.tau_min_ps, self.n_bins) != (
                other.bin_width_ps, other.tau_min_ps, other.n_bins):
            raise CorrelationError("histograms have different binning")
        return CorrelationHistogram(self.bin_width_ps, self.tau_min_ps, self.counts + other.counts,
                                    self.n_start + other.n_start, max(self.n_stop, other.n_stop),
                                    max(self.duration_ps, other.duration_ps))

    def to_csv(self, sink) -> None:
        rows = ["tau_ps,counts,g2"]
        for i, (tau, c) in enumerate(zip(self.centers_ps, self.counts)):
            g2 = "" if self.normalized is None else repr(float(self.normalized[i]))
            rows.append(f"{tau:g},{int(c)},{g2}")
        text = "\n".join(rows) + "\n"
        if isinstance(sink, (str, os.PathLike)):
            with open(sink, "w") as fh:
                fh.write(text)
        else:
            sink.write(text)


def _times(x) -> tuple[np.ndarray, int]:
    if isinstance(x, ClickStream):
        return x.timestamps.astype(np.int64), x.duration_ps
    arr = np.asarray(x, dtype=np.int64)
    bad = _first_unsorted(arr, np.zeros(len(arr), np.uint16))
    if bad is not None:
        raise UnsortedRecords(bad)
    return arr, int(arr[-1]) if len(arr) else 0


def cross_histogram(start, stop, tau_range: tuple[int, int], bin_width: int = DEFAULT_BIN_PS,
                    *, autocorrelation: bool = False, start_range: tuple[int, int] | None = None,
                    ) -> CorrelationHistogram:
    """Histogram of stop - start delays in [tau_min, tau_max).

    For every start click the matching stop window is located by binary search
    in the sorted stop times; the k-th candidate of all windows is then handled
    in one vectorised pass, so the cost is linear in clicks plus delay-qualified
    pairs.  With ``autocorrelation=True`` ``stop`` must be the same stream and a
    click is never paired with itself (equal timestamps on distinct records
    still count).  ``start_range`` restricts the start clicks to an index slice,
    which lets partial histograms be accumulated separately and added.
    """
    tau_min, tau_max = int(tau_range[0]), int(tau_range[1])
    bin_width = int(bin_width)
    if bin_width <= 0 or tau_max <= tau_min:
        raise CorrelationError("need bin_width > 0 and tau_max > tau_min")
    if (tau_max - tau_min) % bin_width:
        raise CorrelationError("bin width must divide the delay range")
    t_start, d_start = _times(start)
    t_stop, d_stop = _times(stop)
    if autocorrelation and len(t_start) != len(t_stop):
        raise CorrelationError("autocorrelation needs the same stream twice")
    n_bins = (tau_max - tau_min) // bin_width
    counts = np.zeros(n_bins, np.int64)

    i0, i1 = (0, len(t_start)) if start_range is None else start_range
    starts = t_start[i0:i1]
    idx = np.arange(i0, i1)
    lo = np.searchsorted(t_stop, starts + tau_min, side="left")
    hi = np.searchsorted(t_stop, starts + tau_max, side="left")
    width = hi - lo
    k = 0
    active = np.flatnonzero(width > 0)
    while len(active):
        j = lo[active] + k
        delays = t_stop[j] - starts[active]
        if autocorrelation:
            keep = j != idx[active]
            delays = delays[keep]
        counts += np.bincount((delays - tau_min) // bin_width, minlength=n_bins)[:n_bins]
        k += 1
        active = active[width[active] > k]
    return CorrelationHistogram(bin_width, tau_min, counts, i1 - i0, len(t_stop),
                                max(d_start, d_stop))


def autocorrelation(stream, tau_range, bin_width: int = DEFAULT_BIN_PS) -> CorrelationHistogram:
    return cross_histogram(stream, stream, tau_range, bin_width, autocorrelation=True)


def brute_force_histogram(start, stop, tau_range, bin_width, autocorrelation=False) -> np.ndarray:
    """O(n*m) reference pairer, for testing only."""
    t_start, _ = _times(start)
    t_stop, _ = _times(stop)
    tau_min, tau_max = tau_range
    counts = np.zeros((tau_max - tau_min) // bin_width, np.int64)
    for i, a in enumerate(t_start.tolist()):
        for j, b in enumerate(t_stop.tolist()):
            if autocorrelation and i == j:
                continue
            d = b - a
            if tau_min <= d < tau_max:
                counts[(d - tau_min) // bin_width] += 1
    return counts


def g2_normalize(hist: CorrelationHistogram) -> CorrelationHistogram:
    """Divide by the uncorrelated expectation rate_start * rate_stop * bin * duration."""
    if hist.duration_ps <= 0:
        raise ZeroRate("histogram has zero duration")
    if hist.n_start == 0 or hist.n_stop == 0:
        raise ZeroRate("start or stop stream is empty")
    expected = hist.n_start * hist.n_stop * hist.bin_width_ps / hist.duration_ps
    return replace(hist, normalized=hist.counts / expected)


def peak_area(hist: CorrelationHistogram, center_ps: float, half_width_ps: float) -> int:
    """Counts in bins lying inside [center - hw, center + hw], plus the bin holding the center."""
    lo, hi = center_ps - half_width_ps, center_ps + half_width_ps
    if half_width_ps < 0 or lo < hist.tau_min_ps or hi > hist.tau_max_ps:
        raise WindowOutOfRange(f"window [{lo}, {hi}] outside histogram "
                               f"[{hist.tau_min_ps}, {hist.tau_max_ps}]")
    edges = hist.edges_ps
    inside = (edges[:-1] >= lo) & (edges[1:] <= hi)
    ic = min(hist.bin_index(center_ps), hist.n_bins - 1)
    inside[ic] = True
    return int(hist.counts[inside].sum())
