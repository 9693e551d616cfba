"""Picosecond time-tag streams, their file formats, and a detector model.

Binary layout (little-endian)::

    b"TTAG" | version: u16 = 1 | record_count: u64 | record_count x (timestamp_ps: u64, channel: u16)

Records are packed without padding, 10 bytes each.  The CSV form is a
``timestamp_ps,channel`` header followed by one decimal record per line.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

MAGIC = b"TTAG"
VERSION = 1
_HEADER = struct.Struct("<4sHQ")
RECORD_DTYPE = np.dtype([("timestamp_ps", "<u8"), ("channel", "<u2")])
CSV_HEADER = "timestamp_ps,channel"

assert RECORD_DTYPE.itemsize == 10


class TtagError(Exception):
    """Base class for time-tag stream errors."""


class BadMagic(TtagError):
    pass


class UnsupportedVersion(TtagError):
    pass


class TruncatedPayload(TtagError):
    pass


class TrailingData(TtagError):
    pass


class UnsortedRecords(TtagError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"records out of order at index {index}")


class CsvHeaderError(TtagError):
    pass


class CsvRowError(TtagError):
    def __init__(self, line: int, text: str):
        self.line = line
        super().__init__(f"malformed CSV row at line {line}: {text!r}")


class ChannelLabelConflict(TtagError):
    pass


def _first_unsorted(ts: np.ndarray, ch: np.ndarray) -> int | None:
    if len(ts) < 2:
        return None
    t0, t1 = ts[:-1], ts[1:]
    bad = (t1 < t0) | ((t1 == t0) & (ch[1:] < ch[:-1]))
    idx = np.flatnonzero(bad)
    return int(idx[0]) + 1 if len(idx) else None


@dataclass(frozen=True, eq=False)
class ClickStream:
    """Sorted detection events.  Ties in time are ordered by channel."""

    timestamps: np.ndarray
    channels: np.ndarray
    duration_ps: int = 0
    channel_labels: Mapping[int, str] = field(default_factory=dict)
    origin: str = ""

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps, dtype=np.uint64)
        ch = np.ascontiguousarray(self.channels, dtype=np.uint16)
        if ts.shape != ch.shape or ts.ndim != 1:
            raise ValueError("timestamps and channels must be 1-d arrays of equal length")
        bad = _first_unsorted(ts, ch)
        if bad is not None:
            raise UnsortedRecords(bad)
        duration = int(self.duration_ps)
        if len(ts) and int(ts[-1]) > duration:
            duration = int(ts[-1])
        ts.flags.writeable = False
        ch.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "duration_ps", duration)
        object.__setattr__(self, "channel_labels", dict(self.channel_labels))

    @classmethod
    def from_unsorted(cls, timestamps, channels, **kwargs) -> "ClickStream":
        ts = np.asarray(timestamps, dtype=np.uint64)
        ch = np.asarray(channels, dtype=np.uint16)
        order = np.lexsort((ch, ts))
        return cls(ts[order], ch[order], **kwargs)

    @classmethod
    def empty(cls, duration_ps: int = 0, **kwargs) -> "ClickStream":
        return cls(np.zeros(0, np.uint64), np.zeros(0, np.uint16), duration_ps, **kwargs)

    def __len__(self) -> int:
        return len(self.timestamps)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClickStream):
            return NotImplemented
        return (
            np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.channels, other.channels)
            and self.duration_ps == other.duration_ps
        )

    def records(self) -> np.ndarray:
        out = np.empty(len(self), RECORD_DTYPE)
        out["timestamp_ps"] = self.timestamps
        out["channel"] = self.channels
        return out

    def channel(self, ch: int) -> "ClickStream":
        m = self.channels == ch
        labels = {ch: self.channel_labels[ch]} if ch in self.channel_labels else {}
        return ClickStream(self.timestamps[m], self.channels[m], self.duration_ps, labels, self.origin)

    def relabel(self, ch: int, label: str | None = None) -> "ClickStream":
        """All records moved onto a single channel."""
        labels = {ch: label} if label is not None else {}
        return ClickStream.from_unsorted(
            self.timestamps, np.full(len(self), ch), duration_ps=self.duration_ps,
            channel_labels=labels, origin=self.origin,
        )

    def rate(self, ch: int | None = None) -> float:
        """Mean click rate in events/s."""
        if self.duration_ps <= 0:
            raise ValueError("stream has zero duration")
        n = len(self) if ch is None else int(np.count_nonzero(self.channels == ch))
        return n / (self.duration_ps * 1e-12)

    def present_channels(self) -> list[int]:
        return sorted(set(np.unique(self.channels).tolist()) | set(self.channel_labels))


# -- binary -----------------------------------------------------------------

def to_bytes(stream: ClickStream) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, len(stream)) + stream.records().tobytes()


def write_binary(stream: ClickStream, sink) -> None:
    data = to_bytes(stream)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(data)
    else:
        sink.write(data)


def from_bytes(data: bytes, duration_ps: int | None = None, **kwargs) -> ClickStream:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {bytes(data[:4])!r}")
    if len(data) < _HEADER.size:
        raise TruncatedPayload("file shorter than the header")
    _, version, count = _HEADER.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported format version {version}")
    need = _HEADER.size + count * RECORD_DTYPE.itemsize
    if len(data) < need:
        raise TruncatedPayload(f"header announces {count} records, payload holds "
                               f"{(len(data) - _HEADER.size) // RECORD_DTYPE.itemsize}")
    if len(data) > need:
        raise TrailingData(f"{len(data) - need} bytes after the last record")
    rec = np.frombuffer(data, RECORD_DTYPE, count=count, offset=_HEADER.size)
    ts = rec["timestamp_ps"].astype(np.uint64)
    ch = rec["channel"].astype(np.uint16)
    bad = _first_unsorted(ts, ch)
    if bad is not None:
        raise UnsortedRecords(bad)
    return ClickStream(ts, ch, duration_ps or 0, **kwargs)


def read_binary(source, duration_ps: int | None = None, **kwargs) -> ClickStream:
    """Read a TTAG file.  The format carries no duration; it defaults to the last timestamp."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    return from_bytes(data, duration_ps, **kwargs)


# -- CSV ----------------------------------------------------------------------

def write_csv(stream: ClickStream, sink) -> None:
    lines = [CSV_HEADER]
    lines.extend(f"{t},{c}" for t, c in zip(stream.timestamps.tolist(), stream.channels.tolist()))
    text = "\n".join(lines) + "\n"
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w") as fh:
            fh.write(text)
    else:
        sink.write(text)


def read_csv(source, duration_ps: int | None = None, **kwargs) -> ClickStream:
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            text = fh.read()
    else:
        text = source.read()
    lines = text.splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        raise CsvHeaderError(f"expected header {CSV_HEADER!r}")
    ts, ch = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            if len(parts) != 2:
                raise ValueError
            t, c = int(parts[0]), int(parts[1])
        except ValueError:
            raise CsvRowError(lineno, line) from None
        if not (0 <= t < 2**64 and 0 <= c < 2**16):
            raise CsvRowError(lineno, line)
        ts.append(t)
        ch.append(c)
    ts_a = np.array(ts, dtype=np.uint64)
    ch_a = np.array(ch, dtype=np.uint16)
    bad = _first_unsorted(ts_a, ch_a)
    if bad is not None:
        raise UnsortedRecords(bad)
    return ClickStream(ts_a, ch_a, duration_ps or 0, **kwargs)


def read_stream(path, **kwargs) -> ClickStream:
    """Dispatch on file extension (.csv, otherwise TTAG binary)."""
    if str(path).lower().endswith(".csv"):
        return read_csv(path, **kwargs)
    return read_binary(path, **kwargs)


# -- stream utilities -------------------------------------------------------------

def merge(*streams: ClickStream, origin: str | None = None) -> ClickStream:
    labels: dict[int, str] = {}
    for s in streams:
        for ch, label in s.channel_labels.items():
            if ch in labels and labels[ch] != label:
                raise ChannelLabelConflict(
                    f"channel {ch} labelled both {labels[ch]!r} and {label!r}")
            labels[ch] = label
    if not streams:
        return ClickStream.empty()
    ts = np.concatenate([s.timestamps for s in streams])
    ch = np.concatenate([s.channels for s in streams])
    duration = max(s.duration_ps for s in streams)
    if origin is None:
        origin = " + ".join(s.origin for s in streams if s.origin)
    return ClickStream.from_unsorted(ts, ch, duration_ps=duration, channel_labels=labels, origin=origin)


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float = 1.0
    dark_rate_hz: float = 0.0
    jitter_sigma_ps: float = 0.0
    dead_time_ps: int = 0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if min(self.dark_rate_hz, self.jitter_sigma_ps, self.dead_time_ps) < 0:
            raise ValueError("detector parameters must be non-negative")


def _dead_time_keep(ts: np.ndarray, dead_ps: int) -> np.ndarray:
    keep = np.zeros(len(ts), bool)
    last = None
    for i, t in enumerate(ts.tolist()):
        if last is None or t - last >= dead_ps:
            keep[i] = True
            last = t
    return keep


def apply_detector(stream: ClickStream, config: DetectorConfig, seed) -> ClickStream:
    """Thin by efficiency, add dark counts, jitter and re-sort, then prune dead time per channel."""
    rng = np.random.default_rng(seed)
    ts = stream.timestamps.astype(np.int64)
    ch = stream.channels.copy()
    if config.efficiency < 1.0:
        m = rng.random(len(ts)) < config.efficiency
        ts, ch = ts[m], ch[m]
    T = stream.duration_ps
    if config.dark_rate_hz > 0 and T > 0:
        extra_t, extra_c = [ts], [ch]
        for c in stream.present_channels():
            n = rng.poisson(config.dark_rate_hz * T * 1e-12)
            extra_t.append(rng.integers(0, T + 1, size=n, dtype=np.int64))
            extra_c.append(np.full(n, c, np.uint16))
        ts, ch = np.concatenate(extra_t), np.concatenate(extra_c)
    if config.jitter_sigma_ps > 0 and len(ts):
        ts = ts + np.rint(rng.normal(0.0, config.jitter_sigma_ps, len(ts))).astype(np.int64)
        ts = np.clip(ts, 0, T)
    order = np.lexsort((ch, ts))
    ts, ch = ts[order], ch[order]
    if config.dead_time_ps > 0 and len(ts):
        keep = np.zeros(len(ts), bool)
        for c in np.unique(ch):
            idx = np.flatnonzero(ch == c)
            keep[idx[_dead_time_keep(ts[idx], config.dead_time_ps)]] = True
        ts, ch = ts[keep], ch[keep]
    return ClickStream(ts.astype(np.uint64), ch, T, stream.channel_labels, stream.origin)


def poisson_stream(rate_hz: float, duration_ps: int, seed, channel: int = 0, **kwargs) -> ClickStream:
    """Homogeneous Poisson clicks on one channel."""
    rng = np.random.default_rng(seed)
    n = rng.poisson(rate_hz * duration_ps * 1e-12)
    ts = np.sort(rng.integers(0, duration_ps + 1, size=n, dtype=np.int64))
    return ClickStream(ts.astype(np.uint64), np.full(n, channel, np.uint16), duration_ps, **kwargs)
