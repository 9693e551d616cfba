"""CHSH estimation from coincidence counts.

With one detector per side the correlation coefficient at (phi_a, phi_b) is
built from four settings, the basis phases and their orthogonal partners
phi + pi::

    E = (n(a, b) + n(a+, b+) - n(a, b+) - n(a+, b)) / (sum of the four)

Counts are treated as independent Poisson variables for error propagation.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from ._rng import spawn
from .cascade import PairEvents
from .franson import FransonConfig, central_area, transform_pairs

TWO_PI = 2 * math.pi
PHASE_TOL = 1e-9
CHSH_BASIS = (math.pi / 4, -math.pi / 4, 0.0, math.pi / 2)


class BellError(ValueError):
    pass


class MissingSetting(BellError):
    def __init__(self, phi_a: float, phi_b: float):
        self.phi_a, self.phi_b = phi_a, phi_b
        super().__init__(f"no coincidence count for setting (phi_a={phi_a:.6g}, phi_b={phi_b:.6g})")


class ZeroTotal(BellError):
    pass


def canonical_phase(phi: float) -> float:
    p = math.fmod(float(phi), TWO_PI)
    if p < 0:
        p += TWO_PI
    if TWO_PI - p < PHASE_TOL:
        p = 0.0
    return p


def _same_phase(x: float, y: float) -> bool:
    d = abs(canonical_phase(x) - canonical_phase(y))
    return min(d, TWO_PI - d) < PHASE_TOL


@dataclass
class CoincidenceTable:
    counts: dict = field(default_factory=dict)  # (phi_a, phi_b), canonicalised -> int

    @classmethod
    def from_counts(cls, entries: Mapping[tuple[float, float], int]) -> "CoincidenceTable":
        t = cls()
        for (pa, pb), n in entries.items():
            t.set(pa, pb, n)
        return t

    @property
    def phi_a_values(self) -> list[float]:
        return sorted({k[0] for k in self.counts})

    @property
    def phi_b_values(self) -> list[float]:
        return sorted({k[1] for k in self.counts})

    def _find(self, phi_a, phi_b):
        for key in self.counts:
            if _same_phase(key[0], phi_a) and _same_phase(key[1], phi_b):
                return key
        return None

    def set(self, phi_a: float, phi_b: float, n: int) -> None:
        if n < 0 or int(n) != n:
            raise BellError("counts must be non-negative integers")
        key = self._find(phi_a, phi_b) or (canonical_phase(phi_a), canonical_phase(phi_b))
        self.counts[key] = int(n)

    def get(self, phi_a: float, phi_b: float) -> int:
        key = self._find(phi_a, phi_b)
        if key is None:
            raise MissingSetting(phi_a, phi_b)
        return self.counts[key]

    def scaled(self, factor: int) -> "CoincidenceTable":
        return CoincidenceTable({k: v * factor for k, v in self.counts.items()})

    def to_csv(self, sink) -> None:
        rows = ["phi_a_rad,phi_b_rad,counts"]
        rows += [f"{pa!r},{pb!r},{n}" for (pa, pb), n in sorted(self.counts.items())]
        text = "\n".join(rows) + "\n"
        if isinstance(sink, (str, os.PathLike)):
            with open(sink, "w") as fh:
                fh.write(text)
        else:
            sink.write(text)

    @classmethod
    def read_csv(cls, source) -> "CoincidenceTable":
        fh = open(source, newline="") if isinstance(source, (str, os.PathLike)) else source
        try:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != [
                    "phi_a_rad", "phi_b_rad", "counts"]:
                raise BellError("table CSV needs columns phi_a_rad,phi_b_rad,counts")
            t = cls()
            for i, row in enumerate(reader, start=2):
                try:
                    t.set(float(row["phi_a_rad"]), float(row["phi_b_rad"]), int(row["counts"]))
                except (TypeError, ValueError) as exc:
                    raise BellError(f"bad table row at line {i}: {exc}") from None
            return t
        finally:
            if fh is not source:
                fh.close()


def correlation_fraction(n1: int, n2: int, n3: int, n4: int) -> Fraction:
    """(n1 + n2 - n3 - n4) / (n1 + n2 + n3 + n4) as an exact rational."""
    total = n1 + n2 + n3 + n4
    if total <= 0:
        raise ZeroTotal("all four coincidence counts are zero")
    return Fraction(n1 + n2 - n3 - n4, total)


def _e_sigma(n1, n2, n3, n4) -> tuple[float, float]:
    e = float(correlation_fraction(n1, n2, n3, n4))
    plus, minus = n1 + n2, n3 + n4
    total = plus + minus
    # dE/dplus = 2 minus / N^2, dE/dminus = -2 plus / N^2, Var(n) = n
    sigma = 2 * math.sqrt(plus * minus / total**3)
    return e, sigma


def correlation_coefficient(table: CoincidenceTable, phi_a: float, phi_b: float) -> tuple[float, float]:
    a_perp, b_perp = phi_a + math.pi, phi_b + math.pi
    n1 = table.get(phi_a, phi_b)
    n2 = table.get(a_perp, b_perp)
    n3 = table.get(phi_a, b_perp)
    n4 = table.get(a_perp, phi_b)
    return _e_sigma(n1, n2, n3, n4)


def correlation_from_detectors(n11: int, n22: int, n12: int, n21: int) -> tuple[float, float]:
    """Two detectors per side: E = (n11 + n22 - n12 - n21) / total."""
    return _e_sigma(n11, n22, n12, n21)


@dataclass(frozen=True)
class ChshResult:
    e_values: tuple[float, float, float, float]
    e_sigmas: tuple[float, float, float, float]
    s_value: float
    s_sigma: float
    basis: tuple[float, float, float, float]

    def violation_sigmas(self) -> float:
        return (self.s_value - 2) / self.s_sigma if self.s_sigma > 0 else math.inf

    def to_json_dict(self) -> dict:
        return {"e_values": list(self.e_values), "s_value": self.s_value,
                "s_sigma": self.s_sigma, "basis": list(self.basis),
                "e_sigmas": list(self.e_sigmas)}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_json_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _combine(es, sigmas, basis) -> ChshResult:
    s = abs(es[0] - es[1] + es[2] + es[3])
    sigma = math.sqrt(sum(x * x for x in sigmas))
    return ChshResult(tuple(es), tuple(sigmas), s, sigma, tuple(float(b) for b in basis))


def chsh(table: CoincidenceTable, basis: Sequence[float] = CHSH_BASIS) -> ChshResult:
    """S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')| for basis (a, a', b, b')."""
    a, a2, b, b2 = basis
    pairs = [(a, b), (a, b2), (a2, b), (a2, b2)]
    res = [correlation_coefficient(table, pa, pb) for pa, pb in pairs]
    return _combine([r[0] for r in res], [r[1] for r in res], basis)


def chsh_from_detector_blocks(blocks: Mapping[tuple[float, float], np.ndarray],
                              basis: Sequence[float] = CHSH_BASIS) -> ChshResult:
    """CHSH with two detectors per side; blocks[(pa, pb)][i, j] = n_(i+1)(j+1)."""
    a, a2, b, b2 = basis
    res = []
    for pa, pb in [(a, b), (a, b2), (a2, b), (a2, b2)]:
        block = None
        for (ka, kb), v in blocks.items():
            if _same_phase(ka, pa) and _same_phase(kb, pb):
                block = np.asarray(v)
        if block is None:
            raise MissingSetting(pa, pb)
        res.append(correlation_from_detectors(int(block[0, 0]), int(block[1, 1]),
                                              int(block[0, 1]), int(block[1, 0])))
    return _combine([r[0] for r in res], [r[1] for r in res], basis)


def settings(basis: Sequence[float]) -> list[tuple[float, float]]:
    """All 16 (phi_a, phi_b) settings: basis phases and orthogonal partners on each side."""
    a, a2, b, b2 = basis
    sa = [a, a + math.pi, a2, a2 + math.pi]
    sb = [b, b + math.pi, b2, b2 + math.pi]
    return [(pa, pb) for pa in sa for pb in sb]


def table_from_franson(pairs: PairEvents, config_base: FransonConfig, basis: Sequence[float] = CHSH_BASIS,
                       counts_per_setting: int | None = None, seed=None) -> CoincidenceTable:
    """Simulated coincidence table, one measurement interval per setting.

    The pair record is cut into consecutive chunks of ``counts_per_setting``
    pairs (default: an equal share of all pairs) and each of the 16 settings
    is measured on its own chunk; the central-peak area within the 12 ns
    window is recorded.
    """
    st = settings(basis)
    n_per = counts_per_setting if counts_per_setting is not None else len(pairs) // len(st)
    if n_per <= 0 or n_per * len(st) > len(pairs):
        raise BellError(f"need {len(st)} x {n_per} pairs, have {len(pairs)}")
    seeds = spawn(seed, len(st))
    table = CoincidenceTable()
    for i, ((pa, pb), s) in enumerate(zip(st, seeds)):
        chunk = pairs.chunk(i * n_per, (i + 1) * n_per)
        cfg = replace(config_base, phi_a=pa, phi_b=pb)
        table.set(pa, pb, central_area(transform_pairs(chunk, cfg, s)))
    return table
