import io
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from purcellbell import bell, cascade
from purcellbell.bell import CoincidenceTable, MissingSetting, ZeroTotal
from purcellbell.franson import FransonConfig
from purcellbell.physpar import SystemParams

from conftest import DATA_DIR

PAIRS = cascade.sample_pairs(cascade.pair_model_from_params(SystemParams()), 2.0, 21)
counts = st.integers(0, 10**6)


def ideal_table(visibility=1.0, scale=10**12):
    """Central-peak rates proportional to 1 + V cos(phi_a + phi_b) at every CHSH setting."""
    t = CoincidenceTable()
    for pa, pb in bell.settings(bell.CHSH_BASIS):
        t.set(pa, pb, round(scale * (1 + visibility * math.cos(pa + pb))))
    return t


def test_correlation_from_measured_table(measured_table):
    e, sigma = bell.correlation_coefficient(measured_table, math.pi / 4, 0.0)
    assert e == pytest.approx((205 + 239 - 56 - 40) / 540, abs=1e-15)
    assert round(e, 4) == 0.6444
    n = 540
    plus, minus = 444, 96
    assert sigma == pytest.approx(2 * math.sqrt(plus * minus / n**3), rel=1e-12)


def test_correlation_trivial_cases():
    assert bell.correlation_fraction(7, 7, 0, 0) == 1
    assert bell.correlation_fraction(5, 5, 5, 5) == 0
    assert bell.correlation_from_detectors(9, 1, 0, 0)[0] == 1.0
    with pytest.raises(ZeroTotal):
        bell.correlation_fraction(0, 0, 0, 0)


def test_missing_setting_is_named(measured_table):
    with pytest.raises(MissingSetting) as exc:
        bell.correlation_coefficient(measured_table, 0.3, 0.0)
    assert "0.3" in str(exc.value)


@given(counts, counts, counts, counts, st.integers(1, 1000))
def test_e_invariant_under_scaling(n1, n2, n3, n4, k):
    if n1 + n2 + n3 + n4 == 0:
        return
    assert bell.correlation_fraction(n1, n2, n3, n4) == bell.correlation_fraction(k * n1, k * n2, k * n3, k * n4)
    assert bell.correlation_fraction(n1, n2, n3, n4) == Fraction(n1 + n2 - n3 - n4, n1 + n2 + n3 + n4)


@given(st.lists(counts, min_size=16, max_size=16), st.sampled_from(bell.settings(bell.CHSH_BASIS)[::5]))
def test_orthogonal_swap_flips_sign(ns, setting):
    if sum(ns) == 0:
        return
    t = CoincidenceTable()
    for (pa, pb), n in zip(bell.settings(bell.CHSH_BASIS), ns):
        t.set(pa, pb, n)
    pa, pb = setting
    try:
        e, _ = bell.correlation_coefficient(t, pa, pb)
    except ZeroTotal:
        return
    assert bell.correlation_coefficient(t, pa + math.pi, pb)[0] == -e
    assert bell.correlation_coefficient(t, pa, pb + math.pi)[0] == -e


@given(st.lists(st.integers(0, 10**4), min_size=16, max_size=16))
def test_s_bounded_by_four(ns):
    t = CoincidenceTable()
    for (pa, pb), n in zip(bell.settings(bell.CHSH_BASIS), ns):
        t.set(pa, pb, n + 1)
    res = bell.chsh(t)
    assert res.s_value <= 4
    assert all(abs(e) <= 1 for e in res.e_values) and res.s_sigma >= 0


def test_measured_table_chsh(measured_table):
    res = bell.chsh(measured_table)
    assert res.s_value == pytest.approx(2.607, abs=0.005)
    assert 0.05 <= res.s_sigma <= 0.09
    assert res.violation_sigmas() > 8


def test_ideal_table_reaches_tsirelson_bound():
    assert bell.chsh(ideal_table()).s_value == pytest.approx(2 * math.sqrt(2), abs=1e-9)
    assert bell.chsh(ideal_table(0.5)).s_value == pytest.approx(math.sqrt(2), abs=1e-9)


def test_phase_keys_canonicalised():
    t = CoincidenceTable()
    t.set(-math.pi / 4, 0.0, 3)
    assert t.get(7 * math.pi / 4, 2 * math.pi) == 3
    t.set(7 * math.pi / 4 + 1e-12, 0.0, 4)
    assert len(t.counts) == 1 and t.get(-math.pi / 4, 0.0) == 4
    with pytest.raises(bell.BellError):
        t.set(0, 0, -1)


def test_csv_round_trip(measured_table, tmp_path):
    path = tmp_path / "t.csv"
    measured_table.to_csv(path)
    back = CoincidenceTable.read_csv(path)
    assert bell.chsh(back).s_value == bell.chsh(measured_table).s_value
    shipped = CoincidenceTable.read_csv(DATA_DIR / "chsh_table.csv")
    assert bell.chsh(shipped).s_value == bell.chsh(measured_table).s_value


def test_csv_errors():
    with pytest.raises(bell.BellError):
        CoincidenceTable.read_csv(io.StringIO("a,b,c\n1,2,3\n"))
    with pytest.raises(bell.BellError, match="line 3"):
        CoincidenceTable.read_csv(io.StringIO("phi_a_rad,phi_b_rad,counts\n0,0,1\n0,x,2\n"))


def test_json_export(measured_table, tmp_path):
    res = bell.chsh(measured_table)
    res.to_json(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert set(d) >= {"e_values", "s_value", "s_sigma", "basis"}
    assert d["s_value"] == res.s_value


def test_detector_block_variant_matches_single_detector(measured_table):
    # a two-detector block is the single-detector table with the orthogonal settings folded in
    a, a2, b, b2 = bell.CHSH_BASIS
    blocks = {}
    for pa, pb in [(a, b), (a, b2), (a2, b), (a2, b2)]:
        g = measured_table.get
        blocks[(pa, pb)] = np.array([[g(pa, pb), g(pa, pb + math.pi)],
                                     [g(pa + math.pi, pb), g(pa + math.pi, pb + math.pi)]])
    r1 = bell.chsh_from_detector_blocks(blocks)
    r2 = bell.chsh(measured_table)
    assert r1.s_value == pytest.approx(r2.s_value, abs=1e-12)
    with pytest.raises(MissingSetting):
        bell.chsh_from_detector_blocks({})


def test_settings_cover_orthogonal_partners():
    st_ = bell.settings(bell.CHSH_BASIS)
    assert len(st_) == 16 and len({(bell.canonical_phase(a), bell.canonical_phase(b)) for a, b in st_}) == 16


def test_table_from_franson_zero_visibility():
    t = bell.table_from_franson(PAIRS, FransonConfig(visibility=0.0), seed=5)
    res = bell.chsh(t)
    assert abs(res.s_value) < 3 * res.s_sigma


def test_table_from_franson_boundary_visibility():
    t = bell.table_from_franson(PAIRS, FransonConfig(visibility=1 / math.sqrt(2)), seed=6)
    res = bell.chsh(t)
    assert abs(res.s_value - 2) < 3 * res.s_sigma


def test_table_from_franson_respects_tsirelson():
    t = bell.table_from_franson(PAIRS, FransonConfig(visibility=1.0), seed=7)
    res = bell.chsh(t)
    assert res.s_value <= 2 * math.sqrt(2) + 3 * res.s_sigma


def test_table_from_franson_is_deterministic_and_checks_size():
    cfg = FransonConfig(visibility=0.9)
    small = PAIRS.chunk(0, 1600)
    assert bell.table_from_franson(small, cfg, seed=1) == bell.table_from_franson(small, cfg, seed=1)
    with pytest.raises(bell.BellError):
        bell.table_from_franson(small, cfg, counts_per_setting=200, seed=1)
