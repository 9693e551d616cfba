import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from purcellbell import cascade, corr, physpar
from purcellbell.cascade import CascadePairModel, FilterConfig, Sideband
from purcellbell.physpar import SystemParams
from purcellbell.ttag import DetectorConfig

P = SystemParams()
MODEL = cascade.pair_model_from_params(P)


def test_pair_model_at_default_params():
    assert MODEL.pair_rate == pytest.approx(3.6e4, rel=0.05)
    assert MODEL.lifetime_ns == pytest.approx(26.526 / (2 * 4.0335 + 1), rel=2e-3)
    assert MODEL.sideband_offset == P.delta_a
    assert MODEL.early_sideband is Sideband.PLUS and MODEL.late_sideband is Sideband.MINUS


def test_pair_model_no_drive():
    m = cascade.pair_model_from_params(P.with_(omega=0.0))
    assert m.pair_rate == 0.0
    assert len(cascade.sample_pairs(m, 1.0, 1)) == 0


def test_background_fraction_from_filter():
    s = physpar.saturation(P.omega, P.delta_a, physpar.purcell_gamma(P))
    assert MODEL.elastic_background_fraction == pytest.approx(0.005 / s)
    m = cascade.pair_model_from_params(P, FilterConfig(elastic_background_fraction=0.2))
    assert m.elastic_background_fraction == 0.2
    m = cascade.pair_model_from_params(P, FilterConfig(elastic_suppression=1.0))
    assert m.elastic_background_fraction == 0.0


def test_pair_model_validation():
    with pytest.raises(ValueError):
        CascadePairModel(-1.0, 1e8, 90.0, 0.0)
    with pytest.raises(ValueError):
        CascadePairModel(1.0, 0.0, 90.0, 0.0)
    with pytest.raises(ValueError):
        CascadePairModel(1.0, 1e8, 90.0, 1.5)


@given(st.floats(0, 2000), st.floats(1, 2000))
def test_decay_rate_falls_with_detuning(dc, step):
    a = cascade.pair_model_from_params(P.with_(delta_c=dc)).gamma_decay
    b = cascade.pair_model_from_params(P.with_(delta_c=dc + step)).gamma_decay
    free = 2 * math.pi * 2 * P.gamma * 1e6
    assert free < b < a


def test_pair_count_is_poisson():
    pairs = cascade.sample_pairs(MODEL, 2.0, 3)
    expected = MODEL.pair_rate * 2.0
    assert abs(len(pairs) - expected) < 4 * math.sqrt(expected)


def test_mean_delay_matches_lifetime():
    pairs = cascade.sample_pairs(MODEL, 3.0, 4)
    d = pairs.delays_ps()
    se = d.std() / math.sqrt(len(d))
    assert abs(d.mean() - 1e12 / MODEL.gamma_decay) < 3 * se


def test_sampling_is_deterministic_and_ordered():
    a = cascade.sample_pairs(MODEL, 0.5, 8)
    b = cascade.sample_pairs(MODEL, 0.5, 8)
    assert np.array_equal(a.t_early_ps, b.t_early_ps) and np.array_equal(a.t_late_ps, b.t_late_ps)
    assert np.all(a.t_late_ps >= a.t_early_ps)
    assert np.all(np.diff(a.t_early_ps) >= 0)
    first = next(iter(a))
    assert first.t_late_ps >= first.t_early_ps and first.sideband_early is Sideband.PLUS


def test_sample_pairs_rejects_nonpositive_duration():
    with pytest.raises(ValueError):
        cascade.sample_pairs(MODEL, 0.0, 1)


def test_chunk_rereferences_times():
    pairs = cascade.sample_pairs(MODEL, 0.1, 2)
    c = pairs.chunk(100, 200)
    assert len(c) == 100 and c.t_early_ps[0] == 0
    assert np.array_equal(c.delays_ps(), pairs.delays_ps()[100:200])


def test_joint_amplitude():
    g = MODEL.gamma_decay / 1e12
    assert cascade.joint_amplitude(-5.0, MODEL) == 0
    norm, _ = integrate.quad(lambda t: abs(cascade.joint_amplitude(t, MODEL)) ** 2, 0, np.inf)
    assert norm == pytest.approx(1.0, abs=1e-9)
    ratio = abs(cascade.joint_amplitude(1 / g, MODEL)) ** 2 / abs(cascade.joint_amplitude(0.0, MODEL)) ** 2
    assert ratio == pytest.approx(math.exp(-1), rel=1e-12)
    arr = cascade.joint_amplitude(np.array([-1.0, 0.0, 10.0]), MODEL)
    assert arr.shape == (3,) and arr[0] == 0


def test_split_streams_are_one_sided_exponential():
    pairs = cascade.sample_pairs(MODEL, 3.0, 5)
    early, late = cascade.to_click_streams(pairs, MODEL, DetectorConfig(), 6)
    assert len(early) == len(late) == len(pairs)
    h = corr.cross_histogram(early, late, (-20_000, 20_000), 500)
    neg = h.counts[: h.bin_index(0)].sum()
    # negative side holds only accidental pairs between unrelated emissions
    accidental = len(early) * len(late) * 20_000 / early.duration_ps
    assert neg < accidental + 5 * math.sqrt(accidental) + 1
    pos = h.counts[h.bin_index(0):].astype(float)
    x = np.arange(len(pos)) * 0.5
    slope = np.polyfit(x[:20], np.log(pos[:20]), 1)[0]
    assert -1 / slope == pytest.approx(MODEL.lifetime_ns, rel=0.05)


def test_zero_efficiency_gives_empty_streams():
    pairs = cascade.sample_pairs(MODEL, 0.1, 5)
    early, late = cascade.to_click_streams(pairs, MODEL, DetectorConfig(efficiency=0.0), 1)
    assert len(early) == len(late) == 0
    merged = cascade.to_click_streams(pairs, MODEL, DetectorConfig(efficiency=0.0), 1, split=False)
    assert len(merged) == 0


def test_merged_stream_background_rate():
    pairs = cascade.sample_pairs(MODEL, 1.0, 2)
    merged = cascade.to_click_streams(pairs, MODEL, DetectorConfig(), 3, split=False)
    n_bg = len(merged) - 2 * len(pairs)
    expected = MODEL.elastic_background_fraction * 2 * MODEL.pair_rate * pairs.duration_ps * 1e-12
    assert abs(n_bg - expected) < 4 * math.sqrt(expected)
