import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from purcellbell import physpar
from purcellbell.physpar import ParameterError, SystemParams, UnknownParameterError

P = SystemParams()


def exact_ctilde(g, kappa, gamma, dc, da):
    """C~ as exact rationals: g^2 / (2[(k gam - dc da) + i(k da + dc gam)])."""
    g, kappa, gamma, dc, da = map(Fraction, (g, kappa, gamma, dc, da))
    re_d = 2 * (kappa * gamma - dc * da)
    im_d = 2 * (kappa * da + dc * gamma)
    mod2 = re_d**2 + im_d**2
    return g**2 * re_d / mod2, -g**2 * im_d / mod2


# -- saturation ------------------------------------------------------------------

def test_saturation_reference_value():
    assert physpar.saturation(32.2, 93.7, 55.2) == pytest.approx(0.0543, abs=5e-5)


def test_saturation_trivial_cases():
    assert physpar.saturation(0.0, 93.7, 40.0) == 0.0
    assert physpar.saturation(10.0, 0.0, 20.0) == 0.5


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_saturation_rejects_nonpositive_gamma(bad):
    with pytest.raises(ParameterError):
        physpar.saturation(1.0, 0.0, bad)


@pytest.mark.parametrize("x", [math.nan, math.inf])
def test_saturation_rejects_nonfinite(x):
    with pytest.raises(ParameterError):
        physpar.saturation(x, 1.0, 1.0)


@given(st.floats(0.1, 100), st.floats(0, 500), st.floats(0.01, 100), st.floats(1, 200))
def test_saturation_decreasing_in_detuning(omega, da, extra, gam):
    assert physpar.saturation(omega, da + extra, gam) < physpar.saturation(omega, da, gam)
    assert physpar.saturation(omega, -da, gam) == physpar.saturation(omega, da, gam)


# -- cooperativity ---------------------------------------------------------------

def test_cooperativity_central_value():
    c = physpar.cooperativity(63, 164, 3.0)
    assert c == float(Fraction(63**2, 2 * 164 * 3))
    assert round(c, 2) == 4.03
    assert physpar.cooperativity(0, 164, 3) == 0


def test_cooperativity_rejects_zero_denominator():
    with pytest.raises(ParameterError):
        physpar.cooperativity(63, 0, 3)
    with pytest.raises(ParameterError):
        physpar.cooperativity(63, 164, 0)


def test_ctilde_matches_exact_rational_evaluation():
    ct = physpar.complex_cooperativity(P)
    re, im = exact_ctilde(63, 164, 3, 0, Fraction(937, 10))
    assert ct.real == pytest.approx(float(re), rel=1e-13)
    assert ct.imag == pytest.approx(float(im), rel=1e-13)
    assert ct.real == pytest.approx(0.0041, abs=5e-5)
    assert ct.imag == pytest.approx(-0.1290, abs=5e-5)


def test_ctilde_reduces_to_cooperativity_on_resonance():
    ct = physpar.complex_cooperativity(P.with_(delta_a=0.0, delta_c=0.0))
    assert ct.imag == 0.0
    assert ct.real == pytest.approx(physpar.cooperativity(63, 164, 3.0), rel=1e-15)


@given(st.floats(-500, 500), st.floats(-500, 500))
def test_ctilde_conjugation_symmetry(da, dc):
    a = physpar.complex_cooperativity(P.with_(delta_a=da, delta_c=dc))
    b = physpar.complex_cooperativity(P.with_(delta_a=-da, delta_c=-dc))
    assert a.conjugate() == pytest.approx(b, rel=1e-12, abs=1e-15)


# -- Purcell rate, lifetimes -----------------------------------------------------

def test_purcell_gamma():
    assert physpar.purcell_gamma(P) == pytest.approx(54.4, abs=0.05)
    assert physpar.purcell_gamma(P.with_(g=0.0)) == 6.0


def test_free_space_lifetime_and_override():
    assert physpar.free_space_lifetime_ns(P) == pytest.approx(26.5, abs=0.05)
    assert physpar.free_space_lifetime_ns(P, override_ns=27.7) == 27.7


def test_conditional_lifetime():
    tau = physpar.lifetime_ns(physpar.purcell_gamma(P))
    assert tau == pytest.approx(26.526 / (2 * 4.0335 + 1), rel=1e-3)


def test_effective_gamma_limits():
    assert physpar.effective_gamma(P) == physpar.purcell_gamma(P)
    far = physpar.effective_gamma(P, delta_c=1e7)
    assert far == pytest.approx(2 * P.gamma, rel=1e-6)


@given(st.floats(0, 1000), st.floats(0.1, 1000))
def test_effective_gamma_decreasing_in_abs_detuning(dc, step):
    hi = physpar.effective_gamma(P, delta_c=dc)
    lo = physpar.effective_gamma(P, delta_c=-(dc + step))
    assert lo < hi


# -- rates -----------------------------------------------------------------------

def test_collection_rate_and_budget():
    rc = physpar.collection_rate(P)
    assert rc == pytest.approx(1.32e6, rel=0.01)
    s = physpar.saturation(P.omega, P.delta_a, physpar.purcell_gamma(P))
    assert s * rc == pytest.approx(7.2e4, rel=0.05)
    assert s * rc / 2 == pytest.approx(3.6e4, rel=0.05)


def test_collection_rate_zero_drive_and_zero_g():
    assert physpar.collection_rate(P.with_(omega=0.0)) == 0.0
    with pytest.raises(ParameterError):
        physpar.collection_rate(P.with_(g=0.0))


def test_collection_rate_vanishes_far_detuned():
    values = [physpar.collection_rate(P.with_(delta_c=dc)) for dc in (0, 1e2, 1e3, 1e4, 1e6)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-6 * values[0]


@given(st.floats(-400, 400), st.floats(-400, 400))
def test_collection_rate_sign_flip_invariance(da, dc):
    a = physpar.collection_rate(P.with_(delta_a=da, delta_c=dc))
    b = physpar.collection_rate(P.with_(delta_a=-da, delta_c=-dc))
    assert a == pytest.approx(b, rel=1e-12)


def test_detected_pair_rate():
    assert physpar.detected_pair_rate(P) == pytest.approx(16.1, rel=0.01)
    assert physpar.detected_pair_rate(P.with_(eta_total=0.0)) == 0.0
    fiber = physpar.derived_rates(P).pair_rate * P.eta_fiber**2
    assert fiber == pytest.approx(5.8e3, rel=0.02)


@given(st.floats(0.0, 0.5))
def test_detected_pair_rate_scales_as_eta_squared(eta):
    a = physpar.detected_pair_rate(P.with_(eta_total=eta))
    b = physpar.detected_pair_rate(P.with_(eta_total=2 * eta))
    assert b == pytest.approx(4 * a, rel=1e-12, abs=1e-300)


def test_inelastic_fraction():
    assert physpar.inelastic_fraction(0.054) == pytest.approx(0.0512, abs=5e-5)
    assert physpar.inelastic_fraction(0.0) == 0.0
    assert physpar.inelastic_fraction(math.inf) == 1.0
    with pytest.raises(ParameterError):
        physpar.inelastic_fraction(-0.1)


@given(st.floats(0, 1e6), st.floats(1e-6, 1e3))
def test_inelastic_fraction_bounded_and_increasing(s, ds):
    f = physpar.inelastic_fraction(s)
    assert 0.0 <= f < 1.0
    assert physpar.inelastic_fraction(s + ds) >= f


def test_rabi_sideband():
    assert physpar.rabi_sideband(32.2, 93.7) == pytest.approx(99.08, abs=0.01)
    assert physpar.rabi_sideband(7.0, 0.0) == 7.0
    assert physpar.rabi_sideband(0.0, -5.0) == 5.0


def test_derived_rates_consistency():
    d = physpar.derived_rates(P)
    assert d.cooperativity == physpar.cooperativity(P.g, P.kappa, P.gamma)
    assert d.pair_rate == pytest.approx(d.saturation * d.r_c / 2)
    assert d.r_det2 == pytest.approx(physpar.detected_pair_rate(P))
    blob = json.dumps(d.to_json_dict())
    assert "complex_cooperativity" in blob


# -- sweep -----------------------------------------------------------------------

def test_sweep_center_point_matches_single_point():
    (pt,) = physpar.sweep_detuning(P, [0.0])
    assert pt.r_c == physpar.collection_rate(P)
    assert pt.r_det2 == pytest.approx(physpar.detected_pair_rate(P), rel=1e-12)
    assert pt.gamma_eff == physpar.purcell_gamma(P)


def test_sweep_curve_peaks_near_resonance():
    dcs = list(range(-400, 401, 20))
    r = [pt.r_det2 for pt in physpar.sweep_detuning(P, dcs)]
    peak = dcs[r.index(max(r))]
    assert abs(peak) <= 40


def test_sweep_rejects_empty_list():
    with pytest.raises(ParameterError):
        physpar.sweep_detuning(P, [])


def test_pair_rate_curve_is_eta_free():
    curve = physpar.pair_rate_curve(P.with_(eta_total=0.2), [0.0, 100.0])
    pts = physpar.sweep_detuning(P.with_(eta_total=1.0), [0.0, 100.0])
    assert curve == [p.r_det2 for p in pts]


# -- parameter record ------------------------------------------------------------

def test_purcell_regime_predicate_and_warning():
    assert P.in_purcell_regime()
    weak = P.with_(g=5.0)
    assert not weak.in_purcell_regime()
    with pytest.warns(UserWarning):
        weak.check_purcell_regime()


@pytest.mark.parametrize("field,value", [("g", -1.0), ("eta_total", 1.5), ("eta_fiber", -0.1), ("omega", math.nan)])
def test_invalid_params_rejected(field, value):
    with pytest.raises(ParameterError):
        SystemParams(**{field: value})


def test_json_round_trip(tmp_path):
    path = tmp_path / "p.json"
    q = P.with_(delta_c=330.0)
    q.dump(path)
    assert SystemParams.load(path) == q
    assert set(json.loads(path.read_text())) == {
        "g_mhz", "kappa_mhz", "gamma_mhz", "delta_a_mhz", "delta_c_mhz", "omega_mhz",
        "eta_total", "eta_fiber", "delta_ac_mhz"}


def test_json_unknown_key_and_bad_value():
    with pytest.raises(UnknownParameterError):
        SystemParams.from_json_dict({"g_mhz": 63, "colour": 1})
    with pytest.raises(ParameterError):
        SystemParams.from_json_dict({"g_mhz": "63"})
    with pytest.raises(ParameterError):
        SystemParams.from_json_dict({"g_mhz": True})
    with pytest.raises(ParameterError):
        SystemParams.from_json_dict([1, 2])
