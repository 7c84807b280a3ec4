import math

import numpy as np
import pytest

from adicheck import models
from adicheck.conditions import (INCONCLUSIVE, PASS_BOUND4, PASS_BOUND5, PASS_EXACT,
                                 abs_coupling_integral, bound_mvt, bound_sup, count_segments,
                                 evaluate_conditions, g_integral, monotone_segments,
                                 qualitative_ratio, traditional_ratio)
from adicheck.errors import SameLevel, SegmentationUnstable
from adicheck.flow import build_flow, phase_ledger

from conftest import OMEGA_RES, THETA, T_RABI, spread_spectrum


def rabi_G(omega, t, theta=THETA, omega0=1.0):
    """Closed-form |G(t)| for the rotating spin: constant |A| and constant theta_dot."""
    a = 0.5 * omega * math.sin(theta)
    rate = omega0 - omega * math.cos(theta)
    return a * np.abs(2.0 * np.sin(0.5 * rate * t) / rate)


def spin(omega, gauge="canonical", steps=20000):
    f = build_flow(models.rotating_spin(1.0, THETA, omega), T_RABI, steps, gauge)
    return f, phase_ledger(f)


@pytest.fixture(scope="module")
def resonant():
    return spin(OMEGA_RES)


@pytest.fixture(scope="module")
def offresonant():
    return spin(0.1)


@pytest.fixture(scope="module")
def lz():
    f = build_flow(models.landau_zener(1.0, 1.0, 40.0), 80.0, 20000)
    return f, phase_ledger(f)


def test_constant_model():
    f = build_flow(models.constant(np.diag([1.0, 2.0, 3.5])), 2.0, 200)
    L = phase_ledger(f, allow_undefined=True)
    assert g_integral(f, L, 0, 1)[1] == 0.0
    assert bound_sup(f, 0, 2) == 0.0
    assert traditional_ratio(f, 1, 2) == 0.0
    rep = evaluate_conditions(f, L, 1e-6)
    assert rep.verdict == PASS_BOUND4
    assert all(p.verdict == PASS_BOUND4 and "zero_coupling" in p.flags for p in rep.pairs)


def test_resonant_g_max(resonant):
    f, L = resonant
    G, g_max = g_integral(f, L, 0, 1)
    assert abs(g_max - math.pi / 2) <= 0.05 * math.pi / 2
    assert np.max(np.abs(G - rabi_G(OMEGA_RES, f.times))) <= 1e-9


def test_resonant_g_max_quadrature_oracle(resonant):
    import mpmath

    mpmath.mp.dps = 30
    a = 0.5 * OMEGA_RES * math.sin(THETA)
    rate = 1.0 - OMEGA_RES * math.cos(THETA)
    val = mpmath.quad(lambda t: a * mpmath.exp(-1j * rate * t), [0, T_RABI])
    f, L = resonant
    assert abs(g_integral(f, L, 0, 1)[0][-1] - float(abs(val))) <= 1e-9


def test_offresonant_g_max(offresonant):
    f, L = offresonant
    G, g_max = g_integral(f, L, 0, 1)
    assert g_max <= 0.06
    assert np.max(np.abs(G - rabi_G(0.1, f.times))) <= 1e-9


def test_bound4_examples(resonant, lz):
    f, _ = resonant
    assert bound_sup(f, 0, 1) == pytest.approx(T_RABI * 0.5 * OMEGA_RES * math.sin(THETA), rel=1e-12)
    assert bound_sup(f, 0, 1) == pytest.approx(1.561, abs=3e-3)
    f, _ = lz
    assert bound_sup(f, 0, 1) == pytest.approx(40.0, rel=1e-12)


def test_lz_segments_and_ratios(lz):
    f, L = lz
    seg = monotone_segments(L, 0, 1, model=f.model)
    assert seg.n_segments == 2
    assert seg.breakpoints == pytest.approx((40.0,))
    assert not seg.stationary
    assert traditional_ratio(f, 0, 1) == pytest.approx(0.5, rel=1e-9)
    assert qualitative_ratio(L, 0, 1) == pytest.approx(traditional_ratio(f, 0, 1), rel=1e-6)
    b5 = bound_mvt(L, 0, 1, seg)
    assert b5.value == pytest.approx(4 * 2 * 0.5, rel=1e-6)


def test_offresonant_single_segment_and_bound5(offresonant):
    f, L = offresonant
    seg = monotone_segments(L, 0, 1, model=f.model)
    assert seg.n_segments == 1
    b5 = bound_mvt(L, 0, 1, seg, bound4=bound_sup(f, 0, 1))
    a = 0.5 * 0.1 * math.sin(THETA)
    rate = 1.0 - 0.1 * math.cos(THETA)
    assert b5.value == pytest.approx(4 * a / rate, rel=1e-9)
    assert not b5.vacuous
    assert g_integral(f, L, 0, 1)[1] <= b5.value


def test_resonant_ratios(resonant):
    f, L = resonant
    trad = traditional_ratio(f, 0, 1)
    assert trad == pytest.approx(0.5 * OMEGA_RES * math.sin(THETA), rel=1e-9)
    assert trad == pytest.approx(0.0497, abs=2e-4)
    ratio6 = qualitative_ratio(L, 0, 1)
    assert ratio6 == pytest.approx(trad / math.sin(THETA) ** 2, rel=1e-9)
    assert ratio6 > 50 * trad
    assert ratio6 > 1.0


def test_resonant_bound5_refuses_to_certify(resonant):
    f, L = resonant
    b5 = bound_mvt(L, 0, 1, bound4=bound_sup(f, 0, 1))
    assert b5.vacuous
    assert b5.value > 0.1


def test_evaluate_examples(resonant, offresonant):
    rep = evaluate_conditions(*resonant, 0.1)
    assert rep.verdict == INCONCLUSIVE
    p = rep.pair(0, 1)
    assert not any(p.checks[k] for k in ("exact", "bound4", "bound5"))
    assert p.g_max == pytest.approx(1.5566, abs=1e-4)
    rep = evaluate_conditions(*offresonant, 0.1)
    assert rep.verdict == PASS_EXACT
    assert rep.pair(1, 0).verdict == PASS_EXACT


def test_real_family_bound5_specialisation(rng):
    m = models.linear_interpolation(spread_spectrum(rng, 3, real=True),
                                    spread_spectrum(rng, 3, real=True), 10.0)
    f = build_flow(m, 10.0, 4000, "canonical")
    L = phase_ledger(f)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        assert qualitative_ratio(L, a, b) == pytest.approx(traditional_ratio(f, a, b), rel=1e-6)
        seg = monotone_segments(L, a, b)
        assert bound_mvt(L, a, b, seg).value == pytest.approx(
            4 * seg.n_segments * traditional_ratio(f, a, b), rel=1e-6)


def test_bound_chain_random(rng):
    for k in range(8):
        d = 2 + k % 4
        m = models.linear_interpolation(spread_spectrum(rng, d), spread_spectrum(rng, d), 8.0)
        f = build_flow(m, 8.0, 3000)
        L = phase_ledger(f)
        rep = evaluate_conditions(f, L, 0.1)
        for p in rep.pairs:
            assert p.g_max <= p.abs_integral + 1e-7
            assert p.abs_integral <= p.bound4 + 1e-7
            if np.isfinite(p.bound5) and p.segmentation_stable:
                assert p.g_max <= p.bound5 + 1e-6
            assert p.n_segments >= 1


def test_verdict_precedence():
    # bound4 <= eps wins even when g_max also passes
    f = build_flow(models.rotating_spin(1.0, 0.01, 0.001), 10.0, 1000)
    L = phase_ledger(f)
    rep = evaluate_conditions(f, L, 0.1)
    assert rep.pair(0, 1).checks["exact"] and rep.pair(0, 1).checks["bound4"]
    assert rep.verdict == PASS_BOUND4


def test_bound5_certifies_where_bound4_fails():
    # long window, small ratio: T*max|A| large but 4N max|A/theta_dot| small
    f = build_flow(models.rotating_spin(1.0, 0.02, 0.2), 400.0, 20000)
    L = phase_ledger(f)
    p = evaluate_conditions(f, L, 0.05).pair(0, 1)
    assert not p.checks["bound4"]
    assert p.checks["bound5"]
    assert p.verdict in (PASS_EXACT, PASS_BOUND5)
    p = evaluate_conditions(f, L, 0.0052).pair(0, 1)
    assert p.g_max > 0.0052 or p.verdict == PASS_EXACT
    if p.g_max > 0.0052:
        assert p.verdict == PASS_BOUND5


def test_verdicts_gauge_invariant(rng):
    for _ in range(4):
        m = models.linear_interpolation(spread_spectrum(rng, 3), spread_spectrum(rng, 3), 12.0)
        reps = [evaluate_conditions(f, phase_ledger(f), 0.2)
                for f in (build_flow(m, 12.0, 3000, g) for g in ("aligned", "canonical"))]
        for pa, pc in zip(reps[0].pairs, reps[1].pairs):
            assert pa.verdict == pc.verdict
            assert pa.g_max == pytest.approx(pc.g_max, abs=1e-7)
            assert pa.ratio6_max == pytest.approx(pc.ratio6_max, rel=1e-9)


def test_count_segments_rules():
    t = np.linspace(0, 1, 201)
    r = 1.0 - (t - 0.5) ** 2
    assert count_segments(t, r, np.ones_like(t))[0] == 2
    n, breaks, stationary = count_segments(t, np.ones_like(t), np.cos(3 * np.pi * t))
    assert stationary and n == 4
    assert breaks == pytest.approx((1 / 6, 1 / 2, 5 / 6), abs=1e-4)
    # wiggles below the hysteresis threshold are ignored
    wiggle = 1.0 + 1e-12 * np.sin(200 * t)
    assert count_segments(t, wiggle, np.ones_like(t))[0] == 1
    assert count_segments(t, wiggle, np.ones_like(t), hysteresis_rel=1e-14)[0] > 10


def test_segmentation_unstable():
    f = build_flow(models.rotating_spin(1.0, THETA, 0.1), 10.0, 500)
    L = phase_ledger(f)
    fine = np.linspace(0, 10.0, 1001)
    a = np.zeros((1001, 2, 2))
    a[:, 0, 1] = 1.0 + 0.5 * np.sin(40 * fine)
    td = np.ones((1001, 2, 2))
    with pytest.raises(SegmentationUnstable):
        monotone_segments(L, 0, 1, refined=(fine, a, td))
    rep_pair = evaluate_conditions(f, L, 0.1, refine_check=False).pair(0, 1)
    assert rep_pair.segmentation_stable is None or rep_pair.segmentation_stable


def test_same_level_rejected(offresonant):
    f, L = offresonant
    for fn in (lambda: g_integral(f, L, 1, 1), lambda: bound_sup(f, 0, 0),
               lambda: abs_coupling_integral(f, 1, 1), lambda: qualitative_ratio(L, 0, 0)):
        with pytest.raises(SameLevel):
            fn()


def test_report_serialisation(offresonant):
    rep = evaluate_conditions(*offresonant, 0.1)
    d = rep.to_dict()
    assert d["verdict"] == PASS_EXACT and len(d["pairs"]) == 2
    assert set(d["pairs"][0]) >= {"g_max", "bound4", "n_segments", "bound5", "ratio6_max",
                                  "traditional_max", "verdict"}


def test_verdict_constants():
    assert {PASS_EXACT, PASS_BOUND4, PASS_BOUND5, INCONCLUSIVE} == {
        "PASS_EXACT", "PASS_BOUND4", "PASS_BOUND5", "INCONCLUSIVE"}
