"""
End-to-end acceptance checks. Each test prints one ``criterion N: PASS|FAIL``
line (also collected in the terminal summary) and then asserts the criterion
exactly as stated.
"""

import math
import time

import numpy as np
import pytest

from adicheck import models
from adicheck.conditions import PASS_BOUND4, PASS_EXACT, evaluate_conditions, g_integral
from adicheck.errors import ContinuityLoss, DegenerateSpectrum
from adicheck.flow import build_flow, phase_ledger
from adicheck.propagate import (adiabatic_prediction, deviation_metrics, evolve_coefficients,
                                evolve_exact)
from adicheck.report import run_scenario
from adicheck.scenario import load_scenario, scenario_from_dict

from conftest import SCENARIO_DIR, random_hermitian, spread_spectrum

pytestmark = pytest.mark.acceptance

EQUIV_TOL = 1e-5
N_RANDOM = 50


def timed_run(name):
    s = load_scenario(SCENARIO_DIR / f"{name}.json")
    t0 = time.perf_counter()
    rep = run_scenario(s)
    return s, rep, time.perf_counter() - t0


def robust_flow(model, T, steps=2000):
    """Flow on the default grid, refined fourfold once if eigenvectors turn too fast."""
    try:
        return build_flow(model, T, steps)
    except ContinuityLoss:
        return build_flow(model, T, 4 * steps)


def random_interpolations(seed, count, real=False):
    """Seeded linear_interpolation cases (dim 2 to 6) with the number of gap failures skipped."""
    rng = np.random.default_rng(seed)
    out, skipped = [], 0
    while len(out) < count:
        d = 2 + len(out) % 5
        T = float(rng.uniform(3.0, 30.0))
        is_real = real or len(out) % 3 == 0
        m = models.linear_interpolation(spread_spectrum(rng, d, is_real),
                                        spread_spectrum(rng, d, is_real), T)
        try:
            f = robust_flow(m, T)
        except (ContinuityLoss, DegenerateSpectrum):
            skipped += 1
            continue
        out.append((m, T, f))
    return out, skipped


@pytest.fixture(scope="module")
def bound_chain_cases():
    t0 = time.perf_counter()
    cases, skipped = random_interpolations(1234, N_RANDOM)
    evaluated = []
    for m, T, f in cases:
        L = phase_ledger(f, allow_undefined=True)
        evaluated.append((m, T, f, L, evaluate_conditions(f, L, 0.1)))
    return evaluated, skipped, time.perf_counter() - t0


def test_criterion_1_counterexample(criterion):
    s, rep, elapsed = timed_run("rotating_spin_resonant")
    assert (s.params["omega"], s.T, s.steps) == (math.cos(0.1), math.pi / math.sin(0.1), 20000)
    summ = rep["summary"]
    trad, drift, g = summ["traditional_max"], summ["max_coeff_drift"], summ["g_max"]
    checks = {
        "traditional_max": abs(trad - 0.0497) <= 0.002,
        "max_coeff_drift": abs(drift - 0.90) <= 0.05,
        "g_max": abs(g - 1.57) <= 0.08,
        "runtime": elapsed < 5.0,
    }
    criterion(1, all(checks.values()),
              f"traditional_max={trad:.5f} (0.0497+-0.002) max_coeff_drift={drift:.5f} "
              f"(0.90+-0.05) g_max={g:.5f} (1.57+-0.08) runtime={elapsed:.2f}s")
    assert checks["traditional_max"], trad
    assert checks["g_max"], g
    assert checks["runtime"], elapsed
    assert checks["max_coeff_drift"], f"max_coeff_drift {drift} not within 0.90 +- 0.05"


def test_criterion_2_offresonant_control(criterion):
    _, rep, elapsed = timed_run("rotating_spin_offresonant")
    summ = rep["summary"]
    ok = (summ["g_max"] <= 0.06 and summ["max_coeff_drift"] <= 0.12
          and summ["verdict"] == PASS_EXACT and elapsed < 5.0)
    criterion(2, ok, f"g_max={summ['g_max']:.5f} (<=0.06) max_coeff_drift="
                     f"{summ['max_coeff_drift']:.5f} (<=0.12) verdict={summ['verdict']} "
                     f"runtime={elapsed:.2f}s")
    assert rep["scenario"]["epsilon"] == 0.1
    assert ok


def test_criterion_3_landau_zener(criterion):
    s, rep, elapsed = timed_run("landau_zener")
    assert s.params == {"v": 1.0, "delta": 1.0, "t0": 40.0} and s.T == 80.0
    upper = rep["deviation"][0]["final_populations"][1]
    n_seg = next(p["n_segments"] for p in rep["conditions"]["pairs"] if (p["m"], p["n"]) == (0, 1))
    target = math.exp(-math.pi / 2)
    ok = abs(upper - target) <= 0.02 and n_seg == 2 and elapsed < 5.0
    criterion(3, ok, f"upper population={upper:.5f} ({target:.4f}+-0.02) n_segments={n_seg} "
                     f"runtime={elapsed:.2f}s")
    assert rep["deviation"][0]["initial"] == "level_0"
    assert ok


def test_criterion_4_bound_chain(criterion, bound_chain_cases):
    evaluated, skipped, elapsed = bound_chain_cases
    slack = 1e-6
    violations, n_bound5 = [], 0
    for i, (_, _, _, _, rep) in enumerate(evaluated):
        for p in rep.pairs:
            if not (p.g_max <= p.abs_integral + slack and p.abs_integral <= p.bound4 + slack):
                violations.append((i, p.m, p.n, "chain"))
            if math.isfinite(p.bound5) and p.segmentation_stable:
                n_bound5 += 1
                if p.g_max > p.bound5 + slack:
                    violations.append((i, p.m, p.n, "bound5"))
    dims = sorted({f.dim for _, _, f, _, _ in evaluated})
    ok = len(evaluated) >= N_RANDOM and not violations and elapsed < 60.0
    criterion(4, ok, f"{len(evaluated)} scenarios (dims {dims[0]}-{dims[-1]}, {skipped} gap "
                     f"failures skipped), {n_bound5} finite stable bound5 pairs, "
                     f"{len(violations)} violations, runtime={elapsed:.2f}s")
    assert dims == [2, 3, 4, 5, 6]
    assert ok, violations[:5]


def test_criterion_5_gauge_invariance(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(555)
    worst_a = worst_g = 0.0
    for i in range(20):
        d = 2 + i % 5
        T = float(rng.uniform(3.0, 20.0))
        m = models.linear_interpolation(spread_spectrum(rng, d), spread_spectrum(rng, d), T)
        base = build_flow(m, T, 2000, "aligned")
        flows = [base, build_flow(m, T, 2000, "canonical"),
                 base.with_phases(rng.uniform(-math.pi, math.pi, size=base.energies.shape))]
        ledgers = [phase_ledger(f) for f in flows]
        ref_a = np.abs(base.couplings)
        for f, L in zip(flows[1:], ledgers[1:]):
            worst_a = max(worst_a, float(np.max(np.abs(np.abs(f.couplings) - ref_a))))
            for a in range(d):
                for b in range(d):
                    if a != b:
                        g_ref = g_integral(base, ledgers[0], a, b)[1]
                        worst_g = max(worst_g, abs(g_integral(f, L, a, b)[1] - g_ref))
    elapsed = time.perf_counter() - t0
    ok = worst_a <= 1e-7 and worst_g <= 1e-7 and elapsed < 30.0
    criterion(5, ok, f"20 scenarios, max |dA|={worst_a:.2e} max |dg_max|={worst_g:.2e} (<=1e-7) "
                     f"runtime={elapsed:.2f}s")
    assert ok


def test_criterion_6_real_reduction(criterion):
    t0 = time.perf_counter()
    cases, skipped = random_interpolations(606, 20, real=True)
    worst_beta = worst_rate = 0.0
    for m, T, f in cases:
        for flow in (f, build_flow(m, T, f.steps, "canonical")):
            L = phase_ledger(flow, allow_undefined=True)
            worst_beta = max(worst_beta, float(np.max(np.abs(L.beta[-1]))))
            gap = flow.energies[:, None, :] - flow.energies[:, :, None]
            off = ~np.eye(flow.dim, dtype=bool)
            dev = np.max(np.abs(L.theta_dot - gap)[:, off]) / np.max(np.abs(gap))
            worst_rate = max(worst_rate, float(dev))
    elapsed = time.perf_counter() - t0
    ok = worst_beta <= 1e-6 and worst_rate <= 1e-5 and elapsed < 30.0
    criterion(6, ok, f"20 real scenarios ({skipped} skipped), max |beta(T)|={worst_beta:.2e} "
                     f"(<=1e-6) max |theta_dot-gap|/max gap={worst_rate:.2e} (<=1e-5) "
                     f"runtime={elapsed:.2f}s")
    assert all(m.is_real for m, _, _ in cases)
    assert ok


def test_criterion_7_oracle_equivalence(criterion, bound_chain_cases):
    worst = 0.0
    count = 0
    for name in ("rotating_spin_resonant", "rotating_spin_offresonant", "landau_zener"):
        rep = run_scenario(load_scenario(SCENARIO_DIR / f"{name}.json"))
        assert not rep["diagnostics"]
        for entry in rep["deviation"]:
            worst = max(worst, entry["oracle_max_deviation"])
            count += 1
    evaluated, _, _ = bound_chain_cases
    for m, T, f, L, _ in evaluated:
        for k in range(f.dim):
            c0 = np.eye(f.dim, dtype=complex)[k]
            a = evolve_exact(m, f.vectors[0] @ c0, T, flow=f, ledger=L)
            b = evolve_coefficients(f, L, c0, T)
            worst = max(worst, float(np.max(np.abs(a.coefficients - b.coefficients))))
            count += 1
    ok = worst <= EQUIV_TOL
    criterion(7, ok, f"{count} trajectories over criteria 1-4 scenarios, max deviation "
                     f"{worst:.2e} (<=1e-5)")
    assert ok


def max_drift(H0, H1, T):
    m = models.linear_interpolation(H0, H1, T)
    f = build_flow(m, T, 2000)
    L = phase_ledger(f, allow_undefined=True)
    out = 0.0
    for k in range(f.dim):
        c0 = np.eye(f.dim, dtype=complex)[k]
        tr = evolve_exact(m, f.vectors[0] @ c0, T, flow=f, ledger=L)
        out = max(out, deviation_metrics(tr, adiabatic_prediction(f, L, c0)).max_coeff_drift)
    return out


def test_criterion_8_adiabatic_limit(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    details, ok = [], True
    for real in (True, False, False):
        H0, H1 = spread_spectrum(rng, 3, real), spread_spectrum(rng, 3, real)
        T, d = 5.0, max_drift(H0, H1, 5.0)
        while d >= 0.2:
            T *= 2
            d = max_drift(H0, H1, T)
        ratios = []
        for _ in range(2):
            d2 = max_drift(H0, H1, 2 * T)
            ratios.append(d2 / d)
            T, d = 2 * T, d2
        ok &= all(r <= 0.7 for r in ratios)
        details.append("/".join(f"{r:.3f}" for r in ratios))
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60.0
    criterion(8, ok, f"drift(2T)/drift(T) after drift<0.2: {', '.join(details)} (<=0.7) "
                     f"runtime={elapsed:.2f}s")
    assert ok


def test_criterion_9_trivial_exactness(criterion):
    rng = np.random.default_rng(9)
    scenarios = [load_scenario(SCENARIO_DIR / "constant.json").replace(epsilon=1e-6)]
    for d in (2, 3, 5):
        H = random_hermitian(rng, d)
        doc = {"model": {"kind": "constant", "params": {"h_re": H.real.tolist(),
                                                        "h_im": H.imag.tolist()}},
               "T": 3.0, "epsilon": 1e-6, "steps": 300}
        scenarios.append(scenario_from_dict(doc))
    drifts, verdicts = [], []
    for s in scenarios:
        rep = run_scenario(s)
        drifts.append(rep["summary"]["max_coeff_drift"])
        verdicts.append(rep["summary"]["verdict"])
    ok = max(drifts) <= 1e-8 and all(v == PASS_BOUND4 for v in verdicts)
    criterion(9, ok, f"{len(scenarios)} constant scenarios, max drift {max(drifts):.2e} (<=1e-8), "
                     f"verdicts {sorted(set(verdicts))}")
    assert ok
