"""
Validity conditions for the adiabatic approximation on a window [0, T].

For every ordered pair of levels (m, n) this evaluates

* the accumulated transition integral G_mn(t) and its maximum over the grid,
* the coarse bound T * max|A_mn|,
* the segmented mean-value bound 4 * N_mn * max|A_mn / theta_dot_mn|,
  where N_mn counts the pieces of [0, T] on which theta_mn is strictly
  monotone and |A_mn / theta_dot_mn| is monotone,
* the qualitative ratio max|A_mn / theta_dot_mn| and the traditional ratio
  max|A_mn / (E_n - E_m)|,

and turns them into verdicts at an error budget epsilon.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import AdicheckError, PhaseUndefined, SameLevel, SegmentationUnstable
from .flow import _hold_last, cumulative_integral, pointwise_pair_rates

PASS_EXACT = "PASS_EXACT"
PASS_BOUND4 = "PASS_BOUND4"
PASS_BOUND5 = "PASS_BOUND5"
INCONCLUSIVE = "INCONCLUSIVE"
VERDICTS = (PASS_BOUND4, PASS_EXACT, PASS_BOUND5, INCONCLUSIVE)

HYSTERESIS_REL = 1e-9
MAX_SEGMENT_DRIFT = 2
# |theta_dot| at or below this fraction of its maximum counts as a stationary point
STATIONARY_REL = 1e-12


@dataclass(frozen=True)
class Segmentation:
    n_segments: int
    breakpoints: tuple
    stationary: bool
    refined_n_segments: int = None

    @property
    def stable(self):
        if self.refined_n_segments is None:
            return True
        return abs(self.refined_n_segments - self.n_segments) <= MAX_SEGMENT_DRIFT


@dataclass(frozen=True)
class MeanValueBound:
    value: float
    n_segments: int
    ratio_max: float
    vacuous: bool
    reason: str = ""


@dataclass
class PairConditions:
    m: int
    n: int
    g_max: float
    abs_integral: float
    bound4: float
    traditional_max: float
    n_segments: int = None
    breakpoints: tuple = ()
    bound5: float = None
    bound5_vacuous: bool = True
    ratio6_max: float = None
    segmentation_stable: bool = None
    verdict: str = INCONCLUSIVE
    checks: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {
            "m": self.m, "n": self.n,
            "g_max": self.g_max,
            "abs_integral": self.abs_integral,
            "bound4": self.bound4,
            "n_segments": self.n_segments,
            "breakpoints": list(self.breakpoints),
            "bound5": _finite_or_none(self.bound5),
            "bound5_vacuous": self.bound5_vacuous,
            "ratio6_max": _finite_or_none(self.ratio6_max),
            "traditional_max": self.traditional_max,
            "segmentation_stable": self.segmentation_stable,
            "verdict": self.verdict,
            "checks": dict(self.checks),
            "flags": list(self.flags),
        }


def _finite_or_none(x):
    if x is None or not np.isfinite(x):
        return None
    return float(x)


@dataclass
class ConditionReport:
    epsilon: float
    T: float
    gauge: str
    pairs: list
    verdict: str

    def pair(self, m, n):
        for p in self.pairs:
            if p.m == m and p.n == n:
                return p
        raise KeyError((m, n))

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "T": self.T,
            "gauge": self.gauge,
            "verdict": self.verdict,
            "pairs": [p.to_dict() for p in self.pairs],
        }


def _check_pair(m, n):
    if m == n:
        raise SameLevel(f"conditions need distinct levels, got m = n = {m}")


def g_integral(flow, ledger, m, n):
    """
    |integral_0^t A_mn exp(-i(dalpha + dbeta)) dt'| at every node, and its maximum.
    """
    _check_pair(m, n)
    series = np.abs(cumulative_integral(ledger.integrand(m, n), flow.times))
    return series, float(np.max(series))


def abs_coupling_integral(flow, m, n):
    """integral_0^T |A_mn| dt (composite Simpson)."""
    _check_pair(m, n)
    return float(cumulative_integral(np.abs(flow.couplings[:, m, n]), flow.times)[-1])


def bound_sup(flow, m, n, T=None):
    """T * max_t |A_mn(t)|."""
    _check_pair(m, n)
    T = flow.T if T is None else float(T)
    return T * float(np.max(np.abs(flow.couplings[:, m, n])))


def _ratio_series(abs_a, theta_dot):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = abs_a / np.abs(theta_dot)
    r[(abs_a == 0)] = 0.0
    return r


def _zero_time(t0, t1, y0, y1):
    if y1 == y0:
        return 0.5 * (t0 + t1)
    return t0 + (t1 - t0) * y0 / (y0 - y1)


def count_segments(times, r, theta_dot, hysteresis_rel=HYSTERESIS_REL):
    """
    Split the grid at sign changes of ``theta_dot`` and at monotonicity
    reversals of ``r``; a reversal only counts once ``r`` has moved back by more
    than ``hysteresis_rel * max(r)`` from its running extreme.

    Returns ``(n_segments, breakpoints, stationary)`` where ``stationary`` is
    True if theta_dot vanishes or changes sign anywhere on the grid.
    """
    times = np.asarray(times, dtype=float)
    td = np.asarray(theta_dot, dtype=float)
    scale = np.max(np.abs(td)) if td.size else 0.0
    stationary = bool(scale == 0 or np.any(np.abs(td) <= STATIONARY_REL * scale))
    sign = np.sign(td)
    # zero entries take the sign of the previous nonzero entry
    nz = np.flatnonzero(sign != 0)
    if nz.size:
        idx = np.where(sign != 0, np.arange(len(sign)), 0)
        np.maximum.accumulate(idx, out=idx)
        idx[: nz[0]] = nz[0]
        sign = sign[idx]
    flips = np.flatnonzero(sign[1:] != sign[:-1])
    if flips.size:
        stationary = True

    finite_r = r[np.isfinite(r)]
    tol = hysteresis_rel * (np.max(finite_r) if finite_r.size else 0.0)
    breakpoints = []
    piece_bounds = [0, *(flips + 1).tolist(), len(times)]
    for k in flips:
        breakpoints.append(_zero_time(times[k], times[k + 1], td[k], td[k + 1]))

    rl = r.tolist()
    for s, e in zip(piece_bounds[:-1], piece_bounds[1:]):
        direction = 0
        ext = s
        lo = hi = s
        for k in range(s + 1, e):
            rk = rl[k]
            if direction == 0:
                if rk > rl[hi]:
                    hi = k
                if rk < rl[lo]:
                    lo = k
                if rl[hi] - rl[lo] > tol:
                    # first decisive move fixes the direction
                    if hi > lo:
                        direction, ext = 1, hi
                    else:
                        direction, ext = -1, lo
                continue
            if direction > 0:
                if rk >= rl[ext]:
                    ext = k
                elif rl[ext] - rk > tol:
                    breakpoints.append(float(times[ext]))
                    direction, ext = -1, k
            else:
                if rk <= rl[ext]:
                    ext = k
                elif rk - rl[ext] > tol:
                    breakpoints.append(float(times[ext]))
                    direction, ext = 1, k
    breakpoints.sort()
    return len(breakpoints) + 1, tuple(float(b) for b in breakpoints), stationary


def _pair_arrays(ledger, m, n):
    ledger.require(m, n)
    return np.abs(ledger.coupling[:, m, n]), ledger.theta_dot[:, m, n]


def refined_rates(model, times):
    """Pointwise (times, |A|, theta_dot) on the 2x refinement of ``times``."""
    fine = np.linspace(times[0], times[-1], 2 * (len(times) - 1) + 1)
    _, abs_a, td = pointwise_pair_rates(model, fine)
    return fine, abs_a, td


def monotone_segments(ledger, m, n, model=None, refined=None, hysteresis_rel=HYSTERESIS_REL):
    """
    N_mn(T): number of maximal pieces with theta_mn strictly monotone and
    |A_mn / theta_dot_mn| monotone.

    When ``model`` (or precomputed ``refined`` rates) is given the count is
    repeated on a 2x refined grid and SegmentationUnstable is raised if it
    moves by more than two.
    """
    _check_pair(m, n)
    abs_a, td = _pair_arrays(ledger, m, n)
    r = _ratio_series(abs_a, td)
    count, breaks, stationary = count_segments(ledger.times, r, td, hysteresis_rel)
    refined_count = None
    if refined is None and model is not None:
        refined = refined_rates(model, ledger.times)
    if refined is not None:
        refined_count = _refined_count(refined, m, n, hysteresis_rel)
        if abs(refined_count - count) > MAX_SEGMENT_DRIFT:
            raise SegmentationUnstable(
                f"pair ({m},{n}): {count} segments on the grid, "
                f"{refined_count} on the 2x refined grid")
    return Segmentation(count, breaks, stationary, refined_count)


def _refined_count(refined, m, n, hysteresis_rel):
    fine, abs_a, td = refined
    a = abs_a[:, m, n]
    rate = td[:, m, n]
    held = ~np.isfinite(rate) | (a <= 1e-12 * np.max(a))
    rate = _hold_last(np.nan_to_num(rate), held)
    return count_segments(fine, _ratio_series(a, rate), rate, hysteresis_rel)[0]


def qualitative_ratio(ledger, m, n):
    """max_t |A_mn / theta_dot_mn|; compare against 1."""
    _check_pair(m, n)
    abs_a, td = _pair_arrays(ledger, m, n)
    return float(np.max(_ratio_series(abs_a, td)))


def traditional_ratio(flow, m, n):
    """max_t |A_mn| / |E_n - E_m|."""
    _check_pair(m, n)
    gap = np.abs(flow.energies[:, n] - flow.energies[:, m])
    return float(np.max(np.abs(flow.couplings[:, m, n]) / gap))


def bound_mvt(ledger, m, n, segmentation=None, bound4=None):
    """
    4 * N_mn * max|A_mn / theta_dot_mn|.

    The bound is infinite when theta_dot vanishes or changes sign, and is
    flagged vacuous when infinite or no tighter than ``bound4``.
    """
    _check_pair(m, n)
    if segmentation is None:
        segmentation = monotone_segments(ledger, m, n)
    ratio = qualitative_ratio(ledger, m, n)
    if segmentation.stationary or not np.isfinite(ratio):
        return MeanValueBound(np.inf, segmentation.n_segments, ratio, True,
                              "theta_dot vanishes inside the window")
    value = 4.0 * segmentation.n_segments * ratio
    if bound4 is not None and value >= bound4:
        return MeanValueBound(value, segmentation.n_segments, ratio, True,
                              "no tighter than T*max|A|")
    return MeanValueBound(value, segmentation.n_segments, ratio, False)


def _pair_verdict(checks):
    for key, verdict in (("bound4", PASS_BOUND4), ("exact", PASS_EXACT), ("bound5", PASS_BOUND5)):
        if checks.get(key):
            return verdict
    return INCONCLUSIVE


def _scenario_verdict(pairs):
    if not pairs:
        return INCONCLUSIVE
    rank = {PASS_BOUND4: 0, PASS_EXACT: 1, PASS_BOUND5: 2, INCONCLUSIVE: 3}
    return max((p.verdict for p in pairs), key=rank.__getitem__)


def evaluate_pair(flow, ledger, m, n, epsilon, refine_check=True, refined=None):
    series, g_max = g_integral(flow, ledger, m, n)
    b4 = bound_sup(flow, m, n)
    pc = PairConditions(
        m=m, n=n, g_max=g_max,
        abs_integral=abs_coupling_integral(flow, m, n),
        bound4=b4,
        traditional_max=traditional_ratio(flow, m, n),
    )
    if b4 == 0.0:
        pc.flags.append("zero_coupling")
    else:
        try:
            if refine_check and refined is None:
                refined = refined_rates(flow.model, flow.times)
            seg = monotone_segments(ledger, m, n, refined=refined if refine_check else None)
            pc.n_segments = seg.n_segments
            pc.breakpoints = seg.breakpoints
            pc.segmentation_stable = seg.stable
            mvt = bound_mvt(ledger, m, n, seg, bound4=b4)
            pc.bound5 = mvt.value
            pc.bound5_vacuous = mvt.vacuous
            pc.ratio6_max = mvt.ratio_max
            if mvt.reason:
                pc.flags.append("bound5_vacuous: " + mvt.reason)
        except PhaseUndefined as exc:
            pc.flags.append(f"phase_undefined: {exc}")
        except SegmentationUnstable as exc:
            pc.segmentation_stable = False
            pc.flags.append(f"segmentation_unstable: {exc}")
            pc.ratio6_max = qualitative_ratio(ledger, m, n)
        if np.any(ledger.held[:, m, n]):
            pc.flags.append(f"gamma_held_nodes: {int(np.sum(ledger.held[:, m, n]))}")
    pc.checks = {
        "exact": bool(g_max <= epsilon),
        "bound4": bool(b4 <= epsilon),
        "bound5": bool(pc.bound5 is not None and np.isfinite(pc.bound5)
                       and pc.segmentation_stable is not False and pc.bound5 <= epsilon),
        "qualitative": bool(pc.ratio6_max is not None and pc.ratio6_max < 1.0),
        "traditional": bool(pc.traditional_max < 1.0),
    }
    pc.verdict = _pair_verdict(pc.checks)
    return pc, series


def evaluate_conditions(flow, ledger, epsilon, refine_check=True, return_series=False):
    """
    Per-pair verdicts at budget ``epsilon``: PASS_BOUND4 if T*max|A| <= eps,
    else PASS_EXACT if max G <= eps, else PASS_BOUND5 if the finite,
    segmentation-stable mean-value bound is <= eps, else INCONCLUSIVE.

    The scenario verdict is INCONCLUSIVE if any pair is; otherwise it is the
    weakest certificate used by any pair. Per-pair failures are recorded as
    flags, never raised.
    """
    if not 0 < epsilon:
        raise ValueError("epsilon must be positive")
    pairs, series = [], {}
    d = flow.dim
    refined = None
    if refine_check and np.any(ledger.defined):
        refined = refined_rates(flow.model, flow.times)
    for m in range(d):
        for n in range(d):
            if m == n:
                continue
            try:
                pc, s = evaluate_pair(flow, ledger, m, n, epsilon, refine_check, refined)
            except AdicheckError as exc:  # pragma: no cover - defensive
                pc = PairConditions(m, n, np.nan, np.nan, np.nan, np.nan,
                                    flags=[f"error: {type(exc).__name__}: {exc}"])
                s = None
            pairs.append(pc)
            series[(m, n)] = s
    report = ConditionReport(float(epsilon), flow.T, flow.gauge, pairs, _scenario_verdict(pairs))
    if return_series:
        return report, series
    return report
