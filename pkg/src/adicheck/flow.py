"""
Gauge-fixed eigen-decomposition tracks on a time grid and the phase quantities
built on them: dynamic and Berry phases, nonadiabatic couplings
A_mn = <E_m| d/dt |E_n>, their phases gamma_mn, and the total relative phase
theta_mn with its rate.

Berry phases are measured against a pointwise *reference gauge*: for each level
one eigenvector component (chosen with hysteresis so it never gets small) is
made real and positive. In that gauge the diagonal connection has the closed
form ``-Im(w_n[j] / v_n[j])`` with ``w_n = sum_{m != n} A_mn v_m``, so its
integral needs no differencing of eigenvectors. The Berry phase of any other
gauge follows by adding the node-wise phase of its vectors relative to the
reference, which makes the result covariant under arbitrary per-node
rephasing.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import ContinuityLoss, DegenerateSpectrum, NotHermitian, PhaseUndefined, SameLevel
from .linalg import EigenFrame, hermiticity_defect, jacobi_eigh

GAUGES = ("aligned", "canonical")
MIN_STEPS = 100
MIN_OVERLAP = 0.999
GAP_TOL_REL = 1e-8
AMP_FLOOR_REL = 1e-12
MAX_HELD_FRACTION = 0.1
# reference component is replaced once it drops below this fraction of the largest one
REF_SWITCH = 0.5


def cumulative_integral(y, x, axis=0):
    """Composite-Simpson running integral from x[0], with 0 at the first node; complex-safe."""
    y = np.asarray(y)
    if np.iscomplexobj(y):
        return (cumulative_simpson(y.real, x=x, axis=axis, initial=0.0)
                + 1j * cumulative_simpson(y.imag, x=x, axis=axis, initial=0.0))
    return cumulative_simpson(y, x=x, axis=axis, initial=0.0)


def _dagger(M):
    return np.conj(np.swapaxes(M, -1, -2))


def _gap_matrix(E):
    """G[..., m, n] = E_n - E_m."""
    return E[..., None, :] - E[..., :, None]


def local_geometry(E, V, dH, d2H=None):
    """
    Gauge-covariant couplings at each node.

    Returns ``A`` with ``A[k, m, n] = <v_m|dH|v_n> / (E_n - E_m)`` (zero
    diagonal), the off-diagonal derivative ``W[k, :, n] = sum_m A_mn v_m`` and,
    when ``d2H`` is given, the gauge-invariant phase rate

        theta_dot_mn = (E_n - E_m) - Im( d/dt<v_m|dH|v_n> / <v_m|dH|v_n> )

    evaluated in the local parallel-transport gauge (NaN where the coupling
    vanishes).
    """
    D = _dagger(V) @ dH @ V
    gaps = _gap_matrix(E)
    d = E.shape[-1]
    eye = np.eye(d, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        A = np.where(eye, 0.0, D / np.where(eye, 1.0, gaps))
    W = V @ A
    if d2H is None:
        return A, W, None
    X = _dagger(W) @ dH @ V + _dagger(V) @ d2H @ V + _dagger(V) @ dH @ W
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = X / D
    theta_dot = gaps - ratio.imag
    theta_dot = np.where(eye | (D == 0), np.nan, theta_dot)
    return A, W, theta_dot


def _reference_indices(V):
    """Per-level reference component index at each node, switched with hysteresis."""
    mag = np.abs(V)  # (K+1, comp, level)
    argmax = np.argmax(mag, axis=1)
    peak = np.max(mag, axis=1)
    n_nodes, _, d = V.shape
    idx = np.empty((n_nodes, d), dtype=int)
    for n in range(d):
        col = mag[:, :, n]
        j = int(argmax[0, n])
        jn = np.empty(n_nodes, dtype=int)
        am = argmax[:, n].tolist()
        pk = peak[:, n].tolist()
        for k in range(n_nodes):
            if col[k, j] < REF_SWITCH * pk[k]:
                j = am[k]
            jn[k] = j
        idx[:, n] = jn
    return idx


def _reference_berry(times, V, W, ref_index):
    """
    Berry phase of the reference gauge, including the phase steps where the
    reference component changes. Returns ``(B, a)`` with ``a`` the connection
    at each node in the reference active there.
    """
    n_nodes, d = ref_index.shape
    rows = np.arange(n_nodes)
    B = np.zeros((n_nodes, d))
    a_node = np.zeros((n_nodes, d))
    with np.errstate(divide="ignore", invalid="ignore"):
        conn = -np.imag(W / V)  # conn[k, j, n]: connection if component j is the reference
    for n in range(d):
        j = ref_index[:, n]
        a_node[:, n] = conn[rows, j, n]
        switches = np.flatnonzero(j[1:] != j[:-1]) + 1
        bounds = [0, *switches.tolist(), n_nodes - 1]
        base = 0.0
        for s, e in zip(bounds[:-1], bounds[1:]):
            jr = j[s]
            if e > s:
                vals = conn[s:e + 1, jr, n]
                B[s:e + 1, n] = base + cumulative_integral(vals, times[s:e + 1])
            else:
                B[s, n] = base
            if e < n_nodes - 1 or j[e] != jr:
                # phase step between the old and new reference at the shared node
                chi = np.angle(V[e, jr, n]) - np.angle(V[e, j[e], n])
                base = B[e, n] + chi
                B[e, n] = base
    return B, a_node


@dataclass(frozen=True, eq=False)
class SpectralFlow:
    """
    Eigen-decomposition of H(t) on the grid ``times`` in a fixed gauge.

    ``vectors[k, :, n]`` is the eigenvector of level ``n`` (ascending energy)
    at ``times[k]``.
    """

    model: object
    times: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    gauge: str
    dh: np.ndarray
    d2h: np.ndarray
    ref_index: np.ndarray
    ref_berry: np.ndarray
    jumps: np.ndarray

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def steps(self):
        return len(self.times) - 1

    @property
    def dim(self):
        return self.energies.shape[1]

    def frame(self, k):
        return EigenFrame(float(self.times[k]), self.energies[k], self.vectors[k])

    @property
    def is_real(self):
        return bool(getattr(self.model, "is_real", False))

    @cached_property
    def couplings(self):
        """A[k, m, n] = <E_m| d/dt |E_n> in this flow's gauge."""
        A, _, _ = local_geometry(self.energies, self.vectors, self.dh)
        return A

    @cached_property
    def theta_rates(self):
        """Gauge-invariant d(theta_mn)/dt at every node (NaN where A_mn = 0)."""
        _, _, td = local_geometry(self.energies, self.vectors, self.dh, self.d2h)
        return td

    def overlaps(self):
        """<v_n(t_k)|v_n(t_{k+1})> for all k, n."""
        return np.einsum("kin,kin->kn", np.conj(self.vectors[:-1]), self.vectors[1:])

    def transport_residual(self):
        """Largest accumulated discrete overlap phase, per level (zero for ideal transport)."""
        return np.abs(np.sum(np.angle(self.overlaps()), axis=0))

    def with_phases(self, phases, gauge="custom"):
        """New flow with ``vectors[k, :, n]`` multiplied by ``exp(1j*phases[k, n])``."""
        phases = np.asarray(phases, dtype=float)
        if phases.shape != self.energies.shape:
            raise ValueError(f"phases must have shape {self.energies.shape}")
        vecs = self.vectors * np.exp(1j * phases)[:, None, :]
        vecs.setflags(write=False)
        return SpectralFlow(self.model, self.times, self.energies, vecs, gauge,
                            self.dh, self.d2h, self.ref_index, self.ref_berry, self.jumps)


def build_flow(model, T, steps=2000, gauge="aligned", gap_tol_rel=GAP_TOL_REL,
               min_overlap=MIN_OVERLAP):
    """
    Diagonalise ``model`` on ``steps + 1`` uniform nodes of [0, T] and fix a gauge.

    ``aligned`` transports each eigenvector along the grid so that its Berry
    phase vanishes; ``canonical`` makes the largest-magnitude component of every
    eigenvector real and positive at each node.
    """
    if gauge not in GAUGES:
        raise ValueError(f"gauge must be one of {GAUGES}, got {gauge!r}")
    steps = int(steps)
    if steps < MIN_STEPS:
        raise ValueError(f"steps must be >= {MIN_STEPS}, got {steps}")
    if not T > 0:
        raise ValueError("T must be positive")
    if model.dim < 2:
        raise ValueError("a spectral flow needs at least two levels")

    times = np.linspace(0.0, float(T), steps + 1)
    H = model.eval_h(times)
    scale = 1.0 + np.max(np.abs(H), axis=(1, 2))
    bad = np.flatnonzero(hermiticity_defect(H) > 1e-12 * scale)
    if bad.size:
        raise NotHermitian(f"H(t) not Hermitian at t={times[bad[0]]:.6g}")

    E, V = jacobi_eigh(H)
    gaps = np.diff(E, axis=1)
    tol = gap_tol_rel * (E[:, -1] - E[:, 0])
    degen = np.flatnonzero((gaps.min(axis=1) < tol) | (gaps.min(axis=1) <= 0))
    if degen.size:
        k = degen[0]
        raise DegenerateSpectrum(times[k], gaps[k].min())

    ov = np.abs(np.einsum("kin,kin->kn", np.conj(V[:-1]), V[1:]))
    if np.min(ov) < min_overlap:
        k, n = np.unravel_index(np.argmin(ov), ov.shape)
        raise ContinuityLoss(
            f"eigenvector overlap {ov[k, n]:.6f} < {min_overlap} for level {n} "
            f"between t={times[k]:.6g} and t={times[k + 1]:.6g}; refine the grid")

    dH = model.eval_dh(times)
    d2H = model.eval_d2h(times)
    _, W, _ = local_geometry(E, V, dH)
    ref_index = _reference_indices(V)
    B, _ = _reference_berry(times, V, W, ref_index)

    rows = np.arange(len(times))[:, None]
    cols = np.arange(E.shape[1])[None, :]
    jumps = np.zeros_like(E)
    if gauge == "aligned":
        ref_phase = np.angle(V[rows, ref_index, cols])
        vecs = V * np.exp(-1j * (ref_phase + B))[:, None, :]
    else:
        big = np.argmax(np.abs(V), axis=1)
        vecs = V * np.exp(-1j * np.angle(V[rows, big, cols]))[:, None, :]
        # phase step each time the largest component changes index
        prev = np.vstack([big[:1], big[:-1]])
        chi = np.angle(V[rows, prev, cols]) - np.angle(V[rows, big, cols])
        jumps = np.cumsum(np.angle(np.exp(1j * chi)), axis=0)

    for arr in (times, E, vecs, dH, d2H, ref_index, B, jumps):
        arr.setflags(write=False)
    return SpectralFlow(model, times, E, vecs, gauge, dH, d2H, ref_index, B, jumps)


def coupling(flow, m, n):
    """Series A_mn(t_k) = <E_m| d/dt |E_n> in the flow's gauge."""
    if m == n:
        raise SameLevel(f"coupling needs distinct levels, got m = n = {m}")
    return flow.couplings[:, m, n]


def dynamic_phase(flow):
    """alpha_n(t_k) = integral of E_n from 0 to t_k (composite Simpson)."""
    return cumulative_integral(flow.energies, flow.times)


def berry_phase(flow):
    """
    beta_n(t_k) = -i integral of <E_n| d/dt |E_n> from 0 to t_k, in the flow's gauge.

    Discrete convention switches of the canonical gauge (``flow.jumps``) are
    not part of the integral; ``beta + jumps`` is the phase that makes
    ``exp(i(alpha + beta + jumps)) <E_n|psi>`` gauge independent.
    """
    rows = np.arange(len(flow.times))[:, None]
    cols = np.arange(flow.dim)[None, :]
    rel = np.angle(flow.vectors[rows, flow.ref_index, cols])
    total = np.unwrap(flow.ref_berry + rel - flow.jumps, axis=0)
    return total - total[0]


@dataclass(frozen=True, eq=False)
class PhaseLedger:
    """
    Phase bookkeeping on the flow grid.

    Per-level arrays have shape ``(K+1, d)``; per-pair arrays ``(K+1, d, d)``
    indexed ``[k, m, n]``. ``held[k, m, n]`` marks nodes where |A_mn| fell
    below the amplitude floor and gamma/theta_dot hold their last valid value.
    ``defined[m, n]`` is False for pairs whose phase is undefined on more than
    the allowed fraction of nodes.

    ``jumps`` holds the accumulated phase steps of a discontinuous (canonical)
    gauge. ``gamma`` is measured with those steps removed, so theta is smooth
    and ``alpha + beta + jumps`` is the full phase attached to each level.
    """

    times: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    coupling: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    held: np.ndarray
    defined: np.ndarray
    gauge: str
    jumps: np.ndarray

    @property
    def phase(self):
        """alpha + beta + jumps per level."""
        return self.alpha + self.beta + self.jumps

    def require(self, m, n):
        if m == n:
            raise SameLevel(f"pair needs distinct levels, got m = n = {m}")
        if not self.defined[m, n]:
            frac = float(np.mean(self.held[:, m, n]))
            raise PhaseUndefined(
                f"coupling ({m},{n}) below amplitude floor on {100 * frac:.1f}% of nodes")

    def integrand(self, m, n):
        """A_mn exp(-i(alpha_n - alpha_m + beta_n - beta_m)): the transition integrand."""
        ph = self.phase
        return self.coupling[:, m, n] * np.exp(-1j * (ph[:, n] - ph[:, m]))


def _hold_last(values, held):
    """Replace held entries by the previous valid one (leading ones by the first valid)."""
    out = values.copy()
    valid = np.flatnonzero(~held)
    if valid.size == 0:
        return np.zeros_like(values)
    idx = np.where(~held, np.arange(len(values)), 0)
    np.maximum.accumulate(idx, out=idx)
    idx[: valid[0]] = valid[0]
    return out[idx]


def phase_ledger(flow, amp_floor_rel=AMP_FLOOR_REL, max_held_fraction=MAX_HELD_FRACTION,
                 allow_undefined=False):
    """
    Assemble alpha, beta, gamma, theta and theta_dot for every ordered pair.

    Raises PhaseUndefined when some pair's coupling is below the amplitude
    floor on more than ``max_held_fraction`` of the nodes, unless
    ``allow_undefined`` is set, in which case such pairs are only marked in
    ``defined``.
    """
    alpha = dynamic_phase(flow)
    beta = berry_phase(flow)
    J = flow.jumps
    A = flow.couplings
    rates = flow.theta_rates
    n_nodes, d = alpha.shape
    mag = np.abs(A)
    floor = amp_floor_rel * np.max(mag, axis=0)
    held = (mag <= floor[None]) | ~np.isfinite(rates)
    eye = np.eye(d, dtype=bool)
    held[:, eye] = True
    defined = (np.mean(held, axis=0) <= max_held_fraction) & ~eye

    gamma = np.zeros((n_nodes, d, d))
    theta_dot = np.zeros((n_nodes, d, d))
    for m in range(d):
        for n in range(d):
            if m == n:
                continue
            a_smooth = A[:, m, n] * np.exp(-1j * (J[:, n] - J[:, m]))
            gamma[:, m, n] = np.unwrap(_hold_last(-np.angle(a_smooth), held[:, m, n]))
            theta_dot[:, m, n] = _hold_last(np.nan_to_num(rates[:, m, n]), held[:, m, n])
    dphase = (alpha[:, None, :] - alpha[:, :, None]) + (beta[:, None, :] - beta[:, :, None])
    theta = dphase + gamma
    theta[:, eye] = 0.0

    if not allow_undefined and not np.all(defined | eye):
        m, n = np.argwhere(~defined & ~eye)[0]
        frac = float(np.mean(held[:, m, n]))
        raise PhaseUndefined(
            f"coupling ({m},{n}) below amplitude floor on {100 * frac:.1f}% of nodes")

    for arr in (alpha, beta, gamma, theta, theta_dot, held, defined):
        arr.setflags(write=False)
    return PhaseLedger(flow.times, alpha, beta, A, gamma, theta, theta_dot, held, defined,
                       flow.gauge, J)


def theta_dot_finite_difference(ledger, m, n):
    """Second-order centred differences of theta_mn (one-sided at the ends)."""
    return np.gradient(ledger.theta[:, m, n], ledger.times, edge_order=2)


def pointwise_pair_rates(model, times):
    """
    Gauge-free |A_mn| and theta_dot_mn evaluated directly at ``times``.

    Used to recount monotone segments on a refined grid without building a flow.
    """
    H = model.eval_h(times)
    E, V = jacobi_eigh(H)
    A, _, td = local_geometry(E, V, model.eval_dh(times), model.eval_d2h(times))
    return E, np.abs(A), td
