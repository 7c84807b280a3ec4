"""
Time-dependent Schrodinger propagation and the adiabatic prediction.

Both the state equation ``dpsi/dt = -i H(t) psi`` and the interaction-picture
coefficient equation are linear, so a classic RK4 step is a matrix
``P = I + h/6 (K1 + 2 K2 + 2 K3 + K4)``. Step matrices are built in batches
and multiplied together, which keeps the per-step Python overhead down to one
small matmul per grid interval. Step control halves the substep until two
successive refinements agree to ``tol`` per unit time.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DimensionMismatch, GridMismatch, StepUnderflow
from .flow import berry_phase, build_flow, dynamic_phase

MIN_STEP_REL = 1e-12
# hard cap on total RK4 substeps over the window; exceeding it counts as underflow
MAX_SUBSTEPS = 1 << 23
CHUNK_EVALS = 1 << 16
NORM_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Sampled solution on the flow grid.

    ``states[k]`` is |psi(t_k)> in the model basis; ``coefficients[k, m]`` is
    c_m(t_k) in the instantaneous-eigenstate interaction picture of the flow's
    gauge.
    """

    times: np.ndarray
    states: np.ndarray
    coefficients: np.ndarray
    method: str
    tol: float
    n_substeps: int
    error_estimate: float
    gauge: str
    norm_drift: float = field(init=False)
    coeff_norm_drift: float = field(init=False)

    def __post_init__(self):
        norms = np.linalg.norm(self.states, axis=1)
        object.__setattr__(self, "norm_drift", float(np.max(np.abs(norms - 1.0))))
        cn = np.sum(np.abs(self.coefficients) ** 2, axis=1)
        object.__setattr__(self, "coeff_norm_drift", float(np.max(np.abs(cn - 1.0))))

    @property
    def norm_ok(self):
        return self.norm_drift <= NORM_TOL and self.coeff_norm_drift <= 2 * NORM_TOL

    def populations(self, k=-1):
        return np.abs(self.coefficients[k]) ** 2


@dataclass(frozen=True, eq=False)
class AdiabaticPrediction:
    times: np.ndarray
    states: np.ndarray
    c0: np.ndarray


@dataclass(frozen=True)
class DeviationMetrics:
    max_coeff_drift: float
    final_infidelity: float
    drift_profile: np.ndarray = field(repr=False)
    final_populations: np.ndarray
    norm_drift: float

    def to_dict(self):
        return {
            "max_coeff_drift": self.max_coeff_drift,
            "final_infidelity": self.final_infidelity,
            "final_populations": [float(p) for p in self.final_populations],
            "norm_drift": self.norm_drift,
        }


def _rk4_step_matrices(M0, Mh, M1, h):
    """Linear-ODE RK4 propagators for a batch of substeps (h broadcast over the batch)."""
    d = M0.shape[-1]
    eye = np.eye(d, dtype=np.complex128)
    h = np.asarray(h)[..., None, None]
    K1 = M0
    K2 = Mh @ (eye + 0.5 * h * K1)
    K3 = Mh @ (eye + 0.5 * h * K2)
    K4 = M1 @ (eye + h * K3)
    return eye + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)


def _ordered_product(P):
    """P[..., -1, :, :] @ ... @ P[..., 0, :, :] by pairwise reduction along axis -3."""
    while P.shape[-3] > 1:
        n = P.shape[-3]
        if n % 2:
            head = P[..., :1, :, :]
            rest = P[..., 1:, :, :]
            rest = rest[..., 1::2, :, :] @ rest[..., 0::2, :, :]
            rest[..., 0, :, :] = rest[..., 0, :, :] @ head[..., 0, :, :]
            P = rest
        else:
            P = P[..., 1::2, :, :] @ P[..., 0::2, :, :]
    return P[..., 0, :, :]


def _interval_propagators(gen, times, n_sub, d):
    """RK4 propagator over each grid interval using ``n_sub`` equal substeps."""
    K = len(times) - 1
    out = np.empty((K, d, d), dtype=np.complex128)
    per_chunk = max(1, CHUNK_EVALS // (2 * n_sub + 1))
    frac = np.arange(2 * n_sub + 1) / (2.0 * n_sub)
    t_end = times[-1]
    for a in range(0, K, per_chunk):
        b = min(K, a + per_chunk)
        t0 = times[a:b]
        span = times[a + 1:b + 1] - t0
        ts = np.minimum(t0[:, None] + span[:, None] * frac[None, :], t_end)
        M = gen(ts.ravel()).reshape(b - a, 2 * n_sub + 1, d, d)
        h = (span / n_sub)[:, None]
        P = _rk4_step_matrices(M[:, 0:-1:2], M[:, 1::2], M[:, 2::2], h)
        out[a:b] = _ordered_product(P)
    return out


def _accumulate(U_steps, Y0):
    Y = np.empty((len(U_steps) + 1,) + Y0.shape, dtype=np.complex128)
    Y[0] = Y0
    y = Y0
    for k, U in enumerate(U_steps):
        y = U @ y
        Y[k + 1] = y
    return Y


def propagate_linear(gen, times, Y0, tol):
    """
    Integrate ``dY/dt = M(t) Y`` on ``times`` with step-halving RK4.

    Parameters
    ----------
    gen : callable
        Maps an array of times of shape (n,) to generators of shape (n, d, d).
    times : ndarray
        Uniform output grid; the solution is returned on these nodes.
    Y0 : ndarray, shape (d,) or (d, r)
    tol : float
        Accepted once successive halvings differ by at most ``tol`` per unit
        time (Richardson estimate ``|Y_h - Y_{h/2}| / 15``) at every node.

    Returns
    -------
    Y : ndarray, shape (K+1,) + Y0.shape
    n_sub : int
        Substeps per grid interval of the accepted solution.
    err : float
        Final error estimate.
    """
    times = np.asarray(times, dtype=float)
    Y0 = np.asarray(Y0, dtype=np.complex128)
    d = Y0.shape[0]
    T = times[-1] - times[0]
    K = len(times) - 1
    target = tol * max(T, 1.0)
    n_sub = 1
    prev = _accumulate(_interval_propagators(gen, times, n_sub, d), Y0)
    while True:
        n_sub *= 2
        h = T / (K * n_sub)
        if h < MIN_STEP_REL * T or K * n_sub > MAX_SUBSTEPS:
            raise StepUnderflow(
                f"RK4 step {h:.3e} did not reach tolerance {tol:g} within the substep budget")
        cur = _accumulate(_interval_propagators(gen, times, n_sub, d), Y0)
        with np.errstate(invalid="ignore", over="ignore"):
            err = float(np.max(np.abs(cur - prev))) / 15.0
        if np.isfinite(err) and err <= target:
            return cur, n_sub, err
        prev = cur


def _check_state(psi, d, name):
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape != (d,):
        raise DimensionMismatch(f"{name} has shape {psi.shape}, expected ({d},)")
    if abs(np.linalg.norm(psi) - 1.0) > NORM_TOL:
        raise ValueError(f"{name} must be normalized (norm {np.linalg.norm(psi):.12g})")
    return psi


def _phase_factors(flow, ledger=None):
    if ledger is not None:
        return ledger.phase
    return dynamic_phase(flow) + berry_phase(flow) + flow.jumps


def project(flow, states, ledger=None):
    """
    c_m(t_k) = exp(i(alpha_m + beta_m)) <v_m(t_k)|psi(t_k)>, with the phase
    steps of a discontinuous gauge folded into beta.
    """
    ov = np.einsum("kim,ki->km", np.conj(flow.vectors), states)
    return ov * np.exp(1j * _phase_factors(flow, ledger))


def evolve_exact(model, psi0, T, steps=2000, tol=1e-10, flow=None, ledger=None):
    """
    Propagate ``psi0`` under H(t) over [0, T] and project onto the flow frames.

    The flow (built in the aligned gauge if not supplied) fixes the grid and
    the eigenvector phases used for the coefficients. Norm drift is measured
    and stored, never corrected.
    """
    if flow is None:
        flow = build_flow(model, T, steps)
    elif abs(flow.T - T) > 1e-12 * max(T, 1.0):
        raise GridMismatch(f"flow spans [0, {flow.T}] but T = {T}")
    psi0 = _check_state(psi0, model.dim, "psi0")

    def gen(ts):
        return -1j * model.eval_h(ts)

    states, n_sub, err = propagate_linear(gen, flow.times, psi0, tol)
    coeffs = project(flow, states, ledger)
    return Trajectory(flow.times, states, coeffs, "rk4-schrodinger", tol, n_sub, err, flow.gauge)


def transition_generator(flow, ledger):
    """
    Callable ``t -> F(t)`` with ``F_mn = A_mn exp(-i(alpha_n - alpha_m + beta_n - beta_m))``.

    ``A e^{-i dbeta}`` is gauge-covariant up to a constant, hence smooth even
    where the eigenvector phase convention jumps, and is splined separately
    from the dynamic phase.
    """
    times = flow.times
    if ledger is not None:
        alpha, beta = ledger.alpha, ledger.beta + ledger.jumps
    else:
        alpha, beta = dynamic_phase(flow), berry_phase(flow) + flow.jumps
    dbeta = beta[:, None, :] - beta[:, :, None]
    S = flow.couplings * np.exp(-1j * dbeta)
    s_spline = CubicSpline(times, S, axis=0)
    a_spline = CubicSpline(times, alpha, axis=0)

    def F(ts):
        a = a_spline(ts)
        da = a[:, None, :] - a[:, :, None]
        return s_spline(ts) * np.exp(-1j * da)

    return F


def evolve_coefficients(flow, ledger, c0, T=None, tol=1e-10):
    """
    Integrate ``dc_m/dt = -sum_n F_mn c_n`` directly on the flow grid.

    ``ledger`` may be None, in which case the phases are taken from the flow.
    """
    if T is not None and abs(flow.T - T) > 1e-12 * max(T, 1.0):
        raise GridMismatch(f"flow spans [0, {flow.T}] but T = {T}")
    c0 = _check_state(c0, flow.dim, "c0")
    F = transition_generator(flow, ledger)

    def gen(ts):
        return -F(ts)

    coeffs, n_sub, err = propagate_linear(gen, flow.times, c0, tol)
    phases = np.exp(-1j * _phase_factors(flow, ledger))
    states = np.einsum("kim,km->ki", flow.vectors, coeffs * phases)
    return Trajectory(flow.times, states, coeffs, "rk4-coefficient", tol, n_sub, err, flow.gauge)


def adiabatic_state(flow, ledger, c0, k):
    """sum_n c0_n exp(-i alpha_n(t_k)) exp(-i beta_n(t_k)) |E_n(t_k)>."""
    c0 = np.asarray(c0, dtype=np.complex128)
    ph = _phase_factors(flow, ledger)[k]
    return flow.vectors[k] @ (c0 * np.exp(-1j * ph))


def adiabatic_prediction(flow, ledger, c0):
    c0 = _check_state(c0, flow.dim, "c0")
    ph = np.exp(-1j * _phase_factors(flow, ledger))
    states = np.einsum("kin,kn->ki", flow.vectors, c0[None, :] * ph)
    return AdiabaticPrediction(flow.times, states, c0)


def deviation_metrics(traj, prediction):
    """Coefficient drift along the trajectory and terminal infidelity against the prediction."""
    if traj.times.shape != prediction.times.shape or not np.array_equal(traj.times, prediction.times):
        raise GridMismatch("trajectory and prediction are sampled on different grids")
    drift = np.abs(traj.coefficients - traj.coefficients[0])
    profile = np.max(drift, axis=1)
    overlap = np.vdot(prediction.states[-1], traj.states[-1])
    infid = min(max(1.0 - abs(overlap) ** 2, 0.0), 2.0)
    return DeviationMetrics(float(np.max(profile)), float(infid), profile,
                            traj.populations(-1), traj.norm_drift)
