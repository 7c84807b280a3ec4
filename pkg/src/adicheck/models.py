"""
Parametrised time-dependent Hamiltonian families.

Every model evaluates H(t), dH/dt and d2H/dt2 on scalar or array times; array
input returns a stacked ``(len(t), d, d)`` array. Units have hbar = 1.
"""

import json
import math
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    NonHermitianSample,
    NonMonotonicTimes,
    OutOfDomain,
    TabulatedGapTooLarge,
    TooFewSamples,
)
from .linalg import check_square, is_hermitian

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

KINDS = ("constant", "rotating_spin", "landau_zener", "linear_interpolation", "tabulated")


def _times(t):
    arr = np.asarray(t, dtype=float)
    return arr, arr.ndim == 0


def _combine(coeffs, mats, scalar):
    """sum_i coeffs[i](t) * mats[i], stacked over t."""
    out = sum(np.multiply.outer(np.atleast_1d(c), m) for c, m in zip(coeffs, mats))
    return out[0] if scalar else out


class HamiltonianModel:
    """
    Base class. Subclasses implement ``_h``, ``_dh`` and ``_d2h`` on 1-d time arrays.

    ``domain`` is the closed interval on which the model may be evaluated.
    """

    kind = "abstract"

    def __init__(self, dim, domain=(-math.inf, math.inf)):
        self.dim = int(dim)
        self.domain = (float(domain[0]), float(domain[1]))

    @property
    def params(self):
        return {}

    @property
    def is_real(self):
        """True when H(t) is real in the computational basis for all t."""
        return False

    def _check_domain(self, t):
        lo, hi = self.domain
        span = hi - lo if math.isfinite(hi - lo) else 1.0
        slack = 1e-12 * max(span, 1.0)
        if np.any(t < lo - slack) or np.any(t > hi + slack):
            bad = t[(t < lo - slack) | (t > hi + slack)]
            raise OutOfDomain(f"t={float(bad.flat[0]):.6g} outside model domain [{lo}, {hi}]")

    def _evaluate(self, fn, t):
        arr, scalar = _times(t)
        flat = np.atleast_1d(arr).ravel()
        self._check_domain(flat)
        out = fn(flat)
        return out[0] if scalar else out.reshape(arr.shape + (self.dim, self.dim))

    def eval_h(self, t):
        return self._evaluate(self._h, t)

    def eval_dh(self, t):
        return self._evaluate(self._dh, t)

    def eval_d2h(self, t):
        return self._evaluate(self._d2h, t)

    def describe(self):
        return {"kind": self.kind, "params": self.params}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, params={self.params})"


class ConstantModel(HamiltonianModel):
    kind = "constant"

    def __init__(self, H):
        H = np.array(check_square(H), dtype=np.complex128)
        if not is_hermitian(H):
            raise NonHermitianSample("constant Hamiltonian is not Hermitian")
        super().__init__(H.shape[0])
        self.H = H
        self.H.setflags(write=False)

    @property
    def params(self):
        return {"h_re": self.H.real.tolist(), "h_im": self.H.imag.tolist()}

    @property
    def is_real(self):
        return not np.any(self.H.imag)

    def _h(self, t):
        return np.broadcast_to(self.H, (t.size, self.dim, self.dim)).copy()

    def _dh(self, t):
        return np.zeros((t.size, self.dim, self.dim), dtype=np.complex128)

    _d2h = _dh


class RotatingSpin(HamiltonianModel):
    """
    Spin-1/2 in a field of strength ``omega0`` tilted by ``theta`` from z and
    precessing about z at angular rate ``omega``:

        H(t) = -(omega0/2) [cos(theta) sz + sin(theta) (cos(wt) sx - sin(wt) sy)]

    With this sense of rotation the rotating-frame detuning is
    ``omega0*cos(theta) - omega``, so the drive is resonant at
    ``omega = omega0*cos(theta)``.
    """

    kind = "rotating_spin"

    def __init__(self, omega0, theta, omega):
        super().__init__(2)
        self.omega0 = float(omega0)
        self.theta = float(theta)
        self.omega = float(omega)

    @property
    def params(self):
        return {"omega0": self.omega0, "theta": self.theta, "omega": self.omega}

    def _parts(self, t, order):
        w = self.omega
        phase = w * t + order * math.pi / 2
        scale = w**order
        return np.cos(phase) * scale, np.sin(phase) * scale

    def _field(self, t, order):
        a = -0.5 * self.omega0
        st = math.sin(self.theta)
        cx, sy = self._parts(t, order)
        coeffs = [a * st * cx, -a * st * sy]
        mats = [SIGMA_X, SIGMA_Y]
        if order == 0:
            coeffs.append(np.full(t.shape, a * math.cos(self.theta)))
            mats.append(SIGMA_Z)
        return _combine(coeffs, mats, False)

    def _h(self, t):
        return self._field(t, 0)

    def _dh(self, t):
        return self._field(t, 1)

    def _d2h(self, t):
        return self._field(t, 2)


class LandauZener(HamiltonianModel):
    """H(t) = (v (t - t0) / 2) sz + (delta / 2) sx."""

    kind = "landau_zener"

    def __init__(self, v, delta, t0):
        super().__init__(2)
        self.v = float(v)
        self.delta = float(delta)
        self.t0 = float(t0)

    @property
    def params(self):
        return {"v": self.v, "delta": self.delta, "t0": self.t0}

    @property
    def is_real(self):
        return True

    def _h(self, t):
        return _combine([0.5 * self.v * (t - self.t0), np.full(t.shape, 0.5 * self.delta)],
                        [SIGMA_Z, SIGMA_X], False)

    def _dh(self, t):
        return np.broadcast_to(0.5 * self.v * SIGMA_Z, (t.size, 2, 2)).copy()

    def _d2h(self, t):
        return np.zeros((t.size, 2, 2), dtype=np.complex128)


class LinearInterpolation(HamiltonianModel):
    """H(t) = (1 - t/T) H0 + (t/T) H1 on [0, T]."""

    kind = "linear_interpolation"

    def __init__(self, H0, H1, T):
        H0 = np.array(check_square(H0), dtype=np.complex128)
        H1 = np.array(check_square(H1), dtype=np.complex128)
        if H0.shape != H1.shape:
            raise ValueError(f"endpoint shapes differ: {H0.shape} vs {H1.shape}")
        if not (is_hermitian(H0) and is_hermitian(H1)):
            raise NonHermitianSample("interpolation endpoints must be Hermitian")
        if not T > 0:
            raise ValueError("interpolation horizon T must be positive")
        super().__init__(H0.shape[0], domain=(0.0, float(T)))
        self.H0, self.H1, self.T = H0, H1, float(T)
        self._slope = (H1 - H0) / self.T

    @property
    def params(self):
        return {
            "h0_re": self.H0.real.tolist(), "h0_im": self.H0.imag.tolist(),
            "h1_re": self.H1.real.tolist(), "h1_im": self.H1.imag.tolist(),
            "T": self.T,
        }

    @property
    def is_real(self):
        return not (np.any(self.H0.imag) or np.any(self.H1.imag))

    def _h(self, t):
        s = t / self.T
        out = _combine([1.0 - s, s], [self.H0, self.H1], False)
        # exact endpoints, free of rounding in (1 - s)
        out[t == 0.0] = self.H0
        out[t == self.T] = self.H1
        return out

    def _dh(self, t):
        return np.broadcast_to(self._slope, (t.size, self.dim, self.dim)).copy()

    def _d2h(self, t):
        return np.zeros((t.size, self.dim, self.dim), dtype=np.complex128)


class TabulatedModel(HamiltonianModel):
    """
    Entrywise natural cubic spline through sampled Hermitian matrices.

    dH/dt is a central difference of the spline with step
    ``max(1e-6 * span, 1e-9)``; d2H/dt2 is the spline's own second derivative.
    """

    kind = "tabulated"

    def __init__(self, times, matrices, max_spacing=None, source=None):
        times = np.asarray(times, dtype=float)
        mats = np.asarray(matrices, dtype=np.complex128)
        if times.ndim != 1 or len(times) < 4:
            raise TooFewSamples(f"need at least 4 samples, got {len(times)}")
        if mats.ndim != 3 or mats.shape[0] != len(times) or mats.shape[1] != mats.shape[2]:
            raise ValueError(f"samples must be square matrices of equal dim, got {mats.shape}")
        if np.any(np.diff(times) <= 0):
            raise NonMonotonicTimes("sample times must be strictly increasing")
        for k, H in enumerate(mats):
            if not is_hermitian(H):
                raise NonHermitianSample(f"sample {k} (t={times[k]:.6g}) is not Hermitian")
        if max_spacing is not None and np.max(np.diff(times)) > max_spacing:
            raise TabulatedGapTooLarge(
                f"sample spacing {np.max(np.diff(times)):.6g} exceeds limit {max_spacing:.6g}")
        super().__init__(mats.shape[1], domain=(times[0], times[-1]))
        self.times = times
        self.samples = mats
        self.source = source
        self._spline = CubicSpline(times, mats, axis=0, bc_type="natural")
        self._spline2 = self._spline.derivative(2)
        self.fd_step = max(1e-6 * (times[-1] - times[0]), 1e-9)

    @property
    def params(self):
        if self.source is not None:
            return {"path": str(self.source)}
        return {"n_samples": len(self.times)}

    @property
    def is_real(self):
        return not np.any(self.samples.imag)

    def _herm(self, M):
        return 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))

    def _h(self, t):
        return self._herm(self._spline(t))

    def _dh(self, t):
        h = self.fd_step
        return self._herm((self._spline(t + h) - self._spline(t - h)) / (2 * h))

    def _d2h(self, t):
        return self._herm(self._spline2(t))


def constant(H):
    return ConstantModel(H)


def rotating_spin(omega0, theta, omega):
    return RotatingSpin(omega0, theta, omega)


def landau_zener(v, delta, t0):
    return LandauZener(v, delta, t0)


def linear_interpolation(H0, H1, T):
    return LinearInterpolation(H0, H1, T)


def load_tabulated(samples, max_spacing=None, source=None):
    """Build a tabulated model from ``(t, matrix)`` pairs."""
    samples = list(samples)
    if len(samples) < 4:
        raise TooFewSamples(f"need at least 4 samples, got {len(samples)}")
    times = [float(t) for t, _ in samples]
    mats = [np.asarray(H, dtype=np.complex128) for _, H in samples]
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise ValueError(f"samples have differing shapes {sorted(shapes)}")
    return TabulatedModel(times, np.stack(mats), max_spacing=max_spacing, source=source)


def _matrix_from(re, im, dim=None):
    re = np.asarray(re, dtype=float)
    M = re.astype(np.complex128)
    if im is not None:
        M = M + 1j * np.asarray(im, dtype=float)
    if dim is not None and M.shape != (dim, dim):
        raise ValueError(f"expected {dim}x{dim} matrix, got {M.shape}")
    return M


def tabulated_to_json(model):
    """Serialise a tabulated model to the on-disk JSON layout."""
    return {
        "dim": model.dim,
        "samples": [
            {"t": float(t), "h_re": H.real.tolist(), "h_im": H.imag.tolist()}
            for t, H in zip(model.times, model.samples)
        ],
    }


def load_tabulated_json(path, max_spacing=None):
    """
    Load ``{"dim": d, "samples": [{"t", "h_re", "h_im"}, ...]}`` from disk.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    dim = int(doc["dim"])
    samples = [(s["t"], _matrix_from(s["h_re"], s.get("h_im"), dim)) for s in doc["samples"]]
    return load_tabulated(samples, max_spacing=max_spacing, source=path)


def eval_h(model, t):
    return model.eval_h(t)


def eval_dh(model, t):
    return model.eval_dh(t)


def eval_d2h(model, t):
    return model.eval_d2h(t)
