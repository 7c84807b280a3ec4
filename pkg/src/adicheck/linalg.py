"""
Dense complex linear algebra for small Hermitian matrices.

The eigensolver is a cyclic Jacobi iteration vectorised over a leading batch
axis, so a whole time grid of Hamiltonians is diagonalised in one call.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch, NotHermitian

MAX_DIM = 32
HERMITIAN_RTOL = 1e-12
MAX_SWEEPS = 60


def hermiticity_defect(H):
    """Return max|H - H^dagger| over the trailing two axes (scalar or per batch)."""
    H = np.asarray(H)
    return np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2))), axis=(-2, -1))


def is_hermitian(H, rtol=HERMITIAN_RTOL):
    H = np.asarray(H)
    scale = 1.0 + np.max(np.abs(H), axis=(-2, -1))
    return np.all(hermiticity_defect(H) <= rtol * scale)


def check_square(H):
    H = np.asarray(H)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise DimensionMismatch(f"expected square matrices, got shape {H.shape}")
    if H.shape[-1] < 1:
        raise DimensionMismatch("matrix dimension must be positive")
    return H


def check_hermitian(H, rtol=HERMITIAN_RTOL):
    H = check_square(H)
    if not is_hermitian(H, rtol):
        raise NotHermitian(f"Hermiticity defect {float(np.max(hermiticity_defect(H))):.3e}")
    return H


def jacobi_eigh(H, tol=1e-15, max_sweeps=MAX_SWEEPS):
    """
    Diagonalise a batch of Hermitian matrices with cyclic Jacobi rotations.

    Parameters
    ----------
    H : array_like, shape (..., d, d)
        Hermitian matrices. Hermiticity is assumed, not checked.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm of every matrix falls
        below ``tol`` times its full Frobenius norm.
    max_sweeps : int
        Raise :class:`ConvergenceFailure` beyond this many sweeps.

    Returns
    -------
    E : ndarray, shape (..., d)
        Eigenvalues, ascending.
    V : ndarray, shape (..., d, d)
        Orthonormal eigenvectors as columns, in the raw phase convention of
        the rotation sequence.
    """
    H = check_square(H)
    batch_shape = H.shape[:-2]
    d = H.shape[-1]
    A = np.array(H, dtype=np.complex128).reshape((-1, d, d))
    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    n = A.shape[0]
    V = np.broadcast_to(np.eye(d, dtype=np.complex128), (n, d, d)).copy()

    fro2 = np.sum(np.abs(A) ** 2, axis=(1, 2))
    tiny = np.finfo(float).tiny
    offmask = ~np.eye(d, dtype=bool)
    pairs = [(p, q) for p in range(d - 1) for q in range(p + 1, d)]
    for sweep in range(max_sweeps + 1):
        off2 = np.sum(np.abs(A[:, offmask]) ** 2, axis=1)
        if np.all(off2 <= tol * tol * fro2 + tiny):
            break
        if sweep == max_sweeps:
            raise ConvergenceFailure(f"Jacobi did not converge in {max_sweeps} sweeps")
        for p, q in pairs:
            apq = A[:, p, q]
            b = np.abs(apq)
            active = b > tiny
            if not np.any(active):
                continue
            safe_b = np.where(active, b, 1.0)
            phase = np.where(active, apq / safe_b, 1.0)
            app = A[:, p, p].real
            aqq = A[:, q, q].real
            theta = (aqq - app) / (2.0 * safe_b)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            pc = np.conj(phase)
            U = np.empty((n, 2, 2), dtype=np.complex128)
            U[:, 0, 0] = c
            U[:, 0, 1] = s
            U[:, 1, 0] = -s * pc
            U[:, 1, 1] = c * pc
            idx = [p, q]
            A[:, :, idx] = A[:, :, idx] @ U
            A[:, idx, :] = np.conj(np.swapaxes(U, 1, 2)) @ A[:, idx, :]
            V[:, :, idx] = V[:, :, idx] @ U
            A[:, p, q] = 0.0
            A[:, q, p] = 0.0
            A[:, p, p] = A[:, p, p].real
            A[:, q, q] = A[:, q, q].real

    E = np.diagonal(A, axis1=1, axis2=2).real.copy()
    order = np.argsort(E, axis=1, kind="stable")
    E = np.take_along_axis(E, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    return E.reshape(batch_shape + (d,)), V.reshape(batch_shape + (d, d))


def default_gap_tol(eigenvalues, rel=1e-8):
    """Adjacent-gap threshold below which a spectrum counts as degenerate."""
    E = np.asarray(eigenvalues)
    return rel * (E[..., -1] - E[..., 0])


@dataclass(frozen=True)
class EigenFrame:
    """Spectral decomposition of H at one time: ascending energies, column eigenvectors."""

    t: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degenerate: bool = False
    gap_tol: float = field(default=0.0, repr=False)

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ np.conj(V.T)

    def residual(self, H):
        """max_n ||H v_n - E_n v_n||."""
        R = np.asarray(H) @ self.eigenvectors - self.eigenvectors * self.eigenvalues
        return float(np.max(np.linalg.norm(R, axis=0)))

    def orthonormality_defect(self):
        V = self.eigenvectors
        return float(np.max(np.abs(np.conj(V.T) @ V - np.eye(self.dim))))


def _tie_break_order(E, V, scale):
    """Ascending eigenvalues; near-equal values ordered by |amplitudes| lexicographically."""
    order = list(np.argsort(E, kind="stable"))
    tie = 1e-12 * scale
    out = []
    i = 0
    while i < len(order):
        j = i + 1
        while j < len(order) and E[order[j]] - E[order[j - 1]] <= tie:
            j += 1
        group = order[i:j]
        if len(group) > 1:
            group.sort(key=lambda k: tuple(np.round(np.abs(V[:, k]), 12)))
        out.extend(group)
        i = j
    return np.array(out, dtype=int)


def hermitian_eig(H, t=0.0, gap_tol=None):
    """
    Eigen-decomposition of a single Hermitian matrix.

    Raises NotHermitian if the symmetry check fails. The returned frame is
    flagged degenerate when an adjacent gap is below ``gap_tol`` (default
    ``1e-8`` times the spectral range).
    """
    H = check_hermitian(H)
    if H.ndim != 2:
        raise DimensionMismatch("hermitian_eig takes a single matrix; use jacobi_eigh for batches")
    d = H.shape[0]
    if d > MAX_DIM:
        raise DimensionMismatch(f"dimension {d} exceeds supported maximum {MAX_DIM}")
    E, V = jacobi_eigh(H)
    scale = 1.0 + float(np.max(np.abs(H)))
    order = _tie_break_order(E, V, scale)
    E, V = E[order], V[:, order]
    if gap_tol is None:
        gap_tol = float(default_gap_tol(E))
    degenerate = False
    if d > 1:
        min_gap = float(np.min(np.diff(E)))
        degenerate = min_gap < gap_tol or min_gap <= 0.0
    for a in (E, V):
        a.setflags(write=False)
    return EigenFrame(float(t), E, V, degenerate, float(gap_tol))


def apply(H, v):
    """Matrix-vector product H v."""
    H = np.asarray(H)
    v = np.asarray(v)
    if H.ndim != 2 or v.ndim != 1 or H.shape[1] != v.shape[0]:
        raise DimensionMismatch(f"cannot apply {H.shape} to {v.shape}")
    return H @ v


def inner(u, v):
    """<u|v>, conjugate-linear in the first slot."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionMismatch(f"inner product of shapes {u.shape} and {v.shape}")
    return complex(np.vdot(u, v))


def normalized(v, atol=1e-8):
    v = np.asarray(v, dtype=np.complex128)
    return abs(np.linalg.norm(v) - 1.0) <= atol
