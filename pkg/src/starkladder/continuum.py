"""Plane-wave Bloch solver for the continuous double-periodic optical lattice.

The potential V(x) = V0 + V1 cos(2 pi x + phi1) + V2 cos(4 pi x + phi2) has
period one (two wells per period); quasimomentum lives in k in [-pi, pi).
Diagonalization happens in the plane-wave basis e^{i(k + 2 pi m)x} with a
cyclic-Jacobi Hermitian eigensolver, and the two lowest bands can be reduced
to effective tight-binding parameters by least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import NonConvergedError

_MAX_JACOBI_SIZE = 101

# Kinetic prefactor of the dimensionless Hamiltonian: energies are measured
# in units of the short-lattice recoil (4 pi)^2 / 2, the depth scale of the
# wells formed by the 4 pi harmonic.  Amplitudes |V| ~ 0.3 then bind a
# narrow two-band doublet inside the potential range; with a literal
# (k + 2 pi m)^2 / 2 the same amplitudes describe a nearly free particle and
# no tight-binding reduction exists.
_KINETIC = 1.0 / (16.0 * math.pi**2)


@dataclass(frozen=True)
class ContinuumPotential:
    """Double-periodic optical-lattice potential, period 1, real amplitudes."""

    v0: float = 0.0
    v1: float = 0.0
    v2: float = 0.0
    phi1: float = 0.0
    phi2: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (self.v0 + self.v1 * np.cos(2.0 * np.pi * x + self.phi1)
                + self.v2 * np.cos(4.0 * np.pi * x + self.phi2))


@dataclass
class ContinuumBands:
    """Bloch bands on a quasimomentum grid, ascending per k."""

    k_grid: np.ndarray
    energies: np.ndarray  # shape (nk, n_bands)
    cutoff: int
    converged: bool


def hermitian_eigen_small(matrix: np.ndarray, vectors: bool = False,
                          tol: float = 1e-13, max_sweeps: int = 60):
    """All eigenvalues of a complex Hermitian matrix by cyclic Jacobi rotations.

    Size is capped at 101 (the plane-wave cutoffs used here); non-Hermitian
    input is rejected.  With ``vectors=True`` also returns the eigenvector
    matrix (columns), which makes the residual check ||A v - lambda v||
    available to callers on demand.
    """
    a = np.array(matrix, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > _MAX_JACOBI_SIZE:
        raise ValueError(f"matrix size {n} exceeds the {_MAX_JACOBI_SIZE} cap")
    scale = max(float(np.max(np.abs(a))), 1e-300)
    if float(np.max(np.abs(a - a.conj().T))) > 1e-12 * scale:
        raise ValueError("matrix is not Hermitian to 1e-12")
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=complex)

    def off_norm():
        stripped = a.copy()
        np.fill_diagonal(stripped, 0.0)
        return float(np.linalg.norm(stripped))

    threshold = tol * scale * n
    for _ in range(max_sweeps):
        if off_norm() <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                app = a[p, p].real
                aqq = a[q, q].real
                phase = apq / abs(apq)
                tau = (aqq - app) / (2.0 * abs(apq))
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                sp = s * phase
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - np.conj(sp) * col_q
                a[:, q] = sp * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - sp * row_q
                a[q, :] = np.conj(sp) * row_p + c * row_q
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - np.conj(sp) * vq
                v[:, q] = sp * vp + c * vq
    else:
        raise NonConvergedError("Jacobi sweeps did not reach the off-diagonal tolerance")

    values = np.real(np.diag(a))
    order = np.argsort(values)
    if vectors:
        return values[order], v[:, order]
    return values[order]


def _bloch_matrix(pot: ContinuumPotential, k: float, cutoff: int) -> np.ndarray:
    if cutoff < 21 or cutoff % 2 == 0:
        raise ValueError("cutoff must be an odd plane-wave count of at least 21")
    m_max = cutoff // 2
    m = np.arange(-m_max, m_max + 1)
    h = np.zeros((cutoff, cutoff), dtype=complex)
    np.fill_diagonal(h, _KINETIC * (k + 2.0 * np.pi * m) ** 2 + pot.v0)
    c1 = 0.5 * pot.v1 * np.exp(1j * pot.phi1)
    c2 = 0.5 * pot.v2 * np.exp(1j * pot.phi2)
    idx = np.arange(cutoff - 1)
    h[idx + 1, idx] = c1
    h[idx, idx + 1] = np.conj(c1)
    idx = np.arange(cutoff - 2)
    h[idx + 2, idx] = c2
    h[idx, idx + 2] = np.conj(c2)
    return h


def continuum_bloch_bands(pot: ContinuumPotential, k: float, cutoff: int = 41,
                          n_bands: int = 8) -> tuple[np.ndarray, bool]:
    """Lowest Bloch bands at quasimomentum k with a convergence verdict.

    The verdict compares against a basis enlarged by five reciprocal vectors
    on each side; converged means the returned bands moved by less than
    1e-10.
    """
    values = hermitian_eigen_small(_bloch_matrix(pot, k, cutoff))[:n_bands]
    bigger = hermitian_eigen_small(_bloch_matrix(pot, k, cutoff + 10))[:n_bands]
    converged = bool(np.max(np.abs(values - bigger)) < 1e-10)
    return values, converged


def band_structure(pot: ContinuumPotential, k_grid, cutoff: int = 41,
                   n_bands: int = 8) -> ContinuumBands:
    """Assemble ContinuumBands over a quasimomentum grid."""
    k_grid = np.asarray(k_grid, dtype=float)
    energies = np.empty((k_grid.size, n_bands))
    all_ok = True
    for i, k in enumerate(k_grid):
        energies[i], ok = continuum_bloch_bands(pot, float(k), cutoff, n_bands)
        all_ok = all_ok and ok
    return ContinuumBands(k_grid=k_grid, energies=energies, cutoff=cutoff,
                          converged=all_ok)


@dataclass(frozen=True)
class TightBindingFit:
    """Effective tight-binding parameters extracted from the lowest doublet."""

    j1: float
    j2: float
    delta: float
    offset: float
    residual: float
    delta_sign: int
    poor_fit: bool


def fit_tight_binding(bands: ContinuumBands) -> TightBindingFit:
    """Least-squares reduction of the two lowest bands to the two-band model.

    Fits offset -+ sqrt(delta^2 + j1^2 + j2^2 + 2 j1 j2 cos k) to the doublet
    (the tight-binding zone is half the continuum one, kappa = k/2).  The
    dispersion constrains only the two combinations delta^2 + j1^2 + j2^2 and
    j1*j2, so delta is not identifiable from band energies alone; the fit
    returns the canonical representative with delta = 0 and j1 >= j2.  Any
    other (j1, j2, delta) giving the same combinations produces identical
    bands.  A residual above 10% of the doublet bandwidth sets ``poor_fit``.
    """
    if bands.energies.shape[1] < 2:
        raise ValueError("need at least two bands to fit")
    k = bands.k_grid
    lower = bands.energies[:, 0]
    upper = bands.energies[:, 1]

    half_split = 0.5 * (upper - lower)
    design = np.vstack([np.ones_like(k), np.cos(k)]).T
    lin, *_ = np.linalg.lstsq(design, half_split**2, rcond=None)
    p0 = max(float(lin[0]), 1e-12)
    q0 = min(max(float(lin[1]) / 2.0, 0.0), 0.5 * p0)
    x0 = np.array([p0, q0, float(np.mean(0.5 * (upper + lower)))])

    def model(x):
        p, q, offset = x
        root = np.sqrt(np.maximum(p + 2.0 * q * np.cos(k), 0.0))
        return np.concatenate([(offset - root) - lower, (offset + root) - upper])

    sol = least_squares(model, x0=x0, bounds=([0.0, 0.0, -np.inf], np.inf))
    p, q, offset = sol.x
    q = min(q, 0.5 * p)
    j_sum = math.sqrt(max(p + 2.0 * q, 0.0))
    j_dif = math.sqrt(max(p - 2.0 * q, 0.0))
    j1 = 0.5 * (j_sum + j_dif)
    j2 = 0.5 * (j_sum - j_dif)
    residual = float(np.sqrt(np.mean(sol.fun**2)))
    bandwidth = float(upper.max() - lower.min())
    return TightBindingFit(
        j1=float(j1), j2=float(j2), delta=0.0, offset=float(offset),
        residual=residual, delta_sign=0,
        poor_fit=bool(residual > 0.1 * bandwidth),
    )
