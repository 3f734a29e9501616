"""Double-periodic tight-binding lattice: parameters, Bloch bands, tilted chain.

Conventions (hbar = 1, nearest-site spacing a = 1):

* a unit cell holds sites A and B; cell l puts A at x = 2l - 1/2 and B at
  x = 2l + 1/2, so the potential origin x0 = 0 sits mid-bond inside cell 0;
* ``j1`` is the intracell hopping (A_l - B_l), ``j2`` the intercell hopping
  (B_l - A_{l+1});
* A sites carry on-site energy -delta, B sites +delta;
* the static field adds F*x, i.e. 2F(l - 1/4) on A and 2F(l + 1/4) on B.

With this labeling (1, 0.6) is the trivial dimerization (Zak phase 0) and
(0.6, 1) the topological one (Zak phase 1/2), matching the spectra produced
by every solver in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad


@dataclass(frozen=True)
class LatticeParams:
    """The four parameters of the tilted double-periodic chain."""

    j1: float
    j2: float
    delta: float = 0.0
    f: float = 0.0

    def __post_init__(self):
        for name in ("j1", "j2", "delta", "f"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.j1 < 0 or self.j2 < 0:
            raise ValueError("hoppings must be non-negative; phases are gauged away")
        if self.f < 0:
            raise ValueError("field f must be non-negative")

    def require_field(self) -> None:
        """Raise unless f > 0 (any Wannier-Stark computation needs a tilt)."""
        if self.f <= 0:
            raise ValueError("this operation requires a positive field f")

    @property
    def epsilon1(self) -> float:
        """Hopping-staggering coupling (j2 - j1)/F of the merged-ladder regime."""
        self.require_field()
        return (self.j2 - self.j1) / self.f

    @property
    def epsilon2(self) -> float:
        """On-site coupling delta/F of the merged-ladder regime."""
        self.require_field()
        return self.delta / self.f

    @property
    def omega(self) -> float:
        """Rabi frequency 2J/F of the mapped driven two-level system, J = (j1+j2)/2."""
        self.require_field()
        return (self.j1 + self.j2) / self.f

    def with_field(self, f: float) -> "LatticeParams":
        return LatticeParams(self.j1, self.j2, self.delta, f)


@dataclass(frozen=True)
class BlochBandSample:
    """Band energies at one quasimomentum of the reduced zone [-pi/2, pi/2)."""

    kappa: float
    e_minus: float
    e_plus: float


@dataclass(frozen=True)
class ChainHamiltonian:
    """Real symmetric tridiagonal matrix of the truncated tilted chain.

    ``diagonal`` holds the on-site energies in site order A,B,A,B,...;
    ``off_diagonal`` the N-1 bond amplitudes alternating j1 (intracell) and
    j2 (intercell).  Cells run symmetrically about l = 0.
    """

    size: int
    diagonal: np.ndarray
    off_diagonal: np.ndarray

    def to_dense(self) -> np.ndarray:
        h = np.diag(self.diagonal)
        idx = np.arange(self.size - 1)
        h[idx, idx + 1] = self.off_diagonal
        h[idx + 1, idx] = self.off_diagonal
        return h

    @property
    def positions(self) -> np.ndarray:
        """Site coordinates x_i; the potential energy is f * x_i."""
        n_cells = self.size // 2
        return np.arange(self.size) - 2 * (n_cells // 2) - 0.5


def fold_interval(values, width):
    """Reduce energies to the half-open fundamental domain (-width/2, width/2]."""
    values = np.asarray(values, dtype=float)
    folded = values - width * np.ceil(values / width - 0.5)
    return folded if folded.ndim else float(folded)


def reduce_zone(kappa):
    """Fold quasimomenta into the reduced Brillouin zone [-pi/2, pi/2)."""
    kappa = np.asarray(kappa, dtype=float)
    folded = np.mod(kappa + np.pi / 2, np.pi) - np.pi / 2
    return folded if folded.ndim else float(folded)


def bloch_dispersion(params: LatticeParams, kappa):
    """Two Bloch bands E_-(kappa) <= 0 <= E_+(kappa) of the untilted lattice.

    E_pm = +-sqrt(delta^2 + j1^2 + j2^2 + 2 j1 j2 cos 2 kappa); kappa is folded
    into [-pi/2, pi/2) first.  Accepts scalars or arrays.
    """
    kappa = reduce_zone(kappa)
    e_plus = np.sqrt(
        params.delta**2
        + params.j1**2
        + params.j2**2
        + 2.0 * params.j1 * params.j2 * np.cos(2.0 * np.asarray(kappa))
    )
    return -e_plus, e_plus


def band_mean_energy(params: LatticeParams) -> float:
    """Mean energy C of the upper Bloch band over the reduced zone.

    C = (1/pi) * integral of E_+(kappa) over [-pi/2, pi/2); the lower band's
    mean is exactly -C.  Adaptive quadrature, absolute tolerance 1e-12.
    """

    def integrand(kappa: float) -> float:
        return bloch_dispersion(params, kappa)[1]

    value, _ = quad(integrand, -np.pi / 2, np.pi / 2, epsabs=1e-12, epsrel=1e-12, limit=200)
    return value / np.pi


def build_chain(params: LatticeParams, n_sites: int) -> ChainHamiltonian:
    """Truncated chain Hamiltonian with n_sites sites (n_sites even, >= 2).

    f = 0 is allowed (band-projector construction); odd n_sites is rejected.
    """
    if n_sites < 2 or n_sites % 2 != 0:
        raise ValueError("n_sites must be even and at least 2")
    n_cells = n_sites // 2
    cells = np.arange(n_cells) - n_cells // 2

    diagonal = np.empty(n_sites)
    diagonal[0::2] = 2.0 * params.f * (cells - 0.25) - params.delta
    diagonal[1::2] = 2.0 * params.f * (cells + 0.25) + params.delta

    off_diagonal = np.empty(n_sites - 1)
    off_diagonal[0::2] = params.j1
    off_diagonal[1::2] = params.j2
    return ChainHamiltonian(size=n_sites, diagonal=diagonal, off_diagonal=off_diagonal)


def _tilted_band_mean(params: LatticeParams) -> float:
    """Mean of the upper instantaneous eigenvalue sqrt((delta+F/2)^2 + |h|^2).

    Reduces to band_mean_energy at f = 0; used as the branch anchor of the
    Floquet ladders and as the adiabatic constant C_+.
    """
    dz = params.delta + 0.5 * params.f
    rad = dz * dz + params.j1**2 + params.j2**2
    cross = 2.0 * params.j1 * params.j2

    def integrand(theta: float) -> float:
        return np.sqrt(rad + cross * np.cos(theta))

    value, _ = quad(integrand, 0.0, 2.0 * np.pi, epsabs=1e-12, epsrel=1e-12, limit=200)
    return value / (2.0 * np.pi)


def _bloch_zak_plus(params: LatticeParams, grid: int = 4096) -> float:
    """Zak phase (units of 2pi) of the upper band of the untilted lattice.

    Discrete Wilson loop of the upper eigenvector of the generating-function
    matrix at f = 0 over theta in [0, 2pi); exactly quantized to 0 or 1/2
    (mod 1) when delta = 0.
    """
    theta = np.linspace(0.0, 2.0 * np.pi, grid, endpoint=False)
    h = params.j1 + params.j2 * np.exp(1j * theta)
    r = np.sqrt(params.delta**2 + np.abs(h) ** 2)
    top = params.delta + r
    norm = np.sqrt(top**2 + np.abs(h) ** 2)
    y = np.stack([top / norm, h / norm])
    y_next = np.roll(y, -1, axis=1)
    overlaps = np.sum(y.conj() * y_next, axis=0)
    return -float(np.sum(np.angle(overlaps))) / (2.0 * np.pi)
