import cmath
import math

import numpy as np
import pytest

from starkladder.model import LatticeParams, band_mean_energy, build_chain, fold_interval
from starkladder import spectra_exact as se
from starkladder import strong_field as sf

# roots of the characteristic polynomial (three-term recurrence) of the seeded
# 8x8 tridiagonal below, refined with 40-digit arithmetic
EIGS8 = np.array([
    -3.52802078666995354, -2.15783333391036964, -1.46562931470826009,
    -0.805400561599424891, 0.142750811514653985, 0.776051629272712318,
    1.13163887373742748, 3.08138327245817667,
])


def seeded_tridiag():
    rng = np.random.default_rng(12345)
    return rng.normal(size=8), rng.normal(size=7)


class TestSturm:
    def test_two_by_two(self):
        eigs = se.eigenvalues_symmetric_tridiagonal(np.zeros(2), np.ones(1))
        assert np.allclose(eigs, [-1.0, 1.0], atol=1e-13)

    def test_diagonal_matrix(self):
        d = np.array([3.0, -1.0, 2.0, 0.5])
        eigs = se.eigenvalues_symmetric_tridiagonal(d, np.zeros(3))
        assert np.allclose(eigs, np.sort(d), atol=1e-14)

    def test_single_site(self):
        assert se.eigenvalues_symmetric_tridiagonal(np.array([2.5])) == pytest.approx(2.5)

    def test_random_matrix_against_charpoly_roots(self):
        d, e = seeded_tridiag()
        eigs = se.eigenvalues_symmetric_tridiagonal(d, e)
        assert np.max(np.abs(eigs - EIGS8)) < 1e-10

    def test_window_restriction(self):
        d, e = seeded_tridiag()
        window = (-1.0, 1.0)
        eigs = se.eigenvalues_symmetric_tridiagonal(d, e, window=window)
        expected = EIGS8[(EIGS8 >= window[0]) & (EIGS8 <= window[1])]
        assert eigs.size == expected.size
        assert np.max(np.abs(eigs - expected)) < 1e-10

    def test_tolerance_scales_with_radius(self):
        chain = build_chain(LatticeParams(0.76, 0.76, 0.0, 0.5), 512)
        eigs = se.eigenvalues_symmetric_tridiagonal(chain, window=(-2, 2))
        resid = eigs / 0.5 - 0.5
        assert np.max(np.abs(resid - np.rint(resid))) * 0.5 < 1e-12 * 130


def expm2(a):
    """Exact exponential of a 2x2 matrix via its traceless decomposition."""
    c = 0.5 * (a[0, 0] + a[1, 1])
    b = a - c * np.eye(2)
    s = cmath.sqrt(b[0, 0] ** 2 + b[0, 1] * b[1, 0])
    if abs(s) < 1e-30:
        body = np.eye(2) + b
    else:
        body = cmath.cosh(s) * np.eye(2) + (cmath.sinh(s) / s) * b
    return cmath.exp(c) * body


def midpoint_monodromy(params, n_steps):
    """Independent integrator: product of exact midpoint exponentials."""
    h = 2.0 * math.pi / n_steps
    u = np.eye(2, dtype=complex)
    c = -0.5j / params.f
    for k in range(n_steps):
        theta = (k + 0.5) * h
        g12 = params.j1 + params.j2 * cmath.exp(-1j * theta)
        a = h * c * np.array([[0.5 * params.f + params.delta, g12],
                              [g12.conjugate(), -(0.5 * params.f + params.delta)]])
        u = expm2(a) @ u
    return u


class TestMonodromy:
    def test_hopping_free_lattice(self):
        mono = se.monodromy(LatticeParams(0.0, 0.0, 0.0, 0.7))
        expected = np.diag([cmath.exp(-1j * math.pi / 2), cmath.exp(1j * math.pi / 2)])
        assert np.max(np.abs(mono.matrix - expected)) < 1e-11

    @pytest.mark.parametrize("j,f", [(0.4, 0.3), (0.76, 0.5), (1.0, 2.0)])
    def test_plain_lattice_eigenphases(self, j, f):
        mono = se.monodromy(LatticeParams(j, j, 0.0, f))
        assert mono.eigenphase == pytest.approx(math.pi / 2, abs=1e-10)

    def test_unitarity_and_conjugate_pair(self):
        for params in [LatticeParams(1.0, 0.6, 0.0, 0.1),
                       LatticeParams(0.76, 0.76, 0.4, 0.8)]:
            mono = se.monodromy(params)
            u = mono.matrix
            assert np.max(np.abs(u.conj().T @ u - np.eye(2))) < 1e-10
            l1, l2 = mono.eigenvalues
            assert abs(abs(l1) - 1.0) < 1e-10
            assert abs(l2 - l1.conjugate()) < 1e-10
            det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
            assert abs(det - 1.0) < 1e-10

    def test_against_independent_midpoint_integrator(self):
        params = LatticeParams(1.0, 0.6, 0.0, 0.1)
        mono = se.monodromy(params)
        ref = midpoint_monodromy(params, 10 * mono.integration_steps)
        assert np.max(np.abs(mono.matrix - ref)) < 1e-9

    def test_field_required(self):
        with pytest.raises(ValueError):
            se.monodromy(LatticeParams(1.0, 0.6, 0.0, 0.0))


class TestFloquetLadder:
    def test_trivial_single_ladder(self):
        p = LatticeParams(0.76, 0.76, 0.0, 0.5)
        spec = se.ws_spectrum_floquet(p, range(-3, 4))
        steps = spec.energies / p.f - 0.5
        assert np.max(np.abs(steps - np.rint(steps))) < 1e-12

    def test_small_field_offsets_near_band_means(self):
        p = LatticeParams(1.0, 0.6, 0.0, 0.02)
        c = band_mean_energy(p)
        spec = se.ws_spectrum_floquet(p, range(-2, 3))
        o_minus, o_plus = spec.branch_offsets()
        assert abs(fold_interval(o_plus - c, 2 * p.f)) < 5e-3
        assert abs(fold_interval(o_minus + c, 2 * p.f)) < 5e-3

    def test_ladder_periodicity_exact(self):
        p = LatticeParams(1.0, 0.6, 0.3, 0.2)
        spec = se.ws_spectrum_floquet(p, range(-4, 5))
        for branch in (1, -1):
            diffs = np.diff(spec.select(branch))
            assert np.allclose(diffs, 2 * p.f, atol=1e-12)

    def test_levels_listing(self):
        p = LatticeParams(1.0, 0.6, 0.0, 0.5)
        spec = se.ws_spectrum_floquet(p, range(0, 2))
        levels = spec.levels
        assert len(levels) == 4
        assert {name for _, name, _ in levels} == {"plus", "minus"}


class TestTruncated:
    def test_merged_trivial_ladder(self):
        p = LatticeParams(0.76, 0.76, 0.0, 0.5)
        spec = se.ws_spectrum_truncated(p, window=(-2, 2))
        assert spec.converged.all()
        steps = spec.energies / p.f - 0.5
        assert np.max(np.abs(steps - np.rint(steps))) < 1e-10
        merged = spec.fundamental(merged=True)
        assert np.all(merged > -0.25 - 1e-9) and np.all(merged <= 0.25 + 1e-9)

    def test_cross_method_agreement_case(self):
        p = LatticeParams(1.0, 0.6, 0.0, 0.2)
        trunc = se.ws_spectrum_truncated(p, window=(-3, 3))
        floq = se.ws_spectrum_floquet(p, range(-12, 13))
        for energy, conv in zip(trunc.energies, trunc.converged):
            if conv:
                assert np.min(np.abs(floq.energies - energy)) < 1e-8

    def test_cross_method_agreement_random_parameters(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            j1, j2 = rng.uniform(0.3, 1.2, size=2)
            delta = rng.uniform(0.0, 0.5)
            f = rng.uniform(0.05, 2.0)
            p = LatticeParams(j1, j2, delta, f)
            trunc = se.ws_spectrum_truncated(p, window=(-1.5, 1.5))
            floq = se.ws_spectrum_floquet(
                p, range(-int(3 + 2 / f) - 2, int(3 + 2 / f) + 3))
            for energy, conv in zip(trunc.energies, trunc.converged):
                if conv:
                    assert np.min(np.abs(floq.energies - energy)) < 1e-8

    def test_truncated_ladder_spacing_away_from_edges(self):
        p = LatticeParams(1.0, 0.6, 0.0, 0.2)
        spec = se.ws_spectrum_truncated(p, window=(-2, 2))
        for branch in (1, -1):
            energies = spec.select(branch)
            assert np.max(np.abs(np.diff(energies) - 2 * p.f)) < 1e-9

    def test_chiral_symmetry_of_fundamental_domain(self):
        p = LatticeParams(1.0, 0.6, 0.0, 0.3)
        spec = se.ws_spectrum_truncated(p, window=(-2, 2))
        folded = np.sort(spec.fundamental())
        mirrored = np.sort(fold_interval(-spec.energies, 2 * p.f))
        assert np.max(np.abs(folded - mirrored)) < 1e-9

    def test_strong_field_offsets_match_expansion(self):
        p = LatticeParams(0.76, 0.76, 0.4, 5.0)
        spec = se.ws_spectrum_truncated(p, window=(-12, 12))
        o_minus, o_plus = spec.branch_offsets()
        pi1, _ = sf.pi_coefficients(p)
        predicted = 0.5 * p.f + p.epsilon2 * pi1
        assert abs(o_plus - predicted) < 5e-3
        assert abs(o_minus + predicted) < 5e-3

    def test_wide_window_rejected(self):
        p = LatticeParams(1.0, 0.6, 0.0, 0.2)
        with pytest.raises(ValueError):
            se.ws_spectrum_truncated(p, n_sites=64, window=(-50, 50))


class TestCrossings:
    def test_ssh_crossing_near_nine(self):
        p = LatticeParams(1.0, 0.6, 0.0, 0.1)
        found = se.find_avoided_crossings(p, (8.5, 9.5), resolution=120)
        assert len(found) == 1
        assert found[0].inv_f_star == pytest.approx(9.0, abs=0.3)
        assert found[0].gap > 0

    def test_single_ladder_has_no_crossings(self):
        p = LatticeParams(0.76, 0.76, 0.0, 0.1)
        assert se.find_avoided_crossings(p, (4.0, 8.0), resolution=100) == []

    def test_gap_symmetric_under_branch_exchange(self):
        p = LatticeParams(0.76, 0.76, 0.4, 0.1)
        z = 3.1578
        gap = se._gap_at(p, z)
        swapped = se._gap_at(LatticeParams(p.j2, p.j1, p.delta, p.f), z)
        assert gap == pytest.approx(swapped, rel=1e-9)

    def test_input_validation(self):
        p = LatticeParams(1.0, 0.6, 0.0, 0.1)
        with pytest.raises(ValueError):
            se.find_avoided_crossings(p, (2.0, 1.0), resolution=150)
        with pytest.raises(ValueError):
            se.find_avoided_crossings(p, (1.0, 2.0), resolution=50)
