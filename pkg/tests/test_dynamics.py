import math

import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

from starkladder.errors import EdgeContaminationError
from starkladder.model import LatticeParams, build_chain
from starkladder import dynamics as dyn
from starkladder import spectra_exact as se


def spectral_propagate(params, psi0, t):
    chain = build_chain(params, psi0.size)
    values, vectors = eigh_tridiagonal(chain.diagonal, chain.off_diagonal)
    return vectors @ (np.exp(-1j * values * t) * (vectors.conj().T @ psi0))


class TestBandProjectors:
    def test_invariants(self):
        pl, pu = dyn.band_projectors(LatticeParams(1.0, 0.6, 0.0), 64)
        p = pl.matrix()
        q = pu.matrix()
        assert np.max(np.abs(p @ p - p)) < 1e-10
        assert np.max(np.abs(p + q - np.eye(64))) < 1e-10
        assert np.max(np.abs(p @ q)) < 1e-10

    def test_atomic_limit_selects_a_sites(self):
        pl, _ = dyn.band_projectors(LatticeParams(0.0, 0.0, 0.5), 16)
        expected = np.zeros((16, 16))
        expected[::2, ::2] = np.eye(8)
        assert np.max(np.abs(pl.matrix() - expected)) < 1e-12

    def test_band_touching_rejected(self):
        with pytest.raises(ValueError):
            dyn.band_projectors(LatticeParams(0.7, 0.7, 0.0), 32)

    def test_untilted_ground_state_lives_in_lower_band(self):
        params = LatticeParams(1.0, 0.6, 0.0)
        chain = build_chain(params, 128)
        _, vectors = eigh_tridiagonal(chain.diagonal, chain.off_diagonal)
        ground = vectors[:, 0].astype(complex)
        pl, _ = dyn.band_projectors(params, 128)
        assert pl.population(ground) > 0.99

    def test_lower_band_state_is_band_pure(self):
        params = LatticeParams(1.0, 0.6, 0.0, 0.1)
        state = dyn.lower_band_state(params, 256, 0.4, 8.0)
        _, pu = dyn.band_projectors(params, 256)
        assert state.norm == pytest.approx(1.0, abs=1e-12)
        assert pu.population(state.amplitudes) < 1e-20


class TestPropagate:
    def test_hopping_free_chain_only_acquires_phases(self):
        params = LatticeParams(0.0, 0.0, 0.2, 0.3)
        n = 64
        psi = np.zeros(n, dtype=complex)
        psi[n // 2 - 1: n // 2 + 2] = [0.5, 0.7, 0.5]
        psi /= np.linalg.norm(psi)
        out = dyn.propagate(dyn.ChainState(psi), params, None, np.array([3.7]))
        assert np.max(np.abs(np.abs(out[-1].amplitudes) - np.abs(psi))) < 1e-12

    def test_norm_preserved_and_matches_spectral(self):
        params = LatticeParams(1.0, 0.6, 0.0, 1.0 / 9.0)
        state = dyn.lower_band_state(params, 256, 0.3, 8.0)
        t_b = math.pi / params.f
        out = dyn.propagate(state, params, None, np.array([0.5 * t_b, t_b]))
        assert abs(out[-1].norm - 1.0) < 1e-8
        reference = spectral_propagate(params, state.amplitudes, t_b)
        assert np.max(np.abs(out[-1].amplitudes - reference)) < 1e-8

    def test_single_ladder_dynamics_is_bloch_periodic(self):
        params = LatticeParams(0.76, 0.76, 0.0, 0.25)
        state = dyn.lower_band_state(LatticeParams(0.76, 0.76, 0.01, params.f),
                                     384, 0.0, 10.0)
        t_b = math.pi / params.f
        out = dyn.propagate(state, params, None, np.array([t_b]))
        density0 = np.abs(state.amplitudes) ** 2
        density1 = np.abs(out[-1].amplitudes) ** 2
        assert np.max(np.abs(density1 - density0)) < 1e-6

    def test_energy_conserved_at_constant_field(self):
        params = LatticeParams(1.0, 0.6, 0.0, 0.2)
        chain = build_chain(params, 256)
        state = dyn.lower_band_state(params, 256, 0.2, 8.0)

        def mean_energy(psi):
            h_psi = chain.diagonal * psi
            h_psi[:-1] += chain.off_diagonal * psi[1:]
            h_psi[1:] += chain.off_diagonal * psi[:-1]
            return np.real(np.vdot(psi, h_psi))

        out = dyn.propagate(state, params, None,
                            np.array([5.0, 40.0, 3 * math.pi / params.f]))
        e0 = mean_energy(state.amplitudes)
        for snapshot in out:
            assert abs(mean_energy(snapshot.amplitudes) - e0) < 1e-8

    def test_acceleration_theorem(self):
        params = LatticeParams(1.0, 0.6, 0.0, 1.0 / 9.0)
        state = dyn.lower_band_state(params, 384, 0.0, 12.0)
        t_b = math.pi / params.f
        t_grid = np.linspace(0.0, 0.2 * t_b, 5)
        out = dyn.propagate(state, params, None, t_grid)
        kappas = np.array([dyn.mean_quasimomentum(s.amplitudes) for s in out])
        slopes = np.diff(kappas) / np.diff(t_grid)
        assert np.allclose(slopes, -params.f, rtol=0.05)

    def test_edge_contamination_detected(self):
        params = LatticeParams(1.0, 0.6, 0.0, 0.05)
        with pytest.raises(EdgeContaminationError):
            state = dyn.lower_band_state(params, 64, 0.0, 12.0)
            dyn.propagate(state, params, None, np.array([1.0]))

    def test_time_grid_validation(self):
        params = LatticeParams(1.0, 0.6, 0.0, 0.2)
        state = dyn.lower_band_state(params, 256, 0.0, 8.0)
        with pytest.raises(ValueError):
            dyn.propagate(state, params, None, np.array([2.0, 1.0]))


class TestRampProtocol:
    def test_linear_inv_f_endpoints(self):
        ramp = dyn.RampProtocol.linear_inv_f(9.4, 8.7, 100.0)
        assert ramp.field_at(0.0) == pytest.approx(1 / 9.4)
        assert ramp.field_at(100.0) == pytest.approx(1 / 8.7)
        assert ramp.duration == pytest.approx(100.0)

    def test_field_must_stay_positive(self):
        with pytest.raises(ValueError):
            dyn.RampProtocol(np.array([0.0, 1.0]), np.array([0.1, -0.1]))
        with pytest.raises(ValueError):
            dyn.RampProtocol(np.array([0.0, 0.0]), np.array([0.1, 0.1]))


class TestMeanUpperPopulation:
    def test_baseline_small_between_crossings(self):
        # the delta = 0.2 resonances are broad, so the log-scale baseline only
        # drops well below the peaks at weak fields; probe one inter-peak
        # window there and take its floor
        params = LatticeParams(0.76, 0.76, 0.2, 0.05)
        zs = np.linspace(19.0, 20.2, 7)
        floor = min(dyn.mean_upper_population(params, 1.0 / z,
                                              n_time_samples=0).p_upper_mean
                    for z in zs)
        assert floor < 0.1

    def test_peak_at_crossing_approaches_half(self):
        params = LatticeParams(0.76, 0.76, 0.4, 0.1)
        z_star = se.find_avoided_crossings(params, (2.9, 3.4), resolution=100)[0].inv_f_star
        short = dyn.mean_upper_population(params, 1.0 / z_star, n_time_samples=0)
        long = dyn.mean_upper_population(params, 1.0 / z_star, n_bloch_periods=200,
                                         n_time_samples=0)
        assert short.p_upper_mean > 0.4
        assert long.p_upper_mean == pytest.approx(0.5, abs=0.02)

    def test_population_bounds_and_trace(self):
        params = LatticeParams(0.76, 0.76, 0.4, 0.25)
        trace = dyn.mean_upper_population(params, n_time_samples=64)
        assert 0.0 <= trace.p_upper_mean <= 1.0
        assert np.all(trace.p_upper >= -1e-12) and np.all(trace.p_upper <= 1.0 + 1e-12)
        assert trace.p_upper[0] < 1e-10  # starts band-pure

    def test_trace_beats_at_ladder_differences(self):
        params = LatticeParams(1.0, 0.6, 0.0, 0.25)
        trace = dyn.mean_upper_population(params, n_bloch_periods=40.0,
                                          kappa_grid=8, n_time_samples=2048)
        signal = trace.p_upper - trace.p_upper.mean()
        freqs = np.fft.rfftfreq(signal.size, d=trace.times[1] - trace.times[0])
        amp = np.abs(np.fft.rfft(signal))
        peak_freq = freqs[1: ][np.argmax(amp[1:])] * 2 * math.pi
        spec = se.ws_spectrum_floquet(params, range(-30, 31))
        diffs = np.abs(spec.energies[:, None] - spec.energies[None, :]).ravel()
        resolution = 2 * math.pi / trace.times[-1]
        assert np.min(np.abs(diffs - peak_freq)) < resolution

    def test_matches_split_step_trace(self):
        params = LatticeParams(0.76, 0.76, 0.4, 0.25)
        trace = dyn.mean_upper_population(params, kappa_grid=1, sigma_cells=8.0,
                                          n_sites=256, n_bloch_periods=2.0,
                                          n_time_samples=9)
        state = dyn.lower_band_state(params, 256, -np.pi / 2 + np.pi * 0.5, 8.0)
        out = dyn.propagate(state, params, None, trace.times)
        _, pu = dyn.band_projectors(params, 256)
        direct = np.array([pu.population(s.amplitudes) for s in out])
        assert np.max(np.abs(direct - trace.p_upper)) < 1e-6

    def test_gapless_rejected(self):
        with pytest.raises(ValueError):
            dyn.mean_upper_population(LatticeParams(0.7, 0.7, 0.0, 0.1))


class TestLorentzianFit:
    def test_roundtrip_on_exact_model(self):
        z = np.linspace(8.0, 10.0, 201)
        width, center, height = 0.23, 9.02, 0.5
        data = height * (width / 2) ** 2 / ((width / 2) ** 2 + (z - center) ** 2)
        fit = dyn.lorentzian_fit(z, data)
        assert fit.center == pytest.approx(center, abs=1e-10)
        assert fit.width == pytest.approx(width, abs=1e-10)
        assert fit.height == pytest.approx(height, abs=1e-10)
        assert fit.residual < 1e-12

    def test_width_tracks_gap_through_level_slope(self):
        # resonance FWHM in 1/F units is 2*gap/s with s = 2 C / z the relative
        # slope of the diabatic ladders; validated against the exact gap
        from starkladder.model import _tilted_band_mean
        params = LatticeParams(0.76, 0.76, 0.4, 0.1)
        z_star, gap = 8.78080, 1.73568e-02
        zs = np.linspace(z_star - 0.35, z_star + 0.35, 41)
        scan = dyn.resonance_scan(params, zs, n_bloch_periods=60.0)
        fit = dyn.lorentzian_fit(zs, scan)
        slope = 2.0 * _tilted_band_mean(params.with_field(1 / z_star)) / z_star
        assert fit.width == pytest.approx(2.0 * gap / slope, rel=0.3)
        assert fit.residual < 0.05 * fit.height

    def test_window_must_hold_single_peak(self):
        z = np.linspace(0, 1, 50)
        two_peaks = np.exp(-((z - 0.3) / 0.05) ** 2) + np.exp(-((z - 0.7) / 0.05) ** 2)
        with pytest.raises(ValueError):
            dyn.lorentzian_fit(z, two_peaks)


class TestTransferSmoke:
    def test_short_ramp_flags_non_adiabatic(self):
        result = dyn.bloch_transfer_experiment(
            duration=4 * math.pi * 9.4, n_samples=9, n_sites=384, tol=1e-6)
        assert result.non_adiabatic
        assert result.density.shape == (9, 384)
        assert result.p_upper.shape == (9,)
        assert np.all((result.p_upper >= -1e-9) & (result.p_upper <= 1 + 1e-9))
        assert abs(result.p_upper[-1] + result.p_lower[-1] - 1.0) < 1e-9
        assert result.ramp.field_at(0.0) == pytest.approx(1 / 9.4)
