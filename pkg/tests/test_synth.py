import numpy as np
import pytest

import oracles
from bridgetwin.statfem import Sensor, SensorLayout
from bridgetwin.synth import (
    DiscrepancySpec,
    draw_discrepancy,
    estimate_noise_std,
    generate_observations,
    generate_truth,
    perturb_sections,
)


def _layout(n=5):
    return SensorLayout(sensors=tuple(
        Sensor(f"s{i}", 0.7 * i, 0.0, "top", 0, 0.0, "main") for i in range(n)
    ))


class TestDiscrepancySpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            DiscrepancySpec(rho=0.0, sigma=1e-6, length_scale=1.0)
        with pytest.raises(ValueError):
            DiscrepancySpec(rho=1.0, sigma=-1e-6, length_scale=1.0)
        with pytest.raises(ValueError):
            DiscrepancySpec(rho=1.0, sigma=1e-6, length_scale=0.0)
        DiscrepancySpec(rho=1.0, sigma=0.0, length_scale=1.0)


class TestDrawDiscrepancy:
    def test_zero_sigma_is_silent(self):
        d = draw_discrepancy(_layout(), DiscrepancySpec(1.0, 0.0, 1.0, seed=0),
                             gamma=np.ones(4))
        np.testing.assert_array_equal(d, 0.0)

    def test_unloaded_instants_are_exactly_zero(self):
        gamma = np.array([0.0, 0.5, 0.0, 1.0])
        d = draw_discrepancy(_layout(), DiscrepancySpec(1.0, 2e-6, 0.8, seed=3), gamma)
        np.testing.assert_array_equal(d[:, 0], 0.0)
        np.testing.assert_array_equal(d[:, 2], 0.0)
        assert np.all(d[:, 1] != 0.0)

    def test_seed_determinism(self):
        gamma = np.linspace(0.2, 1.0, 6)
        spec = DiscrepancySpec(1.0, 2e-6, 0.8, seed=5)
        np.testing.assert_array_equal(draw_discrepancy(_layout(), spec, gamma),
                                      draw_discrepancy(_layout(), spec, gamma))
        other = DiscrepancySpec(1.0, 2e-6, 0.8, seed=6)
        assert not np.array_equal(draw_discrepancy(_layout(), spec, gamma),
                                  draw_discrepancy(_layout(), other, gamma))

    def test_sample_covariance_matches_kernel(self):
        """With steady full loading the draws must follow the stated field."""
        layout = _layout(4)
        sigma, ell = 3e-6, 1.1
        spec = DiscrepancySpec(1.0, sigma, ell, seed=9)
        n = 40_000
        d = draw_discrepancy(layout, spec, np.ones(n))
        emp = np.cov(d)
        ref = oracles.sq_exp_matrix_loops(layout.points, sigma, ell)
        assert np.abs(emp - ref).max() <= 0.05 * sigma**2


class TestGenerateTruth:
    def test_scaling_decomposition(self):
        rng = np.random.default_rng(0)
        layout = _layout()
        means = 1e-6 * rng.standard_normal((5, 7))
        gamma = np.linspace(0.0, 1.0, 7)
        spec = DiscrepancySpec(rho=0.85, sigma=2e-6, length_scale=0.6, seed=4)
        truth = generate_truth(means, gamma, layout, spec)
        d = draw_discrepancy(layout, spec, gamma)
        np.testing.assert_allclose(truth, 0.85 * means + d, rtol=0, atol=1e-24)


class TestGenerateObservations:
    def test_zero_noise_returns_truth(self):
        rng = np.random.default_rng(1)
        layout = _layout()
        truth = 1e-6 * rng.standard_normal((5, 6))
        ts = np.linspace(0.0, 1.0, 6)
        obs = generate_observations(truth, ts, np.ones(6), layout, sigma_e=0.0, seed=2)
        np.testing.assert_array_equal(obs.strains, truth)
        assert obs.sigma_e == 0.0

    def test_noise_level_and_determinism(self):
        layout = _layout()
        truth = np.zeros((5, 2000))
        ts = np.arange(2000) * 1e-3
        gamma = np.zeros(2000)
        a = generate_observations(truth, ts, gamma, layout, sigma_e=1e-6, seed=7)
        b = generate_observations(truth, ts, gamma, layout, sigma_e=1e-6, seed=7)
        np.testing.assert_array_equal(a.strains, b.strains)
        assert a.strains.std() == pytest.approx(1e-6, rel=0.05)


class TestEstimateNoiseStd:
    def test_recovers_known_sigma(self):
        layout = _layout()
        rng = np.random.default_rng(11)
        n_o = 5000
        ts = np.arange(n_o) * 0.004
        strains = 2.5e-6 * rng.standard_normal((5, n_o))
        obs = generate_observations(np.zeros((5, n_o)), ts, np.zeros(n_o), layout,
                                    sigma_e=0.0, seed=0)
        obs = type(obs)(strains=strains, timestamps=ts, sigma_e=0.0,
                        gamma=obs.gamma, layout=layout)
        est = estimate_noise_std(obs, quiet_window=(0.0, ts[-1]))
        assert est == pytest.approx(2.5e-6, rel=0.05)

    def test_too_short_window_raises(self):
        layout = _layout()
        ts = np.arange(10) * 0.004
        obs = generate_observations(np.zeros((5, 10)), ts, np.zeros(10), layout,
                                    sigma_e=1e-6, seed=1)
        with pytest.raises(ValueError):
            estimate_noise_std(obs, quiet_window=(5.0, 6.0))


class TestPerturbSections:
    def test_scales_bending_only(self, ss_beam):
        bumped = perturb_sections(ss_beam, bending_scale=1.2)
        for orig, new in zip(ss_beam.elements, bumped.elements):
            assert new.section.bending_stiffness == pytest.approx(1.2 * orig.section.bending_stiffness)
            assert new.section.torsion_stiffness == orig.section.torsion_stiffness
            assert new.section.fiber_distance == orig.section.fiber_distance
        # geometry untouched
        np.testing.assert_array_equal(bumped.nodes, ss_beam.nodes)