import numpy as np
import pytest

from bridgetwin.dataio import write_observations
from bridgetwin.model import ConfigError
from bridgetwin.synth import DiscrepancySpec, generate_observations, generate_truth


class TestBuild:
    def test_from_files(self, bundled_ctx):
        assert bundled_ctx.dof_map.n_free == 242
        assert len(bundled_ctx.layout) == 40
        assert bundled_ctx.series.forces.shape[0] == 242

    def test_operator_rows_follow_layout(self, bundled_ctx):
        op = bundled_ctx.operator_for(bundled_ctx.layout)
        assert [r.sensor_id for r in op.rows] == bundled_ctx.layout.ids


class TestPriorSeries:
    def test_selected_indices_match_full(self, bundled_ctx):
        idx = np.array([100, 350, 600])
        sub = bundled_ctx.prior_series(idx)
        full = bundled_ctx.prior_series()
        np.testing.assert_array_equal(sub.means, full.means[:, idx])
        assert sub.cov is full.cov

    def test_covariance_is_shared_and_cached(self, bundled_ctx):
        a = bundled_ctx.prior_series(np.array([10, 20]))
        b = bundled_ctx.prior_series(np.array([30])).cov
        assert a.cov is b


class TestMatchInstants:
    def test_exact_grid_times(self, bundled_ctx):
        ts = bundled_ctx.series.timestamps
        idx = bundled_ctx.match_instants(ts[[3, 77, 900]])
        np.testing.assert_array_equal(idx, [3, 77, 900])

    def test_off_grid_time_rejected(self, bundled_ctx):
        with pytest.raises(ConfigError):
            bundled_ctx.match_instants(np.array([1.0001]))


class TestObservationsFromCsv:
    def _write_synthetic(self, ctx, path, sigma_e=1e-6):
        idx = np.arange(0, ctx.series.timestamps.size, 10)
        means, _ = ctx.prior_series(idx).projected(ctx.operator_for(ctx.layout))
        gamma = ctx.series.gamma[idx]
        truth = generate_truth(means, gamma, ctx.layout,
                               DiscrepancySpec(0.9, 3e-6, 0.5, seed=1))
        obs = generate_observations(truth, ctx.series.timestamps[idx], gamma,
                                    ctx.layout, sigma_e, seed=1)
        write_observations(path, obs)
        return obs

    def test_round_trip_bits_and_metadata(self, bundled_ctx, tmp_path):
        path = tmp_path / "obs.csv"
        written = self._write_synthetic(bundled_ctx, path)
        loaded = bundled_ctx.observations_from_csv(path, sigma_e=1e-6)
        np.testing.assert_array_equal(loaded.strains, written.strains)
        np.testing.assert_array_equal(loaded.timestamps, written.timestamps)
        np.testing.assert_array_equal(loaded.gamma, written.gamma)
        assert loaded.layout.ids == bundled_ctx.layout.ids

    def test_sigma_estimated_from_quiet_head(self, bundled_ctx, tmp_path):
        path = tmp_path / "obs.csv"
        self._write_synthetic(bundled_ctx, path, sigma_e=2e-6)
        loaded = bundled_ctx.observations_from_csv(path)
        # the first half second is train-free by construction
        assert loaded.sigma_e == pytest.approx(2e-6, rel=0.25)

    def test_column_mismatch_rejected(self, bundled_ctx, tmp_path):
        path = tmp_path / "obs.csv"
        self._write_synthetic(bundled_ctx, path)
        text = path.read_text().replace("T01", "T99")
        path.write_text(text)
        with pytest.raises(ConfigError):
            bundled_ctx.observations_from_csv(path, sigma_e=1e-6)


class TestStudyContext:
    def test_prior_band_scale(self, study_ctx):
        """The soft random-load study keeps prior strain spread well under the
        deterministic peak, so hyperparameter recovery is not biased by it."""
        idx = np.array([int(np.argmax(study_ctx.series.gamma))])
        means, cov = study_ctx.prior_series(idx).projected(
            study_ctx.operator_for(study_ctx.layout))
        spread = np.sqrt(np.diag(cov)).max()
        peak = np.abs(means).max()
        assert spread < 0.02 * peak