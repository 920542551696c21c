import numpy as np
import pytest

import aggrebench.bootstrap as bootstrap_mod
from aggrebench import (
    FreeMask,
    NelderMeadConfig,
    ObservationSet,
    bootstrap_estimate,
    bootstrap_summary,
    fit,
)
from aggrebench.errors import FitFailureError, ValidationError
from aggrebench.estimator import FitResult, MinimizeTrace


class TestBootstrapSummary:
    def test_identical_samples_have_zero_se(self):
        samples = np.tile([1.5, 2.5], (6, 1))
        mean, cov, se, pct = bootstrap_summary(samples)
        np.testing.assert_allclose(mean, [1.5, 2.5])
        np.testing.assert_allclose(se, 0.0)

    def test_two_point_arithmetic(self):
        # {(0,0), (2,2)}: mean (1,1), covariance 2 on the diagonal with the
        # 1/(M-1) normalization, SE sqrt(2)
        mean, cov, se, pct = bootstrap_summary(np.array([[0.0, 0.0],
                                                         [2.0, 2.0]]))
        np.testing.assert_allclose(mean, [1.0, 1.0])
        np.testing.assert_allclose(np.diag(cov), [2.0, 2.0])
        np.testing.assert_allclose(se, np.sqrt(2.0))

    def test_covariance_matches_numpy(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(size=(200, 3))
        _, cov, se, _ = bootstrap_summary(samples)
        np.testing.assert_allclose(cov, np.cov(samples.T, ddof=1), rtol=1e-12)

    def test_large_normal_sample_se(self):
        rng = np.random.default_rng(1)
        samples = rng.normal(0.0, 1.0, size=(1000, 1))
        _, _, se, _ = bootstrap_summary(samples)
        assert se[0] == pytest.approx(1.0, rel=0.05)

    def test_percentile_levels(self):
        samples = np.linspace(0.0, 1.0, 101)[:, None]
        _, _, _, pct = bootstrap_summary(samples, (10.0, 90.0))
        np.testing.assert_allclose(pct[:, 0], [0.1, 0.9], atol=1e-9)

    def test_single_sample_rejected(self):
        with pytest.raises(ValidationError):
            bootstrap_summary(np.array([[1.0]]))


def _mean_estimator_fit(obs, theta, mask, gamma, opt_config=None, mesh=None,
                        settings=None, log_space=True):
    """Closed-form stand-in estimator: 'fits' theta by storing mean(y)."""
    theta_hat = theta.with_values(mask.free_names,
                                  [float(np.mean(obs.y))] * mask.count)
    return FitResult(theta=theta_hat, mask=mask, gamma=gamma,
                     cost=0.0, model_values=np.full(obs.n, 0.5),
                     status="converged", trace=MinimizeTrace(converged=True),
                     log_space=log_space)


class TestBootstrapEstimateMechanics:
    @pytest.fixture()
    def base(self, truth):
        t = np.linspace(1.0, 5.0, 9)
        y = np.array([0.3, 0.35, 0.42, 0.5, 0.55, 0.61, 0.66, 0.7, 0.74])
        obs = ObservationSet(t=t, y=y, truncation={"manual": True})
        mask = FreeMask.from_names(["kI_plus"])
        model = np.full(obs.n, 0.5)
        fit0 = FitResult(theta=truth, mask=mask, gamma=0.6, cost=0.1,
                         model_values=model, status="converged",
                         trace=MinimizeTrace(converged=True))
        return obs, fit0

    def test_resampling_formula_hand_oracle(self, base, monkeypatch):
        # with a closed-form 'estimator' the whole bootstrap reduces to
        # arithmetic we can reproduce exactly: indices from the documented
        # (seed, m) streams, data from the standardization identity, and
        # the summary from the sample matrix
        obs, fit0 = base
        monkeypatch.setattr(bootstrap_mod, "fit", _mean_estimator_fit)
        result = bootstrap_estimate(obs, fit0, replicates=3, gamma=0.6,
                                    seed=77)
        model = fit0.model_values
        resid = (obs.y - model) / model ** 0.6
        expect = []
        for m in range(3):
            rng = np.random.default_rng((77, m))
            idx = rng.integers(0, obs.n, size=obs.n)
            y_m = model + model ** 0.6 * resid[idx]
            expect.append(np.mean(y_m))
        expect = np.array(expect)[:, None]
        np.testing.assert_allclose(result.samples, expect, rtol=1e-14)
        mean, cov, se, _ = bootstrap_summary(expect)
        np.testing.assert_allclose(result.mean, mean)
        np.testing.assert_allclose(result.se, se)

    def test_every_replicate_keeps_n_points(self, base, monkeypatch):
        obs, fit0 = base
        seen = []

        def spy_fit(obs_m, *args, **kwargs):
            seen.append((obs_m.n, obs_m.t.copy()))
            return _mean_estimator_fit(obs_m, *args, **kwargs)

        monkeypatch.setattr(bootstrap_mod, "fit", spy_fit)
        bootstrap_estimate(obs, fit0, replicates=4, gamma=0.6, seed=1)
        assert len(seen) == 4
        for n, t in seen:
            assert n == obs.n
            np.testing.assert_array_equal(t, obs.t)

    def test_determinism_across_thread_budgets(self, base, monkeypatch):
        obs, fit0 = base
        monkeypatch.setattr(bootstrap_mod, "fit", _mean_estimator_fit)
        monkeypatch.setenv("AGGRE_THREADS", "1")
        a = bootstrap_estimate(obs, fit0, replicates=6, gamma=0.6, seed=3)
        monkeypatch.setenv("AGGRE_THREADS", "3")
        b = bootstrap_estimate(obs, fit0, replicates=6, gamma=0.6, seed=3)
        np.testing.assert_array_equal(a.samples, b.samples)
        np.testing.assert_array_equal(a.se, b.se)

    def test_failed_replicates_are_flagged_not_fatal(self, base, monkeypatch):
        obs, fit0 = base
        calls = {"count": 0}

        def flaky_fit(obs_m, *args, **kwargs):
            calls["count"] += 1
            if calls["count"] == 2:
                raise RuntimeError("synthetic failure")
            return _mean_estimator_fit(obs_m, *args, **kwargs)

        monkeypatch.setattr(bootstrap_mod, "fit", flaky_fit)
        result = bootstrap_estimate(obs, fit0, replicates=4, gamma=0.6, seed=5)
        assert result.converged_count == 3
        assert sum(s.startswith("failed") for s in result.statuses) == 1

    def test_all_failures_raise(self, base, monkeypatch):
        obs, fit0 = base

        def dead_fit(*args, **kwargs):
            raise RuntimeError("nope")

        monkeypatch.setattr(bootstrap_mod, "fit", dead_fit)
        with pytest.raises(FitFailureError):
            bootstrap_estimate(obs, fit0, replicates=3, gamma=0.6, seed=5)

    def test_unconverged_base_fit_rejected(self, base):
        obs, fit0 = base
        fit0.status = "not_converged"
        with pytest.raises(ValidationError):
            bootstrap_estimate(obs, fit0, replicates=3, gamma=0.6, seed=5)


class TestBootstrapWithForwardModel:
    def test_zero_noise_collapses_to_base_estimate(self, truth, mesh,
                                                   settings, quick_opt,
                                                   make_observations):
        obs = make_observations(seed=21, sigma=0.0)
        mask = FreeMask.from_names(["kI_plus"])
        base = fit(obs, truth, mask, 0.6, quick_opt, mesh=mesh,
                   settings=settings)
        result = bootstrap_estimate(obs, base, replicates=3, gamma=0.6,
                                    seed=9, opt_config=quick_opt, mesh=mesh,
                                    settings=settings)
        assert result.converged_count == 3
        np.testing.assert_allclose(result.samples,
                                   base.theta.kI_plus, rtol=1e-6)
        assert result.se[0] <= 1e-6 * base.theta.kI_plus

    def test_noisy_bootstrap_se_is_positive_and_sane(self, truth, mesh,
                                                     settings, quick_opt,
                                                     make_observations):
        obs = make_observations(seed=22, sigma=0.0025)
        mask = FreeMask.from_names(["kI_plus"])
        base = fit(obs, truth, mask, 0.6, quick_opt, mesh=mesh,
                   settings=settings)
        result = bootstrap_estimate(obs, base, replicates=8, gamma=0.6,
                                    seed=10, opt_config=quick_opt, mesh=mesh,
                                    settings=settings)
        assert result.converged_count == 8
        assert 0.0 < result.se[0] < 0.05 * truth.kI_plus
