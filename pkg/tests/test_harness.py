import math
import pickle

import numpy as np
import pytest

from krsl.exceptions import ConfigError, DimensionMismatchError, EmptyDataError, ParameterDomainError
from krsl.harness import (
    AlgorithmSpec,
    ExperimentConfig,
    compare_with_theory,
    initial_slope,
    matched_step_size,
    outlier_robustness_sweep,
    relative_deviation,
    run_experiment,
    theory_config_for,
)
from krsl.noise import Binary, Cauchy, Gaussian, MixtureOutliers, Uniform
from krsl.similarity import KrslParams
from krsl.theory import TheoryConfig, h_G

W4 = np.array([0.4, -0.2, 0.3, 0.1])
MKRSL = AlgorithmSpec("mkrsl", 0.01, {"sigma": 1.0, "lam": 2.0})
LMS = AlgorithmSpec("lms", 0.01)


def _cfg(**kw):
    base = dict(true_weights=W4, noise=Gaussian(0.1), algorithms=(MKRSL, LMS), iterations=300, runs=30,
                seed=7, steady_state_window=100)
    base.update(kw)
    return ExperimentConfig(**base)


def _same(a, b):
    return (np.array_equal(a.wep, b.wep) and np.array_equal(a.emse, b.emse)
            and np.array_equal(a.steady_wep_runs, b.steady_wep_runs) and a.diverged_runs == b.diverged_runs)


class TestConfig:
    def test_labels_default_to_algorithm(self):
        assert AlgorithmSpec("sa", 0.1).label == "sa"

    @pytest.mark.parametrize("kw, err", [
        ({"algorithms": ()}, EmptyDataError),
        ({"algorithms": (LMS, LMS)}, ConfigError),
        ({"steady_state_window": 301}, ParameterDomainError),
        ({"steady_state_window": 0}, ParameterDomainError),
        ({"runs": 0}, ParameterDomainError),
        ({"true_weights": []}, DimensionMismatchError),
        ({"input_structure": "colored"}, ConfigError),
        ({"seed": -3}, ParameterDomainError),
    ])
    def test_invalid(self, kw, err):
        with pytest.raises(err):
            _cfg(**kw)

    def test_invalid_algorithm_spec(self):
        with pytest.raises(ParameterDomainError):
            AlgorithmSpec("mkrsl", 0.1, {"sigma": 1.0})
        with pytest.raises(ParameterDomainError):
            AlgorithmSpec("lms", -0.1)

    def test_spec_pickles(self):
        spec = pickle.loads(pickle.dumps(MKRSL))
        assert spec.to_dict() == MKRSL.to_dict()


class TestRunExperiment:
    def test_record_shapes(self):
        rec = run_experiment(_cfg())
        assert list(rec) == ["mkrsl", "lms"]
        r = rec["mkrsl"]
        assert r.wep.shape == (300,) and r.emse.shape == (300,)
        assert r.wep[0] == pytest.approx(float(W4 @ W4), rel=1e-15)
        assert np.all(r.wep >= 0) and np.all(r.emse >= 0)
        assert r.runs_used == 30 and r.diverged_runs == ()

    def test_replay_is_bit_identical(self):
        a, b = run_experiment(_cfg()), run_experiment(_cfg())
        assert all(_same(a[k], b[k]) for k in a)

    def test_seed_matters(self):
        a, b = run_experiment(_cfg()), run_experiment(_cfg(seed=8))
        assert not np.array_equal(a["lms"].wep, b["lms"].wep)

    def test_worker_count_does_not_change_results(self):
        cfg = _cfg(runs=60)
        a, b = run_experiment(cfg), run_experiment(cfg, workers=2)
        assert all(_same(a[k], b[k]) for k in a)

    def test_run_prefix_is_stable(self):
        # run r always sees the same data, whatever the total number of runs
        a = run_experiment(_cfg(runs=30))["lms"]
        b = run_experiment(_cfg(runs=55))["lms"]
        np.testing.assert_array_equal(a.steady_wep_runs, b.steady_wep_runs[:30])

    def test_roster_isolation(self):
        alone = run_experiment(_cfg(algorithms=(LMS,)))["lms"]
        together = run_experiment(_cfg(algorithms=(MKRSL, AlgorithmSpec("sa", 0.001), LMS)))["lms"]
        assert _same(alone, together)

    @pytest.mark.parametrize("structure", ["tapped_delay", "independent"])
    def test_noiseless_identification(self, structure):
        cfg = _cfg(noise=Gaussian(1e-300), algorithms=(LMS,), iterations=3000, runs=10,
                   input_structure=structure)
        assert run_experiment(cfg)["lms"].wep[-1] < 1e-8

    def test_tapped_delay_regressors_are_shifted(self):
        # a filter that never moves reports (W0^T X(t))**2 as its EMSE, exposing the regressors
        cfg = _cfg(true_weights=[1.0, 0.0], algorithms=(AlgorithmSpec("lms", 1e-300),), iterations=5, runs=1,
                   steady_state_window=1, noise=Gaussian(1e-300))
        emse_a = run_experiment(cfg)["lms"].emse
        cfg_b = _cfg(true_weights=[0.0, 1.0], algorithms=(AlgorithmSpec("lms", 1e-300),), iterations=5, runs=1,
                     steady_state_window=1, noise=Gaussian(1e-300))
        emse_b = run_experiment(cfg_b)["lms"].emse
        # x(t)**2 seen by tap 1 at step t is seen by tap 2 at step t + 1
        np.testing.assert_allclose(emse_b[1:], emse_a[:-1], rtol=1e-12)

    def test_non_gaussian_input(self):
        cfg = _cfg(input=Uniform(math.sqrt(3.0)), algorithms=(LMS,), iterations=3000, runs=5,
                   noise=Gaussian(1e-300))
        assert run_experiment(cfg)["lms"].wep[-1] < 1e-8

    def test_diverged_runs_are_excluded(self):
        unstable = AlgorithmSpec("lmmn", 0.5, {"delta": 0.0}, label="cubic")
        cfg = _cfg(noise=Cauchy(1.0), algorithms=(unstable, LMS), iterations=200, runs=25)
        rec = run_experiment(cfg)
        assert len(rec["cubic"].diverged_runs) == 25
        assert rec["cubic"].runs_used == 0 and math.isnan(rec["cubic"].steady_wep)
        # the other filter on the same data is unaffected
        assert rec["lms"].diverged_runs == () and np.all(np.isfinite(rec["lms"].wep))

    def test_partial_divergence(self):
        risky = AlgorithmSpec("lms", 0.09, label="risky")
        cfg = _cfg(noise=Gaussian(1.0), algorithms=(risky,), iterations=400, runs=50)
        r = run_experiment(cfg)["risky"]
        assert r.runs_used + len(r.diverged_runs) == 50
        if r.runs_used:
            assert np.all(np.isfinite(r.wep))

    def test_standard_error_scales_with_runs(self):
        def half_width(runs):
            rec = run_experiment(_cfg(algorithms=(MKRSL,), runs=runs, iterations=600, steady_state_window=300))
            lo, hi = rec["mkrsl"].steady_emse_interval()
            return hi - lo

        ratio = half_width(50) / half_width(200)
        assert 1.0 <= ratio <= 3.0


class TestTheoryComparison:
    def test_self_comparison_is_zero(self):
        rec = run_experiment(_cfg())["lms"]
        assert np.all(relative_deviation(rec.wep, rec.wep, 10) == 0)

    def test_burn_in_too_long(self):
        with pytest.raises(EmptyDataError):
            relative_deviation(np.ones(5), np.ones(5), 5)

    def test_lms_matches_classical_recursion(self):
        m = 20
        cfg = ExperimentConfig(np.ones(m) / math.sqrt(m), Gaussian(0.1), (AlgorithmSpec("lms", 0.0025),), 1500, 1000,
                               seed=0, steady_state_window=500, input_structure="independent")
        cmp = compare_with_theory(run_experiment(cfg)["lms"], cfg, burn_in=100)
        assert cmp.max_deviation < 0.05

    def test_lms_steady_state(self):
        m = 10
        cfg = ExperimentConfig(np.ones(m) / math.sqrt(m), Gaussian(0.1), (AlgorithmSpec("lms", 0.01),), 3000, 200,
                               seed=1, steady_state_window=2000)
        cmp = compare_with_theory(run_experiment(cfg)["lms"], cfg)
        assert cmp.theory_emse == pytest.approx(0.1 * 0.1 / 1.9)
        assert cmp.emse_relative_error < 0.1

    def test_mkrsl_curve_tracks_theory(self):
        m = 10
        spec = AlgorithmSpec("mkrsl", 0.005, {"sigma": 1.0, "lam": 2.0})
        cfg = ExperimentConfig(np.ones(m) / math.sqrt(m), Gaussian(1.0), (spec,), 1200, 400, seed=2,
                               steady_state_window=400, input_structure="independent")
        cmp = compare_with_theory(run_experiment(cfg)["mkrsl"], cfg)
        assert cmp.theory_wep.shape == (1200,)
        assert cmp.max_deviation < 0.1
        assert cmp.theory_emse_taylor == pytest.approx(cmp.theory_emse, rel=0.1)

    def test_mismatched_theory_rejected(self):
        cfg = _cfg()
        rec = run_experiment(cfg)["mkrsl"]
        wrong = TheoryConfig(KrslParams(1.0, 2.0), 0.02, m=4)
        with pytest.raises(ConfigError):
            compare_with_theory(rec, cfg, wrong)
        compare_with_theory(rec, cfg, theory_config_for(cfg, "mkrsl"))

    def test_unsupported_algorithm(self):
        cfg = _cfg(algorithms=(AlgorithmSpec("sa", 0.001),))
        with pytest.raises(ConfigError):
            compare_with_theory(run_experiment(cfg)["sa"], cfg)

    def test_requires_gaussian_input(self):
        cfg = _cfg(input=Uniform(1.0))
        with pytest.raises(ConfigError):
            compare_with_theory(run_experiment(cfg)["lms"], cfg)

    def test_unknown_label(self):
        with pytest.raises(ConfigError):
            theory_config_for(_cfg(), "gmcc")


class TestMatchedSpeed:
    def test_lms_slope_is_one(self):
        assert initial_slope("lms", {}, Gaussian(1.0), 1.0) == pytest.approx(1.0, abs=5e-3)

    def test_mkrsl_slope_matches_quadrature(self):
        p = KrslParams(1.0, 2.0)
        noise = MixtureOutliers(0.06, Gaussian(1.0), Gaussian(15.0))
        mc = initial_slope("mkrsl", p, noise, 0.5)
        assert mc == pytest.approx(h_G(0.5, TheoryConfig(p, 1e-3, noise=noise)), rel=0.01)

    def test_matched_step_equalises_rates(self):
        noise = Binary(1.0)
        ref = AlgorithmSpec("lms", 0.01)
        eta = matched_step_size(ref, "sa", {}, noise, 1.0)
        lhs = eta * initial_slope("sa", {}, noise, 1.0)
        assert lhs == pytest.approx(0.01 * initial_slope("lms", {}, noise, 1.0), rel=1e-12)

    def test_self_match(self):
        ref = AlgorithmSpec("mkrsl", 0.004, {"sigma": 1.5, "lam": 2.0})
        assert matched_step_size(ref, "mkrsl", ref.params, Gaussian(1.0), 1.0) == pytest.approx(0.004, rel=1e-12)


class TestSweep:
    def test_grid_and_common_random_numbers(self):
        base = _cfg(noise=MixtureOutliers(0.05, Gaussian(0.1), Gaussian(15.0)), algorithms=(MKRSL,))
        sweep = outlier_robustness_sweep(base, [15.0, 60.0], [0.0, 0.1, 0.2])
        assert sweep.wep.shape == (2, 3) and sweep.label == "mkrsl"
        # without outliers the variance of B is irrelevant, and the streams are shared
        assert sweep.wep[0, 0] == sweep.wep[1, 0]
        clean = run_experiment(base.with_noise(MixtureOutliers(0.0, Gaussian(0.1), Gaussian(1.0))))["mkrsl"]
        assert sweep.wep[0, 0] == clean.steady_wep
        assert sweep.growth_with_probability().shape == (2,)
        assert sweep.increases_with_variance().shape == (3,)

    def test_requires_mixture(self):
        with pytest.raises(ConfigError):
            outlier_robustness_sweep(_cfg(), [15.0], [0.1])

    def test_empty_grid(self):
        base = _cfg(noise=MixtureOutliers(0.05, Gaussian(0.1), Gaussian(15.0)))
        with pytest.raises(EmptyDataError):
            outlier_robustness_sweep(base, [], [0.1])
