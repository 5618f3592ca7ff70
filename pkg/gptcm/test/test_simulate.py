import math

import numpy as np
import scipy.stats

from .utils import *
from ..special import RngStream, gamma_fn
from ..model import *
from ..dataset import format_csv, censoring_rate, kaplan_meier
from ..simulate import *


class SimConfigTestCase(GPTCMTestCase):
    def test_defaults(self):
        config = SimConfig()
        self.assertEqual(config.L, 3)
        self.assertEqual(config.dims, (3, 2, 2, 2, 2))
        self.assertEqual(config.dirichlet_alpha, (1.0, 1.0, 1.0))
        self.assertEqual(config.truth, benchmark_truth())
        self.assertEqual(SimConfig.benchmark(200, seed=4).n, 200)

    def test_json(self):
        config = SimConfig(n=50, target_censoring=0.3, censoring_rate=0.2)
        obj = config.to_json()
        self.assertEqual(list(obj)[:3], ["n", "L", "truth"])
        self.assertEqual(SimConfig.from_json(obj), config)
        self.assertEqual(SimConfig.from_json({"n": 10}).truth, benchmark_truth())

    def test_json_unknown(self):
        with self.assertRaises(ValueError,
                msg="Unknown simulation settings ['censoring', 'size']"):
            SimConfig.from_json({"size": 10, "censoring": 0.5})

    def test_wrong(self):
        with self.assertRaises(ValueError,
                msg="Sample size must be a positive integer, not 0"):
            SimConfig(n=0)
        with self.assertRaises(ValueError,
                msg="Simulation has 2 clusters but the truth has 3"):
            SimConfig(L=2)
        with self.assertRaises(ValueError,
                msg="Dirichlet concentrations must be 3 positive numbers, not (1.0, 1.0)"):
            SimConfig(dirichlet_alpha=(1, 1))
        with self.assertRaises(ValueError,
                msg="Target censoring must be within (0, 1), not 1.0"):
            SimConfig(target_censoring=1.0)
        with self.assertRaises(ValueError,
                msg="Inverse-CDF sampling is only available for first activation"):
            SimConfig(scheme="last", method="invcdf")
        with self.assertRaises(ValueError,
                msg="Sampling method must be one of 'latent' or 'invcdf', not 'exact'"):
            SimConfig(method="exact")
        with self.assertRaises(TypeError,
                msg="Simulation truth must be ModelParams, not None"):
            SimConfig(truth=None)


class CovariatesTestCase(GPTCMTestCase):
    def test_shapes(self):
        x0, x_clusters = gen_covariates(RngStream(1), SimConfig())
        self.assertEqual(x0.shape, (2,))
        self.assertEqual([x.shape for x in x_clusters], [(2,), (2,), (2,)])
        self.assertIn(x0[0], (0.0, 1.0))

    def test_bernoulli(self):
        gen = RngStream(2).generator()
        config = SimConfig(bernoulli_p=0.25)
        first = [gen_covariates(gen, config)[0][0] for _ in range(20000)]
        self.assertAlmostEqual(np.mean(first), 0.25, delta=0.015)


class LatentTestCase(GPTCMTestCase):
    def test_draw(self):
        gen = RngStream(3).generator()
        gp = two_cluster_point()
        for _ in range(200):
            draw = sample_event_latent(gen, gp)
            self.assertEqual(sum(draw.n_per_cluster), draw.n_total)
            self.assertEqual([len(w) for w in draw.promotion_times], list(draw.n_per_cluster))
            if draw.n_total == 0:
                self.assertEqual(draw.event_time, math.inf)
            else:
                self.assertEqual(draw.event_time,
                                 min(w.min() for w in draw.promotion_times if len(w)))

    def test_last_after_first(self):
        gp = two_cluster_point()
        for index in range(200):
            first = sample_event_latent(RngStream(4, index), gp, "first")
            last  = sample_event_latent(RngStream(4, index), gp, "last")
            self.assertEqual(first.n_total, last.n_total)
            self.assertGreaterEqual(last.event_time, first.event_time)

    def test_nearly_always_cured(self):
        gp = GptcmPoint(1e-9, [WeibullCluster(1.0, 1.0)], [1.0])
        draw = sample_event_latent(RngStream(5), gp)
        self.assertEqual(draw.n_total, 0)
        self.assertEqual(draw.event_time, math.inf)

    def test_wrong_scheme(self):
        with self.assertRaises(ValueError,
                msg="Activation scheme must be one of 'first' or 'last', not 'any'"):
            sample_event_latent(RngStream(0), two_cluster_point(), "any")

    def test_batch_layout(self):
        batch = sample_latent_batch(RngStream(6), two_cluster_point(), 1000)
        self.assertEqual(batch.draws, 1000)
        self.assertEqual(batch.counts.shape, (1000, 2))
        empty = batch.counts == 0
        self.assertTrue(np.isposinf(batch.cluster_min[empty]).all())
        self.assertTrue(np.isneginf(batch.cluster_max[empty]).all())
        self.assertTrue((batch.cluster_min[~empty] <= batch.cluster_max[~empty]).all())
        with self.assertRaises(ValueError,
                msg="Activation scheme must be one of 'first' or 'last', not 'all'"):
            batch.event_times("all")

    def test_batch_survival_first(self):
        gp = two_cluster_point()
        times = sample_latent_batch(RngStream(7), gp, 10 ** 6).event_times("first")
        t = np.linspace(0.1, 8, 20)
        empirical = (times[:, None] > t).mean(axis=0)
        self.assertAllClose(empirical, pop_survival_first(gp, t), rtol=0, atol=0.005)
        self.assertAllClose(np.isinf(times).mean(), math.exp(-2), rtol=0, atol=0.002)

    def test_batch_survival_last(self):
        gp = two_cluster_point(0.5)
        times = sample_latent_batch(RngStream(8), gp, 10 ** 6).event_times("last")
        t = np.linspace(0.1, 8, 20)
        empirical = (times[:, None] > t).mean(axis=0)
        self.assertAllClose(empirical, pop_survival_last(gp, t), rtol=0, atol=0.005)


class InverseCdfTestCase(GPTCMTestCase):
    def test_distribution(self):
        gp = two_cluster_point()
        gen = RngStream(9).generator()
        times = np.array([sample_event_invcdf(gen, gp) for _ in range(4000)])
        cured = np.isinf(times)
        self.assertAlmostEqual(cured.mean(), math.exp(-2), delta=0.02)
        result = scipy.stats.kstest(times[~cured], lambda t: 1 - noncured_survival(gp, t))
        self.assertGreater(result.pvalue, 1e-3)

    def test_agrees_with_latent(self):
        gp = two_cluster_point(1.0)
        gen = RngStream(10).generator()
        inverted = np.array([sample_event_invcdf(gen, gp) for _ in range(3000)])
        latent = sample_latent_batch(RngStream(11), gp, 30000).event_times("first")
        result = scipy.stats.ks_2samp(inverted[np.isfinite(inverted)],
                                      latent[np.isfinite(latent)])
        self.assertGreater(result.pvalue, 1e-3)


    @slow_test()
    def test_agrees_with_latent_large_sample(self):
        gp = two_cluster_point(1.0)
        gen = RngStream(10).generator()
        inverted = np.array([sample_event_invcdf(gen, gp) for _ in range(10 ** 5)])
        latent = sample_latent_batch(RngStream(11), gp, 10 ** 5).event_times("first")
        result = scipy.stats.ks_2samp(inverted[np.isfinite(inverted)],
                                      latent[np.isfinite(latent)])
        self.assertLessEqual(result.statistic, 0.01)

    def test_large_rate(self):
        gp = GptcmPoint.from_log_mu(800.0, 1.0, [0.0], [1.0])
        gen = RngStream(12).generator()
        times = np.array([sample_event_invcdf(gen, gp) for _ in range(2000)])
        self.assertTrue(np.isfinite(times).all())
        result = scipy.stats.kstest(times, lambda t: 1 - noncured_survival(gp, t))
        self.assertGreater(result.pvalue, 1e-3)


class CalibrationTestCase(GPTCMTestCase):
    def test_reaches_target(self):
        config = SimConfig(n=2000, target_censoring=0.7, seed=12, pilot_n=4000)
        ds = simulate_dataset(config)
        self.assertAlmostEqual(censoring_rate(ds), 0.7, delta=0.03)

    def test_pilot_monotone(self):
        config = SimConfig(target_censoring=0.6)
        slow = calibrate_censoring(RngStream(13), config, 2000)
        config = SimConfig(target_censoring=0.8)
        fast = calibrate_censoring(RngStream(13), config, 2000)
        self.assertLess(slow, fast)

    def test_unreachable(self):
        # Cured subjects are always censored, which keeps censoring near one half here.
        config = SimConfig(target_censoring=0.1)
        with self.assertWarns(CalibrationWarning):
            rate = calibrate_censoring(RngStream(14), config, 1000)
        self.assertRelClose(rate, math.exp(-20), 1e-15)

    def test_wrong_pilot(self):
        with self.assertRaises(ValueError,
                msg="Pilot sample size must be an integer of at least 1000, not 10"):
            calibrate_censoring(RngStream(0), SimConfig(), 10)

    def test_default_design(self):
        ds = simulate_dataset(SimConfig(n=1000, seed=23))
        self.assertAlmostEqual(censoring_rate(ds), 0.5, delta=0.05)

    @slow_test()
    def test_default_design_fresh_sample(self):
        ds = simulate_dataset(SimConfig(n=10000, seed=24))
        self.assertAlmostEqual(censoring_rate(ds), 0.5, delta=0.01)

    @slow_test()
    def test_target_large_sample(self):
        config = SimConfig(n=10000, target_censoring=0.6, seed=15)
        ds = simulate_dataset(config)
        self.assertAlmostEqual(censoring_rate(ds), 0.6, delta=0.02)


class SimulateDatasetTestCase(GPTCMTestCase):
    def test_reproducible(self):
        config = SimConfig(n=30, seed=16, censoring_rate=0.3)
        self.assertEqual(format_csv(simulate_dataset(config)),
                         format_csv(simulate_dataset(config)))

    def test_prefix_stable(self):
        short = simulate_dataset(SimConfig(n=10, seed=17, censoring_rate=0.3))
        long  = simulate_dataset(SimConfig(n=25, seed=17, censoring_rate=0.3))
        self.assertEqual(short.time.tolist(), long.time[:10].tolist())
        self.assertEqual(short.x_clusters[2].tolist(), long.x_clusters[2][:10].tolist())

    def test_layout(self):
        ds = simulate_dataset(SimConfig(n=40, seed=18, censoring_rate=0.3))
        self.assertEqual(ds.dims, (3, 2, 2, 2, 2))
        self.assertTrue(np.isfinite(ds.time).all())
        self.assertTrue(set(ds.x0[:, 0].tolist()) <= {0.0, 1.0})
        self.assertAllClose(ds.proportions.sum(axis=1), 1.0, rtol=1e-12)
        self.assertEqual(ds.meta,
                         "simulated n=40 seed=18 stream=0 scheme=first method=latent "
                         "censoring_rate=0.3")

    def test_invcdf_method(self):
        ds = simulate_dataset(SimConfig(n=20, seed=19, method="invcdf", censoring_rate=0.3))
        self.assertEqual(ds.n, 20)
        self.assertIn("method=invcdf", ds.meta)

    def test_explicit_stream(self):
        config = SimConfig(n=5, censoring_rate=0.3)
        ds = simulate_dataset(config, RngStream(20).substream(0).substream(3))
        self.assertIn("seed=20 stream=0.0.3", ds.meta)

    @slow_test()
    def test_kaplan_meier_overlay(self):
        # Censoring this light leaves every non-cured event observed.
        ds = simulate_dataset(SimConfig(n=10 ** 5, seed=25, censoring_rate=1e-12))
        times, survival = kaplan_meier(ds)

        truth = benchmark_truth()
        theta = link_theta(truth.xi, ds.x0)
        lam = np.stack([link_mu(beta, x) for beta, x in zip(truth.betas, ds.x_clusters)],
                       axis=1) / gamma_fn(1 + 1 / truth.kappa)
        t = np.linspace(0.05, 5, 100)
        expected = []
        for t_k in t:
            F = (ds.proportions * -np.expm1(-(t_k / lam) ** truth.kappa)).sum(axis=1)
            expected.append(np.exp(-theta * F).mean())

        index = np.searchsorted(times, t, side="right") - 1
        estimate = np.where(index >= 0, survival[np.maximum(index, 0)], 1.0)
        self.assertAllClose(estimate, expected, rtol=0, atol=0.01)
