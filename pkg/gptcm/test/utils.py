import os
import unittest
import warnings
from contextlib import contextmanager

import numpy as np

from ..special import Simplex
from ..model import GptcmPoint
from ..simulate import benchmark_truth


__all__ = ["GPTCMTestCase", "slow_test", "two_cluster_point", "benchmark_truth"]


def slow_test(reason="set GPTCM_SLOW_TESTS=1 to run Monte Carlo acceptance tests"):
    return unittest.skipUnless(os.environ.get("GPTCM_SLOW_TESTS"), reason)


def two_cluster_point(kappa=3.0):
    """Two-cluster subject used for the reference survival and hazard curves."""
    return GptcmPoint.from_log_mu(2.0, kappa, [-0.1, 1.0], Simplex([0.3, 0.7]))


class GPTCMTestCase(unittest.TestCase):
    @contextmanager
    def assertRaises(self, exception, msg=None):
        with super().assertRaises(exception) as cm:
            yield
        if msg is not None:
            # unittest.assertRaises does not compare the message.
            self.assertEqual(str(cm.exception), msg)

    @contextmanager
    def assertRaisesRegex(self, exception, regex=None):
        with super().assertRaises(exception) as cm:
            yield
        if regex is not None:
            self.assertRegex(str(cm.exception), regex)

    @contextmanager
    def assertWarns(self, category, msg=None):
        with warnings.catch_warnings(record=True) as warns:
            warnings.simplefilter("always")
            yield
        warns = [w for w in warns if issubclass(w.category, category)]
        self.assertEqual(len(warns), 1)
        self.assertEqual(warns[0].category, category)
        if msg is not None:
            self.assertEqual(str(warns[0].message), msg)

    def assertAllClose(self, actual, desired, rtol=1e-12, atol=0.0):
        np.testing.assert_allclose(actual, desired, rtol=rtol, atol=atol)

    def assertRelClose(self, actual, desired, rtol):
        actual, desired = np.asarray(actual, dtype=float), np.asarray(desired, dtype=float)
        error = np.abs(actual - desired) / np.maximum(np.abs(desired), np.finfo(float).tiny)
        self.assertLessEqual(float(error.max()), rtol)
