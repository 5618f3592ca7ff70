import os
import json
import tempfile

import numpy as np

from .utils import *
from ..special import Simplex
from ..dataset import *


def small_dataset(meta="three subjects"):
    return Dataset(time=[1.5, 0.25, 3.0],
                   status=[1, 0, 1],
                   x0=[[1.0, -0.5], [0.0, 0.125], [1.0, 2.0]],
                   x_clusters=[[[0.1], [0.2], [0.3]], [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]],
                   proportions=[[0.25, 0.75], [0.5, 0.5], [1.0, 0.0]],
                   meta=meta)


class DatasetTestCase(GPTCMTestCase):
    def test_dims(self):
        ds = small_dataset()
        self.assertEqual(ds.n, 3)
        self.assertEqual(len(ds), 3)
        self.assertEqual(ds.dims, (2, 2, 1, 2))
        self.assertEqual(ds.events, 2)
        self.assertEqual(repr(ds), "(dataset n=3 dims=(2, 2, 1, 2))")

    def test_subject(self):
        subject = small_dataset()[1]
        self.assertEqual(subject.time, 0.25)
        self.assertEqual(subject.status, 0)
        self.assertEqual(subject.x0.tolist(), [0.0, 0.125])
        self.assertEqual(subject.x_clusters[1].tolist(), [3.0, 4.0])
        self.assertEqual(subject.proportions, Simplex([0.5, 0.5]))

    def test_immutable(self):
        ds = small_dataset()
        with self.assertRaises(ValueError):
            ds.time[0] = 2.0
        with self.assertRaises(ValueError):
            ds.x_clusters[0][0, 0] = 2.0

    def test_renormalize(self):
        ds = Dataset([1.0], [1], [[0.0]], [[[0.0]], [[0.0]]], [[0.3, 0.7 + 5e-7]])
        self.assertAllClose(ds.proportions.sum(axis=1), 1.0, rtol=1e-15)

    def test_from_subjects(self):
        ds = small_dataset()
        self.assertEqual(format_csv(Dataset.from_subjects(ds.subjects, meta=ds.meta)),
                         format_csv(ds))

    def test_take_concat(self):
        ds = small_dataset()
        part = ds.take([2, 0])
        self.assertEqual(part.time.tolist(), [3.0, 1.5])
        self.assertEqual(part.x_clusters[1].tolist(), [[5.0, 6.0], [1.0, 2.0]])
        both = part.concat(ds.take([1]))
        self.assertEqual(both.time.tolist(), [3.0, 1.5, 0.25])
        self.assertEqual(both.status.tolist(), [1, 1, 0])

    def test_concat_wrong(self):
        other = Dataset([1.0], [1], [[0.0]], [[[0.0]]], [[1.0]])
        with self.assertRaises(DatasetError,
                msg="Cannot concatenate datasets with dimensions (2, 2, 1, 2) and (1, 1, 1)"):
            small_dataset().concat(other)

    def test_wrong_time(self):
        with self.assertRaises(DatasetError,
                msg="Subject 1 has invalid time -1.0; times must be finite and non-negative"):
            Dataset([1.0, -1.0], [1, 1], [[0.0], [0.0]], [[[0.0], [0.0]]], [[1.0], [1.0]])
        with self.assertRaises(DatasetError,
                msg="Subject 0 has invalid time inf; times must be finite and non-negative"):
            Dataset([np.inf, 1.0], [0, 1], [[0.0], [0.0]], [[[0.0], [0.0]]], [[1.0], [1.0]])
        with self.assertRaises(DatasetError,
                msg="Dataset must contain at least one subject"):
            Dataset([], [], np.zeros((0, 1)), [np.zeros((0, 1))], np.zeros((0, 1)))

    def test_non_finite_covariates(self):
        with self.assertRaises(DatasetError,
                msg="Subject 1 has non-finite clinical covariates [-inf]"):
            Dataset([1.0, 2.0], [1, 0], [[0.0], [-np.inf]], [[[0.0], [0.0]]], [[1.0], [1.0]])
        with self.assertRaises(DatasetError,
                msg="Subject 0 has non-finite covariates of cluster 2 [0.5, inf]"):
            Dataset([1.0], [1], [[0.0]], [[[0.0]], [[0.5, np.inf]]], [[0.5, 0.5]])

    def test_wrong_status(self):
        with self.assertRaises(DatasetError,
                msg="Subject 1 has invalid status; status must be 0 or 1"):
            Dataset([1.0, 2.0], [1, 2], [[0.0], [0.0]], [[[0.0], [0.0]]], [[1.0], [1.0]])

    def test_wrong_shapes(self):
        with self.assertRaises(DatasetError,
                msg="Clinical covariates must have shape (2, q0), not (3, 1)"):
            Dataset([1.0, 2.0], [1, 0], [[0.0], [0.0], [0.0]], [[[0.0], [0.0]]],
                    [[1.0], [1.0]])
        with self.assertRaises(DatasetError,
                msg="Covariates of cluster 1 must have shape (2, q), not (2,)"):
            Dataset([1.0, 2.0], [1, 0], [[0.0], [0.0]], [[0.0, 0.0]], [[1.0], [1.0]])
        with self.assertRaises(DatasetError,
                msg="Dataset has 2 proportion columns but 1 cluster covariate blocks"):
            Dataset([1.0, 2.0], [1, 0], [[0.0], [0.0]], [[[0.0], [0.0]]],
                    [[0.5, 0.5], [0.5, 0.5]])

    def test_wrong_proportions(self):
        with self.assertRaises(DatasetError,
                msg="Subject 0 has proportions [0.5, 0.25] summing to 0.75; proportions must "
                    "be non-negative and sum to 1"):
            Dataset([1.0], [1], [[0.0]], [[[0.0]], [[0.0]]], [[0.5, 0.25]])
        with self.assertRaises(DatasetError,
                msg="Subject 0 has proportions [1.5, -0.5] summing to 1.0; proportions must "
                    "be non-negative and sum to 1"):
            Dataset([1.0], [1], [[0.0]], [[[0.0]], [[0.0]]], [[1.5, -0.5]])

    def test_missing_covariates_kept(self):
        ds = Dataset([1.0], [1], [[float("nan")]], [[[0.0]]], [[1.0]])
        self.assertTrue(np.isnan(ds.x0[0, 0]))


class CsvTestCase(GPTCMTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "data", "sim.csv")

    def tearDown(self):
        self.tmp.cleanup()

    def test_header(self):
        self.assertEqual(csv_header((2, 2, 1, 2)),
                         ["id", "time", "status", "x0_1", "x0_2", "p_1", "p_2",
                          "x1_1", "x2_1", "x2_2"])

    def test_format(self):
        text, sidecar = format_csv(small_dataset())
        lines = text.split("\n")
        self.assertEqual(lines[0], "id,time,status,x0_1,x0_2,p_1,p_2,x1_1,x2_1,x2_2")
        self.assertEqual(lines[2], "1,0.25,0,0,0.125,0.5,0.5,0.20000000000000001,3,4")
        self.assertEqual(lines[-1], "")
        self.assertEqual(json.loads(sidecar),
                         {"L": 2, "q0": 2, "q": [1, 2], "meta": "three subjects"})

    def test_write_read(self):
        ds = small_dataset()
        write_csv(ds, self.path)
        self.assertTrue(os.path.exists(sidecar_path(self.path)))
        back = read_csv(self.path)
        self.assertEqual(back.dims, ds.dims)
        self.assertEqual(back.meta, "three subjects")
        self.assertEqual(back.time.tolist(), ds.time.tolist())
        self.assertEqual(back.x_clusters[0].tolist(), ds.x_clusters[0].tolist())
        self.assertEqual(format_csv(back), format_csv(ds))

    def test_read_without_sidecar(self):
        write_csv(small_dataset(), self.path)
        os.remove(sidecar_path(self.path))
        back = read_csv(self.path)
        self.assertEqual(back.dims, (2, 2, 1, 2))
        self.assertEqual(back.meta, "")

    def test_missing_column(self):
        write_csv(small_dataset(), self.path)
        with open(sidecar_path(self.path), "w") as f:
            json.dump({"L": 2, "q0": 3, "q": [1, 2]}, f)
        with self.assertRaises(DatasetError,
                msg="Dataset {!r} is missing column 'x0_3'".format(self.path)):
            read_csv(self.path)

    def test_malformed_sidecar(self):
        write_csv(small_dataset(), self.path)
        with open(sidecar_path(self.path), "w") as f:
            json.dump({"L": 2, "q0": 2, "q": [1]}, f)
        with self.assertRaises(DatasetError,
                msg="Sidecar {!r} declares 2 clusters but 1 covariate widths"
                    .format(sidecar_path(self.path))):
            read_csv(self.path)
        with open(sidecar_path(self.path), "w") as f:
            f.write("{")
        with self.assertRaisesRegex(DatasetError, r"^Sidecar .* is malformed: "):
            read_csv(self.path)

    def test_bad_status(self):
        write_csv(small_dataset(), self.path)
        with open(self.path) as f:
            text = f.read()
        with open(self.path, "w") as f:
            f.write(text.replace("\n1,0.25,0,", "\n1,0.25,3,"))
        with self.assertRaises(DatasetError,
                msg="Row 1 of {!r} has status 3; status must be 0 or 1".format(self.path)):
            read_csv(self.path)


class SummaryTestCase(GPTCMTestCase):
    def test_censoring_rate(self):
        self.assertAlmostEqual(censoring_rate(small_dataset()), 1 / 3, places=15)

    def test_kaplan_meier(self):
        ds = Dataset(time=[1.0, 2.0, 2.0, 3.0, 4.0],
                     status=[1, 1, 0, 0, 1],
                     x0=np.zeros((5, 1)), x_clusters=[np.zeros((5, 1))],
                     proportions=np.ones((5, 1)))
        times, survival = kaplan_meier(ds)
        self.assertEqual(times.tolist(), [1.0, 2.0, 3.0, 4.0])
        self.assertAllClose(survival, [4 / 5, 4 / 5 * 3 / 4, 4 / 5 * 3 / 4, 0.0], rtol=1e-15)
