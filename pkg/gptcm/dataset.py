"""Multiscale survival data: times, censoring, covariates and cell-type proportions."""

from collections import OrderedDict
from dataclasses import dataclass
import os
import json
import re

import numpy as np
import pandas as pd

from .special import Simplex


__all__ = [
    "DatasetError", "Subject", "Dataset",
    "read_csv", "write_csv", "format_csv", "sidecar_path", "csv_header",
    "censoring_rate", "kaplan_meier",
]


# Rows whose proportions are off by no more than this are renormalized; others are rejected.
PROPORTION_TOLERANCE = 1e-6


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Subject:
    time:        float
    status:      int
    x0:          np.ndarray
    x_clusters:  tuple
    proportions: Simplex


def _readonly(array):
    array = np.array(array, dtype=float)
    array.flags.writeable = False
    return array


def _check_finite(array, what):
    bad = ~np.isfinite(array).all(axis=1)
    if bad.any():
        index = int(np.flatnonzero(bad)[0])
        raise DatasetError("Subject {} has non-finite {} {!r}"
                           .format(index, what, array[index].tolist()))


class Dataset:
    """Survival data of ``n`` subjects.

    Data is stored column-wise; :meth:`__getitem__` and :attr:`subjects` present it subject-wise.
    A dataset is immutable. Missing covariate values may be stored as NaN; they are rejected by
    the likelihood, not here.

    Parameters
    ----------
    time : array of float, shape (n,)
        Observed times, non-negative.
    status : array of int, shape (n,)
        1 if the event was observed, 0 if the time is censored.
    x0 : array of float, shape (n, q0)
        Clinical covariates.
    x_clusters : sequence of arrays of float, shapes (n, q_l)
        Cluster-specific covariates, one block per cluster.
    proportions : array of float, shape (n, L)
        Cell-type proportions; every row must lie on the simplex.
    meta : str
        Free-form provenance description.
    """
    def __init__(self, time, status, x0, x_clusters, proportions, meta=""):
        time = np.asarray(time, dtype=float).reshape(-1)
        n = len(time)
        if n < 1:
            raise DatasetError("Dataset must contain at least one subject")
        bad = ~np.isfinite(time) | (time < 0)
        if bad.any():
            index = int(np.flatnonzero(bad)[0])
            raise DatasetError("Subject {} has invalid time {!r}; times must be finite and "
                               "non-negative".format(index, float(time[index])))

        status = np.asarray(status)
        if status.shape != (n,) or not np.isin(status, (0, 1)).all():
            bad = np.flatnonzero(~np.isin(status, (0, 1))) if status.shape == (n,) else [0]
            raise DatasetError("Subject {} has invalid status; status must be 0 or 1"
                               .format(int(bad[0])))

        x0 = np.asarray(x0, dtype=float)
        if x0.ndim == 1 and n == 1:
            x0 = x0.reshape(1, -1)
        if x0.ndim != 2 or x0.shape[0] != n:
            raise DatasetError("Clinical covariates must have shape ({}, q0), not {!r}"
                               .format(n, x0.shape))
        _check_finite(x0, "clinical covariates")

        x_clusters = [np.asarray(x, dtype=float) for x in x_clusters]
        for l, x in enumerate(x_clusters):
            if x.ndim != 2 or x.shape[0] != n:
                raise DatasetError("Covariates of cluster {} must have shape ({}, q), not {!r}"
                                   .format(l + 1, n, x.shape))
            _check_finite(x, "covariates of cluster {}".format(l + 1))

        proportions = np.asarray(proportions, dtype=float)
        if proportions.ndim != 2 or proportions.shape[0] != n:
            raise DatasetError("Proportions must have shape ({}, L), not {!r}"
                               .format(n, proportions.shape))
        if proportions.shape[1] != len(x_clusters):
            raise DatasetError("Dataset has {} proportion columns but {} cluster covariate blocks"
                               .format(proportions.shape[1], len(x_clusters)))
        bad = ~np.isfinite(proportions).all(axis=1) | (proportions < 0).any(axis=1) \
            | (np.abs(proportions.sum(axis=1) - 1) > PROPORTION_TOLERANCE)
        if bad.any():
            index = int(np.flatnonzero(bad)[0])
            raise DatasetError("Subject {} has proportions {!r} summing to {!r}; proportions "
                               "must be non-negative and sum to 1"
                               .format(index, proportions[index].tolist(),
                                       float(proportions[index].sum())))
        proportions = proportions / proportions.sum(axis=1, keepdims=True)

        self.time        = _readonly(time)
        self.status      = np.array(status, dtype=np.int8)
        self.status.flags.writeable = False
        self.x0          = _readonly(x0)
        self.x_clusters  = tuple(_readonly(x) for x in x_clusters)
        self.proportions = _readonly(proportions)
        self.meta        = str(meta)

    @classmethod
    def from_subjects(cls, subjects, meta=""):
        subjects = list(subjects)
        if not subjects:
            raise DatasetError("Dataset must contain at least one subject")
        L = len(subjects[0].x_clusters)
        return cls(time=[s.time for s in subjects],
                   status=[s.status for s in subjects],
                   x0=[s.x0 for s in subjects],
                   x_clusters=[[s.x_clusters[l] for s in subjects] for l in range(L)],
                   proportions=[s.proportions.weights for s in subjects],
                   meta=meta)

    @property
    def n(self):
        return len(self.time)

    @property
    def dims(self):
        """``(L, q0, q_1, ..., q_L)``."""
        return (len(self.x_clusters), self.x0.shape[1], *(x.shape[1] for x in self.x_clusters))

    @property
    def events(self):
        return int(self.status.sum())

    def __len__(self):
        return self.n

    def __getitem__(self, index):
        return Subject(time=float(self.time[index]),
                       status=int(self.status[index]),
                       x0=self.x0[index],
                       x_clusters=tuple(x[index] for x in self.x_clusters),
                       proportions=Simplex(self.proportions[index]))

    @property
    def subjects(self):
        return [self[index] for index in range(self.n)]

    def take(self, indices):
        """Dataset made of the subjects at ``indices``, in that order."""
        indices = np.asarray(indices, dtype=int)
        return Dataset(self.time[indices], self.status[indices], self.x0[indices],
                       [x[indices] for x in self.x_clusters], self.proportions[indices],
                       meta=self.meta)

    def concat(self, other):
        if self.dims != other.dims:
            raise DatasetError("Cannot concatenate datasets with dimensions {!r} and {!r}"
                               .format(self.dims, other.dims))
        return Dataset(np.concatenate([self.time, other.time]),
                       np.concatenate([self.status, other.status]),
                       np.concatenate([self.x0, other.x0]),
                       [np.concatenate([a, b]) for a, b in zip(self.x_clusters, other.x_clusters)],
                       np.concatenate([self.proportions, other.proportions]),
                       meta=self.meta)

    def __repr__(self):
        return "(dataset n={} dims={!r})".format(self.n, self.dims)


def csv_header(dims):
    L, q0, *q = dims
    columns  = ["id", "time", "status"]
    columns += ["x0_{}".format(j + 1) for j in range(q0)]
    columns += ["p_{}".format(l + 1) for l in range(L)]
    for l, q_l in enumerate(q):
        columns += ["x{}_{}".format(l + 1, j + 1) for j in range(q_l)]
    return columns


def sidecar_path(path):
    return os.path.splitext(path)[0] + ".json"


def format_csv(ds):
    """Text of the CSV file and of the JSON sidecar describing ``ds``."""
    columns = csv_header(ds.dims)
    data = [np.arange(ds.n), ds.time, ds.status, *ds.x0.T, *ds.proportions.T]
    for x in ds.x_clusters:
        data += list(x.T)
    frame = pd.DataFrame(OrderedDict(zip(columns, data)))
    text = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")

    L, q0, *q = ds.dims
    sidecar = OrderedDict([("L", L), ("q0", q0), ("q", q), ("meta", ds.meta)])
    return text, json.dumps(sidecar, indent=2) + "\n"


def write_csv(ds, path):
    """Write ``ds`` to ``path`` as CSV, and its dimensions to the JSON sidecar next to it."""
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    text, sidecar = format_csv(ds)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    with open(sidecar_path(path), "w", encoding="utf-8", newline="\n") as f:
        f.write(sidecar)


def _dims_from_header(columns):
    q0 = sum(1 for c in columns if re.fullmatch(r"x0_\d+", c))
    L  = sum(1 for c in columns if re.fullmatch(r"p_\d+", c))
    q  = [sum(1 for c in columns if re.fullmatch(r"x{}_\d+".format(l + 1), c))
          for l in range(L)]
    return (L, q0, *q), ""


def _read_sidecar(path):
    try:
        with open(path, encoding="utf-8") as f:
            sidecar = json.load(f)
        L, q0, q = sidecar["L"], sidecar["q0"], list(sidecar["q"])
    except (KeyError, TypeError, json.JSONDecodeError) as error:
        raise DatasetError("Sidecar {!r} is malformed: {}"
                           .format(path, error)) from None
    if len(q) != L:
        raise DatasetError("Sidecar {!r} declares {} clusters but {} covariate widths"
                           .format(path, L, len(q)))
    return (L, q0, *q), sidecar.get("meta", "")


def read_csv(path):
    """Read a dataset written by :func:`write_csv`.

    Dimensions come from the JSON sidecar when present, and are otherwise inferred from the
    column names. Subjects keep the order of the file.
    """
    sidecar = sidecar_path(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    if os.path.exists(sidecar):
        dims, meta = _read_sidecar(sidecar)
    else:
        dims, meta = _dims_from_header(list(frame.columns))

    for column in csv_header(dims):
        if column not in frame.columns:
            raise DatasetError("Dataset {!r} is missing column {!r}"
                               .format(path, column))

    L, q0, *q = dims
    status = frame["status"].to_numpy()
    if np.isnan(status.astype(float)).any() or not np.isin(status, (0, 1)).all():
        index = int(np.flatnonzero(~np.isin(status, (0, 1)))[0])
        raise DatasetError("Row {} of {!r} has status {!r}; status must be 0 or 1"
                           .format(index, path, status.tolist()[index]))

    def block(prefix, width):
        return frame[["{}_{}".format(prefix, j + 1) for j in range(width)]] \
            .to_numpy(dtype=float).reshape(len(frame), width)

    return Dataset(time=frame["time"].to_numpy(dtype=float),
                   status=status.astype(int),
                   x0=block("x0", q0),
                   x_clusters=[block("x{}".format(l + 1), q_l) for l, q_l in enumerate(q)],
                   proportions=block("p", L),
                   meta=meta)


def censoring_rate(ds):
    return 1 - ds.events / ds.n


def kaplan_meier(ds):
    """Product-limit estimate of the survival function.

    Returns the distinct observed times and the survival probability just after each of them.
    """
    order  = np.argsort(ds.time, kind="mergesort")
    time   = ds.time[order]
    events = ds.status[order].astype(float)
    unique, first = np.unique(time, return_index=True)
    at_risk  = ds.n - first
    deaths   = np.add.reduceat(events, first)
    survival = np.cumprod(1 - deaths / at_risk)
    return unique, survival
