"""Replicated simulate-and-fit studies."""

from collections import OrderedDict
from dataclasses import dataclass, field, replace
import multiprocessing
import logging
import textwrap
import warnings
import json

import numpy as np
import pandas as pd
import jinja2

from ._utils import default_threads
from .special import RngStream
from .simulate import SimConfig, calibrate_censoring, simulate_dataset
from .estimate import FitOptions, FitError, ConvergenceWarning, fit, multi_start_fit


__all__ = ["StudyError", "StudyConfig", "StudyReport", "run_study", "report_table"]


logger = logging.getLogger(__name__)


# Largest tolerated fraction of failed fits at any sample size.
FAILURE_LIMIT = 0.2


class StudyError(Exception):
    pass


@dataclass
class StudyConfig:
    """Monte Carlo study design.

    Parameters
    ----------
    sample_sizes : sequence of int
        Sample sizes to simulate, in report order.
    replications : int
        Replications per sample size; at least 2.
    sim : :class:`SimConfig`
        Simulation template; its ``n`` and ``seed`` are overridden per replication.
    fit_options : :class:`FitOptions`
        Optimizer settings of every fit.
    seed : int
        Root seed of the study.
    starts : int
        Starts per fit (see :func:`multi_start_fit`).
    threads : int or None
        Worker processes. If ``None``, taken from the environment or the number of CPUs.
    """
    sample_sizes: tuple      = (200, 500, 1000)
    replications: int        = 100
    sim:          SimConfig  = field(default_factory=SimConfig.benchmark)
    fit_options:  FitOptions = field(default_factory=FitOptions)
    seed:         int        = 0
    starts:       int        = 1
    threads:      int        = None

    def __post_init__(self):
        self.sample_sizes = tuple(self.sample_sizes)
        if not self.sample_sizes or \
                not all(isinstance(n, int) and n > 0 for n in self.sample_sizes):
            raise ValueError("Sample sizes must be positive integers, not {!r}"
                             .format(self.sample_sizes))
        if not isinstance(self.replications, int) or self.replications < 2:
            raise ValueError("Replications must be an integer of at least 2, not {!r}"
                             .format(self.replications))
        if not isinstance(self.starts, int) or self.starts < 1:
            raise ValueError("Starts must be a positive integer, not {!r}"
                             .format(self.starts))

    def full_scale(self):
        """The same design with 1000 replications."""
        return replace(self, replications=1000)

    def to_json(self):
        return OrderedDict([
            ("sample_sizes", list(self.sample_sizes)),
            ("replications", self.replications),
            ("sim",          self.sim.to_json()),
            ("fit_options",  self.fit_options.to_json()),
            ("seed",         self.seed),
            ("starts",       self.starts),
            ("threads",      self.threads),
        ])

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError("Unknown study settings {!r}"
                             .format(sorted(unknown)))
        if "sim" in obj:
            obj["sim"] = SimConfig.from_json(obj["sim"])
        if "fit_options" in obj:
            obj["fit_options"] = FitOptions.from_json(obj["fit_options"])
        return cls(**obj)


@dataclass
class StudyReport:
    """Summary of a study, one row per sample size and one column per parameter.

    ``spread`` is the standard deviation of the estimates across successful replications (with
    divisor ``R``), so that ``mse == (mean - truth) ** 2 + spread ** 2``. Failed replications are
    counted in ``failures`` and excluded from every statistic.
    """
    sample_sizes: tuple
    labels:       tuple
    truth:        np.ndarray
    mean:         np.ndarray
    spread:       np.ndarray
    mse:          np.ndarray
    failures:     tuple
    replications: int
    estimates:    tuple = ()

    def to_json(self):
        return OrderedDict([
            ("sample_sizes", list(self.sample_sizes)),
            ("labels",       list(self.labels)),
            ("truth",        self.truth.tolist()),
            ("mean",         self.mean.tolist()),
            ("spread",       self.spread.tolist()),
            ("mse",          self.mse.tolist()),
            ("failures",     list(self.failures)),
            ("replications", self.replications),
            ("estimates",    [estimate.tolist() for estimate in self.estimates]),
        ])

    @classmethod
    def from_json(cls, obj):
        return cls(sample_sizes=tuple(obj["sample_sizes"]),
                   labels=tuple(obj["labels"]),
                   truth=np.array(obj["truth"], dtype=float),
                   mean=np.array(obj["mean"], dtype=float),
                   spread=np.array(obj["spread"], dtype=float),
                   mse=np.array(obj["mse"], dtype=float),
                   failures=tuple(obj["failures"]),
                   replications=obj["replications"],
                   estimates=tuple(np.array(estimate, dtype=float).reshape(-1, len(obj["labels"]))
                                   for estimate in obj.get("estimates", [])))


def _replicate(task):
    sim, stream, fit_options, starts = task
    ds = simulate_dataset(sim, rng=stream)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            if starts == 1:
                report = fit(ds, "default", fit_options)
            else:
                report = multi_start_fit(ds, starts, stream.substream(2), options=fit_options)
    except FitError as error:
        return None, str(error)
    if not report.converged:
        return None, "not converged (gradient norm {:.3g})".format(report.grad_norm)
    return report.params_hat.to_vector(), None


def run_study(cfg, threads=None):
    """Simulate and fit ``cfg.replications`` datasets at each sample size.

    Replication ``r`` at the ``k``-th sample size draws from substream ``(0, r, k)`` of the study
    seed; censoring is calibrated once, on substream 1, and shared by all replications. Results
    do not depend on ``threads``.
    """
    threads = default_threads(threads if threads is not None else cfg.threads)
    root = RngStream(cfg.seed)
    sim  = cfg.sim
    if sim.censoring_rate is None:
        rate = calibrate_censoring(root.substream(1), sim, sim.pilot_n)
        sim  = replace(sim, censoring_rate=rate)
        logger.info("calibrated censoring rate %.6g", rate)

    tasks = []
    for k, n in enumerate(cfg.sample_sizes):
        for r in range(cfg.replications):
            stream = root.substream(0).substream(r).substream(k)
            tasks.append((replace(sim, n=n, seed=cfg.seed), stream, cfg.fit_options, cfg.starts))

    logger.info("running %d replications on %d worker(s)", len(tasks), threads)
    if threads == 1:
        results = list(map(_replicate, tasks))
    else:
        with multiprocessing.Pool(threads) as pool:
            results = pool.map(_replicate, tasks)

    truth  = sim.truth.to_vector()
    labels = tuple(sim.truth.labels(xi_base=1))
    means, spreads, mses, failures, estimates = [], [], [], [], []
    for k, n in enumerate(cfg.sample_sizes):
        chunk  = results[k * cfg.replications:(k + 1) * cfg.replications]
        failed = [(r, message) for r, (_, message) in enumerate(chunk) if message is not None]
        if len(failed) > FAILURE_LIMIT * cfg.replications:
            raise StudyError("{} of {} fits failed at n={}, more than {:.0%}:\n{}"
                             .format(len(failed), cfg.replications, n, FAILURE_LIMIT,
                                     "\n".join("replication {}: {}".format(r, message)
                                               for r, message in failed[:10])))
        estimate = np.array([vector for vector, message in chunk if message is None])
        logger.info("n=%d: %d fits, %d failed", n, len(estimate), len(failed))
        means.append(estimate.mean(axis=0))
        spreads.append(estimate.std(axis=0))
        mses.append(np.mean((estimate - truth) ** 2, axis=0))
        failures.append(len(failed))
        estimates.append(estimate)

    return StudyReport(sample_sizes=cfg.sample_sizes, labels=labels, truth=truth,
                       mean=np.array(means), spread=np.array(spreads), mse=np.array(mses),
                       failures=tuple(failures), replications=cfg.replications,
                       estimates=tuple(estimates))


MARKDOWN_TEMPLATE = """
    | Parameter | Truth |{% for n in sizes %} n={{ n }} estimate (SD) | n={{ n }} MSE |{% endfor %}

    |---|---:|{% for n in sizes %}---:|---:|{% endfor %}

    {% for row in rows %}
    | {{ row.label }} | {{ row.truth|number }} |{% for cell in row.cells %} {{ cell.mean|number }} ({{ cell.spread|number }}) | {{ cell.mse|number }} |{% endfor %}

    {% endfor %}

    Failed fits (of {{ replications }}):{% for n, count in failures %} n={{ n }}: {{ count }}{{ "," if not loop.last }}{% endfor %}
"""


def _number(value):
    return "{:.3f}".format(value)


def _markdown(rep):
    source   = textwrap.dedent(MARKDOWN_TEMPLATE).strip()
    env      = jinja2.Environment(trim_blocks=True, lstrip_blocks=True)
    env.filters["number"] = _number
    compiled = env.from_string(source)
    rows = []
    for j, label in enumerate(rep.labels):
        rows.append({
            "label": label,
            "truth": rep.truth[j],
            "cells": [{"mean": rep.mean[k, j], "spread": rep.spread[k, j], "mse": rep.mse[k, j]}
                      for k in range(len(rep.sample_sizes))],
        })
    return compiled.render({
        "sizes":        rep.sample_sizes,
        "rows":         rows,
        "replications": rep.replications,
        "failures":     list(zip(rep.sample_sizes, rep.failures)),
    }) + "\n"


def _csv(rep):
    columns = OrderedDict([("parameter", list(rep.labels)), ("truth", rep.truth)])
    for k, n in enumerate(rep.sample_sizes):
        columns["mean_n{}".format(n)]   = rep.mean[k]
        columns["spread_n{}".format(n)] = rep.spread[k]
        columns["mse_n{}".format(n)]    = rep.mse[k]
    return pd.DataFrame(columns).to_csv(index=False, float_format="%.17g", lineterminator="\n")


def report_table(rep, format="markdown"):
    """Render ``rep`` with parameters as rows and, per sample size, estimate, spread and MSE."""
    if format == "markdown":
        return _markdown(rep)
    if format == "csv":
        return _csv(rep)
    if format == "json":
        return json.dumps(rep.to_json(), indent=2) + "\n"
    raise ValueError("Report format must be one of 'markdown', 'csv' or 'json', not {!r}"
                     .format(format))
