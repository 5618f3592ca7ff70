"""Reliability of systems with a Poisson number of units.

A system holds ``N ~ Poisson(theta)`` units, each assigned to subsystem ``l`` with probability
``p_l`` and failing at a Weibull time of that subsystem; equivalently the subsystems hold
independent ``N_l ~ Poisson(theta * p_l)`` units. Four topologies are supported:

* ``series``: the system fails with its first unit (first activation);
* ``parallel``: the system fails with its last unit (last activation);
* ``parallel_series``: subsystems are series of their units and are arranged in parallel;
* ``series_parallel``: subsystems are parallel arrangements of their units and are arranged in
  series.

An empty subsystem never fails. Hence a parallel-series system with an empty subsystem never
fails, and an empty subsystem never causes a series-parallel system to fail.
"""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ._utils import time_array, unwrap
from .special import Simplex
from .model import (WeibullCluster, GptcmPoint, pop_survival_first, pop_survival_last,
                    birnbaum_importance)
from .simulate import sample_latent_batch


__all__ = [
    "UnsupportedSchemeError", "SCHEMES", "SystemSpec",
    "system_survival", "coupled_failure_times", "monte_carlo_survival", "importance_ranking",
]


SCHEMES = ("series", "parallel", "parallel_series", "series_parallel")

MIN_DRAWS = 10_000


class UnsupportedSchemeError(ValueError):
    pass


@dataclass
class SystemSpec:
    """System with a Poisson number of units.

    Parameters
    ----------
    scheme : str
        One of :data:`SCHEMES`.
    theta : float
        Mean number of units.
    proportions : :class:`Simplex`
        Probability of a unit belonging to each subsystem.
    clusters : tuple of :class:`WeibullCluster`
        Failure time distribution of the units of each subsystem.
    """
    scheme:      str
    theta:       float
    proportions: Simplex
    clusters:    tuple

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError("System scheme must be one of {}, not {!r}"
                             .format(", ".join(map(repr, SCHEMES)), self.scheme))
        if not isinstance(self.proportions, Simplex):
            self.proportions = Simplex(self.proportions)
        self.clusters = tuple(self.clusters)
        # Checks the rate, the common shape and the number of subsystems.
        self.point = GptcmPoint(self.theta, self.clusters, self.proportions)
        self.theta = self.point.theta

    def to_json(self):
        return OrderedDict([
            ("scheme",      self.scheme),
            ("theta",       self.theta),
            ("kappa",       self.point.kappa),
            ("mu",          [cluster.mu for cluster in self.clusters]),
            ("proportions", self.proportions.weights.tolist()),
        ])

    @classmethod
    def from_json(cls, obj):
        """Build a spec from ``scheme``, ``theta``, ``kappa``, ``proportions`` and either the
        means ``mu`` or their logarithms ``log_mu``."""
        try:
            if "log_mu" in obj:
                mu = np.exp(np.asarray(obj["log_mu"], dtype=float))
            else:
                mu = obj["mu"]
            clusters = [WeibullCluster(obj["kappa"], float(m)) for m in mu]
            return cls(obj["scheme"], obj["theta"], Simplex(obj["proportions"]), clusters)
        except KeyError as error:
            raise ValueError("System spec lacks the {!r} field"
                             .format(error.args[0])) from None


def system_survival(spec, t):
    """Probability that the system survives past ``t``."""
    gp = spec.point
    if spec.scheme == "series":
        return pop_survival_first(gp, t)
    if spec.scheme == "parallel":
        return pop_survival_last(gp, t)

    t, scalar = time_array(t)
    z = (t[..., None] / gp.scales) ** gp.kappa
    rate = gp.theta * gp.weights
    if spec.scheme == "parallel_series":
        # Subsystem l has failed by t iff at least one of its units has.
        value = 1 - np.prod(-np.expm1(-rate * -np.expm1(-z)), axis=-1)
    else:
        # Subsystem l survives past t iff it is empty or one of its units survives.
        value = np.prod(np.exp(-rate) - np.expm1(-rate * np.exp(-z)), axis=-1)
    return unwrap(value, scalar)


def coupled_failure_times(spec, draws, rng):
    """Failure times of all four topologies on ``draws`` shared latent unit populations.

    The result maps every scheme to an array of ``draws`` failure times, ``inf`` for systems that
    never fail. Because the draws are shared, pathwise inequalities between topologies can be
    checked directly.
    """
    batch = sample_latent_batch(rng, spec.point, draws)
    return OrderedDict([
        ("series",          batch.event_times("first")),
        ("parallel",        batch.event_times("last")),
        ("parallel_series", batch.cluster_min.max(axis=1)),
        ("series_parallel", np.where(batch.counts > 0, batch.cluster_max, np.inf).min(axis=1)),
    ])


def monte_carlo_survival(spec, t_grid, draws, rng):
    """Empirical survival of ``spec`` on ``t_grid`` and its binomial standard error."""
    if not isinstance(draws, int) or draws < MIN_DRAWS:
        raise ValueError("Monte Carlo draws must be an integer of at least {}, not {!r}"
                         .format(MIN_DRAWS, draws))
    t, scalar = time_array(t_grid)
    times = np.sort(coupled_failure_times(spec, draws, rng)[spec.scheme])
    survived = draws - np.searchsorted(times, t, side="right")
    estimate = survived / draws
    stderr   = np.sqrt(estimate * (1 - estimate) / draws)
    return unwrap(estimate, scalar), unwrap(stderr, scalar)


def importance_ranking(spec, t):
    """Subsystem numbers (starting at 1) by decreasing Birnbaum importance at time ``t``.

    Ties are ordered by subsystem number. Only series systems are supported.
    """
    if spec.scheme != "series":
        raise UnsupportedSchemeError("Importance ranking is only defined for series systems, "
                                     "not {!r}"
                                     .format(spec.scheme))
    if np.ndim(t) != 0:
        raise ValueError("Importance ranking takes a single time point, not {!r}"
                         .format(t))
    importance = birnbaum_importance(spec.point, t)
    order = np.lexsort((np.arange(len(importance)), -importance))
    return [int(index) + 1 for index in order]
