"""Closed-form quantities of the generalized promotion time cure model.

A subject is described by a :class:`GptcmPoint`: a Poisson rate ``theta`` for the number of
clonogenic cells, ``L`` Weibull promotion time distributions sharing one shape parameter, and the
subject's cell-type proportions. Under the first-activation scheme the population survival is
``exp(-theta * F(t))`` with ``F = sum(p_l * F_l)``; under the last-activation scheme it is
``1 + exp(-theta) - exp(-theta * sum(p_l * S_l))``.

All evaluators accept a scalar or an array of time points; an array of shape ``S`` yields an array
of shape ``S`` (or ``S + (L,)`` for per-cluster results).
"""

from collections import OrderedDict
from dataclasses import dataclass, field
import warnings

import numpy as np
import scipy.special

from ._utils import time_array, unwrap
from .special import Simplex, gamma_fn, find_root


__all__ = [
    "ImproperSurvivalWarning",
    "WeibullCluster", "GptcmPoint", "ModelParams", "CurveGrid",
    "cluster_survival", "cluster_cdf", "cluster_density",
    "pop_survival_first", "ptcm_survival", "ptcm_survival_last",
    "pop_density_first", "pop_hazard_first", "pop_cumhazard_first",
    "noncured_survival", "noncured_density", "noncured_hazard", "noncured_quantile",
    "pop_survival_last", "pop_density_last", "cure_fraction",
    "mixture_survival", "mixture_density", "birnbaum_importance",
    "link_theta", "link_mu", "point_for_subject", "evaluate_curves",
]


# Multiple of the largest cluster scale standing in for t = infinity. For the shapes of interest
# the neglected tail mass exp(-(1e4)**kappa) is far below double precision.
HORIZON_FACTOR = 1e4


class ImproperSurvivalWarning(UserWarning):
    pass


def _positive(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)) \
            or not np.isfinite(value) or value <= 0:
        raise ValueError("{} must be a positive number, not {!r}"
                         .format(what, value))
    return float(value)


class WeibullCluster:
    """Promotion time distribution of one cell cluster.

    ``S_l(t) = exp(-(t / scale) ** kappa)`` with ``scale = mu / Gamma(1 + 1 / kappa)``, so that
    ``mu`` is the mean promotion time.

    Parameters
    ----------
    kappa : float
        Weibull shape, shared by all clusters of a subject.
    mu : float
        Mean promotion time of the cluster.
    """
    def __init__(self, kappa, mu):
        self.kappa = _positive(kappa, "Weibull shape")
        self.mu    = _positive(mu, "Weibull mean")
        self.scale = self.mu / gamma_fn(1 + 1 / self.kappa)

    @classmethod
    def from_scale(cls, kappa, scale):
        scale = _positive(scale, "Weibull scale")
        cluster = cls(kappa, scale * gamma_fn(1 + 1 / _positive(kappa, "Weibull shape")))
        cluster.scale = scale
        return cluster

    def __eq__(self, other):
        return isinstance(other, WeibullCluster) and \
            (self.kappa, self.mu, self.scale) == (other.kappa, other.mu, other.scale)

    def __hash__(self):
        return hash((WeibullCluster, self.kappa, self.mu))

    def __repr__(self):
        return "(weibull kappa={:.6g} mu={:.6g} scale={:.6g})".format(
            self.kappa, self.mu, self.scale)


def cluster_survival(c, t):
    t, scalar = time_array(t)
    return unwrap(np.exp(-(t / c.scale) ** c.kappa), scalar)


def cluster_cdf(c, t):
    t, scalar = time_array(t)
    return unwrap(-np.expm1(-(t / c.scale) ** c.kappa), scalar)


def cluster_density(c, t):
    t, scalar = time_array(t, positive=True)
    z = (t / c.scale) ** c.kappa
    return unwrap(c.kappa / t * z * np.exp(-z), scalar)


class GptcmPoint:
    """Model state of one subject.

    Parameters
    ----------
    theta : float
        Poisson rate of the number of clonogenic cells.
    clusters : list of :class:`WeibullCluster`
        Promotion time distribution of each cluster. All clusters share one shape parameter.
    proportions : :class:`Simplex` or sequence of float
        Cell-type proportions of the subject.
    """
    def __init__(self, theta, clusters, proportions):
        self.theta = _positive(theta, "Poisson rate")
        self.clusters = tuple(clusters)
        if not self.clusters:
            raise ValueError("Subject must have at least one cluster")
        for cluster in self.clusters:
            if not isinstance(cluster, WeibullCluster):
                raise TypeError("Cluster must be a WeibullCluster, not {!r}"
                                .format(cluster))
        if not isinstance(proportions, Simplex):
            proportions = Simplex(proportions)
        self.proportions = proportions
        if len(self.proportions) != len(self.clusters):
            raise ValueError("Subject has {} clusters but {} proportions"
                             .format(len(self.clusters), len(self.proportions)))
        kappas = {cluster.kappa for cluster in self.clusters}
        if len(kappas) != 1:
            raise ValueError("Clusters must share a common shape parameter, not {!r}"
                             .format(sorted(kappas)))
        self.kappa  = self.clusters[0].kappa
        self.scales = np.array([cluster.scale for cluster in self.clusters])
        self.weights = self.proportions.weights

    @classmethod
    def from_log_mu(cls, theta, kappa, log_mu, proportions):
        return cls(theta, [WeibullCluster(kappa, np.exp(m)) for m in log_mu], proportions)

    @property
    def horizon(self):
        """Time standing in for infinity."""
        return HORIZON_FACTOR * float(self.scales.max())

    def __len__(self):
        return len(self.clusters)

    def __repr__(self):
        return "(gptcm theta={:.6g} {!r} {})".format(
            self.theta, self.proportions, " ".join(map(repr, self.clusters)))

    # Per-cluster pieces, shaped t.shape + (L,).

    def _z(self, t):
        return (t[..., None] / self.scales) ** self.kappa

    def _cluster_pdf(self, t):
        # Right limits at t = 0: zero for kappa > 1, 1/scale for kappa = 1, unbounded otherwise.
        u = t[..., None] / self.scales
        with np.errstate(divide="ignore"):
            return self.kappa / self.scales * u ** (self.kappa - 1) * np.exp(-u ** self.kappa)

    def _log_cluster_pdf(self, t):
        log_u = np.log(t)[..., None] - np.log(self.scales)
        return np.log(self.kappa) - np.log(self.scales) + (self.kappa - 1) * log_u \
            - np.exp(self.kappa * log_u)

    # Mixture pieces, shaped t.shape.

    def mixture_sf(self, t):
        return np.exp(-self._z(t)) @ self.weights

    def mixture_cdf(self, t):
        return -np.expm1(-self._z(t)) @ self.weights

    def mixture_pdf(self, t):
        return self._cluster_pdf(t) @ self.weights

    def log_mixture_pdf(self, t):
        with np.errstate(divide="ignore"):
            return scipy.special.logsumexp(self._log_cluster_pdf(t), b=self.weights, axis=-1)

    def log_mixture_sf(self, t):
        with np.errstate(divide="ignore"):
            return scipy.special.logsumexp(-self._z(t), b=self.weights, axis=-1)


def _log_one_minus_exp_neg(log_x):
    # log(1 - exp(-x)) given log(x), accurate when x underflows.
    x = np.exp(log_x)
    with np.errstate(divide="ignore"):
        return np.where(x < 1e-300, log_x, np.log(-np.expm1(-x)))


def pop_survival_first(gp, t):
    t, scalar = time_array(t)
    return unwrap(np.exp(-gp.theta * gp.mixture_cdf(t)), scalar)


def ptcm_survival(theta, F):
    theta = _positive(theta, "Poisson rate")
    F, scalar = time_array(F, name="Promotion time CDF")
    if (F > 1).any():
        raise ValueError("Promotion time CDF must be within [0, 1], not {!r}"
                         .format(float(F[F > 1].flat[0])))
    return unwrap(np.exp(-theta * F), scalar)


def ptcm_survival_last(theta, F):
    theta = _positive(theta, "Poisson rate")
    F, scalar = time_array(F, name="Promotion time CDF")
    if (F > 1).any():
        raise ValueError("Promotion time CDF must be within [0, 1], not {!r}"
                         .format(float(F[F > 1].flat[0])))
    return unwrap(np.exp(-theta) - np.expm1(-theta * (1 - F)), scalar)


def pop_density_first(gp, t):
    t, scalar = time_array(t, positive=True)
    f = gp.mixture_pdf(t)
    return unwrap(gp.theta * f * np.exp(-gp.theta * gp.mixture_cdf(t)), scalar)


def pop_hazard_first(gp, t):
    t, scalar = time_array(t, positive=True)
    return unwrap(gp.theta * gp.mixture_pdf(t), scalar)


def pop_cumhazard_first(gp, t):
    t, scalar = time_array(t)
    return unwrap(gp.theta * gp.mixture_cdf(t), scalar)


def cure_fraction(gp):
    return float(np.exp(-gp.theta))


def _noncured_sf(theta, s, F):
    # exp(-theta) * expm1(theta * s) overflows for large theta.
    return np.exp(-theta * F) * -np.expm1(-theta * s) / -np.expm1(-theta)


def noncured_survival(gp, t):
    t, scalar = time_array(t)
    return unwrap(_noncured_sf(gp.theta, gp.mixture_sf(t), gp.mixture_cdf(t)), scalar)


def noncured_density(gp, t):
    t, scalar = time_array(t, positive=True)
    f = gp.mixture_pdf(t)
    value = gp.theta * f * np.exp(-gp.theta * gp.mixture_cdf(t)) / -np.expm1(-gp.theta)
    return unwrap(value, scalar)


def noncured_hazard(gp, t):
    t, scalar = time_array(t, positive=True)
    log_theta = np.log(gp.theta)
    log_value = log_theta + gp.log_mixture_pdf(t) \
        - _log_one_minus_exp_neg(log_theta + gp.log_mixture_sf(t))
    return unwrap(np.exp(log_value), scalar)


def noncured_quantile(gp, q, tol=1e-10):
    """Time by which a fraction ``q`` of the non-cured population has had the event."""
    if not 0 < q < 1:
        raise ValueError("Quantile level must be within (0, 1), not {!r}"
                         .format(q))
    return find_root(lambda t: noncured_survival(gp, t) - (1 - q), 0.0, gp.horizon, tol)


def pop_survival_last(gp, t):
    t, scalar = time_array(t)
    s = gp.mixture_sf(t)
    return unwrap(np.exp(-gp.theta) - np.expm1(-gp.theta * s), scalar)


def pop_density_last(gp, t):
    t, scalar = time_array(t, positive=True)
    f = gp.mixture_pdf(t)
    return unwrap(gp.theta * f * np.exp(-gp.theta * gp.mixture_sf(t)), scalar)


def mixture_survival(pi0, clusters, proportions, t):
    """Classical mixture cure survival ``pi0 + sum(p_l * S_l(t))``.

    This is a comparison diagnostic only. The mixture weights are not rescaled by ``1 - pi0``,
    so the result exceeds 1 near ``t = 0`` whenever ``pi0 > 0``; an
    :class:`ImproperSurvivalWarning` is issued when that happens.
    """
    if not 0 <= pi0 <= 1:
        raise ValueError("Cure probability must be within [0, 1], not {!r}"
                         .format(pi0))
    t, scalar = time_array(t)
    if not isinstance(proportions, Simplex):
        proportions = Simplex(proportions)
    if len(clusters) != len(proportions):
        raise ValueError("Mixture has {} clusters but {} proportions"
                         .format(len(clusters), len(proportions)))
    sf = np.stack([np.exp(-(t / c.scale) ** c.kappa) for c in clusters], axis=-1)
    value = pi0 + sf @ proportions.weights
    if (value > 1).any():
        warnings.warn("Mixture survival exceeds 1 (maximum {!r}); the mixture weights are not "
                      "rescaled by the cure probability"
                      .format(float(value.max())),
                      ImproperSurvivalWarning, stacklevel=2)
    return unwrap(value, scalar)


def mixture_density(clusters, proportions, t):
    t, scalar = time_array(t, positive=True)
    if not isinstance(proportions, Simplex):
        proportions = Simplex(proportions)
    pdf = np.stack([cluster_density(c, t) for c in clusters], axis=-1)
    return unwrap(pdf @ proportions.weights, scalar)


def birnbaum_importance(gp, t):
    """Partial derivatives of the population survival with respect to each ``S_l(t)``."""
    t, _ = time_array(t)
    value = np.exp(-gp.theta * gp.mixture_cdf(t))[..., None] * gp.theta * gp.weights
    return value


def _row(values, what):
    array = np.asarray(values, dtype=float)
    if np.isnan(array).any():
        raise ValueError("{} must not contain NaN".format(what))
    return array


def link_theta(xi, x0):
    """Poisson rate ``exp(xi_0 + x0 . xi_1..)``; ``x0`` may hold one row or a matrix of rows."""
    xi = _row(xi, "Rate coefficients").reshape(-1)
    x0 = _row(x0, "Clinical covariates")
    if x0.shape[-1:] != (len(xi) - 1,):
        raise ValueError("Rate coefficients have {} entries but covariates have {} columns; "
                         "expected one more coefficient than columns"
                         .format(len(xi), x0.shape[-1] if x0.ndim else 0))
    value = np.exp(xi[0] + x0 @ xi[1:])
    return float(value) if np.ndim(value) == 0 else value


def link_mu(beta, x):
    """Cluster mean promotion time ``exp(x . beta)``."""
    beta = _row(beta, "Cluster coefficients").reshape(-1)
    x    = _row(x, "Cluster covariates")
    if x.shape[-1:] != (len(beta),):
        raise ValueError("Cluster coefficients have {} entries but covariates have {} columns"
                         .format(len(beta), x.shape[-1] if x.ndim else 0))
    value = np.exp(x @ beta)
    return float(value) if np.ndim(value) == 0 else value


@dataclass
class ModelParams:
    """Free parameters of the regression model.

    Parameters
    ----------
    log_kappa : float
        Logarithm of the common Weibull shape.
    xi : array of float
        Intercept ``xi_0`` followed by the ``q0`` clinical coefficients of ``log(theta)``.
    betas : tuple of arrays of float
        For each cluster, the ``q_l`` coefficients of ``log(mu_l)`` (no intercept).
    """
    log_kappa: float
    xi:        np.ndarray
    betas:     tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.log_kappa = float(self.log_kappa)
        if not np.isfinite(self.log_kappa):
            raise ValueError("Log shape must be finite, not {!r}"
                             .format(self.log_kappa))
        self.xi = np.array(self.xi, dtype=float).reshape(-1)
        if self.xi.size < 1:
            raise ValueError("Rate coefficients must include the intercept")
        self.betas = tuple(np.array(beta, dtype=float).reshape(-1) for beta in self.betas)
        if not self.betas:
            raise ValueError("Model must have at least one cluster")

    @classmethod
    def zeros(cls, dims):
        L, q0, *q = dims
        return cls(0.0, np.zeros(q0 + 1), tuple(np.zeros(q_l) for q_l in q))

    @classmethod
    def from_vector(cls, vector, dims):
        L, q0, *q = dims
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (2 + q0 + sum(q),):
            raise ValueError("Parameter vector of shape {!r} does not match dimensions {!r}"
                             .format(vector.shape, tuple(dims)))
        cuts = np.cumsum(q)[:-1]
        return cls(vector[0], vector[1:2 + q0], tuple(np.split(vector[2 + q0:], cuts)))

    @property
    def kappa(self):
        return float(np.exp(self.log_kappa))

    @property
    def dims(self):
        return (len(self.betas), len(self.xi) - 1, *(len(beta) for beta in self.betas))

    def to_vector(self):
        return np.concatenate([[self.log_kappa], self.xi, *self.betas])

    def labels(self, xi_base=0):
        """Parameter names in vector order.

        ``xi_base`` is the index given to the intercept; 1 reproduces the numbering of the
        benchmark design, which counts the intercept as the first rate coefficient.
        """
        names = ["log_kappa"]
        names += ["xi_{}".format(xi_base + j) for j in range(len(self.xi))]
        for l, beta in enumerate(self.betas):
            names += ["beta_{}_{}".format(l + 1, j + 1) for j in range(len(beta))]
        return names

    def check_dims(self, dims):
        if tuple(self.dims) != tuple(dims):
            raise ValueError("Parameters have dimensions {!r} but data has {!r}"
                             .format(tuple(self.dims), tuple(dims)))

    def to_json(self):
        return OrderedDict([
            ("log_kappa", self.log_kappa),
            ("xi",        self.xi.tolist()),
            ("betas",     [beta.tolist() for beta in self.betas]),
        ])

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(obj["log_kappa"], obj["xi"], obj["betas"])
        except KeyError as error:
            raise ValueError("Model parameters lack the {!r} field"
                             .format(error.args[0])) from None

    def __eq__(self, other):
        return isinstance(other, ModelParams) and self.dims == other.dims and \
            np.array_equal(self.to_vector(), other.to_vector())


def point_for_subject(params, x0, x_clusters, proportions):
    """Model state of a subject with clinical covariates ``x0`` and cluster covariates."""
    if len(x_clusters) != len(params.betas):
        raise ValueError("Subject has {} cluster covariate blocks but the model has {} clusters"
                         .format(len(x_clusters), len(params.betas)))
    theta = link_theta(params.xi, x0)
    kappa = params.kappa
    clusters = [WeibullCluster(kappa, link_mu(beta, x))
                for beta, x in zip(params.betas, x_clusters)]
    return GptcmPoint(theta, clusters, proportions)


@dataclass
class CurveGrid:
    """Tabulated model quantities, one column per quantity, keyed by column name."""
    scheme:  str
    columns: OrderedDict

    @property
    def t(self):
        return self.columns["t"]

    def __getitem__(self, name):
        return self.columns[name]


CURVE_COLUMNS = {
    "first": ("t", "S_pop", "f_pop", "h_pop", "S_star", "h_star", "H_pop"),
    "last":  ("t", "S_tilde", "f_tilde"),
}


def evaluate_curves(gp, t_grid, scheme="first"):
    """Tabulate survival, density and hazard quantities of ``gp`` on ``t_grid``.

    Density and hazard columns at ``t = 0`` take their right limits; a grid containing zero is
    rejected when those limits are unbounded (shape below 1).
    """
    if scheme not in CURVE_COLUMNS:
        raise ValueError("Activation scheme must be one of 'first' or 'last', not {!r}"
                         .format(scheme))
    t, _ = time_array(np.atleast_1d(t_grid))
    if t.ndim != 1:
        raise ValueError("Time grid must be one-dimensional")
    if (t == 0).any() and gp.kappa < 1:
        raise ValueError("Densities are unbounded at t = 0 for shape {!r} < 1; start the grid "
                         "above zero".format(gp.kappa))

    theta = gp.theta
    s = gp.mixture_sf(t)
    F = gp.mixture_cdf(t)
    f = gp.mixture_pdf(t)
    columns = OrderedDict(t=t)
    if scheme == "first":
        columns["S_pop"]  = np.exp(-theta * F)
        columns["f_pop"]  = theta * f * np.exp(-theta * F)
        columns["h_pop"]  = theta * f
        columns["S_star"] = _noncured_sf(theta, s, F)
        columns["h_star"] = theta * f / -np.expm1(-theta * s)
        positive = t > 0
        if positive.any():
            columns["h_star"][positive] = noncured_hazard(gp, t[positive])
        columns["H_pop"]  = theta * F
    else:
        columns["S_tilde"] = np.exp(-theta) - np.expm1(-theta * s)
        columns["f_tilde"] = theta * f * np.exp(-theta * s)
    return CurveGrid(scheme, columns)
