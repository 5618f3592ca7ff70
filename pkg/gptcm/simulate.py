"""Synthetic multiscale survival data.

Event times can be drawn by two independent mechanisms: by simulating the latent clonogenic cells
(a Poisson number of cells, each assigned to a cluster and given a Weibull promotion time) or by
inverting the non-cured survival function. The first is the generative model itself and is the
default; the second serves as a cross-check.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np

from .special import RngStream, _generator, sample_poisson, sample_dirichlet, find_root
from .model import ModelParams, point_for_subject
from .dataset import Dataset


__all__ = [
    "CalibrationWarning", "SimConfig", "LatentDraw", "LatentBatch", "benchmark_truth",
    "gen_covariates", "sample_event_latent", "sample_latent_batch", "sample_event_invcdf",
    "calibrate_censoring", "simulate_dataset",
]


logger = logging.getLogger(__name__)


class CalibrationWarning(UserWarning):
    pass


def benchmark_truth():
    """Three-cluster parameter values used as the default simulation truth."""
    return ModelParams(log_kappa=1.10, xi=[-0.80, 0.90, 0.60],
                       betas=[[0.40, -0.30], [0.25, -0.45], [-0.20, 0.30]])


@dataclass
class SimConfig:
    """Simulation design.

    Parameters
    ----------
    n : int
        Number of subjects.
    L : int
        Number of cell clusters; must agree with ``truth``, from which it is taken by default.
    truth : :class:`ModelParams`
        Parameters generating the data.
    dirichlet_alpha : sequence of float
        Concentrations of the Dirichlet distribution of the proportions. Defaults to all ones.
    bernoulli_p : float
        Success probability of the first clinical covariate.
    target_censoring : float
        Censoring rate the exponential censoring distribution is calibrated to.
    scheme : str
        ``"first"`` or ``"last"`` activation.
    seed : int
        Seed of the dataset's random stream.
    method : str
        ``"latent"`` (simulate the cells) or ``"invcdf"`` (invert the survival function; first
        activation only).
    censoring_rate : float or None
        Rate of the exponential censoring distribution. If ``None``, it is calibrated to
        ``target_censoring`` on a pilot sample of ``pilot_n`` subjects.
    pilot_n : int
        Size of the calibration pilot sample.
    """
    n:                int   = 1000
    L:                int   = None
    truth:            ModelParams = field(default_factory=benchmark_truth)
    dirichlet_alpha:  tuple = None
    bernoulli_p:      float = 0.5
    target_censoring: float = 0.5
    scheme:           str   = "first"
    seed:             int   = 0
    method:           str   = "latent"
    censoring_rate:   float = None
    pilot_n:          int   = 10000

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError("Sample size must be a positive integer, not {!r}"
                             .format(self.n))
        if not isinstance(self.truth, ModelParams):
            raise TypeError("Simulation truth must be ModelParams, not {!r}"
                            .format(self.truth))
        if self.L is None:
            self.L = len(self.truth.betas)
        if self.L != len(self.truth.betas):
            raise ValueError("Simulation has {} clusters but the truth has {}"
                             .format(self.L, len(self.truth.betas)))
        if self.dirichlet_alpha is None:
            self.dirichlet_alpha = (1.0,) * self.L
        self.dirichlet_alpha = tuple(float(a) for a in self.dirichlet_alpha)
        if len(self.dirichlet_alpha) != self.L or min(self.dirichlet_alpha) <= 0:
            raise ValueError("Dirichlet concentrations must be {} positive numbers, not {!r}"
                             .format(self.L, self.dirichlet_alpha))
        if not 0 <= self.bernoulli_p <= 1:
            raise ValueError("Bernoulli probability must be within [0, 1], not {!r}"
                             .format(self.bernoulli_p))
        if not 0 < self.target_censoring < 1:
            raise ValueError("Target censoring must be within (0, 1), not {!r}"
                             .format(self.target_censoring))
        if self.scheme not in ("first", "last"):
            raise ValueError("Activation scheme must be one of 'first' or 'last', not {!r}"
                             .format(self.scheme))
        if self.method not in ("latent", "invcdf"):
            raise ValueError("Sampling method must be one of 'latent' or 'invcdf', not {!r}"
                             .format(self.method))
        if self.method == "invcdf" and self.scheme != "first":
            raise ValueError("Inverse-CDF sampling is only available for first activation")
        if self.censoring_rate is not None and not self.censoring_rate > 0:
            raise ValueError("Censoring rate must be positive, not {!r}"
                             .format(self.censoring_rate))

    @classmethod
    def benchmark(cls, n=1000, seed=0):
        return cls(n=n, seed=seed)

    @property
    def dims(self):
        return self.truth.dims

    def to_json(self):
        return OrderedDict([
            ("n",                self.n),
            ("L",                self.L),
            ("truth",            self.truth.to_json()),
            ("dirichlet_alpha",  list(self.dirichlet_alpha)),
            ("bernoulli_p",      self.bernoulli_p),
            ("target_censoring", self.target_censoring),
            ("scheme",           self.scheme),
            ("seed",             self.seed),
            ("method",           self.method),
            ("censoring_rate",   self.censoring_rate),
            ("pilot_n",          self.pilot_n),
        ])

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError("Unknown simulation settings {!r}"
                             .format(sorted(unknown)))
        if "truth" in obj:
            obj["truth"] = ModelParams.from_json(obj["truth"])
        return cls(**obj)


def gen_covariates(rng, config):
    """Clinical and cluster covariates of one subject.

    The first clinical covariate is Bernoulli, every other entry standard normal.
    """
    gen = _generator(rng)
    L, q0, *q = config.dims
    x0 = gen.standard_normal(q0)
    if q0 > 0:
        x0[0] = float(gen.random() < config.bernoulli_p)
    x_clusters = tuple(gen.standard_normal(q_l) for q_l in q)
    return x0, x_clusters


@dataclass
class LatentDraw:
    """Latent cell state of one subject.

    ``promotion_times[l]`` holds the promotion times of the ``n_per_cluster[l]`` cells of
    cluster ``l``; ``event_time`` is infinite when no cell can ever trigger the event.
    """
    n_total:         int
    n_per_cluster:   tuple
    promotion_times: tuple
    event_time:      float


def sample_event_latent(rng, gp, scheme="first"):
    if scheme not in ("first", "last"):
        raise ValueError("Activation scheme must be one of 'first' or 'last', not {!r}"
                         .format(scheme))
    gen = _generator(rng)
    n_total = sample_poisson(gen, gp.theta)
    counts  = gen.multinomial(n_total, gp.weights)
    times   = tuple(scale * gen.weibull(gp.kappa, count)
                    for scale, count in zip(gp.scales, counts))
    if n_total == 0:
        event_time = np.inf
    elif scheme == "first":
        event_time = float(min(w.min() for w in times if len(w)))
    else:
        event_time = float(max(w.max() for w in times if len(w)))
    return LatentDraw(n_total, tuple(int(c) for c in counts), times, event_time)


@dataclass
class LatentBatch:
    """Latent cell states of many independent draws for one subject.

    Only the per-cluster extremes of the promotion times are kept. ``cluster_min`` is ``+inf``
    and ``cluster_max`` is ``-inf`` for clusters without cells.
    """
    counts:      np.ndarray
    cluster_min: np.ndarray
    cluster_max: np.ndarray

    @property
    def draws(self):
        return len(self.counts)

    def event_times(self, scheme="first"):
        if scheme == "first":
            return self.cluster_min.min(axis=1)
        if scheme == "last":
            times = self.cluster_max.max(axis=1)
            return np.where(np.isneginf(times), np.inf, times)
        raise ValueError("Activation scheme must be one of 'first' or 'last', not {!r}"
                         .format(scheme))


def sample_latent_batch(rng, gp, draws):
    gen = _generator(rng)
    L = len(gp)
    n_total = sample_poisson(gen, gp.theta, draws)
    counts  = gen.multinomial(n_total, gp.weights)

    flat_counts = counts.reshape(-1)
    cluster = np.repeat(np.tile(np.arange(L), draws), flat_counts)
    times   = gp.scales[cluster] * gen.weibull(gp.kappa, size=len(cluster))

    cluster_min = np.full(draws * L, np.inf)
    cluster_max = np.full(draws * L, -np.inf)
    occupied = flat_counts > 0
    if occupied.any():
        starts = (np.cumsum(flat_counts) - flat_counts)[occupied]
        cluster_min[occupied] = np.minimum.reduceat(times, starts)
        cluster_max[occupied] = np.maximum.reduceat(times, starts)
    return LatentBatch(counts, cluster_min.reshape(draws, L), cluster_max.reshape(draws, L))


def sample_event_invcdf(rng, gp, tol=1e-10):
    """First-activation event time by inversion of the non-cured survival function."""
    gen = _generator(rng)
    if gen.random() < np.exp(-gp.theta):
        return np.inf
    u = 1 - gen.random()
    # S*(t) = u  <=>  sum(p_l * S_l(t)) = 1 + log1p((1 - u) * expm1(-theta)) / theta
    target = 1 + np.log1p((1 - u) * np.expm1(-gp.theta)) / gp.theta
    return find_root(lambda t: float(gp.mixture_sf(np.asarray(t))) - target,
                     0.0, gp.horizon, tol)


def _sample_event(gen, gp, config):
    if config.method == "latent":
        return sample_event_latent(gen, gp, config.scheme).event_time
    return sample_event_invcdf(gen, gp)


def _sample_subject(gen, config):
    x0, x_clusters = gen_covariates(gen, config)
    proportions = sample_dirichlet(gen, config.dirichlet_alpha)
    gp = point_for_subject(config.truth, x0, x_clusters, proportions)
    return x0, x_clusters, proportions, _sample_event(gen, gp, config)


def calibrate_censoring(rng, config, pilot_n=10000):
    """Rate of exponential censoring achieving ``config.target_censoring``.

    A pilot sample of event times is censored by ``E / r`` with fixed unit exponentials ``E``, so
    that the censoring fraction is a nondecreasing function of the rate ``r``; the rate is then
    found by bracketed root finding on ``log r`` over ``[-20, 20]``. When the target cannot be
    reached, the closest attainable rate is returned and a :class:`CalibrationWarning` issued.
    """
    if not isinstance(pilot_n, int) or pilot_n < 1000:
        raise ValueError("Pilot sample size must be an integer of at least 1000, not {!r}"
                         .format(pilot_n))
    gen = _generator(rng)
    events = np.array([_sample_subject(gen, config)[3] for _ in range(pilot_n)])
    unit   = gen.standard_exponential(pilot_n)

    def censored(log_rate):
        return float(np.mean(unit / np.exp(log_rate) < events))

    target = config.target_censoring
    lo, hi = -20.0, 20.0
    if censored(lo) >= target:
        if censored(lo) > target:
            warnings.warn("Censoring target {!r} is unreachable; even the smallest rate censors "
                          "{:.3f} of the pilot sample (cured subjects are always censored)"
                          .format(target, censored(lo)),
                          CalibrationWarning, stacklevel=2)
        return float(np.exp(lo))
    if censored(hi) <= target:
        if censored(hi) < target:
            warnings.warn("Censoring target {!r} is unreachable; even the largest rate censors "
                          "only {:.3f} of the pilot sample"
                          .format(target, censored(hi)),
                          CalibrationWarning, stacklevel=2)
        return float(np.exp(hi))

    root = find_root(lambda log_rate: censored(log_rate) - target, lo, hi)
    # The censoring fraction is a step function; take the side of the step nearer the target.
    candidates = [root - 1e-9, root, root + 1e-9]
    log_rate = min(candidates, key=lambda c: abs(censored(c) - target))
    logger.debug("calibrated censoring rate %.6g for target %.3f (pilot %.4f)",
                 np.exp(log_rate), target, censored(log_rate))
    return float(np.exp(log_rate))


def simulate_dataset(config, rng=None):
    """Simulate ``config.n`` subjects.

    Subject ``i`` draws from substream ``i`` of substream 0 of ``rng`` (by default the stream of
    ``config.seed``), so the result does not depend on how subjects are scheduled. Substream 1
    drives censoring calibration. Observed time is the minimum of event and censoring time;
    cured subjects are therefore always censored.
    """
    if rng is None:
        rng = RngStream(config.seed)
    rate = config.censoring_rate
    if rate is None:
        rate = calibrate_censoring(rng.substream(1), config, config.pilot_n)

    stream = rng.substream(0)
    time   = np.empty(config.n)
    status = np.empty(config.n, dtype=int)
    x0     = []
    x_clusters  = []
    proportions = []
    for index in range(config.n):
        gen = stream.substream(index).generator()
        x0_i, x_i, p_i, event = _sample_subject(gen, config)
        censor = gen.exponential(1 / rate)
        time[index]   = min(event, censor)
        status[index] = int(event <= censor)
        x0.append(x0_i)
        x_clusters.append(x_i)
        proportions.append(p_i.weights)

    L, q0, *q = config.dims
    meta = "simulated n={} seed={} stream={} scheme={} method={} censoring_rate={!r}".format(
        config.n, rng.seed, ".".join(map(str, rng.key)), config.scheme, config.method, rate)
    return Dataset(time=time, status=status,
                   x0=np.array(x0).reshape(config.n, q0),
                   x_clusters=[np.array([x[l] for x in x_clusters]).reshape(config.n, q[l])
                               for l in range(L)],
                   proportions=np.array(proportions),
                   meta=meta)
