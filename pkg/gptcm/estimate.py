"""Maximum-likelihood estimation of :class:`ModelParams`."""

from collections import OrderedDict
from dataclasses import dataclass, replace
import logging
import warnings

import numpy as np
import scipy.optimize

from .special import _generator
from .model import ModelParams
from .likelihood import loglik


__all__ = [
    "FitError", "ConvergenceWarning",
    "FitOptions", "FitReport", "default_init", "fit", "multi_start_fit",
]


logger = logging.getLogger(__name__)


# Objective value standing in for a non-finite log-likelihood at trial points of a line search.
PENALTY = 1e10


class FitError(Exception):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class FitOptions:
    """Optimizer settings.

    ``grad_tol`` bounds the largest gradient component relative to ``max(1, |loglik|)``;
    ``rel_tol`` stops a run when the relative change of the log-likelihood falls below it.
    After a stopped run that misses the gradient criterion, the optimizer is warm-restarted from
    its best point at most ``max_restarts`` times, within ``max_iter`` iterations in total.
    """
    max_iter:     int   = 500
    grad_tol:     float = 1e-6
    rel_tol:      float = 1e-10
    max_restarts: int   = 3

    def __post_init__(self):
        if not isinstance(self.max_iter, int) or self.max_iter < 1:
            raise ValueError("Iteration limit must be a positive integer, not {!r}"
                             .format(self.max_iter))
        if not isinstance(self.max_restarts, int) or self.max_restarts < 0:
            raise ValueError("Restart limit must be a non-negative integer, not {!r}"
                             .format(self.max_restarts))
        for name in ("grad_tol", "rel_tol"):
            if not getattr(self, name) > 0:
                raise ValueError("Tolerance {} must be positive, not {!r}"
                                 .format(name, getattr(self, name)))

    def to_json(self):
        return OrderedDict([
            ("max_iter",     self.max_iter),
            ("grad_tol",     self.grad_tol),
            ("rel_tol",      self.rel_tol),
            ("max_restarts", self.max_restarts),
        ])

    @classmethod
    def from_json(cls, obj):
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError("Unknown fit options {!r}"
                             .format(sorted(unknown)))
        return cls(**obj)


@dataclass
class FitReport:
    """Outcome of a maximum likelihood fit.

    ``restarts_used`` counts warm restarts of the optimizer within the reported run. ``starts``
    is the number of initial points tried by :func:`multi_start_fit`; the other fields describe
    the best of them.
    """
    params_hat:    ModelParams
    loglik_at_opt: float
    converged:     bool
    iterations:    int
    grad_norm:     float
    restarts_used: int
    starts:        int = 1

    def to_json(self):
        return OrderedDict([
            ("params",        self.params_hat.to_json()),
            ("loglik",        self.loglik_at_opt),
            ("converged",     self.converged),
            ("iterations",    self.iterations),
            ("grad_norm",     self.grad_norm),
            ("restarts_used", self.restarts_used),
            ("starts",        self.starts),
        ])

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(params_hat=ModelParams.from_json(obj["params"]),
                       loglik_at_opt=float(obj["loglik"]),
                       converged=bool(obj["converged"]),
                       iterations=int(obj["iterations"]),
                       grad_norm=float(obj["grad_norm"]),
                       restarts_used=int(obj["restarts_used"]),
                       starts=int(obj.get("starts", 1)))
        except KeyError as error:
            raise ValueError("Fit report lacks the {!r} field"
                             .format(error.args[0])) from None


def default_init(ds):
    """Neutral starting point: unit shape, zero coefficients, and a rate reflecting the events."""
    params = ModelParams.zeros(ds.dims)
    params.xi[0] = np.log(max(ds.events, 0.5) / ds.n * 2)
    return params


def _resolve_init(ds, init):
    if isinstance(init, str):
        if init != "default":
            raise ValueError("Initial point must be ModelParams or 'default', not {!r}"
                             .format(init))
        return default_init(ds)
    if not isinstance(init, ModelParams):
        raise TypeError("Initial point must be ModelParams or 'default', not {!r}"
                        .format(init))
    init.check_dims(ds.dims)
    return init


def _evaluate(vector, ds):
    try:
        params = ModelParams.from_vector(vector, ds.dims)
    except ValueError:
        return None
    value = loglik(params, ds, gradient=True)
    if not np.isfinite(value.loglik) or not np.isfinite(value.grad).all():
        return None
    return value


def fit(ds, init="default", options=None):
    """Maximize the log-likelihood of ``ds``, starting from ``init``.

    The negated log-likelihood, divided by ``max(1, |loglik|)`` at the start of each run, is
    minimized by L-BFGS-B with the analytic gradient. The report is ``converged`` only if the
    final gradient satisfies ``options.grad_tol``; otherwise the best point found is returned
    and a :class:`ConvergenceWarning` issued. The log-likelihood at the returned point is never
    below that at ``init``.
    """
    options = options or FitOptions()
    params = _resolve_init(ds, init)

    start = loglik(params, ds, gradient=True)
    if not np.isfinite(start.loglik) or not np.isfinite(start.grad).all():
        bad = np.flatnonzero(~np.isfinite(start.per_subject))
        if len(bad):
            raise FitError("Log-likelihood is not finite at the initial point; subject {} "
                           "contributes {!r}"
                           .format(int(bad[0]), float(start.per_subject[bad[0]])))
        raise FitError("Log-likelihood gradient is not finite at the initial point")

    def objective(vector, scale):
        value = _evaluate(vector, ds)
        if value is None:
            return PENALTY, np.zeros_like(vector)
        return -value.loglik / scale, -value.grad / scale

    best_vector, best = params.to_vector(), start
    iterations = 0
    restarts   = 0
    while True:
        # Each run scales by the log-likelihood at its own starting point.
        scale  = max(1.0, abs(best.loglik))
        result = scipy.optimize.minimize(
            objective, best_vector, args=(scale,), jac=True, method="L-BFGS-B",
            options=dict(maxiter=options.max_iter - iterations,
                         gtol=options.grad_tol, ftol=options.rel_tol))
        iterations += int(result.nit)
        candidate = _evaluate(result.x, ds)
        if candidate is not None and candidate.loglik >= best.loglik:
            best_vector, best = result.x, candidate

        grad_norm = float(np.max(np.abs(best.grad)))
        tolerance = options.grad_tol * max(1.0, abs(best.loglik))
        logger.debug("run %d: loglik %.10g, gradient %.3g (tolerance %.3g), %d iterations: %s",
                     restarts, best.loglik, grad_norm, tolerance, iterations, result.message)
        converged = grad_norm <= tolerance and iterations <= options.max_iter
        if converged or restarts >= options.max_restarts or iterations >= options.max_iter:
            break
        restarts += 1

    report = FitReport(params_hat=ModelParams.from_vector(best_vector, ds.dims),
                       loglik_at_opt=best.loglik,
                       converged=converged,
                       iterations=iterations,
                       grad_norm=grad_norm,
                       restarts_used=restarts)
    if not converged:
        warnings.warn("Fit did not converge after {} iterations and {} restarts; gradient norm "
                      "{:.3g} exceeds {:.3g}"
                      .format(iterations, restarts, grad_norm, tolerance),
                      ConvergenceWarning, stacklevel=2)
    return report


def multi_start_fit(ds, k_starts, rng, *, init="default", options=None, jitter=0.5):
    """Best of ``k_starts`` fits.

    The first start is ``init`` itself; each further start is the default initial point plus
    Gaussian noise of standard deviation ``jitter``, drawn in order from ``rng``. Starts that fail
    are skipped; :class:`FitError` is raised only if all of them fail.
    """
    if not isinstance(k_starts, int) or k_starts < 1:
        raise ValueError("Number of starts must be a positive integer, not {!r}"
                         .format(k_starts))
    gen  = _generator(rng)
    base = default_init(ds).to_vector()
    starts = [_resolve_init(ds, init)]
    for _ in range(k_starts - 1):
        starts.append(ModelParams.from_vector(base + gen.normal(0, jitter, len(base)), ds.dims))

    reports  = []
    failures = []
    for index, start in enumerate(starts):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                reports.append(fit(ds, start, options))
        except FitError as error:
            logger.debug("start %d failed: %s", index, error)
            failures.append("start {}: {}".format(index, error))
    if not reports:
        raise FitError("All {} starts failed:\n{}"
                       .format(k_starts, "\n".join(failures)))

    best = max(reports, key=lambda report: report.loglik_at_opt)
    if not best.converged:
        warnings.warn("Best of {} starts did not converge; gradient norm {:.3g}"
                      .format(k_starts, best.grad_norm),
                      ConvergenceWarning, stacklevel=2)
    return replace(best, starts=k_starts)
