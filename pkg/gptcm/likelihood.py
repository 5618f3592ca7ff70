"""Right-censored log-likelihood of the first-activation model.

The contribution of subject ``i`` is

    delta_i * [log(theta_i) + log(sum_l p_il f_l(t_i))] - theta_i * sum_l p_il F_l(t_i)

with ``log(theta_i) = xi_0 + x0_i . xi`` and Weibull clusters of mean ``exp(x_il . beta_l)``
and common shape ``kappa``. Every term is evaluated in log space, vectorized over subjects.
"""

from dataclasses import dataclass
import math

import numpy as np
import scipy.special

from .model import ModelParams


__all__ = ["LikValue", "loglik", "grad_loglik"]


@dataclass
class LikValue:
    """Log-likelihood of a dataset.

    ``loglik`` is the correctly rounded sum of ``per_subject``, so that it does not depend on the
    order of subjects. ``grad`` is the gradient in the order of :meth:`ModelParams.to_vector`, or
    ``None`` if it was not requested.
    """
    loglik:      float
    per_subject: np.ndarray
    grad:        np.ndarray = None


def _check_inputs(params, ds):
    if not isinstance(params, ModelParams):
        raise TypeError("Parameters must be ModelParams, not {!r}"
                        .format(params))
    params.check_dims(ds.dims)
    missing = np.isnan(ds.x0).any(axis=1)
    for x in ds.x_clusters:
        missing |= np.isnan(x).any(axis=1)
    if missing.any():
        raise ValueError("Subject {} has missing covariate values"
                         .format(int(np.flatnonzero(missing)[0])))
    zero_event = (ds.status == 1) & (ds.time <= 0)
    if zero_event.any():
        raise ValueError("Subject {} has an event at time 0; event times must be positive"
                         .format(int(np.flatnonzero(zero_event)[0])))


def loglik(params, ds, *, gradient=False):
    """Log-likelihood of ``params`` given ``ds``, optionally with its analytic gradient."""
    _check_inputs(params, ds)
    kappa  = params.kappa
    event  = ds.status == 1
    delta  = event.astype(float)
    p      = ds.proportions

    eta   = params.xi[0] + ds.x0 @ params.xi[1:]
    theta = np.exp(eta)
    log_gamma = scipy.special.gammaln(1 + 1 / kappa)
    log_lam = np.column_stack([x @ beta for x, beta in zip(ds.x_clusters, params.betas)]) \
        - log_gamma

    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        log_t = np.log(np.maximum(ds.time, np.finfo(float).tiny))
        log_u = log_t[:, None] - log_lam
        z     = np.exp(kappa * log_u)
        F     = -np.expm1(-z)
        F_mix = np.sum(p * F, axis=1)
        log_f = np.log(kappa) - log_lam + (kappa - 1) * log_u - z
        log_mix = scipy.special.logsumexp(log_f, b=p, axis=1)

        per_subject = np.where(event, eta + log_mix, 0.0) - theta * F_mix
        value = LikValue(math.fsum(per_subject), per_subject)
        if not gradient:
            return value

        # Responsibilities of each cluster for an observed event.
        w  = np.where(event[:, None], np.exp(np.log(p) + log_f - log_mix[:, None]), 0.0)
        active = w > 0
        zS = np.exp(kappa * log_u - z)
        digamma = scipy.special.digamma(1 + 1 / kappa)
        u  = log_u - digamma / kappa

        g_eta = delta - theta * F_mix
        g_log_lam = np.where(active, w * kappa * (z - 1), 0.0) \
            + theta[:, None] * p * kappa * zS
        g_log_kappa = kappa * (
            delta * np.sum(np.where(active, w * (1 / kappa + u * (1 - z)), 0.0), axis=1)
            - theta * np.sum(p * zS * u, axis=1))

    grad = [[math.fsum(g_log_kappa)], [math.fsum(g_eta)], ds.x0.T @ g_eta]
    grad += [x.T @ g_log_lam[:, l] for l, x in enumerate(ds.x_clusters)]
    value.grad = np.concatenate(grad)
    return value


def grad_loglik(params, ds):
    """Gradient of :func:`loglik` with respect to ``(log_kappa, xi, beta_1, ..., beta_L)``."""
    return loglik(params, ds, gradient=True).grad
