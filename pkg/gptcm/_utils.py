import os

import numpy as np


__all__ = ["env_var", "default_threads", "time_array", "unwrap"]


def env_var(name):
    return "GPTCM_{}".format(name.upper().replace("-", "_"))


def default_threads(configured=None):
    """Worker count: explicit value, then ``GPTCM_THREADS``, then all cores."""
    if configured is not None:
        if not isinstance(configured, int) or configured < 1:
            raise ValueError("Thread count must be a positive integer, not {!r}"
                             .format(configured))
        return configured
    name = env_var("threads")
    if name in os.environ:
        try:
            threads = int(os.environ[name])
        except ValueError:
            raise ValueError("Environment variable {} must hold a positive integer, not {!r}"
                             .format(name, os.environ[name])) from None
        if threads < 1:
            raise ValueError("Environment variable {} must hold a positive integer, not {!r}"
                             .format(name, os.environ[name]))
        return threads
    return os.cpu_count() or 1


def time_array(t, *, positive=False, name="Time"):
    """Convert ``t`` to a float array, checking the sign convention of time arguments.

    Returns the array and a flag telling whether the input was a scalar, so that callers can
    hand back a plain ``float`` for scalar input (see :func:`unwrap`).
    """
    scalar = np.ndim(t) == 0
    array  = np.asarray(t, dtype=float)
    if np.isnan(array).any():
        raise ValueError("{} must not be NaN".format(name))
    if positive:
        if (array <= 0).any():
            raise ValueError("{} must be positive, not {!r}"
                             .format(name, float(array[array <= 0].flat[0])))
    elif (array < 0).any():
        raise ValueError("{} must be non-negative, not {!r}"
                         .format(name, float(array[array < 0].flat[0])))
    return array, scalar


def unwrap(array, scalar):
    if scalar:
        return float(array)
    return array

