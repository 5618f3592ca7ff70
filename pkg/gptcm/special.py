"""Special functions and reproducible random variates."""

import numpy as np
import scipy.special
import scipy.optimize


__all__ = [
    "DomainError", "RootBracketError",
    "RngStream", "Simplex",
    "gamma_fn", "log_gamma_fn", "sample_dirichlet", "sample_poisson", "find_root",
]


GAMMA_DOMAIN = (1e-3, 170.0)


class DomainError(ValueError):
    pass


class RootBracketError(ValueError):
    pass


class RngStream:
    """Reproducible random stream.

    A stream is identified by a 64-bit ``seed`` and a key path ending in ``stream_id``. Each stream
    drives a counter-based :class:`numpy.random.Philox` generator keyed through
    :class:`numpy.random.SeedSequence`, so that the variates drawn from a stream depend only on its
    identity and never on the order in which streams are consumed, or on the worker that
    consumes them.

    Parameters
    ----------
    seed : int
        Unsigned 64-bit seed shared by all streams of one computation.
    stream_id : int
        Unsigned 64-bit index of this stream among its siblings.
    """
    def __init__(self, seed, stream_id=0, *, _path=()):
        for name, value in (("seed", seed), ("stream_id", stream_id)):
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) \
                    or not 0 <= value < 2 ** 64:
                raise TypeError("Stream {} must be an unsigned 64-bit integer, not {!r}"
                                .format(name, value))
        self.seed      = int(seed)
        self.stream_id = int(stream_id)
        self._path     = tuple(_path)

    @property
    def key(self):
        return (*self._path, self.stream_id)

    def substream(self, index):
        """Child stream number ``index`` of this stream."""
        return RngStream(self.seed, index, _path=self.key)

    def generator(self):
        """A fresh :class:`numpy.random.Generator` positioned at the start of this stream."""
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(sequence))

    def __eq__(self, other):
        return isinstance(other, RngStream) and \
            (self.seed, self.key) == (other.seed, other.key)

    def __hash__(self):
        return hash((RngStream, self.seed, self.key))

    def __repr__(self):
        return "(rng-stream {} {})".format(self.seed, ".".join(map(str, self.key)))


def _generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("Random source must be an RngStream or a numpy Generator, not {!r}"
                    .format(rng))


class Simplex:
    """Probability vector ``(p_1, ..., p_L)``.

    The weights are renormalized on construction. If ``tolerance`` is given, weights whose sum
    differs from 1 by more than ``tolerance`` are rejected instead.
    """
    def __init__(self, weights, *, tolerance=None):
        weights = np.array(weights, dtype=float).reshape(-1)
        if weights.size < 1:
            raise ValueError("Simplex must have at least one component")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise ValueError("Simplex weights must be finite and non-negative, not {!r}"
                             .format(weights.tolist()))
        total = weights.sum()
        if total <= 0:
            raise ValueError("Simplex weights must not all be zero")
        if tolerance is not None and abs(total - 1) > tolerance:
            raise ValueError("Simplex weights sum to {!r}, which differs from 1 by more than {!r}"
                             .format(float(total), tolerance))
        weights = weights / total
        weights.flags.writeable = False
        self.weights = weights

    def __len__(self):
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights.tolist())

    def __getitem__(self, index):
        return float(self.weights[index])

    def __eq__(self, other):
        return isinstance(other, Simplex) and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    def __repr__(self):
        return "(simplex {})".format(" ".join("{:.6g}".format(p) for p in self.weights))


def _check_gamma_domain(x):
    lo, hi = GAMMA_DOMAIN
    array = np.asarray(x, dtype=float)
    bad = ~((array >= lo) & (array <= hi))
    if bad.any():
        raise DomainError("Gamma function argument must be within [{}, {}], not {!r}"
                          .format(lo, hi, float(array[bad].flat[0])))
    return array


def gamma_fn(x):
    """Gamma function on ``[1e-3, 170]``."""
    array = _check_gamma_domain(x)
    result = scipy.special.gamma(array)
    return float(result) if np.ndim(x) == 0 else result


def log_gamma_fn(x):
    """Logarithm of the gamma function, with the domain of :func:`gamma_fn`."""
    array = _check_gamma_domain(x)
    result = scipy.special.gammaln(array)
    return float(result) if np.ndim(x) == 0 else result


def sample_dirichlet(rng, alpha):
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.size < 1 or not np.isfinite(alpha).all() or (alpha <= 0).any():
        raise ValueError("Dirichlet concentrations must be positive, not {!r}"
                         .format(alpha.tolist()))
    return Simplex(_generator(rng).dirichlet(alpha))


def sample_poisson(rng, theta, size=None):
    """Poisson count of mean ``theta``, or an integer array of ``size`` counts."""
    if not np.isfinite(theta) or theta <= 0:
        raise ValueError("Poisson rate must be positive, not {!r}"
                         .format(theta))
    counts = _generator(rng).poisson(theta, size=size)
    return int(counts) if size is None else counts


def find_root(f, lo, hi, tol=1e-10):
    """Root of a monotone scalar function bracketed by ``[lo, hi]``.

    Uses Brent's method, which keeps a bracket at every step and therefore converges whenever
    ``f(lo)`` and ``f(hi)`` differ in sign. The returned point lies within ``tol`` of the root.
    """
    if not lo < hi:
        raise ValueError("Bracket must satisfy lo < hi, not [{!r}, {!r}]"
                         .format(lo, hi))
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return float(lo)
    if f_hi == 0:
        return float(hi)
    if not np.isfinite(f_lo) or not np.isfinite(f_hi) or np.sign(f_lo) == np.sign(f_hi):
        raise RootBracketError("Function values at the ends of [{!r}, {!r}] must have opposite "
                               "signs, not {!r} and {!r}"
                               .format(lo, hi, float(f_lo), float(f_hi)))
    return float(scipy.optimize.brentq(f, lo, hi, xtol=tol))
