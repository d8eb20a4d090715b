"""Convergence diagnostics for multiple chains."""

import numpy as np

from .exceptions import ConfigurationError

__all__ = ["rhat"]


def rhat(chains):
    """Gelman-Rubin potential scale reduction factor.

    Parameters
    ----------
    chains : array_like, shape (m, n)
        ``m >= 2`` aligned traces of one scalar, each of length ``n >= 10``.

    Returns
    -------
    float
        ``sqrt(((n - 1) / n * W + B / n) / W)`` with ``W`` the mean within-chain
        variance and ``B / n`` the variance of the chain means.  If every chain
        is constant the result is 1 when they agree and ``inf`` otherwise.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ConfigurationError("rhat needs at least 2 chains")
    m, n = x.shape
    if n < 10:
        raise ConfigurationError("rhat needs chains of length >= 10")
    within = float(np.mean(np.var(x, axis=1, ddof=1)))
    between_over_n = float(np.var(np.mean(x, axis=1), ddof=1))
    if within == 0.0:
        return 1.0 if between_over_n == 0.0 else float("inf")
    var_hat = (n - 1) / n * within + between_over_n
    return float(np.sqrt(var_hat / within))
