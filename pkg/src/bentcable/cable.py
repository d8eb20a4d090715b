"""Bent-cable mean function, response transform and tenure covariate.

The bent cable is two straight lines joined by a quadratic bend of
half-width ``gamma`` centred on ``tau``::

    q(t) = (t - tau + gamma)**2 / (4 gamma)   if |t - tau| <= gamma
         = t - tau                            if t > tau + gamma
         = 0                                  otherwise

    cable(t) = alpha1 * t + alpha2 * q(t)

so the incoming slope is ``alpha1`` and the outgoing slope is
``alpha1 + alpha2``.  ``q`` is continuous with a continuous first derivative.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

__all__ = [
    "BendParams",
    "TransitionWindow",
    "bend_kernel",
    "bend_kernel_derivative",
    "bend_mean",
    "transition_window",
    "transform_response",
    "inverse_transform_response",
    "tenure_covariate",
]

TENURE_OFFSET = 0.01


@dataclass(frozen=True)
class BendParams:
    """Bent-cable parameters of one region.

    ``tau`` and ``gamma`` are in years; slopes are response units per year.
    """

    alpha1: float
    alpha2: float
    tau: float
    gamma: float

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise DomainError(f"gamma must be positive and finite, got {self.gamma}")
        if not np.isfinite(self.tau):
            raise DomainError(f"tau must be finite, got {self.tau}")


@dataclass(frozen=True)
class TransitionWindow:
    start: float
    mid: float
    end: float

    def as_tuple(self):
        return (self.start, self.mid, self.end)


def _kernel(t, tau, gamma):
    # unchecked version used on the sampler hot path
    d = t - tau
    inside = np.abs(d) <= gamma
    return np.where(inside, (d + gamma) ** 2 / (4.0 * gamma), np.where(d > gamma, d, 0.0))


def _check_kernel_args(t, tau, gamma):
    gamma = np.asarray(gamma, dtype=float)
    if np.any(~np.isfinite(gamma)) or np.any(gamma <= 0):
        raise DomainError("gamma must be positive and finite")
    if np.any(~np.isfinite(np.asarray(t, dtype=float))) or np.any(
        ~np.isfinite(np.asarray(tau, dtype=float))
    ):
        raise DomainError("t and tau must be finite")


def bend_kernel(t, tau, gamma):
    """Evaluate the bend kernel ``q(t)``.

    Broadcasts over array inputs. Returns a Python float for scalar input.

    >>> bend_kernel(2001, 2000, 3)
    1.3333333333333333
    """
    _check_kernel_args(t, tau, gamma)
    out = _kernel(np.asarray(t, dtype=float), tau, gamma)
    return float(out) if np.ndim(out) == 0 else out


def bend_kernel_derivative(t, tau, gamma):
    """Analytic derivative of :func:`bend_kernel` with respect to ``t``."""
    _check_kernel_args(t, tau, gamma)
    d = np.asarray(t, dtype=float) - tau
    out = np.where(np.abs(d) <= gamma, (d + gamma) / (2.0 * gamma), np.where(d > gamma, 1.0, 0.0))
    return float(out) if np.ndim(out) == 0 else out


def bend_mean(t, p):
    """Cable value ``alpha1 * t + alpha2 * q(t)`` for parameters ``p``."""
    out = p.alpha1 * np.asarray(t, dtype=float) + p.alpha2 * bend_kernel(t, p.tau, p.gamma)
    return float(out) if np.ndim(out) == 0 else out


def transition_window(p):
    """Start, middle and end of the transition phase."""
    return TransitionWindow(p.tau - p.gamma, p.tau, p.tau + p.gamma)


def transform_response(defor_area, forest_extent, floor=None):
    """Double-log transform ``log(-log(defor_area / forest_extent))``.

    Parameters
    ----------
    defor_area, forest_extent : float or array_like
        Deforested area and forest extent in the same units.
    floor : float, optional
        If given, ratios below ``floor`` are raised to it.  Without a floor a
        zero ratio raises :class:`DomainError`.
    """
    defor_area = np.asarray(defor_area, dtype=float)
    forest_extent = np.asarray(forest_extent, dtype=float)
    if np.any(~(forest_extent > 0)):
        raise DomainError("forest extent must be positive")
    r = defor_area / forest_extent
    if np.any(~np.isfinite(r)) or np.any(r < 0):
        raise DomainError("deforestation ratio must be finite and non-negative")
    if np.any(r >= 1):
        raise DomainError("deforestation exceeds forest extent (ratio >= 1)")
    if floor is not None:
        r = np.maximum(r, floor)
    if np.any(r <= 0):
        raise DomainError("zero-deforestation cell (ratio == 0) without a floor")
    out = np.log(-np.log(r))
    return float(out) if out.ndim == 0 else out


def inverse_transform_response(y):
    """Deforestation ratio ``exp(-exp(y))`` for a transformed response."""
    out = np.exp(-np.exp(np.asarray(y, dtype=float)))
    return float(out) if out.ndim == 0 else out


def tenure_covariate(frac_freehold, frac_leasehold):
    """Log10 ratio of freehold to leasehold shares, each offset by 0.01.

    Shares are fractions of the region's area, not percentages.
    """
    f = np.asarray(frac_freehold, dtype=float)
    le = np.asarray(frac_leasehold, dtype=float)
    for name, x in (("frac_freehold", f), ("frac_leasehold", le)):
        if np.any(~np.isfinite(x)) or np.any(x < 0) or np.any(x > 1):
            raise DomainError(f"{name} must lie in [0, 1]")
    out = np.log10(f + TENURE_OFFSET) - np.log10(le + TENURE_OFFSET)
    return float(out) if out.ndim == 0 else out
