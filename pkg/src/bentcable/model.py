"""Hierarchical spatial-longitudinal bent-cable model: state, likelihood, prior.

Level 1 (region ``i``, year ``t``)::

    y_it = (b0 + beta10_i) + static_i . b_spatial + beta20_t + E_t . b_temporal
           + C_it . b_climate + alpha1_i * (t - c) + alpha2_i * q(t; tau_i, gamma_i)
           + eps_it,                       eps_it ~ N(0, v**2)

with ``c`` the panel's time-centring constant.  Level 2 puts normal layers on
``alpha1_i``, ``alpha2_i``, ``tau_i`` and ``log gamma_i``, an intrinsic CAR on
``beta10`` and iid normal year effects ``beta20``.  Precisions get
Gamma(shape, rate) priors.

``tau`` and ``Tbar`` are always in calendar years.  Because ``q`` depends on
``t - tau`` only, the centring constant touches the incoming-slope term and
hence the meaning of ``b0`` (the intercept at year ``c``).
"""

from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.special import gammaln

from .cable import _kernel
from .exceptions import ConfigurationError, NumericalError
from .spatial import UNWEIGHTED, car_log_density

__all__ = [
    "COMMON",
    "PER_REGION",
    "HyperConfig",
    "ParamState",
    "cable_matrix",
    "noncable_matrix",
    "mean_matrix",
    "log_likelihood",
    "region_log_likelihood",
    "prior_terms",
    "log_prior",
    "log_posterior",
    "log_normal",
    "log_gamma_density",
]

COMMON = "common"
PER_REGION = "per_region"
LOG_2PI = float(np.log(2 * np.pi))


@dataclass(frozen=True)
class HyperConfig:
    """Prior hyperparameters and model-variant switches."""

    m1_intercept: float = 16.0
    u_intercept: float = 100.0
    m1_slope: float = 0.0
    u_slope: float = 10.0
    m2_bend: float = 2000.0
    var_bend_mean: float = 100.0
    lgamma_mean: float = float(np.log(5.5))
    lgamma_var: float = float(np.log(10.0) ** 2)
    precision_shape: float = 1.0
    precision_rate: float = 0.01
    mode_gamma: str = COMMON
    mode_spatial: str = UNWEIGHTED

    def __post_init__(self):
        for name in ("u_intercept", "u_slope", "var_bend_mean", "lgamma_var",
                     "precision_shape", "precision_rate"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.mode_gamma not in (COMMON, PER_REGION):
            raise ConfigurationError(f"unknown gamma mode {self.mode_gamma!r}")

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


_SCALARS = ("b0", "a1", "a2", "Tbar", "lgamma", "v", "sigma_tau", "sigma_gamma",
            "sigma1", "sigma2", "sigma10", "sigma20")
_SDS = ("v", "sigma_tau", "sigma_gamma", "sigma1", "sigma2", "sigma10", "sigma20")


@dataclass
class ParamState:
    """One point in parameter space.

    Vector fields: ``b_temporal`` (one per temporal covariate), ``b_spatial``
    (per static covariate), ``b_climate`` (per spatio-temporal covariate),
    ``alpha1``, ``alpha2``, ``tau``, ``log_gamma``, ``beta10`` (per region) and
    ``beta20`` (per year).
    """

    b0: float
    b_temporal: np.ndarray
    b_spatial: np.ndarray
    b_climate: np.ndarray
    a1: float
    a2: float
    Tbar: float
    lgamma: float
    alpha1: np.ndarray
    alpha2: np.ndarray
    tau: np.ndarray
    log_gamma: np.ndarray
    beta10: np.ndarray
    beta20: np.ndarray
    v: float = 1.0
    sigma_tau: float = 1.0
    sigma_gamma: float = 1.0
    sigma1: float = 1.0
    sigma2: float = 1.0
    sigma10: float = 1.0
    sigma20: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name in _SCALARS:
                setattr(self, f.name, float(val))
            else:
                setattr(self, f.name, np.array(val, dtype=float).reshape(-1))

    @classmethod
    def zeros(cls, n_regions, n_years, n_temporal=0, n_spatial=0, n_climate=0, **kw):
        base = dict(
            b0=0.0, b_temporal=np.zeros(n_temporal), b_spatial=np.zeros(n_spatial),
            b_climate=np.zeros(n_climate), a1=0.0, a2=0.0, Tbar=0.0, lgamma=0.0,
            alpha1=np.zeros(n_regions), alpha2=np.zeros(n_regions), tau=np.zeros(n_regions),
            log_gamma=np.zeros(n_regions), beta10=np.zeros(n_regions), beta20=np.zeros(n_years),
        )
        base.update(kw)
        return cls(**base)

    @property
    def gamma(self):
        return np.exp(self.log_gamma)

    def copy(self, **changes):
        # __post_init__ copies every array
        return replace(self, **changes)

    def layout(self):
        """``[(name, size)]`` in flattening order; size None marks a scalar."""
        return [(f.name, None if f.name in _SCALARS else getattr(self, f.name).size)
                for f in fields(self)]

    def flat_names(self):
        out = []
        for name, size in self.layout():
            out.extend([name] if size is None else [f"{name}[{k}]" for k in range(size)])
        return out

    def to_flat(self):
        parts = []
        for name, size in self.layout():
            val = getattr(self, name)
            parts.append(np.array([val]) if size is None else val)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, vec, layout):
        vals, pos = {}, 0
        for name, size in layout:
            if size is None:
                vals[name] = float(vec[pos])
                pos += 1
            else:
                vals[name] = np.array(vec[pos:pos + size], dtype=float)
                pos += size
        return cls(**vals)


def _check_dims(data, s):
    R, T = data.n_regions, data.n_years
    expect = {
        "alpha1": R, "alpha2": R, "tau": R, "log_gamma": R, "beta10": R, "beta20": T,
        "b_temporal": data.temporal.shape[1], "b_spatial": data.static.shape[1],
        "b_climate": data.spatiotemporal.shape[2],
    }
    for name, n in expect.items():
        got = getattr(s, name).size
        if got != n:
            raise ConfigurationError(f"{name} has length {got}, data needs {n}")


def noncable_matrix(data, s):
    """All non-cable mean terms on the region x year grid."""
    out = (s.b0 + s.beta10)[:, None] + s.beta20[None, :]
    if s.b_spatial.size:
        out = out + (data.static @ s.b_spatial)[:, None]
    if s.b_temporal.size:
        out = out + (data.temporal @ s.b_temporal)[None, :]
    if s.b_climate.size:
        out = out + data.spatiotemporal @ s.b_climate
    return out


def cable_matrix(data, s):
    """Region-specific bent cables on the region x year grid."""
    years = data.years.astype(float)[None, :]
    q = _kernel(years, s.tau[:, None], np.exp(s.log_gamma)[:, None])
    return s.alpha1[:, None] * (years - data.time_center) + s.alpha2[:, None] * q


def mean_matrix(data, s):
    return noncable_matrix(data, s) + cable_matrix(data, s)


def _residuals(data, s):
    resid = np.where(data.mask, data.y - mean_matrix(data, s), 0.0)
    if not np.all(np.isfinite(resid)):
        i, k = np.argwhere(~np.isfinite(resid))[0]
        raise NumericalError(
            f"non-finite residual at region {data.region_ids[i]!r}, year {int(data.years[k])}"
        )
    return resid


def log_likelihood(data, s):
    """Gaussian log-likelihood summed over observed cells."""
    _check_dims(data, s)
    if not s.v > 0:
        raise ConfigurationError("residual sd v must be positive")
    resid = _residuals(data, s)
    n = data.n_obs
    return float(-0.5 * n * (LOG_2PI + 2.0 * np.log(s.v)) - 0.5 * np.sum(resid ** 2) / s.v ** 2)


def region_log_likelihood(data, s, resid_noncable=None):
    """Per-region log-likelihood vector (used by the bend updates)."""
    if resid_noncable is None:
        resid_noncable = np.where(data.mask, data.y - noncable_matrix(data, s), 0.0)
    r = np.where(data.mask, resid_noncable - cable_matrix(data, s), 0.0)
    n_i = data.mask.sum(axis=1)
    return -0.5 * n_i * (LOG_2PI + 2.0 * np.log(s.v)) - 0.5 * np.sum(r ** 2, axis=1) / s.v ** 2


def log_normal(x, mean, var):
    """Sum of normal log-densities."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * (LOG_2PI + np.log(var)) - 0.5 * (x - mean) ** 2 / var))


def log_gamma_density(x, shape, rate):
    """Gamma(shape, rate) log-density; mean is ``shape / rate``."""
    return float(shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x)


def prior_terms(s, h, W):
    """Named log-prior contributions (Level 2 layers and hyperpriors).

    Precision priors are densities over ``sd**-2``.  Returns None if any
    standard deviation is not positive.
    """
    if any(not getattr(s, name) > 0 for name in _SDS):
        return None
    slopes = np.concatenate([s.b_temporal, s.b_spatial, s.b_climate])
    terms = {
        "b0": log_normal(s.b0, h.m1_intercept, h.u_intercept),
        "b_slopes": log_normal(slopes, h.m1_slope, h.u_slope),
        "a1": log_normal(s.a1, h.m1_slope, h.u_slope),
        "a2": log_normal(s.a2, h.m1_slope, h.u_slope),
        "Tbar": log_normal(s.Tbar, h.m2_bend, h.var_bend_mean),
        "lgamma": log_normal(s.lgamma, h.lgamma_mean, h.lgamma_var),
        "alpha1": log_normal(s.alpha1, s.a1, s.sigma1 ** 2),
        "alpha2": log_normal(s.alpha2, s.a2, s.sigma2 ** 2),
        "tau": log_normal(s.tau, s.Tbar, s.sigma_tau ** 2),
        "beta20": log_normal(s.beta20, 0.0, s.sigma20 ** 2),
    }
    if h.mode_gamma == PER_REGION:
        terms["log_gamma"] = log_normal(s.log_gamma, s.lgamma, s.sigma_gamma ** 2)
    try:
        terms["beta10"] = car_log_density(s.beta10, W, s.sigma10)
    except ValueError:
        terms["beta10"] = -np.inf
    for name in _SDS:
        terms[f"prec_{name}"] = log_gamma_density(
            getattr(s, name) ** -2, h.precision_shape, h.precision_rate
        )
    return terms


def log_prior(s, h, W):
    """Total log-prior; ``-inf`` for invalid states, never an exception."""
    if h.mode_gamma == COMMON and not np.all(s.log_gamma == s.lgamma):
        return -np.inf
    terms = prior_terms(s, h, W)
    if terms is None:
        return -np.inf
    return float(sum(terms.values()))


def log_posterior(data, s, h, W):
    lp = log_prior(s, h, W)
    if not np.isfinite(lp):
        return -np.inf
    return log_likelihood(data, s) + lp
