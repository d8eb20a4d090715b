"""Metropolis-within-Gibbs sampler for the bent-cable model.

One sweep runs four blocks in a fixed order:

1. ``gibbs_linear_block``: a joint Gaussian draw of every effect that enters
   the mean linearly (intercept and covariate slopes, CAR effects, year
   effects, region slopes), conditioned exactly on the CAR effects summing to
   zero, including the population slopes ``a1``, ``a2``; then conjugate
   normal draws of ``Tbar`` (and ``lgamma`` when each region has its own
   half-width).
2. ``mh_bend_block``: random-walk Metropolis on each ``tau_i`` (and
   ``log gamma_i``), plus common-shift moves on the bend centres and
   half-widths that integrate the linear effects out.  Step sizes adapt
   during burn-in only.
3. ``mh_scale_block``: random walks on the log residual sd and the log sds
   of the region slopes, CAR and year effects, again with the linear
   effects integrated out.
4. ``gibbs_variance_block``: conjugate Gamma draws of every precision.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from .cable import _kernel
from .exceptions import ConfigurationError, InitializationError, NumericalError
from .model import (
    COMMON,
    PER_REGION,
    ParamState,
    cable_matrix,
    log_likelihood,
    log_prior,
    noncable_matrix,
    region_log_likelihood,
)

__all__ = [
    "StepTuner",
    "PosteriorSamples",
    "gibbs_linear_block",
    "gibbs_variance_block",
    "mh_bend_block",
    "mh_scale_block",
    "mh_tau_update",
    "overdispersed_init",
    "run_chain",
    "run_chains",
    "TARGET_ACCEPTANCE",
]

log = logging.getLogger(__name__)

TARGET_ACCEPTANCE = 0.44
COLLAPSED_SCALES = ("v", "sigma1", "sigma2", "sigma10", "sigma20")
ADAPT_BATCH = 50


class _Design:
    """Cached design for the joint linear update.

    Column order of the linear vector: fixed effects (intercept, static,
    temporal, spatio-temporal), beta10 (R), beta20 (T), alpha1 (R),
    alpha2 (R), a1, a2.  Only the alpha2 columns change between sweeps,
    through the bend kernel.  ``a1`` and ``a2`` have no data columns; they
    enter through the normal layers on the region slopes.
    """

    def __init__(self, data):
        R, T = data.n_regions, data.n_years
        ii, kk = np.nonzero(data.mask)
        counts = np.bincount(ii, minlength=R)
        if np.any(counts == 0):
            empty = [data.region_ids[i] for i in np.where(counts == 0)[0]]
            raise ConfigurationError(f"region(s) without observations: {', '.join(empty)}")
        self.ii, self.kk = ii, kk
        self.n = ii.size
        self.y = data.y[ii, kk]
        self.years = data.years[kk].astype(float)
        self.s = self.years - data.time_center
        self.R, self.T = R, T
        ps, pe, pc = data.static.shape[1], data.temporal.shape[1], data.spatiotemporal.shape[2]
        self.pf = 1 + ps + pe + pc
        self.off_b10 = self.pf
        self.off_b20 = self.off_b10 + R
        self.off_a1 = self.off_b20 + T
        self.off_a2 = self.off_a1 + R
        self.off_hyper = self.off_a2 + R
        self.P = self.off_hyper + 2
        Xc = np.zeros((self.n, self.off_a2))
        rows = np.arange(self.n)
        Xc[:, 0] = 1.0
        Xc[:, 1:1 + ps] = data.static[ii]
        Xc[:, 1 + ps:1 + ps + pe] = data.temporal[kk]
        Xc[:, 1 + ps + pe:self.pf] = data.spatiotemporal[ii, kk]
        Xc[rows, self.off_b10 + ii] = 1.0
        Xc[rows, self.off_b20 + kk] = 1.0
        Xc[rows, self.off_a1 + ii] = self.s
        self.Xc = Xc
        self.CtC = Xc.T @ Xc
        self.Cty = Xc.T @ self.y
        self.yy = float(self.y @ self.y)
        self.starts = np.searchsorted(ii, np.arange(R))
        self.n_static, self.n_temporal, self.n_climate = ps, pe, pc

    def normal_equations(self, q):
        """``X'X`` and ``X'y`` given the bend kernel at each observed cell."""
        P, c, e = self.P, self.off_a2, self.off_hyper
        K = np.add.reduceat(self.Xc * q[:, None], self.starts, axis=0)
        XtX = np.zeros((P, P))
        XtX[:c, :c] = self.CtC
        XtX[c:e, :c] = K
        XtX[:c, c:e] = K.T
        XtX[c:e, c:e] = np.diag(np.add.reduceat(q * q, self.starts))
        Xty = np.zeros(P)
        Xty[:c] = self.Cty
        Xty[c:e] = np.add.reduceat(q * self.y, self.starts)
        return XtX, Xty

    def kernel(self, s):
        return _kernel(self.years, s.tau[self.ii], np.exp(s.log_gamma)[self.ii])

    def unpack(self, x, s):
        ps, pe = self.n_static, self.n_temporal
        s.b0 = float(x[0])
        s.b_spatial = x[1:1 + ps].copy()
        s.b_temporal = x[1 + ps:1 + ps + pe].copy()
        s.b_climate = x[1 + ps + pe:self.pf].copy()
        s.beta10 = x[self.off_b10:self.off_b20].copy()
        s.beta20 = x[self.off_b20:self.off_a1].copy()
        s.alpha1 = x[self.off_a1:self.off_a2].copy()
        s.alpha2 = x[self.off_a2:self.off_hyper].copy()
        s.a1 = float(x[self.off_hyper])
        s.a2 = float(x[self.off_hyper + 1])

    def prior(self, s, h, W):
        """Prior precision matrix and precision-weighted prior mean."""
        P = self.P
        prec = np.zeros((P, P))
        lin = np.zeros(P)
        idx = np.arange(P)
        d = np.zeros(P)
        d[0] = 1.0 / h.u_intercept
        d[1:self.pf] = 1.0 / h.u_slope
        lin[0] = h.m1_intercept / h.u_intercept
        lin[1:self.pf] = h.m1_slope / h.u_slope
        d[self.off_b20:self.off_a1] = s.sigma20 ** -2
        R = self.R
        for k, (off, sd) in enumerate(((self.off_a1, s.sigma1), (self.off_a2, s.sigma2))):
            # alpha_i ~ N(a, sd^2), a ~ N(m1_slope, u_slope)
            hyper = self.off_hyper + k
            d[off:off + R] = sd ** -2
            d[hyper] = R / sd ** 2 + 1.0 / h.u_slope
            prec[off:off + R, hyper] = prec[hyper, off:off + R] = -1.0 / sd ** 2
            lin[hyper] = h.m1_slope / h.u_slope
        prec[idx, idx] = d
        b = slice(self.off_b10, self.off_b20)
        prec[b, b] += W.laplacian / s.sigma10 ** 2
        return prec, lin


_design_cache = {}


def _design(data):
    key = id(data)
    cached = _design_cache.get(key)
    if cached is None or cached[0] is not data:
        cached = (data, _Design(data))
        _design_cache.clear()
        _design_cache[key] = cached
    return cached[1]


def linear_precision(s, data, h, W):
    """Full-conditional precision and linear term of the joint linear vector."""
    des = _design(data)
    XtX, Xty = des.normal_equations(des.kernel(s))
    prec0, lin0 = des.prior(s, h, W)
    inv_v2 = s.v ** -2
    return XtX * inv_v2 + prec0, Xty * inv_v2 + lin0


class _LinearConditional:
    """Cholesky factor of the linear block's full conditional.

    Also carries the log of the Gaussian integral of the joint density over
    the linear vector restricted to ``sum(beta10) == 0``, up to terms that do
    not depend on the bend parameters.  Differences of ``log_marginal`` are
    the acceptance ratios of moves that integrate the linear effects out.
    """

    def __init__(self, s, data, h, W):
        des = _design(data)
        prec, lin = linear_precision(s, data, h, W)
        a = np.zeros(des.P)
        a[des.off_b10:des.off_b20] = 1.0
        # The CAR precision is blind to a common shift of beta10, which only
        # the vague b0 prior pins down.  Adding kappa * a a' is invisible on
        # the constraint surface a'x == 0, so the restricted conditional and
        # its integral are unchanged, but the matrix becomes well conditioned.
        b10 = slice(des.off_b10, des.off_b20)
        kappa = float(np.max(np.diag(prec)[b10])) / a[b10].size
        prec = prec + kappa * np.outer(a, a)
        try:
            self.cf = cho_factor(prec, lower=False, check_finite=True)
        except (LinAlgError, ValueError):
            raise NumericalError(
                "singular full-conditional precision for the linear effects "
                "(b0, covariate slopes, beta10, beta20, alpha1, alpha2, a1, a2)"
            ) from None
        self.des = des
        self.mean = cho_solve(self.cf, lin)
        self.a = a
        self.Va = cho_solve(self.cf, a)
        self.aVa = float(a @ self.Va)
        am = float(a @ self.mean)
        self.log_marginal = float(
            -np.sum(np.log(np.diag(self.cf[0]))) + 0.5 * lin @ self.mean
            - 0.5 * np.log(self.aVa) - 0.5 * am * am / self.aVa
        )

    def draw(self, rng, s):
        des = self.des
        x = self.mean + solve_triangular(self.cf[0], rng.standard_normal(des.P), lower=False)
        # condition on sum(beta10) == 0
        x = x - self.Va * (self.a @ x) / self.aVa
        b10 = slice(des.off_b10, des.off_b20)
        x[b10] -= x[b10].mean()
        des.unpack(x, s)


def _draw_linear(s, data, h, W, rng):
    _LinearConditional(s, data, h, W).draw(rng, s)


def _normal_mean_draw(rng, values, sd, prior_mean, prior_var):
    prec = values.size / sd ** 2 + 1.0 / prior_var
    mean = (values.sum() / sd ** 2 + prior_mean / prior_var) / prec
    return mean + rng.standard_normal() / np.sqrt(prec)


def gibbs_linear_block(s, data, h, W, rng, inplace=False):
    """Exact Gibbs draws of all linearly entering parameters.

    The fixed effects, region-level effects and the population slopes
    ``a1``, ``a2`` are drawn jointly from their Gaussian full conditional
    restricted to ``sum(beta10) == 0``; then ``Tbar`` (and ``lgamma`` in
    per-region mode) from its conjugate normal conditional.
    """
    if not inplace:
        s = s.copy()
    _draw_linear(s, data, h, W, rng)
    s.Tbar = _normal_mean_draw(rng, s.tau, s.sigma_tau, h.m2_bend, h.var_bend_mean)
    if h.mode_gamma == PER_REGION:
        s.lgamma = _normal_mean_draw(rng, s.log_gamma, s.sigma_gamma, h.lgamma_mean, h.lgamma_var)
    return s


def _precision_draw(rng, h, n, ss):
    if ss < 0:
        raise AssertionError(f"negative sum of squares {ss}")
    shape = h.precision_shape + 0.5 * n
    rate = h.precision_rate + 0.5 * ss
    return rng.gamma(shape, 1.0 / rate)


def variance_layers(s, data, W, h):
    """``{sd name: (n, sum of squares)}`` for each precision's conjugate update."""
    resid = np.where(data.mask, data.y - noncable_matrix(data, s) - cable_matrix(data, s), 0.0)
    R = data.n_regions
    layers = {
        "v": (data.n_obs, float(np.sum(resid ** 2))),
        "sigma_tau": (R, float(np.sum((s.tau - s.Tbar) ** 2))),
        "sigma1": (R, float(np.sum((s.alpha1 - s.a1) ** 2))),
        "sigma2": (R, float(np.sum((s.alpha2 - s.a2) ** 2))),
        "sigma10": (R - 1, float(s.beta10 @ W.laplacian @ s.beta10)),
        "sigma20": (data.n_years, float(np.sum(s.beta20 ** 2))),
    }
    if h.mode_gamma == PER_REGION:
        layers["sigma_gamma"] = (R, float(np.sum((s.log_gamma - s.lgamma) ** 2)))
    else:
        layers["sigma_gamma"] = (0, 0.0)
    return layers


def gibbs_variance_block(s, data, h, W, rng, inplace=False):
    """Conjugate Gamma(shape + n/2, rate + SS/2) draws of every precision.

    In common half-width mode ``sigma_gamma`` governs no data and is drawn
    from its prior.
    """
    if not inplace:
        s = s.copy()
    for name, (n, ss) in variance_layers(s, data, W, h).items():
        prec = float(_precision_draw(rng, h, n, ss))
        if not 0.0 < prec < np.inf:
            raise NumericalError(f"precision draw for {name} is {prec} (sum of squares {ss})")
        setattr(s, name, prec ** -0.5)
    return s


class StepTuner:
    """Random-walk step sizes with batch adaptation toward a target rate.

    ``steps`` maps a walk name to an array of step sizes (one per scalar
    walk).  Every ``batch`` adaptive iterations the log step of each walk
    moves by ``min(0.25, 1/sqrt(batch number))`` up or down according to
    whether its batch acceptance rate was above or below ``target``.
    """

    def __init__(self, steps, target=TARGET_ACCEPTANCE, batch=ADAPT_BATCH):
        self.steps = {k: np.array(v, dtype=float).reshape(-1) for k, v in steps.items()}
        self.target = target
        self.batch = batch
        self._batch_acc = {k: np.zeros_like(v) for k, v in self.steps.items()}
        self._count = 0
        self._n_batches = 0
        self.reset_counts()

    @classmethod
    def default(cls, n_regions, mode_gamma, tau_step=1.0, gamma_step=0.3, scale_step=0.2):
        steps = {"tau": np.full(n_regions, tau_step), "tau_shift": [tau_step]}
        if mode_gamma == PER_REGION:
            steps["gamma"] = np.full(n_regions, gamma_step)
            steps["gamma_shift"] = [gamma_step]
        else:
            steps["gamma"] = [gamma_step]
        steps["scale"] = np.full(len(COLLAPSED_SCALES), scale_step)
        return cls(steps)

    def reset_counts(self):
        self.accepted = {k: np.zeros_like(v) for k, v in self.steps.items()}
        self.proposed = {k: 0 for k in self.steps}

    def observe(self, name, acc, adapt):
        acc = np.asarray(acc, dtype=float).reshape(-1)
        self.accepted[name] += acc
        self.proposed[name] += 1
        if adapt:
            self._batch_acc[name] += acc

    def end_sweep(self, adapt):
        if not adapt:
            return
        self._count += 1
        if self._count < self.batch:
            return
        self._n_batches += 1
        delta = min(0.25, self._n_batches ** -0.5)
        for name, step in self.steps.items():
            rate = self._batch_acc[name] / self.batch
            step *= np.exp(np.where(rate > self.target, delta, -delta))
            self._batch_acc[name][:] = 0
        self._count = 0

    def rates(self):
        return {k: (self.accepted[k] / n).tolist() if (n := self.proposed[k]) else []
                for k in self.steps}


def _log_normal_vec(x, mean, var):
    return -0.5 * (x - mean) ** 2 / var


def mh_tau_update(s, data, rng, step, rnc=None, cur=None):
    """One random-walk Metropolis update of every ``tau_i`` given the rest.

    Each ``tau_i`` enters only region ``i``'s likelihood, so all regions are
    proposed at once and accepted independently.  Updates ``s`` in place.

    Returns
    -------
    (ndarray of bool, ndarray)
        Acceptance flags and the per-region log-likelihood after the update.
    """
    if rnc is None:
        rnc = np.where(data.mask, data.y - noncable_matrix(data, s), 0.0)
    if cur is None:
        cur = region_log_likelihood(data, s, rnc)
    R = data.n_regions
    old = s.tau.copy()
    prop = old + step * rng.standard_normal(R)
    s.tau = prop
    new = region_log_likelihood(data, s, rnc)
    var_tau = s.sigma_tau ** 2
    log_ratio = new - cur + _log_normal_vec(prop, s.Tbar, var_tau) - _log_normal_vec(old, s.Tbar, var_tau)
    acc = np.log(rng.uniform(size=R)) < log_ratio
    s.tau = np.where(acc, prop, old)
    return acc, np.where(acc, new, cur)


def _collapsed_move(s, data, h, W, rng, cond, propose, log_prior_ratio):
    """Metropolis move on bend parameters with the linear effects integrated out.

    ``propose(t)`` modifies the copy ``t`` in place.  On acceptance the linear
    effects are redrawn from their conditional at the new bend, which makes
    the pair (bend proposal, linear redraw) an exact joint Metropolis move.
    """
    t = s.copy()
    propose(t)
    new = _LinearConditional(t, data, h, W)
    log_ratio = new.log_marginal - cond.log_marginal + log_prior_ratio(t)
    if np.log(rng.uniform()) < log_ratio:
        new.draw(rng, t)
        for f in fields(t):
            setattr(s, f.name, getattr(t, f.name))
        return True, new
    return False, cond


def mh_bend_block(s, data, h, W, rng, tuner=None, adapt=False, inplace=False):
    """Metropolis updates of the bend centres and half-widths.

    Moves, in order:

    * each ``tau_i`` given everything else (:func:`mh_tau_update`);
    * per-region mode: each ``log gamma_i`` given everything else;
    * a common shift of every ``tau_i`` and ``Tbar``, with the linear effects
      integrated out and redrawn on acceptance;
    * common mode: a walk on the shared log half-width, collapsed the same
      way; per-region mode: a collapsed common shift of every
      ``log gamma_i`` and ``lgamma``.

    The collapsed moves let the bend travel along the ridge where it trades
    off against the slopes, which conditional updates cross only slowly.
    """
    if not inplace:
        s = s.copy()
    if tuner is None:
        tuner = StepTuner.default(data.n_regions, h.mode_gamma)
    steps = tuner.steps
    R = data.n_regions
    rnc = np.where(data.mask, data.y - noncable_matrix(data, s), 0.0)
    acc, cur = mh_tau_update(s, data, rng, steps["tau"], rnc)
    tuner.observe("tau", acc, adapt)

    if h.mode_gamma == PER_REGION:
        old = s.log_gamma.copy()
        prop = old + steps["gamma"] * rng.standard_normal(R)
        s.log_gamma = prop
        new = region_log_likelihood(data, s, rnc)
        var_g = s.sigma_gamma ** 2
        log_ratio = new - cur + _log_normal_vec(prop, s.lgamma, var_g) - _log_normal_vec(old, s.lgamma, var_g)
        acc = np.log(rng.uniform(size=R)) < log_ratio
        s.log_gamma = np.where(acc, prop, old)
        tuner.observe("gamma", acc, adapt)

    cond = _LinearConditional(s, data, h, W)
    delta = steps["tau_shift"][0] * rng.standard_normal()

    def shift_tau(t):
        t.tau = t.tau + delta
        t.Tbar = t.Tbar + delta

    def tbar_ratio(t):
        return (_log_normal_vec(t.Tbar, h.m2_bend, h.var_bend_mean)
                - _log_normal_vec(s.Tbar, h.m2_bend, h.var_bend_mean))

    acc, cond = _collapsed_move(s, data, h, W, rng, cond, shift_tau, tbar_ratio)
    tuner.observe("tau_shift", acc, adapt)

    name = "gamma" if h.mode_gamma == COMMON else "gamma_shift"
    delta = steps[name][0] * rng.standard_normal()

    def shift_gamma(t):
        t.lgamma = t.lgamma + delta
        t.log_gamma = t.log_gamma + delta

    def lgamma_ratio(t):
        return (_log_normal_vec(t.lgamma, h.lgamma_mean, h.lgamma_var)
                - _log_normal_vec(s.lgamma, h.lgamma_mean, h.lgamma_var))

    acc, cond = _collapsed_move(s, data, h, W, rng, cond, shift_gamma, lgamma_ratio)
    tuner.observe(name, acc, adapt)
    return s


def _scale_terms(s, data):
    """Scale-dependent normalizers of the joint density of ``y`` and the linear vector.

    Together with :attr:`_LinearConditional.log_marginal` they give the log
    density of ``y`` with the linear effects integrated out, as a function
    of the scales in :data:`COLLAPSED_SCALES` (up to a constant).
    """
    des = _design(data)
    R, T = des.R, des.T
    return (-0.5 * des.yy / s.v ** 2 - des.n * np.log(s.v)
            - R * np.log(s.sigma1) - R * np.log(s.sigma2)
            - (R - 1) * np.log(s.sigma10) - T * np.log(s.sigma20))


def _log_precision_prior(sd, h):
    # Gamma(shape, rate) on the precision psi = sd^-2, as a density in log(sd)
    psi = sd ** -2
    return h.precision_shape * np.log(psi) - h.precision_rate * psi


def mh_scale_block(s, data, h, W, rng, tuner=None, adapt=False, inplace=False):
    """Random walks on the log of each scale in :data:`COLLAPSED_SCALES`.

    The linear effects are integrated out and redrawn on acceptance.  When
    the region-level variation is small, a scale and the effects it governs
    form a funnel that the conjugate updates cross very slowly; the year
    effects, for instance, can mimic the population cable at a large
    ``sigma20`` and only let go of it once ``sigma20`` and the bend move
    together.
    """
    if not inplace:
        s = s.copy()
    if tuner is None:
        tuner = StepTuner.default(data.n_regions, h.mode_gamma)
    steps = tuner.steps["scale"]
    cond = _LinearConditional(s, data, h, W)
    acc = np.zeros(len(COLLAPSED_SCALES), dtype=bool)
    for k, name in enumerate(COLLAPSED_SCALES):
        old = getattr(s, name)
        factor = np.exp(steps[k] * rng.standard_normal())

        def scale(t):
            setattr(t, name, old * factor)

        def ratio(t):
            return (_scale_terms(t, data) - _scale_terms(s, data)
                    + _log_precision_prior(getattr(t, name), h) - _log_precision_prior(old, h))

        acc[k], cond = _collapsed_move(s, data, h, W, rng, cond, scale, ratio)
    tuner.observe("scale", acc, adapt)
    return s


def overdispersed_init(data, h, W, rng):
    """Starting state drawn from the priors with variances inflated fourfold.

    Normal priors get twice the sd; Gamma precision priors keep their mean
    with four times the variance.  Bend centres and their population mean
    start uniformly over the observed years (so the start does not depend on
    the bend-prior centre) and the log half-width is clipped to
    ``[log 0.5, log(span / 2)]`` so the bend starts inside the panel.
    """
    R, T = data.n_regions, data.n_years
    span = float(data.years[-1] - data.years[0])

    def prec_sd():
        p = rng.gamma(h.precision_shape / 4.0, 4.0 / h.precision_rate)
        return float(max(p, 1e-12) ** -0.5)

    sds = {name: prec_sd() for name in
           ("v", "sigma_tau", "sigma_gamma", "sigma1", "sigma2", "sigma10", "sigma20")}
    a1 = rng.normal(h.m1_slope, 2 * np.sqrt(h.u_slope))
    a2 = rng.normal(h.m1_slope, 2 * np.sqrt(h.u_slope))
    lgamma = float(np.clip(rng.normal(h.lgamma_mean, 2 * np.sqrt(h.lgamma_var)),
                           np.log(0.5), np.log(max(span / 2, 1.0))))
    if h.mode_gamma == PER_REGION:
        log_gamma = np.clip(lgamma + rng.normal(0, 2 * sds["sigma_gamma"], R),
                            np.log(0.5), np.log(max(span / 2, 1.0)))
    else:
        log_gamma = np.full(R, lgamma)
    beta10 = rng.normal(0, 2 * sds["sigma10"], R)
    s = ParamState(
        b0=rng.normal(h.m1_intercept, 2 * np.sqrt(h.u_intercept)),
        b_temporal=rng.normal(h.m1_slope, 2 * np.sqrt(h.u_slope), data.temporal.shape[1]),
        b_spatial=rng.normal(h.m1_slope, 2 * np.sqrt(h.u_slope), data.static.shape[1]),
        b_climate=rng.normal(h.m1_slope, 2 * np.sqrt(h.u_slope), data.spatiotemporal.shape[2]),
        a1=a1,
        a2=a2,
        Tbar=rng.uniform(data.years[0], data.years[-1]),
        lgamma=lgamma,
        alpha1=rng.normal(a1, 2 * sds["sigma1"], R),
        alpha2=rng.normal(a2, 2 * sds["sigma2"], R),
        tau=rng.uniform(data.years[0], data.years[-1], R),
        log_gamma=log_gamma,
        beta10=beta10 - beta10.mean(),
        beta20=rng.normal(0, 2 * sds["sigma20"], T),
        **sds,
    )
    return s


@dataclass(eq=False)
class PosteriorSamples:
    """Kept draws of every chain.

    ``draws`` has shape ``(n_chains, n_kept, n_params)`` with columns named by
    ``names`` (vector parameters flattened as ``name[k]``); ``deviance`` has
    shape ``(n_chains, n_kept)`` and is aligned with ``draws``.
    """

    names: list
    layout: list
    draws: np.ndarray
    deviance: np.ndarray
    meta: dict = field(default_factory=dict)
    acceptance: list = field(default_factory=list)
    inits: list = field(default_factory=list)

    @property
    def n_chains(self):
        return self.draws.shape[0]

    @property
    def n_kept(self):
        return self.draws.shape[1]

    def column(self, name):
        return self.draws[:, :, self.names.index(name)]

    def param(self, name):
        """Draws of one parameter, shape ``(chains, kept)`` or ``(chains, kept, size)``."""
        pos = 0
        for pname, size in self.layout:
            width = 1 if size is None else size
            if pname == name:
                block = self.draws[:, :, pos:pos + width]
                return block[:, :, 0] if size is None else block
            pos += width
        raise KeyError(name)

    def state(self, chain, index):
        return ParamState.from_flat(self.draws[chain, index], self.layout)

    def point_state(self, reducer):
        """State whose every coordinate is ``reducer`` of the pooled draws."""
        pooled = self.draws.reshape(-1, self.draws.shape[2])
        return ParamState.from_flat(reducer(pooled, axis=0), self.layout)

    @classmethod
    def concatenate(cls, chains, meta=None):
        first = chains[0]
        return cls(
            names=first["names"],
            layout=first["layout"],
            draws=np.stack([c["draws"] for c in chains]),
            deviance=np.stack([c["deviance"] for c in chains]),
            meta=dict(meta or {}),
            acceptance=[c["acceptance"] for c in chains],
            inits=[c["init"] for c in chains if "init" in c],
        )


def _check_init(data, h, W, s):
    lp = log_prior(s, h, W)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            ll = log_likelihood(data, s)
    except (NumericalError, ConfigurationError) as exc:
        ll = -np.inf
        reason = str(exc)
    else:
        reason = "non-finite log-posterior"
    if not (np.isfinite(lp) and np.isfinite(ll)):
        dump = {"log_prior": lp, "log_likelihood": ll,
                "state": dict(zip(s.flat_names(), s.to_flat().tolist()))}
        raise InitializationError(f"sampler initialization failed: {reason}", dump)


def run_chain(data, h, W, n_iter, burn_in=0, thin=1, seed=None, init=None, rng=None,
              tuner=None):
    """Run one chain.

    Parameters
    ----------
    data : PanelData
    h : HyperConfig
    W : SpatialWeights
    n_iter, burn_in, thin : int
        Iterations ``burn_in .. n_iter - 1`` are candidates; every ``thin``-th
        is kept, so ``n_iter = burn_in + thin`` keeps exactly one draw.
    seed : int or SeedSequence, optional
        Ignored if ``rng`` is given.
    init : ParamState, optional
        Defaults to an overdispersed draw.

    Returns
    -------
    dict
        ``names``, ``layout``, ``draws`` (kept x params), ``deviance``,
        ``acceptance`` (post burn-in rates and final step sizes), ``init``.
    """
    if not n_iter > burn_in >= 0:
        raise ConfigurationError("need n_iter > burn_in >= 0")
    if thin < 1:
        raise ConfigurationError("thin must be >= 1")
    if W.n_regions != data.n_regions:
        raise ConfigurationError("weights and panel disagree on the number of regions")
    rng = rng if rng is not None else np.random.default_rng(seed)
    s = init.copy() if init is not None else overdispersed_init(data, h, W, rng)
    if h.mode_gamma == COMMON:
        s.log_gamma = np.full(data.n_regions, s.lgamma)
    _check_init(data, h, W, s)
    tuner = tuner or StepTuner.default(data.n_regions, h.mode_gamma)
    init_state = s.copy()

    n_kept = (n_iter - burn_in) // thin
    names = s.flat_names()
    draws = np.empty((n_kept, len(names)))
    deviance = np.empty(n_kept)
    k = 0
    for it in range(n_iter):
        if it == burn_in:
            tuner.reset_counts()
        gibbs_linear_block(s, data, h, W, rng, inplace=True)
        mh_bend_block(s, data, h, W, rng, tuner=tuner, adapt=it < burn_in, inplace=True)
        mh_scale_block(s, data, h, W, rng, tuner=tuner, adapt=it < burn_in, inplace=True)
        tuner.end_sweep(it < burn_in)
        gibbs_variance_block(s, data, h, W, rng, inplace=True)
        if it >= burn_in and (it - burn_in + 1) % thin == 0:
            draws[k] = s.to_flat()
            deviance[k] = -2.0 * log_likelihood(data, s)
            k += 1
    acceptance = {"rates": tuner.rates(), "steps": {k: v.tolist() for k, v in tuner.steps.items()}}
    return {
        "names": names,
        "layout": s.layout(),
        "draws": draws,
        "deviance": deviance,
        "acceptance": acceptance,
        "init": init_state,
    }


def _chain_job(args):
    data, h, W, n_iter, burn_in, thin, seed_seq = args
    return run_chain(data, h, W, n_iter, burn_in, thin, rng=np.random.default_rng(seed_seq))


def run_chains(data, h, W, n_chains=3, n_iter=20000, burn_in=10000, thin=1, seed=0, workers=1):
    """Run independent chains and pool them into :class:`PosteriorSamples`.

    Chain ``k`` uses the ``k``-th child of ``SeedSequence(seed)``, so results
    do not depend on ``workers``.
    """
    if n_chains < 1:
        raise ConfigurationError("n_chains must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n_chains)
    jobs = [(data, h, W, n_iter, burn_in, thin, c) for c in children]
    if workers > 1 and n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n_chains)) as pool:
            results = list(pool.map(_chain_job, jobs))
    else:
        results = [_chain_job(j) for j in jobs]
    meta = {
        "seed": seed,
        "n_chains": n_chains,
        "n_iter": n_iter,
        "burn_in": burn_in,
        "thin": thin,
        "hyper": h.to_dict(),
        "time_center": data.time_center,
    }
    return PosteriorSamples.concatenate(results, meta)
