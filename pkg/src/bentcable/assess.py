"""Fit statistics, posterior summaries, detrending and fitted cables."""

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .cable import BendParams, _kernel, transition_window
from .diagnostics import rhat
from .exceptions import ConfigurationError
from .model import ParamState, log_likelihood, noncable_matrix

__all__ = [
    "FitReport",
    "deviance",
    "p_v",
    "dic",
    "quantile_summary",
    "raw_scale_draws",
    "plugin_state",
    "summarize",
    "detrend",
    "region_cables",
    "population_cable",
    "write_report",
    "SUMMARY_LEVELS",
]

SUMMARY_LEVELS = (0.80, 0.95)
BEND_PARAMS = ("tau", "log_gamma", "lgamma")


def deviance(data, s):
    """``-2 * log_likelihood``."""
    return -2.0 * log_likelihood(data, s)


def p_v(deviance_trace):
    """Half the sample variance (n - 1 denominator) of the deviance trace."""
    d = np.asarray(deviance_trace, dtype=float).reshape(-1)
    if d.size < 2:
        raise ValueError("p_v needs at least 2 deviance values")
    return float(np.var(d, ddof=1) / 2.0)


def dic(deviance_trace, deviance_at_plugin):
    """Deviance information criterion.

    Returns ``(dic, p_d)`` with ``p_d = mean(D) - D(plug-in)`` and
    ``dic = mean(D) + p_d``.  ``p_d`` is not clamped; a negative value flags a
    plug-in point that sits between posterior modes.
    """
    d = np.asarray(deviance_trace, dtype=float).reshape(-1)
    if d.size == 0:
        raise ValueError("empty deviance trace")
    mean = float(d.mean())
    p_d = mean - float(deviance_at_plugin)
    return mean + p_d, p_d


def quantile_summary(x, levels=SUMMARY_LEVELS):
    """Median and central intervals (linear interpolation between order statistics)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("empty trace")
    out = {"median": float(np.quantile(x, 0.5))}
    for level in levels:
        tail = (1.0 - level) / 2.0
        lo, hi = np.quantile(x, [tail, 1.0 - tail])
        tag = int(round(level * 100))
        out[f"lo{tag}"], out[f"hi{tag}"] = float(lo), float(hi)
    return out


def raw_scale_draws(samples, panel=None):
    """Draws keyed by flat name, plus derived quantities.

    Adds ``gamma`` (``exp(lgamma)``).  If ``panel`` carries covariate scaling,
    covariate slopes and ``b0`` are returned on the raw covariate scale (the
    standardized-scale draws stay available under ``<name>_std``).
    """
    out = {name: samples.draws[:, :, k] for k, name in enumerate(samples.names)}
    out["gamma"] = np.exp(out["lgamma"])
    if panel is None:
        return out
    b0 = out["b0"].copy()
    for prefix, scaling in (("b_spatial", panel.static_scaling),
                            ("b_temporal", panel.temporal_scaling),
                            ("b_climate", panel.st_scaling)):
        for j, (mean, sd) in enumerate(scaling):
            name = f"{prefix}[{j}]"
            if (mean, sd) == (0.0, 1.0):
                continue
            out[f"{name}_std"] = out[name]
            out[name] = out[name] / sd
            b0 = b0 - out[name] * mean
    if not np.array_equal(b0, out["b0"]):
        out["b0_std"] = out["b0"]
        out["b0"] = b0
    return out


def plugin_state(samples):
    """Posterior means, except bend centres and half-widths which use medians."""
    mean_state = samples.point_state(np.mean)
    med_state = samples.point_state(np.median)
    for name in BEND_PARAMS:
        setattr(mean_state, name, getattr(med_state, name))
    return mean_state


@dataclass
class FitReport:
    posterior_median_deviance: float
    p_v: float
    dic: float
    p_d: float
    mean_deviance: float
    deviance_at_plugin: float
    per_chain_median_deviance: list
    summaries: dict
    rhat: dict
    acceptance: list
    beta10_flags: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return _clean(asdict(self))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def summarize(samples, data=None, levels=SUMMARY_LEVELS):
    """Pooled posterior summaries and fit statistics.

    Parameters
    ----------
    samples : PosteriorSamples
    data : PanelData, optional
        Needed for the plug-in deviance (DIC) and raw-scale coefficients.
    levels : sequence of float

    Returns
    -------
    FitReport
    """
    if samples.n_kept == 0:
        raise ValueError("no kept draws to summarize")
    draws = raw_scale_draws(samples, data)
    summaries, rhats = {}, {}
    can_rhat = samples.n_chains >= 2 and samples.n_kept >= 10
    for name, x in draws.items():
        summaries[name] = quantile_summary(x, levels)
        rhats[name] = rhat(x) if can_rhat else None

    dev = samples.deviance
    if data is not None:
        d_plugin = deviance(data, plugin_state(samples))
        dic_value, p_d = dic(dev, d_plugin)
    else:
        d_plugin = dic_value = p_d = float("nan")
    flags = {}
    R = samples.param("beta10").shape[-1]
    hi_tag = int(round(max(levels) * 100))
    lo_tag = int(round(min(levels) * 100))
    for i in range(R):
        sm = summaries[f"beta10[{i}]"]
        flags[f"beta10[{i}]"] = {
            f"excludes_zero_{lo_tag}": not (sm[f"lo{lo_tag}"] <= 0.0 <= sm[f"hi{lo_tag}"]),
            f"excludes_zero_{hi_tag}": not (sm[f"lo{hi_tag}"] <= 0.0 <= sm[f"hi{hi_tag}"]),
        }
    notes = [
        "DIC plug-in point: posterior means, except tau, log_gamma and lgamma (posterior medians)",
        "tau and Tbar are calendar years; b0 is the intercept at the time-centring year",
        "quantiles use linear interpolation between order statistics",
    ]
    return FitReport(
        posterior_median_deviance=float(np.median(dev)),
        p_v=p_v(dev) if dev.size >= 2 else float("nan"),
        dic=dic_value,
        p_d=p_d,
        mean_deviance=float(np.mean(dev)),
        deviance_at_plugin=d_plugin,
        per_chain_median_deviance=[float(np.median(c)) for c in dev],
        summaries=summaries,
        rhat=rhats,
        acceptance=samples.acceptance,
        beta10_flags=flags,
        notes=notes,
    )


def _median_state(samples):
    return samples.point_state(np.median)


def detrend(data, samples):
    """Observed response minus the posterior-median non-cable terms.

    Every non-cable parameter (intercept, CAR and year effects, covariate
    slopes) is replaced by its own pooled posterior median.  Missing cells
    stay NaN.
    """
    med = _median_state(samples) if not isinstance(samples, ParamState) else samples
    return np.where(data.mask, data.y - noncable_matrix(data, med), np.nan)


def _cable(years, center, a1, a2, tau, gamma):
    years = np.asarray(years, dtype=float)
    return a1 * (years - center) + a2 * _kernel(years, tau, gamma)


def region_cables(data, samples):
    """Region cables at the posterior medians of their parameters, shape (R, T)."""
    med = _median_state(samples)
    return np.array([
        _cable(data.years, data.time_center, med.alpha1[i], med.alpha2[i], med.tau[i],
               np.exp(med.log_gamma[i]))
        for i in range(data.n_regions)
    ])


def population_cable(samples, years, time_center):
    """Population cable at posterior medians of ``a1, a2, Tbar, exp(lgamma)``.

    Returns
    -------
    (ndarray, TransitionWindow)
    """
    med = {n: float(np.median(samples.param(n))) for n in ("a1", "a2", "Tbar", "lgamma")}
    gamma = math.exp(med["lgamma"])
    curve = _cable(years, time_center, med["a1"], med["a2"], med["Tbar"], gamma)
    window = transition_window(BendParams(med["a1"], med["a2"], med["Tbar"], gamma))
    return curve, window


def write_report(directory, report, data=None, samples=None):
    """Write ``report.json``, ``summary.csv`` and, given data and samples,
    ``series.csv`` and ``population_cable.csv``.

    ``series.csv`` is tidy: ``region, year, value, kind`` with kinds
    ``observed``, ``detrended``, ``region_cable`` and ``population_cable``
    (region ``population``).
    """
    os.makedirs(directory, exist_ok=True)
    paths = {"report": os.path.join(directory, "report.json"),
             "summary": os.path.join(directory, "summary.csv")}
    body = report.to_dict()
    if data is not None and samples is not None:
        _, window = population_cable(samples, data.years, data.time_center)
        body["population_transition_window"] = list(window.as_tuple())
    with open(paths["report"], "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=1, sort_keys=True)
        fh.write("\n")
    levels = sorted({int(k[2:]) for sm in report.summaries.values() for k in sm if k.startswith("lo")})
    with open(paths["summary"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["name", "median"]
        for tag in levels:
            header += [f"lo{tag}", f"hi{tag}"]
        w.writerow(header + ["rhat"])
        for name, sm in report.summaries.items():
            row = [name, repr(sm["median"])]
            for tag in levels:
                row += [repr(sm[f"lo{tag}"]), repr(sm[f"hi{tag}"])]
            r = report.rhat.get(name)
            w.writerow(row + ["" if r is None else repr(float(r))])
    if data is not None and samples is not None:
        paths["series"] = os.path.join(directory, "series.csv")
        det = detrend(data, samples)
        cables = region_cables(data, samples)
        pop, _ = population_cable(samples, data.years, data.time_center)
        with open(paths["series"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region", "year", "value", "kind"])
            for kind, grid in (("observed", data.y), ("detrended", det), ("region_cable", cables)):
                for i, rid in enumerate(data.region_ids):
                    for k, year in enumerate(data.years):
                        if np.isfinite(grid[i, k]):
                            w.writerow([rid, int(year), repr(float(grid[i, k])), kind])
            for k, year in enumerate(data.years):
                w.writerow(["population", int(year), repr(float(pop[k])), "population_cable"])
        paths["population"] = os.path.join(directory, "population_cable.csv")
        with open(paths["population"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["year", "value"])
            for k, year in enumerate(data.years):
                w.writerow([int(year), repr(float(pop[k]))])
    return paths


