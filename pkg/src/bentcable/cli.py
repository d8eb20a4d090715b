"""Command-line front end: ``fit``, ``simulate``, ``report`` and ``variants``.

Configuration is a flat JSON object (see :data:`DEFAULTS` for the keys).
Precedence, lowest to highest: built-in defaults, the ``--config`` file,
command-line flags.  Relative data paths in a config file are resolved
against the file's directory.

Exit status: 0 on success, 1 for ingestion or configuration errors (one
``error[<kind>]: <message>`` line on stderr), 2 when the sampler cannot be
initialized, 3 when sampling hits a numerical failure mid-run.
"""

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
from dataclasses import fields
from importlib import metadata

import numpy as np
import scipy

from .assess import summarize, write_report
from .data import (
    PanelConfig,
    annualize_epochs,
    build_panel,
    read_epoch_csv,
    read_response_csv,
    read_spatiotemporal_csv,
    read_static_csv,
    read_temporal_csv,
)
from .exceptions import ConfigurationError, DomainError, IngestionError, InitializationError, NumericalError
from .io import read_samples, write_samples
from .model import HyperConfig, prior_terms
from .simulate import default_scenario, simulate_dataset, write_dataset
from .sampler import run_chains
from .spatial import TENURE_WEIGHTED, UNWEIGHTED, build_weights, read_adjacency

__all__ = ["main", "load_config", "resolve_config", "cmd_fit", "cmd_simulate", "cmd_report",
           "cmd_variants", "DEFAULTS"]

_HYPER_KEYS = [f.name for f in fields(HyperConfig)]
_PATH_KEYS = ("response", "epochs", "static", "temporal", "spatiotemporal", "adjacency")

DEFAULTS = {
    # data
    "response": None,
    "epochs": None,
    "static": None,
    "temporal": None,
    "spatiotemporal": None,
    "adjacency": None,
    "year_start": 1988,
    "year_end": 2014,
    "regions": None,
    "static_covariates": None,
    "temporal_covariates": None,
    "spatiotemporal_covariates": None,
    "standardize": True,
    "zero_floor": None,
    "time_center": None,
    # chains
    "chains": 3,
    "iters": 20000,
    "burnin": 10000,
    "thin": 1,
    "seed": 0,
    "workers": None,
    "out": "out",
    # simulation
    "n_regions": 10,
    **HyperConfig().to_dict(),
}

FLAG_KEYS = ("seed", "chains", "iters", "burnin", "thin", "out")


class _Exit(Exception):
    def __init__(self, code, kind, message):
        super().__init__(message)
        self.code, self.kind = code, kind


def load_config(path):
    """Read a flat JSON config; relative data paths become absolute."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    for key, value in raw.items():
        if key not in DEFAULTS:
            raise ConfigurationError(f"{path}: unknown config key {key!r}")
        if isinstance(value, (dict, list)) and key not in (
                "regions", "static_covariates", "temporal_covariates", "spatiotemporal_covariates"):
            raise ConfigurationError(f"{path}: config key {key!r} must be a scalar")
    base = os.path.dirname(os.path.abspath(path))
    for key in _PATH_KEYS:
        if raw.get(key):
            raw[key] = os.path.normpath(os.path.join(base, raw[key]))
    return raw


def resolve_config(config_path=None, overrides=None):
    """Merge defaults, config file and non-None overrides, then validate."""
    cfg = dict(DEFAULTS)
    if config_path:
        cfg.update(load_config(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    for key in ("chains", "iters", "burnin", "thin", "seed", "n_regions", "year_start", "year_end"):
        if not isinstance(cfg[key], int) or isinstance(cfg[key], bool):
            raise ConfigurationError(f"config key {key!r} must be an integer")
    if cfg["chains"] < 1:
        raise ConfigurationError("chains must be >= 1")
    if not cfg["iters"] > cfg["burnin"] >= 0:
        raise ConfigurationError("need iters > burnin >= 0")
    if cfg["thin"] < 1:
        raise ConfigurationError("thin must be >= 1")
    if cfg["seed"] < 0:
        raise ConfigurationError("seed must be non-negative")
    if cfg["mode_spatial"] not in (UNWEIGHTED, TENURE_WEIGHTED):
        raise ConfigurationError(f"unknown spatial mode {cfg['mode_spatial']!r}")
    hyper(cfg)
    return cfg


def hyper(cfg):
    return HyperConfig(**{k: cfg[k] for k in _HYPER_KEYS})


def _versions():
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "bentcable": pkg}


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def load_panel(cfg):
    """Ingest the configured files into ``(PanelData, AdjacencyGraph)``."""
    if not cfg["response"] and not cfg["epochs"]:
        raise ConfigurationError("config needs 'response' or 'epochs'")
    if not cfg["adjacency"]:
        raise ConfigurationError("config needs 'adjacency'")
    obs = read_response_csv(cfg["response"]) if cfg["response"] else []
    if cfg["epochs"]:
        have = {(o.region_id, o.year) for o in obs}
        for o in annualize_epochs(read_epoch_csv(cfg["epochs"])):
            if (o.region_id, o.year) in have:
                raise IngestionError(f"({o.region_id}, {o.year}) in both response and epoch files")
            obs.append(o)
    static = read_static_csv(cfg["static"]) if cfg["static"] else {}
    temporal = read_temporal_csv(cfg["temporal"]) if cfg["temporal"] else {}
    st = read_spatiotemporal_csv(cfg["spatiotemporal"]) if cfg["spatiotemporal"] else {}

    def columns(table, given, exclude=()):
        if given is not None:
            return list(given)
        first = next(iter(table.values()), {})
        return [c for c in first if c not in exclude]

    pc = PanelConfig(
        year_start=cfg["year_start"], year_end=cfg["year_end"], regions=cfg["regions"],
        static_covariates=columns(static, cfg["static_covariates"], ("frac_freehold", "frac_leasehold")),
        temporal_covariates=columns(temporal, cfg["temporal_covariates"]),
        spatiotemporal_covariates=columns(st, cfg["spatiotemporal_covariates"]),
        standardize=bool(cfg["standardize"]), zero_floor=cfg["zero_floor"],
        time_center=cfg["time_center"],
    )
    panel = build_panel(obs, static, temporal, st, pc)
    graph = read_adjacency(cfg["adjacency"], panel.region_ids)
    try:
        graph.require_connected()
    except ValueError as exc:
        raise IngestionError(f"{cfg['adjacency']}: {exc}") from None
    return panel, graph


def _weights(cfg, panel, graph):
    if cfg["mode_spatial"] == TENURE_WEIGHTED and panel.tenure is None:
        raise ConfigurationError("tenure-weighted CAR needs frac_freehold/frac_leasehold in the static file")
    return build_weights(graph, panel.tenure, cfg["mode_spatial"])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _report_files(samples, panel, out):
    report = summarize(samples, panel)
    paths = write_report(out, report, panel, samples)
    return report, paths


def cmd_fit(cfg, out=None):
    """Ingest, sample, assess; returns the FitReport.

    Writes ``samples.csv``, ``report.json``, ``summary.csv``, ``series.csv``,
    ``population_cable.csv`` and ``manifest.json`` to ``out``.
    """
    out = out or cfg["out"]
    panel, graph = load_panel(cfg)
    W = _weights(cfg, panel, graph)
    h = hyper(cfg)
    os.makedirs(out, exist_ok=True)
    workers = cfg["workers"] or min(cfg["chains"], os.cpu_count() or 1)
    try:
        samples = run_chains(panel, h, W, n_chains=cfg["chains"], n_iter=cfg["iters"],
                             burn_in=cfg["burnin"], thin=cfg["thin"], seed=cfg["seed"],
                             workers=workers)
    except InitializationError as exc:
        _write_json(os.path.join(out, "init_failure.json"), _clean(exc.dump))
        raise
    init_terms = prior_terms(samples.inits[0], h, W) if samples.inits else None
    samples.meta["config"] = {k: cfg[k] for k in sorted(cfg) if k != "out"}
    samples_path = os.path.join(out, "samples.csv")
    write_samples(samples_path, samples)
    # report from the file just written so that `report` reproduces it exactly
    stored = read_samples(samples_path)
    report, paths = _report_files(stored, panel, out)
    paths["samples"] = samples_path
    manifest = {
        "command": "fit",
        "config": {k: cfg[k] for k in sorted(cfg) if k != "out"},
        "seed": cfg["seed"],
        "versions": _versions(),
        "prior_terms_at_chain0_init": init_terms,
        "excluded_cells": [list(e) for e in panel.excluded],
        "files": {k: os.path.basename(p) for k, p in sorted(paths.items())},
        "sha256": {os.path.basename(samples_path): _sha256(samples_path)},
    }
    _write_json(os.path.join(out, "manifest.json"), _clean(manifest))
    return report


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def cmd_simulate(cfg, out=None):
    """Simulate the default scenario and write it with a ready-to-fit config."""
    out = out or cfg["out"]
    truth = default_scenario(seed=cfg["seed"], n_regions=cfg["n_regions"],
                             year_start=cfg["year_start"], year_end=cfg["year_end"],
                             mode_gamma=cfg["mode_gamma"], mode_spatial=cfg["mode_spatial"])
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]).spawn(1)[0])
    panel, truth = simulate_dataset(truth, rng)
    paths = write_dataset(out, panel, truth)
    fit_cfg = {
        "response": "response.csv", "static": "static.csv", "temporal": "temporal.csv",
        "adjacency": "adjacency.csv", "year_start": cfg["year_start"], "year_end": cfg["year_end"],
        "mode_gamma": cfg["mode_gamma"], "mode_spatial": cfg["mode_spatial"],
    }
    _write_json(os.path.join(out, "config.json"), fit_cfg)
    _write_json(os.path.join(out, "manifest.json"), {
        "command": "simulate", "seed": cfg["seed"], "versions": _versions(),
        "config": _clean({k: cfg[k] for k in sorted(cfg) if k != "out"}),
        "files": sorted(os.path.basename(p) for p in paths.values()) + ["config.json"],
    })
    return paths


def cmd_report(samples_path, out=None):
    """Rebuild the report artifacts from a samples file without refitting.

    The panel is re-ingested from the data paths recorded in the samples
    file when they are still readable; otherwise only data-free statistics
    are reported.
    """
    samples = read_samples(samples_path)
    out = out or os.path.dirname(os.path.abspath(samples_path))
    panel = None
    stored = samples.meta.get("config")
    if stored:
        cfg = dict(DEFAULTS)
        cfg.update(stored)
        paths_ok = all(cfg[k] is None or os.path.exists(cfg[k]) for k in _PATH_KEYS)
        if paths_ok and (cfg["response"] or cfg["epochs"]):
            panel, _ = load_panel(cfg)
    os.makedirs(out, exist_ok=True)
    report, _ = _report_files(samples, panel, out)
    return report


def cmd_variants(cfg, out=None):
    """Fit the 2 x 2 grid of bend-prior centre x CAR weighting.

    Writes one sub-directory per variant and ``variants.csv`` with the
    posterior median deviance, p_V and DIC of each.
    """
    out = out or cfg["out"]
    rows = []
    for m2 in (2000.0, 2007.0):
        for mode in (UNWEIGHTED, TENURE_WEIGHTED):
            sub = os.path.join(out, f"m2_{int(m2)}_{mode}")
            report = cmd_fit({**cfg, "m2_bend": m2, "mode_spatial": mode}, out=sub)
            rows.append([int(m2), mode, report.posterior_median_deviance, report.p_v, report.dic])
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "variants.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m2_bend", "mode_spatial", "posterior_median_deviance", "p_v", "dic"])
        for r in rows:
            w.writerow(r[:2] + [repr(float(v)) for v in r[2:]])
    return rows


def _parser():
    p = argparse.ArgumentParser(prog="bentcable", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (("fit", "fit the model to a panel"),
                            ("simulate", "write a simulated panel"),
                            ("variants", "fit the bend-prior x CAR-weighting grid")):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--chains", type=int)
        sp.add_argument("--iters", type=int)
        sp.add_argument("--burnin", type=int)
        sp.add_argument("--thin", type=int)
        sp.add_argument("--out", metavar="DIR")
    sp = sub.add_parser("report", help="rebuild report files from a samples file")
    sp.add_argument("samples", metavar="SAMPLES")
    sp.add_argument("--out", metavar="DIR")
    return p


def _one_line(text):
    return " ".join(str(text).split())


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        try:
            if args.command == "report":
                cmd_report(args.samples, args.out)
                return 0
            cfg = resolve_config(args.config, {k: getattr(args, k) for k in FLAG_KEYS})
            {"fit": cmd_fit, "simulate": cmd_simulate, "variants": cmd_variants}[args.command](cfg)
            return 0
        except InitializationError as exc:
            raise _Exit(2, "init", exc) from None
        except NumericalError as exc:
            raise _Exit(3, "numerical", exc) from None
        except IngestionError as exc:
            raise _Exit(1, "ingestion", exc) from None
        except (ConfigurationError, DomainError) as exc:
            raise _Exit(1, "config", exc) from None
        except ValueError as exc:
            raise _Exit(1, "config", exc) from None
    except _Exit as exc:
        print(f"error[{exc.kind}]: {_one_line(exc)}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
