"""Forward simulation of the hierarchical model and parameter-recovery tables."""

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .cable import inverse_transform_response, tenure_covariate
from .data import PanelData
from .exceptions import ConfigurationError
from .model import COMMON, PER_REGION, ParamState, mean_matrix
from .spatial import UNWEIGHTED, AdjacencyGraph, build_weights, sample_car

__all__ = [
    "TrueParams",
    "POPULATION_PARAMS",
    "default_scenario",
    "random_planar_graph",
    "simulate_dataset",
    "write_dataset",
    "read_truth",
    "recovery_report",
]

FOREST_EXTENT_HA = 1.0e6

POPULATION_PARAMS = ("b0", "a1", "a2", "Tbar", "lgamma", "v", "sigma_tau", "sigma1",
                     "sigma2", "sigma10", "sigma20")


@dataclass
class TrueParams:
    """Ground truth for a simulated panel.

    ``state`` carries the population-level values on input; the region- and
    year-level fields are overwritten by :func:`simulate_dataset`.  Covariate
    coefficients are on the raw covariate scale and ``b0`` is the intercept at
    ``time_center``.
    """

    state: ParamState
    graph: AdjacencyGraph
    years: np.ndarray
    region_ids: list
    frac_freehold: np.ndarray
    frac_leasehold: np.ndarray
    temporal_names: list = field(default_factory=list)
    temporal: np.ndarray = None
    mode_gamma: str = COMMON
    mode_spatial: str = UNWEIGHTED
    time_center: float = None

    def __post_init__(self):
        self.years = np.asarray(self.years, dtype=int)
        if self.temporal is None:
            self.temporal = np.zeros((self.years.size, 0))
        self.temporal = np.asarray(self.temporal, dtype=float).reshape(self.years.size, -1)
        if self.time_center is None:
            self.time_center = 0.5 * (self.years[0] + self.years[-1])

    @property
    def tenure(self):
        return tenure_covariate(self.frac_freehold, self.frac_leasehold)

    def to_dict(self):
        return {
            "names": self.state.flat_names(),
            "values": self.state.to_flat().tolist(),
            "layout": self.state.layout(),
            "edges": sorted(list(e) for e in self.graph.edges),
            "n_regions": self.graph.n_regions,
            "years": self.years.tolist(),
            "region_ids": list(self.region_ids),
            "frac_freehold": np.asarray(self.frac_freehold).tolist(),
            "frac_leasehold": np.asarray(self.frac_leasehold).tolist(),
            "temporal_names": list(self.temporal_names),
            "temporal": self.temporal.tolist(),
            "mode_gamma": self.mode_gamma,
            "mode_spatial": self.mode_spatial,
            "time_center": self.time_center,
        }

    @classmethod
    def from_dict(cls, d):
        layout = [(name, size) for name, size in d["layout"]]
        return cls(
            state=ParamState.from_flat(np.array(d["values"]), layout),
            graph=AdjacencyGraph.from_edges(d["n_regions"], [tuple(e) for e in d["edges"]]),
            years=np.array(d["years"]),
            region_ids=d["region_ids"],
            frac_freehold=np.array(d["frac_freehold"]),
            frac_leasehold=np.array(d["frac_leasehold"]),
            temporal_names=d["temporal_names"],
            temporal=np.array(d["temporal"]).reshape(len(d["years"]), -1),
            mode_gamma=d["mode_gamma"],
            mode_spatial=d["mode_spatial"],
            time_center=d["time_center"],
        )


def random_planar_graph(n_regions, rng):
    """Delaunay triangulation of random points: connected and planar."""
    pts = rng.uniform(size=(n_regions, 2))
    edges = set()
    for simplex in Delaunay(pts).simplices:
        for a in range(3):
            for b in range(a + 1, 3):
                i, j = sorted((int(simplex[a]), int(simplex[b])))
                edges.add((i, j))
    return AdjacencyGraph(n_regions, frozenset(edges))


def default_scenario(seed=0, n_regions=10, year_start=1988, year_end=2014, mode_gamma=COMMON,
                     mode_spatial=UNWEIGHTED, **overrides):
    """Desk-scale scenario: population bend at 2003, half-width 2 years.

    One temporal covariate ``gdp_growth_pct`` stands in for GDP growth.
    ``overrides`` replace any population-level value of the truth state.
    """
    rng = np.random.default_rng(seed)
    years = np.arange(year_start, year_end + 1)
    graph = random_planar_graph(n_regions, rng)
    free = rng.uniform(0, 1, n_regions)
    lease = rng.uniform(0, 1, n_regions) * (1 - free)
    gdp = rng.normal(3.0, 1.5, years.size)
    pop = dict(
        b0=1.5, b_temporal=[-0.03], a1=0.02, a2=-0.05, Tbar=2003.0, lgamma=np.log(2.0),
        v=0.3, sigma_tau=1.0, sigma_gamma=0.1, sigma1=0.005, sigma2=0.01, sigma10=0.3,
        sigma20=0.05,
    )
    pop.update(overrides)
    state = ParamState.zeros(n_regions, years.size, n_temporal=1, **pop)
    return TrueParams(
        state=state, graph=graph, years=years, region_ids=[f"R{k:02d}" for k in range(n_regions)],
        frac_freehold=free, frac_leasehold=lease, temporal_names=["gdp_growth_pct"],
        temporal=gdp[:, None], mode_gamma=mode_gamma, mode_spatial=mode_spatial,
    )


def _normal(rng, mean, sd, size):
    z = rng.standard_normal(size)
    return mean + sd * z


def simulate_dataset(truth, rng, graph=None, years=None):
    """Draw region effects from Level 2 and responses from Level 1.

    Zero standard deviations give degenerate (exact) layers.

    Returns
    -------
    (PanelData, TrueParams)
        The panel (raw covariates, no standardization) and a copy of the
        truth with every region- and year-level effect filled in.
    """
    graph = graph or truth.graph
    years = np.asarray(years if years is not None else truth.years, dtype=int)
    if years.size != truth.temporal.shape[0]:
        raise ConfigurationError("temporal covariates do not match the year grid")
    R, T = graph.n_regions, years.size
    s = truth.state.copy()
    if s.b_temporal.size != truth.temporal.shape[1]:
        raise ConfigurationError("b_temporal does not match the temporal covariates")
    L = truth.tenure
    W = build_weights(graph, L, truth.mode_spatial)
    s.beta10 = sample_car(W, s.sigma10, rng) if s.sigma10 > 0 else np.zeros(R)
    s.alpha1 = _normal(rng, s.a1, s.sigma1, R)
    s.alpha2 = _normal(rng, s.a2, s.sigma2, R)
    s.tau = _normal(rng, s.Tbar, s.sigma_tau, R)
    if truth.mode_gamma == PER_REGION:
        s.log_gamma = _normal(rng, s.lgamma, s.sigma_gamma, R)
    else:
        s.log_gamma = np.full(R, s.lgamma)
    s.beta20 = _normal(rng, 0.0, s.sigma20, T)
    s.b_spatial = np.zeros(0)
    s.b_climate = np.zeros(0)

    panel = PanelData.from_arrays(
        np.zeros((R, T)), years, region_ids=truth.region_ids, temporal=truth.temporal,
        temporal_names=truth.temporal_names, tenure=L, time_center=truth.time_center,
    )
    y = mean_matrix(panel, s) + _normal(rng, 0.0, s.v, (R, T))
    panel = PanelData.from_arrays(
        y, years, region_ids=truth.region_ids, temporal=truth.temporal,
        temporal_names=truth.temporal_names, tenure=L, time_center=truth.time_center,
    )
    panel.forest_extent = np.full((R, T), FOREST_EXTENT_HA)
    panel.defor_area = inverse_transform_response(y) * FOREST_EXTENT_HA
    out = TrueParams(**{**truth.__dict__, "state": s, "graph": graph, "years": years})
    return panel, out


def write_dataset(directory, panel, truth):
    """Write the panel in the ingestion CSV formats plus ``truth.json``.

    Files: ``response.csv``, ``static.csv``, ``temporal.csv``,
    ``adjacency.csv`` and ``truth.json``.
    """
    os.makedirs(directory, exist_ok=True)
    paths = {k: os.path.join(directory, f"{k}.csv") for k in ("response", "static", "temporal", "adjacency")}
    with open(paths["response"], "w", encoding="utf-8") as fh:
        fh.write("region_id,year,defor_area_ha,forest_extent_ha\n")
        for i, rid in enumerate(panel.region_ids):
            for k, year in enumerate(panel.years):
                if panel.mask[i, k]:
                    fh.write(f"{rid},{int(year)},{float(panel.defor_area[i, k])!r},"
                             f"{float(panel.forest_extent[i, k])!r}\n")
    with open(paths["static"], "w", encoding="utf-8") as fh:
        fh.write("region_id,frac_freehold,frac_leasehold\n")
        for rid, f, le in zip(truth.region_ids, truth.frac_freehold, truth.frac_leasehold):
            fh.write(f"{rid},{float(f)!r},{float(le)!r}\n")
    with open(paths["temporal"], "w", encoding="utf-8") as fh:
        fh.write(",".join(["year"] + list(truth.temporal_names)) + "\n")
        for k, year in enumerate(truth.years):
            vals = [repr(float(v)) for v in truth.temporal[k]]
            fh.write(",".join([str(int(year))] + vals) + "\n")
    with open(paths["adjacency"], "w", encoding="utf-8") as fh:
        for a, b in sorted(truth.graph.edges):
            fh.write(f"{truth.region_ids[a]},{truth.region_ids[b]}\n")
    paths["truth"] = os.path.join(directory, "truth.json")
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, indent=1)
    return paths


def read_truth(path):
    with open(path, encoding="utf-8") as fh:
        return TrueParams.from_dict(json.load(fh))


def recovery_report(truth, samples, panel=None, params=None, level=0.95):
    """Compare posterior intervals with the truth.

    Parameters
    ----------
    truth : TrueParams
    samples : PosteriorSamples
    panel : PanelData, optional
        The fitted panel; its covariate scaling is undone so that ``b0`` and
        covariate slopes are compared on the truth's raw scale.
    params : sequence of str, optional
        Flat parameter names; defaults to the population-level parameters and
        the temporal slopes.
    level : float

    Returns
    -------
    dict
        ``rows`` (name, truth, median, lo, hi, covered) and ``coverage``.
    """
    from .assess import raw_scale_draws

    draws = raw_scale_draws(samples, panel)
    truth_vals = dict(zip(truth.state.flat_names(), truth.state.to_flat()))
    if params is None:
        params = [p for p in POPULATION_PARAMS] + [n for n in truth_vals if n.startswith("b_temporal[")]
    lo_q, hi_q = (1 - level) / 2, 1 - (1 - level) / 2
    rows = []
    for name in params:
        if name not in truth_vals or name not in draws:
            raise KeyError(f"parameter {name!r} missing from truth or samples")
        x = draws[name].reshape(-1)
        lo, med, hi = np.quantile(x, [lo_q, 0.5, hi_q])
        t = float(truth_vals[name])
        rows.append({"name": name, "truth": t, "median": float(med), "lo": float(lo),
                     "hi": float(hi), "covered": bool(lo <= t <= hi)})
    coverage = float(np.mean([r["covered"] for r in rows])) if rows else float("nan")
    return {"rows": rows, "coverage": coverage, "level": level}
