"""Panel ingestion: epoch annualization, CSV readers and the region x year grid.

File formats (UTF-8, header row, '.' decimal separator):

* response: ``region_id, year, defor_area_ha, forest_extent_ha``
* epochs: ``region_id, epoch_start_year, span_years, defor_total_ha, forest_extent_ha``
* static covariates: ``region_id, frac_freehold, frac_leasehold, elevation_mean, ...``
* temporal covariates: ``year, gdp_growth_pct, ...``
* spatio-temporal covariates: ``region_id, year, <value columns>``
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .cable import tenure_covariate, transform_response
from .exceptions import DomainError, IngestionError

__all__ = [
    "EpochRecord",
    "RegionObservation",
    "PanelConfig",
    "PanelData",
    "annualize_epochs",
    "read_response_csv",
    "read_epoch_csv",
    "read_static_csv",
    "read_temporal_csv",
    "read_spatiotemporal_csv",
    "write_response_csv",
    "build_panel",
    "log10p1",
    "correlation_matrix",
]

TENURE = "tenure"


@dataclass(frozen=True)
class EpochRecord:
    region_id: str
    epoch_start_year: int
    epoch_span_years: int
    defor_total: float
    forest_extent: float

    def __post_init__(self):
        if self.epoch_span_years < 1:
            raise IngestionError(f"region {self.region_id}: epoch span must be >= 1")


@dataclass(frozen=True)
class RegionObservation:
    region_id: str
    year: int
    defor_area: float
    forest_extent: float


def annualize_epochs(records):
    """Expand multi-year epochs into equal annual deforestation amounts.

    Each epoch contributes ``span`` annual records carrying ``defor_total /
    span`` and the epoch's forest extent.  The final year of an epoch takes
    the remainder so that the annual amounts add back to the epoch total
    exactly.
    """
    by_region = {}
    for rec in records:
        by_region.setdefault(rec.region_id, []).append(rec)
    out = []
    for region, recs in by_region.items():
        recs = sorted(recs, key=lambda r: r.epoch_start_year)
        for prev, cur in zip(recs, recs[1:]):
            prev_end = prev.epoch_start_year + prev.epoch_span_years - 1
            if cur.epoch_start_year <= prev_end:
                raise IngestionError(
                    f"region {region}: epoch starting {cur.epoch_start_year} overlaps "
                    f"epoch {prev.epoch_start_year}-{prev_end}"
                )
        for rec in recs:
            span = rec.epoch_span_years
            share = rec.defor_total / span
            amounts = [share] * (span - 1)
            amounts.append(rec.defor_total - sum(amounts))
            for k, amount in enumerate(amounts):
                out.append(
                    RegionObservation(region, rec.epoch_start_year + k, amount, rec.forest_extent)
                )
    return out


def _rows(path, required):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestionError(f"{path}: missing header row")
        header = [h.strip() for h in reader.fieldnames]
        reader.fieldnames = header
        missing = [c for c in required if c not in header]
        if missing:
            raise IngestionError(f"{path}: missing column(s) {', '.join(missing)}")
        for lineno, row in enumerate(reader, 2):
            yield lineno, {k: (v.strip() if isinstance(v, str) else v) for k, v in row.items()}


def _number(path, lineno, row, key, cast=float, allow_missing=False):
    raw = row.get(key)
    if raw is None or raw == "" or raw.upper() in ("NA", "NAN"):
        if allow_missing:
            return math.nan
        raise IngestionError(f"{path}:{lineno}: missing value in column {key!r}")
    try:
        value = cast(raw)
    except ValueError:
        raise IngestionError(f"{path}:{lineno}: non-numeric value {raw!r} in column {key!r}") from None
    return value


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(text)
    return int(value)


def read_response_csv(path):
    """Annual observations from a long-format response file."""
    cols = ("region_id", "year", "defor_area_ha", "forest_extent_ha")
    out, seen = [], set()
    for lineno, row in _rows(path, cols):
        key = (row["region_id"], _number(path, lineno, row, "year", _int))
        if key in seen:
            raise IngestionError(f"{path}:{lineno}: duplicate (region, year) {key}")
        seen.add(key)
        out.append(
            RegionObservation(
                key[0],
                key[1],
                _number(path, lineno, row, "defor_area_ha", allow_missing=True),
                _number(path, lineno, row, "forest_extent_ha", allow_missing=True),
            )
        )
    return out


def read_epoch_csv(path):
    cols = ("region_id", "epoch_start_year", "span_years", "defor_total_ha", "forest_extent_ha")
    out = []
    for lineno, row in _rows(path, cols):
        try:
            out.append(
                EpochRecord(
                    row["region_id"],
                    _number(path, lineno, row, "epoch_start_year", _int),
                    _number(path, lineno, row, "span_years", _int),
                    _number(path, lineno, row, "defor_total_ha"),
                    _number(path, lineno, row, "forest_extent_ha"),
                )
            )
        except IngestionError as exc:
            if str(exc).startswith(str(path)):
                raise
            raise IngestionError(f"{path}:{lineno}: {exc}") from None
    return out


def _keyed_table(path, key_cols, key_casts):
    table, names = {}, None
    for lineno, row in _rows(path, key_cols):
        if names is None:
            names = [c for c in row if c not in key_cols]
        key = tuple(
            cast(row[c]) if cast is str else _number(path, lineno, row, c, cast)
            for c, cast in zip(key_cols, key_casts)
        )
        key = key[0] if len(key) == 1 else key
        if key in table:
            raise IngestionError(f"{path}:{lineno}: duplicate key {key}")
        table[key] = {n: _number(path, lineno, row, n, allow_missing=True) for n in names}
    return table


def read_static_csv(path):
    """Per-region covariates keyed by region id."""
    return _keyed_table(path, ("region_id",), (str,))


def read_temporal_csv(path):
    """Per-year covariates keyed by calendar year."""
    return _keyed_table(path, ("year",), (_int,))


def read_spatiotemporal_csv(path):
    """Region x year covariates keyed by ``(region_id, year)``."""
    return _keyed_table(path, ("region_id", "year"), (str, _int))


def write_response_csv(path, observations):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region_id", "year", "defor_area_ha", "forest_extent_ha"])
        for ob in observations:
            w.writerow([ob.region_id, ob.year, repr(float(ob.defor_area)), repr(float(ob.forest_extent))])


@dataclass
class PanelConfig:
    """How to assemble the region x year grid.

    ``regions`` restricts the panel to an explicit inclusion list; by default
    every region in the response data is used.  ``zero_floor`` replaces the
    default exclusion of zero-deforestation cells with flooring of the ratio.
    """

    year_start: int = 1988
    year_end: int = 2014
    regions: list = None
    static_covariates: list = field(default_factory=list)
    temporal_covariates: list = field(default_factory=list)
    spatiotemporal_covariates: list = field(default_factory=list)
    standardize: bool = True
    zero_floor: float = None
    time_center: float = None


@dataclass(eq=False)
class PanelData:
    """Response and covariates on a region x year grid.

    ``y`` holds NaN wherever ``mask`` is False.  Covariate arrays are stored
    both raw and (optionally) centred and scaled; the ``*_scaling`` lists
    give ``(mean, sd)`` per column for back-transformation.
    """

    region_ids: list
    years: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    defor_area: np.ndarray
    forest_extent: np.ndarray
    static_names: list
    static: np.ndarray
    static_raw: np.ndarray
    static_scaling: list
    temporal_names: list
    temporal: np.ndarray
    temporal_raw: np.ndarray
    temporal_scaling: list
    st_names: list
    spatiotemporal: np.ndarray
    spatiotemporal_raw: np.ndarray
    st_scaling: list
    tenure: np.ndarray = None
    time_center: float = 0.0
    excluded: list = field(default_factory=list)

    @property
    def n_regions(self):
        return len(self.region_ids)

    @property
    def n_years(self):
        return len(self.years)

    @property
    def n_obs(self):
        return int(self.mask.sum())

    @property
    def t(self):
        """Years relative to the centring constant."""
        return self.years.astype(float) - self.time_center

    def observations(self):
        """Retained cells as :class:`RegionObservation` records."""
        out = []
        for i, rid in enumerate(self.region_ids):
            for k, year in enumerate(self.years):
                if self.mask[i, k]:
                    out.append(
                        RegionObservation(rid, int(year), self.defor_area[i, k], self.forest_extent[i, k])
                    )
        return out

    @classmethod
    def from_arrays(cls, y, years, region_ids=None, mask=None, static=None, static_names=None,
                    temporal=None, temporal_names=None, spatiotemporal=None, st_names=None,
                    tenure=None, time_center=0.0):
        """Build a panel directly from a transformed response matrix.

        Covariates are used as given (no standardization).  Raw area columns
        are reconstructed from ``y`` with a unit forest extent.
        """
        y = np.array(y, dtype=float)
        R, T = y.shape
        if mask is None:
            mask = np.isfinite(y)
        mask = np.asarray(mask, dtype=bool) & np.isfinite(y)
        y = np.where(mask, y, np.nan)
        region_ids = [str(r) for r in (region_ids if region_ids is not None else range(R))]
        static = np.zeros((R, 0)) if static is None else np.asarray(static, dtype=float).reshape(R, -1)
        temporal = np.zeros((T, 0)) if temporal is None else np.asarray(temporal, dtype=float).reshape(T, -1)
        spatiotemporal = (
            np.zeros((R, T, 0)) if spatiotemporal is None
            else np.asarray(spatiotemporal, dtype=float).reshape(R, T, -1)
        )
        extent = np.ones((R, T))
        with np.errstate(over="ignore"):
            area = np.where(mask, np.exp(-np.exp(np.nan_to_num(y))), np.nan)
        return cls(
            region_ids=region_ids,
            years=np.asarray(years, dtype=int),
            y=y,
            mask=mask,
            defor_area=area,
            forest_extent=extent,
            static_names=list(static_names or [f"s{k}" for k in range(static.shape[1])]),
            static=static,
            static_raw=static.copy(),
            static_scaling=[(0.0, 1.0)] * static.shape[1],
            temporal_names=list(temporal_names or [f"e{k}" for k in range(temporal.shape[1])]),
            temporal=temporal,
            temporal_raw=temporal.copy(),
            temporal_scaling=[(0.0, 1.0)] * temporal.shape[1],
            st_names=list(st_names or [f"c{k}" for k in range(spatiotemporal.shape[2])]),
            spatiotemporal=spatiotemporal,
            spatiotemporal_raw=spatiotemporal.copy(),
            st_scaling=[(0.0, 1.0)] * spatiotemporal.shape[2],
            tenure=None if tenure is None else np.asarray(tenure, dtype=float),
            time_center=float(time_center),
        )


def _standardize(raw, mask_axis_values, enabled):
    """Centre and scale columns over finite entries; returns (std, scaling)."""
    cols = raw.shape[-1]
    std = raw.copy()
    scaling = []
    for k in range(cols):
        col = raw[..., k]
        vals = col[np.isfinite(col) & mask_axis_values]
        if not enabled or vals.size < 2:
            scaling.append((0.0, 1.0))
            continue
        mean, sd = float(vals.mean()), float(vals.std(ddof=1))
        if sd == 0:
            sd = 1.0
        scaling.append((mean, sd))
        std[..., k] = (col - mean) / sd
    return std, scaling


def build_panel(observations, static=None, temporal=None, spatiotemporal=None, config=None):
    """Join annual observations and covariate tables onto the region x year grid.

    Parameters
    ----------
    observations : list of RegionObservation
    static : dict, optional
        ``region_id -> {name: value}``.  If it carries ``frac_freehold`` and
        ``frac_leasehold``, the tenure covariate is derived and available as
        the static covariate ``"tenure"``.
    temporal : dict, optional
        ``year -> {name: value}``.
    spatiotemporal : dict, optional
        ``(region_id, year) -> {name: value}``.
    config : PanelConfig, optional

    Returns
    -------
    PanelData
    """
    config = config or PanelConfig()
    static = static or {}
    temporal = temporal or {}
    spatiotemporal = spatiotemporal or {}
    years = np.arange(config.year_start, config.year_end + 1)
    year_index = {int(y): k for k, y in enumerate(years)}

    seen_regions, cells = [], {}
    for ob in observations:
        rid = str(ob.region_id)
        if rid not in cells:
            cells[rid] = {}
            seen_regions.append(rid)
        if ob.year in cells[rid]:
            raise IngestionError(f"duplicate (region, year) ({rid}, {ob.year})")
        cells[rid][ob.year] = ob

    if config.regions is not None:
        wanted = [str(r) for r in config.regions]
        unknown = [r for r in wanted if r not in cells]
        if unknown:
            raise IngestionError(f"unknown region id(s) in inclusion list: {', '.join(unknown)}")
        region_ids = wanted
    else:
        region_ids = sorted(seen_regions, key=_region_sort_key)

    known = set(cells)
    for label, keys in (
        ("static covariate", static.keys()),
        ("spatio-temporal covariate", {k[0] for k in spatiotemporal}),
    ):
        unknown = sorted({str(k) for k in keys} - known)
        if unknown:
            raise IngestionError(f"unknown region id(s) in {label} table: {', '.join(unknown)}")

    R, T = len(region_ids), len(years)
    area = np.full((R, T), np.nan)
    extent = np.full((R, T), np.nan)
    y = np.full((R, T), np.nan)
    mask = np.zeros((R, T), dtype=bool)
    excluded = []
    for i, rid in enumerate(region_ids):
        for year, ob in cells[rid].items():
            k = year_index.get(int(year))
            if k is None:
                continue
            area[i, k], extent[i, k] = ob.defor_area, ob.forest_extent
            if not (np.isfinite(ob.defor_area) and np.isfinite(ob.forest_extent)):
                excluded.append((rid, int(year), "missing"))
                continue
            try:
                y[i, k] = transform_response(ob.defor_area, ob.forest_extent, floor=config.zero_floor)
                mask[i, k] = True
            except DomainError as exc:
                excluded.append((rid, int(year), str(exc)))

    # static covariates
    have_tenure = False
    static_cols = list(config.static_covariates)
    static_raw = np.full((R, len(static_cols)), np.nan)
    tenure = None
    if static:
        rows = [static.get(rid) for rid in region_ids]
        missing = [rid for rid, row in zip(region_ids, rows) if row is None]
        if missing and (static_cols or any("frac_freehold" in (r or {}) for r in rows)):
            raise IngestionError(f"static covariate table lacks region(s): {', '.join(missing)}")
        if all(r is not None and "frac_freehold" in r and "frac_leasehold" in r for r in rows):
            try:
                tenure = np.array(
                    [tenure_covariate(r["frac_freehold"], r["frac_leasehold"]) for r in rows]
                )
            except DomainError as exc:
                raise IngestionError(f"tenure shares: {exc}") from None
            have_tenure = True
        for j, name in enumerate(static_cols):
            if name == TENURE:
                if not have_tenure:
                    raise IngestionError("tenure covariate requested but frac_freehold/frac_leasehold absent")
                static_raw[:, j] = tenure
                continue
            for i, row in enumerate(rows):
                if name not in row:
                    raise IngestionError(f"static covariate {name!r} not in static table")
                static_raw[i, j] = row[name]
    elif static_cols:
        raise IngestionError("static covariates requested but no static table given")
    if not np.all(np.isfinite(static_raw)):
        bad = sorted({region_ids[i] for i in np.where(~np.isfinite(static_raw))[0]})
        raise IngestionError(f"non-finite static covariate for region(s): {', '.join(bad)}")

    # temporal covariates
    temporal_cols = list(config.temporal_covariates)
    temporal_raw = np.full((T, len(temporal_cols)), np.nan)
    for j, name in enumerate(temporal_cols):
        for k, year in enumerate(years):
            row = temporal.get(int(year))
            if row is not None:
                if name not in row:
                    raise IngestionError(f"temporal covariate {name!r} not in temporal table")
                temporal_raw[k, j] = row[name]
    bad_years = ~np.all(np.isfinite(temporal_raw), axis=1)

    st_cols = list(config.spatiotemporal_covariates)
    st_raw = np.full((R, T, len(st_cols)), np.nan)
    for i, rid in enumerate(region_ids):
        for k, year in enumerate(years):
            row = spatiotemporal.get((rid, int(year)))
            if row is None:
                continue
            for j, name in enumerate(st_cols):
                if name not in row:
                    raise IngestionError(f"spatio-temporal covariate {name!r} not in table")
                st_raw[i, k, j] = row[name]
    bad_cells = ~np.all(np.isfinite(st_raw), axis=2) | bad_years[None, :]
    for i, k in zip(*np.where(mask & bad_cells)):
        excluded.append((region_ids[i], int(years[k]), "missing covariate"))
    mask &= ~bad_cells
    y[~mask] = np.nan

    empty = [rid for i, rid in enumerate(region_ids) if not mask[i].any()]
    if empty:
        raise IngestionError(f"region(s) with no usable responses: {', '.join(empty)}")

    static_std, static_scaling = _standardize(static_raw, np.ones(R, bool), config.standardize)
    temporal_std, temporal_scaling = _standardize(temporal_raw, mask.any(axis=0), config.standardize)
    st_std, st_scaling = _standardize(st_raw, mask, config.standardize)
    temporal_std = np.where(np.isfinite(temporal_std), temporal_std, 0.0)
    st_std = np.where(np.isfinite(st_std), st_std, 0.0)

    center = config.time_center
    if center is None:
        center = 0.5 * (config.year_start + config.year_end)
    return PanelData(
        region_ids=region_ids,
        years=years,
        y=y,
        mask=mask,
        defor_area=area,
        forest_extent=extent,
        static_names=static_cols,
        static=static_std,
        static_raw=static_raw,
        static_scaling=static_scaling,
        temporal_names=temporal_cols,
        temporal=temporal_std,
        temporal_raw=temporal_raw,
        temporal_scaling=temporal_scaling,
        st_names=st_cols,
        spatiotemporal=st_std,
        spatiotemporal_raw=st_raw,
        st_scaling=st_scaling,
        tenure=tenure,
        time_center=float(center),
        excluded=excluded,
    )


def _region_sort_key(rid):
    try:
        return (0, float(rid), rid)
    except ValueError:
        return (1, 0.0, rid)


def log10p1(x):
    """``log10(x + 1)``, the covariate transform used for skewed drivers."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= -1):
        raise DomainError("log10p1 requires x > -1")
    out = np.log10(x + 1.0)
    return float(out) if out.ndim == 0 else out


def correlation_matrix(columns, names=None):
    """Pairwise-complete Pearson correlations between columns.

    Parameters
    ----------
    columns : dict or array_like
        Either ``name -> 1-D array`` or a 2-D array with one column per
        variable.  NaN marks a missing entry.

    Returns
    -------
    (ndarray, list)
        Symmetric correlation matrix and the column names.  Entries involving
        a zero-variance column are NaN (undefined), never 0.
    """
    if isinstance(columns, dict):
        names = list(columns)
        data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    else:
        data = np.asarray(columns, dtype=float)
        names = list(names) if names is not None else [f"x{k}" for k in range(data.shape[1])]
    p = data.shape[1]
    out = np.full((p, p), np.nan)
    for a in range(p):
        for b in range(a, p):
            ok = np.isfinite(data[:, a]) & np.isfinite(data[:, b])
            if ok.sum() < 2:
                raise DomainError(f"fewer than 2 complete rows for ({names[a]}, {names[b]})")
            xa = data[ok, a] - data[ok, a].mean()
            xb = data[ok, b] - data[ok, b].mean()
            den = math.sqrt(float(xa @ xa) * float(xb @ xb))
            if den == 0:
                continue
            r = 1.0 if a == b else max(-1.0, min(1.0, float(xa @ xb) / den))
            out[a, b] = out[b, a] = r
    return out, names
