import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bentcable.cable import tenure_covariate, transform_response
from bentcable.data import (
    EpochRecord,
    PanelConfig,
    RegionObservation,
    annualize_epochs,
    build_panel,
    correlation_matrix,
    log10p1,
    read_epoch_csv,
    read_response_csv,
    read_static_csv,
    read_temporal_csv,
    write_response_csv,
)
from bentcable.exceptions import DomainError, IngestionError


def test_annualize_divided_by_five():
    out = annualize_epochs([EpochRecord("A", 1972, 5, 100.0, 5000.0)])
    assert [o.year for o in out] == [1972, 1973, 1974, 1975, 1976]
    assert [o.defor_area for o in out] == [20.0] * 5
    assert {o.forest_extent for o in out} == {5000.0}


def test_annualize_span_one_passthrough():
    out = annualize_epochs([EpochRecord("A", 2005, 1, 12.5, 100.0)])
    assert out == [RegionObservation("A", 2005, 12.5, 100.0)]


def test_annualize_overlap_error():
    recs = [EpochRecord("B", 1988, 2, 1.0, 1.0), EpochRecord("B", 1989, 2, 1.0, 1.0)]
    with pytest.raises(IngestionError, match="region B.*1989.*1988-1989"):
        annualize_epochs(recs)


def test_epoch_span_validation():
    with pytest.raises(IngestionError):
        EpochRecord("A", 2000, 0, 1.0, 1.0)


@given(st.lists(st.tuples(st.integers(1, 9), st.floats(0, 1e7)), min_size=1, max_size=6))
@settings(max_examples=100)
def test_annualize_conserves_totals_exactly(epochs):
    recs, start = [], 1970
    for span, total in epochs:
        recs.append(EpochRecord("R", start, span, total, 1.0))
        start += span
    out = annualize_epochs(recs)
    assert len(out) == sum(s for s, _ in epochs)
    for rec in recs:
        amounts = [o.defor_area for o in out
                   if rec.epoch_start_year <= o.year < rec.epoch_start_year + rec.epoch_span_years]
        assert sum(amounts) == rec.defor_total


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_read_response_and_errors(tmp_path):
    p = write(tmp_path, "r.csv", "region_id,year,defor_area_ha,forest_extent_ha\nA,2000,1.5,100\nA,2001,,100\n")
    obs = read_response_csv(p)
    assert obs[0] == RegionObservation("A", 2000, 1.5, 100.0)
    assert np.isnan(obs[1].defor_area)
    p = write(tmp_path, "bad.csv", "region_id,year,defor_area_ha,forest_extent_ha\nA,2000,x,100\n")
    with pytest.raises(IngestionError, match="bad.csv:2"):
        read_response_csv(p)
    p = write(tmp_path, "dup.csv", "region_id,year,defor_area_ha,forest_extent_ha\nA,2000,1,2\nA,2000,1,2\n")
    with pytest.raises(IngestionError, match="dup.csv:3: duplicate"):
        read_response_csv(p)
    p = write(tmp_path, "cols.csv", "region_id,year\nA,2000\n")
    with pytest.raises(IngestionError, match="missing column"):
        read_response_csv(p)


def test_read_epochs(tmp_path):
    p = write(tmp_path, "e.csv",
              "region_id,epoch_start_year,span_years,defor_total_ha,forest_extent_ha\nA,1972,5,100,5000\n")
    assert annualize_epochs(read_epoch_csv(p))[0].defor_area == 20.0


def test_read_covariate_tables(tmp_path):
    s = read_static_csv(write(tmp_path, "s.csv", "region_id,frac_freehold,frac_leasehold\nA,0.5,0.25\n"))
    assert s == {"A": {"frac_freehold": 0.5, "frac_leasehold": 0.25}}
    t = read_temporal_csv(write(tmp_path, "t.csv", "year,gdp\n2000,3.5\n2001,2\n"))
    assert t[2001] == {"gdp": 2.0}


def observations(regions=("A", "B"), years=range(2000, 2004), seed=0):
    rng = np.random.default_rng(seed)
    return [RegionObservation(r, y, float(rng.uniform(1, 50)), 1000.0) for r in regions for y in years]


def test_build_panel_response_only():
    obs = observations()
    panel = build_panel(obs, config=PanelConfig(year_start=2000, year_end=2003))
    assert panel.y.shape == (2, 4)
    assert panel.static.shape == (2, 0) and panel.temporal.shape == (4, 0)
    assert panel.y[0, 0] == transform_response(obs[0].defor_area, 1000.0)
    assert panel.time_center == 2001.5


def test_build_panel_zero_cells_and_window():
    obs = observations()
    obs[1] = RegionObservation("A", 2001, 0.0, 1000.0)
    obs.append(RegionObservation("A", 1999, 5.0, 1000.0))  # outside the window
    panel = build_panel(obs, config=PanelConfig(year_start=2000, year_end=2003))
    assert not panel.mask[0, 1]
    assert panel.excluded[0][:2] == ("A", 2001)
    floored = build_panel(obs, config=PanelConfig(year_start=2000, year_end=2003, zero_floor=1e-6))
    assert floored.mask[0, 1]


def test_build_panel_covariates_and_scaling():
    obs = observations()
    static = {"A": {"frac_freehold": 0.9, "frac_leasehold": 0.1, "elev": 100.0},
              "B": {"frac_freehold": 0.2, "frac_leasehold": 0.7, "elev": 300.0}}
    temporal = {y: {"gdp": float(y - 2000)} for y in range(2000, 2004)}
    cfg = PanelConfig(year_start=2000, year_end=2003, static_covariates=["tenure", "elev"],
                      temporal_covariates=["gdp"])
    panel = build_panel(obs, static, temporal, config=cfg)
    np.testing.assert_allclose(panel.tenure, tenure_covariate([0.9, 0.2], [0.1, 0.7]))
    np.testing.assert_allclose(panel.static_raw[:, 0], panel.tenure)
    np.testing.assert_allclose(panel.static.mean(axis=0), 0.0, atol=1e-12)
    mean, sd = panel.temporal_scaling[0]
    np.testing.assert_allclose(panel.temporal[:, 0] * sd + mean, panel.temporal_raw[:, 0])
    raw = build_panel(obs, static, temporal, config=PanelConfig(
        year_start=2000, year_end=2003, temporal_covariates=["gdp"], standardize=False))
    np.testing.assert_array_equal(raw.temporal[:, 0], [0.0, 1.0, 2.0, 3.0])


def test_missing_covariate_masks_cell():
    obs = observations()
    temporal = {y: {"gdp": 1.0 * y} for y in range(2000, 2004)}
    temporal[2002] = {"gdp": float("nan")}
    panel = build_panel(obs, temporal=temporal, config=PanelConfig(
        year_start=2000, year_end=2003, temporal_covariates=["gdp"]))
    assert not panel.mask[:, 2].any()
    assert panel.n_obs == 6


def test_build_panel_errors():
    obs = observations()
    cfg = PanelConfig(year_start=2000, year_end=2003)
    with pytest.raises(IngestionError, match="unknown region"):
        build_panel(obs, static={"Z": {"elev": 1.0}}, config=cfg)
    with pytest.raises(IngestionError, match="duplicate"):
        build_panel(obs + obs[:1], config=cfg)
    blank = [RegionObservation("C", 2000, float("nan"), 1.0)]
    with pytest.raises(IngestionError, match="no usable responses: C"):
        build_panel(obs + blank, config=cfg)
    with pytest.raises(IngestionError, match="inclusion list"):
        build_panel(obs, config=PanelConfig(year_start=2000, year_end=2003, regions=["A", "Q"]))
    only_a = build_panel(obs, config=PanelConfig(year_start=2000, year_end=2003, regions=["A"]))
    assert only_a.region_ids == ["A"]


def test_export_roundtrip_bit_identical(tmp_path):
    obs = observations()
    panel = build_panel(obs, config=PanelConfig(year_start=2000, year_end=2003))
    path = tmp_path / "out.csv"
    write_response_csv(path, panel.observations())
    back = read_response_csv(path)
    assert back == obs


def test_build_panel_deterministic():
    obs = observations(seed=4)
    a = build_panel(obs, config=PanelConfig(year_start=2000, year_end=2003))
    b = build_panel(list(reversed(obs)), config=PanelConfig(year_start=2000, year_end=2003))
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.mask, b.mask)


@pytest.mark.parametrize("x, expected", [(0, 0.0), (9, 1.0), (99, 2.0)])
def test_log10p1(x, expected):
    assert log10p1(x) == pytest.approx(expected, abs=1e-15)


def test_log10p1_domain():
    with pytest.raises(DomainError):
        log10p1(-1.0)


def test_correlation_examples():
    x = np.arange(10.0)
    r, names = correlation_matrix({"x": x, "neg": -x, "const": np.ones(10)})
    assert names == ["x", "neg", "const"]
    assert r[0, 0] == 1.0 and r[0, 1] == -1.0
    assert np.isnan(r[2, 0]) and np.isnan(r[2, 2])


def test_correlation_independent_noise():
    rng = np.random.default_rng(0)
    r, _ = correlation_matrix(rng.normal(size=(10000, 2)))
    assert abs(r[0, 1]) < 0.05


def test_correlation_pairwise_complete():
    a = np.array([1.0, 2.0, 3.0, np.nan, 5.0])
    b = np.array([2.0, 4.0, 6.0, 1.0, 10.0])
    r, _ = correlation_matrix(np.column_stack([a, b]))
    assert r[0, 1] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        correlation_matrix(np.array([[1.0, np.nan], [np.nan, 2.0], [3.0, np.nan]]))


@given(st.integers(0, 2 ** 31), st.integers(3, 40), st.integers(1, 5))
@settings(max_examples=50)
def test_correlation_symmetric_unit_diagonal(seed, n, p):
    rng = np.random.default_rng(seed)
    r, _ = correlation_matrix(rng.normal(size=(n, p)))
    assert np.max(np.abs(r - r.T)) <= 1e-14
    np.testing.assert_array_equal(np.diag(r), 1.0)
