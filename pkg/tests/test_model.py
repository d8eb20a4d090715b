import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bentcable.exceptions import ConfigurationError, NumericalError
from bentcable.model import (
    COMMON,
    PER_REGION,
    HyperConfig,
    ParamState,
    cable_matrix,
    log_gamma_density,
    log_likelihood,
    log_posterior,
    log_prior,
    prior_terms,
    region_log_likelihood,
)
from bentcable.spatial import AdjacencyGraph, build_weights

from conftest import make_panel


def random_state(rng, R, T, n_temporal=1, n_spatial=0, n_climate=0):
    beta10 = rng.normal(0, 0.3, R)
    return ParamState(
        b0=rng.normal(), b_temporal=rng.normal(0, 0.1, n_temporal),
        b_spatial=rng.normal(0, 0.1, n_spatial), b_climate=rng.normal(0, 0.1, n_climate),
        a1=rng.normal(0, 0.05), a2=rng.normal(0, 0.05), Tbar=rng.uniform(1995, 2008),
        lgamma=rng.normal(0.7, 0.3), alpha1=rng.normal(0, 0.05, R), alpha2=rng.normal(0, 0.05, R),
        tau=rng.uniform(1995, 2008, R), log_gamma=rng.normal(0.7, 0.3, R),
        beta10=beta10 - beta10.mean(), beta20=rng.normal(0, 0.1, T), v=rng.uniform(0.1, 1),
        sigma_tau=1.0, sigma_gamma=0.2, sigma1=0.1, sigma2=0.1, sigma10=0.5, sigma20=0.2,
    )


def random_panel(rng, R=4, T=8, missing=0.2, n_spatial=0, n_climate=0):
    years = np.arange(2000, 2000 + T)
    y = rng.normal(size=(R, T))
    y[rng.uniform(size=(R, T)) < missing] = np.nan
    y[:, 0] = rng.normal(size=R)  # every region keeps an observation
    return make_panel(y, years, temporal=rng.normal(size=(T, 1)),
                      static=rng.normal(size=(R, n_spatial)) if n_spatial else None,
                      spatiotemporal=rng.normal(size=(R, T, n_climate)) if n_climate else None,
                      time_center=2003.5)


def loop_log_likelihood(panel, s):
    """Cell-by-cell oracle written directly from the Level 1 equation."""
    total = 0.0
    for i in range(panel.n_regions):
        for k, year in enumerate(panel.years):
            if not panel.mask[i, k]:
                continue
            d = year - s.tau[i]
            g = math.exp(s.log_gamma[i])
            q = (d + g) ** 2 / (4 * g) if abs(d) <= g else (d if d > g else 0.0)
            mu = (s.b0 + s.beta10[i] + s.beta20[k] + panel.temporal[k] @ s.b_temporal
                  + panel.static[i] @ s.b_spatial + panel.spatiotemporal[i, k] @ s.b_climate
                  + s.alpha1[i] * (year - panel.time_center) + s.alpha2[i] * q)
            r = panel.y[i, k] - mu
            total += -0.5 * math.log(2 * math.pi * s.v ** 2) - r * r / (2 * s.v ** 2)
    return total


def test_log_likelihood_matches_cell_loop():
    rng = np.random.default_rng(0)
    for _ in range(5):
        panel = random_panel(rng, n_spatial=2, n_climate=1)
        s = random_state(rng, panel.n_regions, panel.n_years, n_spatial=2, n_climate=1)
        assert log_likelihood(panel, s) == pytest.approx(loop_log_likelihood(panel, s), rel=1e-12)


def test_region_log_likelihood_sums_to_total():
    rng = np.random.default_rng(1)
    panel = random_panel(rng)
    s = random_state(rng, panel.n_regions, panel.n_years)
    assert region_log_likelihood(panel, s).sum() == pytest.approx(log_likelihood(panel, s), rel=1e-12)


def test_likelihood_dimension_and_value_errors():
    rng = np.random.default_rng(2)
    panel = random_panel(rng)
    s = random_state(rng, panel.n_regions + 1, panel.n_years)
    with pytest.raises(ConfigurationError, match="alpha1"):
        log_likelihood(panel, s)
    s = random_state(rng, panel.n_regions, panel.n_years)
    s.b0 = np.inf
    with pytest.raises(NumericalError, match="region"):
        log_likelihood(panel, s)
    s = random_state(rng, panel.n_regions, panel.n_years).copy(v=0.0)
    with pytest.raises(ConfigurationError):
        log_likelihood(panel, s)


def test_cable_uses_centred_incoming_slope():
    panel = make_panel(np.zeros((1, 3)), [2000, 2001, 2002], time_center=2001.0)
    s = ParamState.zeros(1, 3, alpha1=[2.0], alpha2=[0.0], tau=[1990.0], log_gamma=[0.0])
    np.testing.assert_allclose(cable_matrix(panel, s), [[-2.0, 0.0, 2.0]])


def test_gamma_density_known_value():
    # Gamma(1, rate) is Exponential(rate)
    assert log_gamma_density(100.0, 1.0, 0.01) == pytest.approx(math.log(0.01) - 1.0)


def test_prior_terms_by_hand():
    W = build_weights(AdjacencyGraph.from_edges(2, [(0, 1)]))
    h = HyperConfig()
    s = ParamState.zeros(2, 1, b0=16.0, Tbar=2000.0, lgamma=math.log(5.5), log_gamma=[math.log(5.5)] * 2,
                         tau=[2000.0, 2000.0], v=0.1, sigma_tau=0.1, sigma_gamma=0.1, sigma1=0.1,
                         sigma2=0.1, sigma10=0.1, sigma20=0.1)
    terms = prior_terms(s, h, W)
    assert terms["b0"] == pytest.approx(-0.5 * math.log(2 * math.pi * 100))
    assert terms["Tbar"] == pytest.approx(-0.5 * math.log(2 * math.pi * 100))
    assert terms["a1"] == pytest.approx(-0.5 * math.log(2 * math.pi * 10))
    assert terms["prec_v"] == pytest.approx(math.log(0.01) - 1.0)
    assert "log_gamma" not in terms


def test_prior_switch_on_bend_centre():
    # m2 = 2000 vs 2007 changes only the population bend-centre term
    rng = np.random.default_rng(3)
    W = build_weights(AdjacencyGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)]))
    s = random_state(rng, 4, 6)
    s.log_gamma = np.full(4, s.lgamma)
    a = prior_terms(s, HyperConfig(m2_bend=2000.0), W)
    b = prior_terms(s, HyperConfig(m2_bend=2007.0), W)
    assert [k for k in a if a[k] != b[k]] == ["Tbar"]


def test_log_prior_invalid_states():
    rng = np.random.default_rng(4)
    W = build_weights(AdjacencyGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)]))
    s = random_state(rng, 4, 6)
    h = HyperConfig()
    assert log_prior(s, h, W) == -np.inf  # common mode needs log_gamma == lgamma
    assert np.isfinite(log_prior(s, HyperConfig(mode_gamma=PER_REGION), W))
    s.log_gamma = np.full(4, s.lgamma)
    assert np.isfinite(log_prior(s, h, W))
    assert log_prior(s.copy(sigma1=0.0), h, W) == -np.inf
    assert log_prior(s.copy(beta10=s.beta10 + 1.0), h, W) == -np.inf


def test_log_posterior_adds_parts():
    rng = np.random.default_rng(5)
    panel = random_panel(rng)
    W = build_weights(AdjacencyGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)]))
    s = random_state(rng, 4, panel.n_years)
    h = HyperConfig(mode_gamma=PER_REGION)
    assert log_posterior(panel, s, h, W) == pytest.approx(log_likelihood(panel, s) + log_prior(s, h, W))


def test_hyper_validation():
    with pytest.raises(ConfigurationError):
        HyperConfig(u_slope=0.0)
    with pytest.raises(ConfigurationError):
        HyperConfig(mode_gamma="sometimes")
    assert HyperConfig().to_dict()["mode_gamma"] == COMMON


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2), st.integers(0, 2), st.integers(0, 2 ** 31))
@settings(max_examples=40, deadline=None)
def test_flat_roundtrip(R, T, ne, ns, seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, R, T, n_temporal=ne, n_spatial=ns)
    back = ParamState.from_flat(s.to_flat(), s.layout())
    np.testing.assert_array_equal(back.to_flat(), s.to_flat())
    assert len(s.flat_names()) == s.to_flat().size


def test_copy_is_deep():
    s = ParamState.zeros(2, 2)
    t = s.copy()
    t.alpha1[0] = 5.0
    assert s.alpha1[0] == 0.0
