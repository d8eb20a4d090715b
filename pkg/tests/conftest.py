import numpy as np
import pytest

from bentcable.data import PanelData
from bentcable.model import HyperConfig
from bentcable.simulate import default_scenario, simulate_dataset
from bentcable.spatial import build_weights


@pytest.fixture(scope="session")
def small_sim():
    """Five regions over twelve years, simulated from the default truth."""
    truth = default_scenario(seed=3, n_regions=5, year_start=1998, year_end=2009, Tbar=2003.0)
    panel, truth = simulate_dataset(truth, np.random.default_rng(11))
    W = build_weights(truth.graph, panel.tenure)
    return panel, truth, W


ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """``record(number, ok, detail)``: log one acceptance criterion's verdict."""
    results = request.config.stash[ACCEPTANCE]

    def record(number, ok, detail):
        results[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[ACCEPTANCE]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def hyper():
    return HyperConfig()


def make_panel(y, years, **kw):
    return PanelData.from_arrays(np.asarray(y, dtype=float), years, **kw)
