import numpy as np
import pytest

from rcskit.ingest import SphereSpec, load_campaign
from rcskit.pipeline import MeasurementTriple
from rcskit.sweep import FrequencyGrid
from rcskit.synth import PointScatterer, SystemResponse, generate_campaign, oracle_template, simulate_sweep

# 10-14 GHz, 2001 points: the grid used throughout the oracle tests
BAND_GRID = FrequencyGrid(10e9, 14e9, 2001)
SPHERE = SphereSpec(0.15, 4.0)
CLUTTER = (
    PointScatterer(1.0, 2.0),
    PointScatterer(0.5, 8.0, 1.0),
    PointScatterer(2.0, 10.0, 2.0),
)


def make_triple(scene, grid=BAND_GRID, sphere=SPHERE, key=(0,)):
    t, b, s = (simulate_sweep(scene, w, grid, sphere, None, key) for w in ("target", "background", "sphere"))
    return MeasurementTriple(t, b, s, b)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def smooth_g():
    return SystemResponse.random_smooth(np.random.default_rng(2024))


@pytest.fixture(scope="session")
def oracle_campaign(tmp_path_factory, smooth_g):
    """19 azimuths, one 0.5 m^2 scatterer, 3 clutter points, random G, light noise."""
    root = tmp_path_factory.mktemp("oracle")
    tmpl = oracle_template(clutter=CLUTTER, system_response=smooth_g, noise_rms=1e-6, seed=0)
    return load_campaign(generate_campaign(tmpl, root))


# --- acceptance summary -----------------------------------------------------------------


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, from ``criterion`` user properties."""
    verdicts: dict[int, list] = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" not in props:
                continue
            entry = verdicts.setdefault(props["criterion"], [True, props.get("title", ""), []])
            entry[0] &= outcome == "passed"
            if props.get("detail"):
                entry[2].append(props["detail"])
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        ok, title, details = verdicts[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if details:
            line += "  [" + "; ".join(details) + "]"
        terminalreporter.write_line(line)
