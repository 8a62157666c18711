import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from deepyc.curve_data import CurveFamily, TenorGrid, YieldPanel, example_generator, synth_panel

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_panel(n_families=2, n_dates=5, tenors=(3, 12, 60, 120), seed=0) -> YieldPanel:
    rng = np.random.default_rng(seed)
    rates = 0.02 + 0.01 * rng.standard_normal((n_families, n_dates, len(tenors)))
    fams = tuple(CurveFamily(f"F{i}", i) for i in range(n_families))
    dates = tuple(f"2020-{m:02d}" for m in range(1, n_dates + 1))
    return YieldPanel(fams, TenorGrid(tenors), dates, rates)


@pytest.fixture
def panel():
    return small_panel()


@pytest.fixture(scope="session")
def synth_world():
    gen = example_generator(n_families=2, n_dates=60, tenors=(3, 6, 12, 24, 60, 120), noise_sd=1e-4)
    return gen, synth_panel(gen, 3)
