import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from comfp.network import LayerGraph, holdout_split, sample_negatives
from comfp.synth import plant_sparse_dense_pair

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def labelled_layer(name, edges, extra_members=(), timestamps=None):
    dyads = {tuple(sorted(e)) for e in edges}
    members = {u for e in dyads for u in e} | set(extra_members)
    return LayerGraph(name, dyads, members, timestamps)


@pytest.fixture(scope="session")
def small_pair():
    """A planted two-layer composite with its split, shared by several test modules."""
    net, truth = plant_sparse_dense_pair(60, 3, 3, 3.0, 1.0, seed=11, candidates=900)
    split = holdout_split(net, 0.1, "temporal", 0)
    split = sample_negatives(net, split, 20, 1)
    return net, truth, split


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (passed, detail); filled by test_acceptance, printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
