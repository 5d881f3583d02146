import os

# single-threaded BLAS so timing criteria measure what they claim
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from mmdfn.conversation import make_conversation
from mmdfn.model import ModelConfig, init_params

DIMS = {"a": 5, "v": 4, "t": 6}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_conversation(rng, speakers, n_classes=4, dims=DIMS, conv_id="c0"):
    n = len(speakers)
    feats = {m: rng.standard_normal((n, dims[m])) for m in dims}
    return make_conversation(conv_id, list(speakers), rng.integers(0, n_classes, n), feats)


@pytest.fixture
def small_batch(rng):
    return [random_conversation(rng, "ABA", conv_id="x"), random_conversation(rng, "ABBA", conv_id="y")]


@pytest.fixture
def small_config():
    return ModelConfig(d=8, K=2, classes=("c0", "c1", "c2", "c3"))


@pytest.fixture
def small_params(small_config):
    return init_params(small_config, DIMS, 4, seed=5)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
