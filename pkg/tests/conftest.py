import numpy as np
import pytest

from caldef.models import build_model

MODEL_SPECS = {
    "symplectic": {"n": 2},
    "slnc": {"n": 3},
    "cy": {"n": 3},
    "hk": {"m": 1},
    "g2": {},
    "spin7": {},
    "degenerate-symplectic": {},
}


@pytest.fixture(scope="session")
def models():
    return {kind: build_model(kind, **params) for kind, params in MODEL_SPECS.items()}


@pytest.fixture()
def rng():
    return np.random.default_rng(20240911)
