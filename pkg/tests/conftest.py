import importlib
import pytest
import numpy as np


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run training-based studies")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def _module(name):
    return importlib.import_module(f"denots.{name}")

@pytest.fixture(scope="session")
def ad():
    return _module("autodiff")

@pytest.fixture(scope="session")
def config():
    return _module("config")

@pytest.fixture(scope="session")
def interp():
    return _module("interpolation")

@pytest.fixture(scope="session")
def dynamics():
    return _module("dynamics")

@pytest.fixture(scope="session")
def solver():
    return _module("solver")

@pytest.fixture(scope="session")
def model():
    return _module("model")

@pytest.fixture(scope="session")
def metrics():
    return _module("metrics")

@pytest.fixture(scope="session")
def training():
    return _module("training")

@pytest.fixture(scope="session")
def baselines():
    return _module("baselines")

@pytest.fixture(scope="session")
def datagen():
    return _module("datagen")

@pytest.fixture(scope="session")
def storage():
    return _module("storage")

@pytest.fixture(scope="session")
def gp():
    return _module("gp")

@pytest.fixture(scope="session")
def theory():
    return _module("theory")

@pytest.fixture(scope="session")
def studies():
    return _module("studies")

@pytest.fixture(scope="session")
def cli():
    return _module("cli")

@pytest.fixture
def rng():
    return np.random.default_rng(1234)

@pytest.fixture
def tiny_config(config):
    """Small Bump run: 20 short sequences, 4 hidden units, one epoch."""
    return config.parse_config({
        "dataset": {"kind": "Bump", "n_sequences": 20, "min_length": 20, "max_length": 20},
        "model": {"hidden_size": 4},
        "train": {"max_epochs": 1},
        "verify": {"configs": 2, "seeds": 1},
    })
