import os
import sys
from pathlib import Path

# quieter, deterministic threading for the compiled kernels on any box
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `reference` importable

MNIST_DIR = Path(os.environ.get("ANNFOREST_MNIST_DIR",
                                Path(__file__).parent.parent / "data" / "mnist"))
CACHE_DIR = Path(__file__).parent.parent / "data" / "cache"

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def mnist_path(key: str) -> Path:
    base = MNIST_DIR / MNIST_FILES[key]
    for cand in (base, base.with_name(base.name + ".gz")):
        if cand.exists():
            return cand
    pytest.skip(
        f"MNIST file {MNIST_FILES[key]} not found under {MNIST_DIR} "
        "(set ANNFOREST_MNIST_DIR to the directory holding the four "
        "idx files, gzipped or plain)"
    )


@pytest.fixture(scope="session")
def mnist():
    """Unit-normalized MNIST train/test vectors, the benchmark configuration."""
    from annforest.io import load_vectors
    from annforest.metrics import normalize_unit

    X = normalize_unit(load_vectors(mnist_path("train_images"), "idx"))
    Q = normalize_unit(load_vectors(mnist_path("test_images"), "idx"))
    return X, Q


@pytest.fixture()
def rng():
    return np.random.default_rng(0xA11CE)


# one PASS/FAIL line per acceptance criterion, shown even when stdout capture
# is on; test_acceptance.py appends to this before asserting
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    from annforest import _kernels

    _kernels.warmup()
