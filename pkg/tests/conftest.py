import json
from pathlib import Path

import numpy as np
import pytest

from cpw_automl import dataset
from cpw_automl.dataset import ParamRange, SweepConfig

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def oracles() -> dict:
    return json.loads((DATA / "oracles.json").read_text(encoding="utf-8"))


def small_config(seed: int = 3, freq_points: int = 24) -> SweepConfig:
    ranges = {
        "sigma_ink": ParamRange(1e7, 5e7, 3),
        "eps_fs": ParamRange(2.0, 4.5, 3),
        "eps_ds": ParamRange(1.0, 3.0, 3),
        "tan_delta": ParamRange(0.002, 0.03, 3),
    }
    return SweepConfig(ranges=ranges, freq_points=freq_points, seed=seed, declared_size=None)


@pytest.fixture(scope="session")
def small_ds():
    return dataset.generate(small_config())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
