import numpy as np
import pytest

from fedsim.model import DataShard, ModelParams


def random_params(rng, d, k, scale=1.0):
    return ModelParams(rng.normal(0, scale, (k, d)), rng.normal(0, scale, k))


def random_shard(rng, n, d, k, client_id=0):
    return DataShard(rng.normal(0, 1, (n, d)), rng.integers(0, k, n), client_id, k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
