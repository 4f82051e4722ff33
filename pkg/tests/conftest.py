import pytest

import bnadapt as ba


@pytest.fixture(scope="session")
def default_dataset():
    return ba.gen_dataset(ba.DatasetSpec())


@pytest.fixture(scope="session")
def source_checkpoint(default_dataset):
    """Seed-42 source model on the default toy config; trained once per run."""
    ds = default_dataset
    spec = ba.ModelSpec(input_dim=ds.x_train.shape[1])
    return ba.train_source(spec, ds.x_train, ds.y_train, seed=42)
