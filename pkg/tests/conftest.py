import numpy as np
import pytest

from xautoml import synthetic


@pytest.fixture(scope="session")
def mini_dataset():
    return synthetic.make_mini_dataset(seed=7)


@pytest.fixture(scope="session")
def imbalanced_small():
    """600 rows, 5 informative + 10 noise columns, ~4:1 — fast fixture for
    learner and selection tests."""
    X, y = synthetic.make_imbalanced(n_rows=600, n_cols=15, n_informative=5,
                                     pos_frac=0.2, seed=42)
    return X, y


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
