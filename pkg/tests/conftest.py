from __future__ import annotations

import numpy as np
import pytest

from dips.data import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(314159)


def toy_dataset(n=80, p=3, seed=0, binary_outcome=False):
    """Small dataset with real confounding for smoke-level checks."""
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, p))
    logits = 0.8 * x[:, 0] - 0.5 * x[:, 1 % p]
    t = (r.random(n) < 1.0 / (1.0 + np.exp(-logits))).astype(np.int64)
    eta = 1.0 * t + x[:, 0] - 0.5 * x[:, 1 % p]
    if binary_outcome:
        y = (r.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    else:
        y = eta + r.standard_normal(n)
    names = tuple(f"X{j + 1}" for j in range(p))
    return Dataset(y=y, t=t, x=x, names=names)


@pytest.fixture
def toy_ds():
    return toy_dataset()
