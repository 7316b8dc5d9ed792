import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))  # make oracles importable


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def cifar10_train_dir():
    """Locate a real CIFAR-10 binary training set, or None.

    Checked in order: $FREQPOISON_CIFAR10, ./data/cifar-10-batches-bin.
    """
    candidates = []
    env = os.environ.get("FREQPOISON_CIFAR10")
    if env:
        candidates.append(env)
    candidates.append(
        os.path.join(os.path.dirname(os.path.dirname(__file__)), "data", "cifar-10-batches-bin")
    )
    for cand in candidates:
        if os.path.isfile(os.path.join(cand, "data_batch_1.bin")):
            return cand
    return None


requires_cifar10 = pytest.mark.skipif(
    cifar10_train_dir() is None,
    reason=(
        "real CIFAR-10 binary training set not available "
        "(set FREQPOISON_CIFAR10 to the cifar-10-batches-bin directory)"
    ),
)
