import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from voxcorr.synthetic import gen_synthetic, three_gaussian_phantom

PHANTOM_SEED = 7


@pytest.fixture(scope="session")
def phantom64():
    """The canonical 64-cubed three-structure phantom (shared across tests)."""
    spec = three_gaussian_phantom(64)
    vol, labels = gen_synthetic(spec, seed=PHANTOM_SEED)
    return spec, vol, labels


@pytest.fixture(scope="session")
def phantom32():
    """Smaller phantom for cheap end-to-end paths."""
    spec = three_gaussian_phantom(32)
    vol, labels = gen_synthetic(spec, seed=PHANTOM_SEED)
    return spec, vol, labels


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
