import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sparsecert import Dictionary, normalize_columns


def random_dictionary(d: int, p: int, seed: int) -> Dictionary:
    rng = np.random.default_rng(seed)
    return normalize_columns(rng.standard_normal((d, p)))


@pytest.fixture
def small_dict() -> Dictionary:
    return random_dictionary(10, 15, seed=42)
