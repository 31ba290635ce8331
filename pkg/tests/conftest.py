import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from regdiff.synthgen import GeneratorConfig, make_change_pair  # noqa: E402


@pytest.fixture(scope="session")
def synthetic_pair():
    return make_change_pair(GeneratorConfig(), seed=11)


@pytest.fixture(scope="session")
def pair_factory():
    cache = {}

    def get(seed, **overrides):
        key = (seed, tuple(sorted(overrides.items())))
        if key not in cache:
            cache[key] = make_change_pair(GeneratorConfig(**overrides), seed=seed)
        return cache[key]

    return get
