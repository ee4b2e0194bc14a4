import time

import numpy as np
import pytest

from slipball import cli
from slipball.basis import Basis
from slipball.operators import FrictionSpec, build_operator_set


@pytest.fixture(scope="session")
def desk_basis():
    return Basis(1.0, 4, 2)


@pytest.fixture(scope="session")
def small_basis():
    return Basis(1.0, 2, 1)


@pytest.fixture(scope="session")
def ops_free(desk_basis):
    return build_operator_set(desk_basis, FrictionSpec.uniform(0.0))


@pytest.fixture(scope="session")
def ops_unit(desk_basis):
    return build_operator_set(desk_basis, FrictionSpec.uniform(1.0), advection=False)


@pytest.fixture(scope="session")
def ops_small_free(small_basis):
    return build_operator_set(small_basis, FrictionSpec.uniform(0.0))


@pytest.fixture(scope="session")
def ops_small_unit(small_basis):
    return build_operator_set(small_basis, FrictionSpec.uniform(1.0))


class GoldenRuns:
    """Runs bundled configs through the CLI once per session."""

    def __init__(self, root):
        self.root = root
        self._done = {}
        self.seconds = {}

    def run(self, name, command="simulate", extra=()):
        key = (name, command, tuple(extra))
        if key not in self._done:
            out = self.root / f"{name}-{command}"
            start = time.perf_counter()
            code = cli.main([command, "--config", name, "--out", str(out), *extra])
            self.seconds[key] = time.perf_counter() - start
            self._done[key] = (code, out)
        return self._done[key]


@pytest.fixture(scope="session")
def golden(tmp_path_factory):
    return GoldenRuns(tmp_path_factory.mktemp("golden"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
