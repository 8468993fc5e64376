import numpy as np
import pytest

from sel.model import Grid, NoiseSpec, initial_state, make_params


@pytest.fixture
def desk_params():
    return make_params(2.0, 1.0, 1e-3, 0.01, 2.0, 1.0)


@pytest.fixture
def bump_state(desk_params):
    return initial_state("bump", Grid(100), desk_params)


@pytest.fixture
def quiet_noise():
    return NoiseSpec(0.0, 2.0, 1.0)


def random_states(n, rng, M1=2.0, M2=1.0, rho_min=1e-3):
    rho = rng.uniform(rho_min, M1, n)
    m = rng.uniform(-1.0, 1.0, n) * M2 * rho
    return rho, m


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
