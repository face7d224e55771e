"""Shared fixtures: hunted energies are expensive, so they are built once per session"""

import pytest

from thuemorse_lab.dynamics import hunt_energy, hunt_gamma
from thuemorse_lab.numerics import as_precision


@pytest.fixture(scope="session")
def one():
    return as_precision("1", 256)


@pytest.fixture(scope="session")
def type3_hunt(one):
    return hunt_energy(one, ("1.55", "1.60"), "TypeIII", [0], 6)


@pytest.fixture(scope="session")
def type2_hunt(one):
    return hunt_energy(one, ("0.6", "0.87"), "TypeII", [0], 6)


@pytest.fixture(scope="session")
def gamma_hunt():
    return hunt_gamma([0, 0, 0, 0], 6)
