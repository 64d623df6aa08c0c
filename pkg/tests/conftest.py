import os

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

import geocontact
from geocontact.autodiff import default_dtype
from geocontact.structio import read_pdb

DATA = os.path.join(os.path.dirname(geocontact.__file__), "data")
FIXTURE_PDB = os.path.join(DATA, "fixture_dimer.pdb")


@pytest.fixture
def fixture_pdb_path():
    return FIXTURE_PDB


@pytest.fixture
def fixture_chains():
    chains = read_pdb(FIXTURE_PDB)
    return {c.chain_id: c for c in chains}


@pytest.fixture
def float64():
    with default_dtype(np.float64):
        yield


def random_rigid_motion(seed):
    rng = np.random.default_rng(seed)
    rot = Rotation.random(random_state=seed).as_matrix()
    return rot, rng.uniform(-50, 50, size=3)


# acceptance outcomes, filled by tests/test_acceptance.py and printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {name}: {detail}")
