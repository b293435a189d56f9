import time

import numpy as np
import pytest

import droopcert as dc


@pytest.fixture(scope="session")
def scn_paper():
    return dc.bundled_scenario("case_3bus")


@pytest.fixture(scope="session")
def scn_certified():
    return dc.bundled_scenario("case_3bus_certified")


@pytest.fixture(scope="session")
def scn_slow():
    return dc.bundled_scenario("case_3bus_slow")


@pytest.fixture(scope="session")
def scn_composite():
    return dc.bundled_scenario("case_3bus_composite")


@pytest.fixture(scope="session")
def cert_paper_timed(scn_paper):
    """Certificate on the full benchmark domain, with wall-clock seconds."""
    t0 = time.perf_counter()
    cert = dc.certificate(scn_paper.network, scn_paper.droop, scn_paper.domain)
    return cert, time.perf_counter() - t0


@pytest.fixture(scope="session")
def cert_certified(scn_certified):
    return dc.certificate(scn_certified.network, scn_certified.droop,
                          scn_certified.domain)


@pytest.fixture(scope="session")
def equilibrium(scn_certified):
    return dc.solve_equilibrium(scn_certified.network, scn_certified.droop,
                                dom=scn_certified.domain)


@pytest.fixture()
def rng():
    return np.random.default_rng(7)
