"""Shared specs and helpers for the test suite."""

import numpy as np
import pytest

from polarwire.channels import BccSpec, WiretapSpec, bec, bsc, bsc_table

IDENTITY = np.eye(2)


def bec_wiretap(eps1=0.3, eps2=0.6, p_v=0.5):
    return WiretapSpec(p_v, IDENTITY, bec(eps1), bec(eps2))


def noiseless_wiretap(p_v=0.5, eve=None):
    return WiretapSpec(p_v, IDENTITY, bsc(0.0), bec(0.6) if eve is None else eve)


def nonuniform_wiretap():
    """Nonuniform V with a noisy V -> X map over BSCs."""
    return WiretapSpec(0.3, bsc_table(0.05), bsc(0.05), bsc(0.25))


def bec_bcc(q=0.25, eps1=0.3, eps2=0.6):
    return BccSpec(0.5, bsc_table(q), IDENTITY, bec(eps1), bec(eps2))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[k])
