import pytest

import radialflow as rf
from radialflow import fixtures
from radialflow.ingest import RawTable
from radialflow.model import BranchRecord


def make_table(rows, source="test", ties=()):
    """Rows are (id, from, to, r, x, p, q) tuples; ties are (id, from, to, r, x)."""
    records = [BranchRecord(*row) for row in rows]
    for tid, frm, to, r, x in ties:
        records.append(BranchRecord(tid, frm, to, r, x, 0.0, 0.0, None, True))
    return RawTable(rows=tuple(records), source_name=source)


def chain_table(loads, impedance=(0.1, 0.05)):
    """A path 1 -> 2 -> ... with the given (p_kw, q_kvar) load at each non-root node."""
    r, x = impedance
    rows = [
        (k - 1, k - 1, k, r, x, p, q)
        for k, (p, q) in enumerate(loads, start=2)
    ]
    return make_table(rows)


@pytest.fixture(scope="session")
def bus69_table():
    return fixtures.load_bus69()


@pytest.fixture(scope="session")
def bus33_table():
    return fixtures.load_bus33()


@pytest.fixture(scope="session")
def bus69_net(bus69_table):
    return rf.validate_radial(bus69_table)


@pytest.fixture(scope="session")
def bus33_net(bus33_table):
    return rf.validate_radial(bus33_table)


@pytest.fixture(scope="session")
def bus69_report(bus69_net):
    return rf.solve(bus69_net)


@pytest.fixture(scope="session")
def bus33_report(bus33_net):
    return rf.solve(bus33_net)


@pytest.fixture(scope="session")
def golden69():
    return fixtures.load_golden69()
