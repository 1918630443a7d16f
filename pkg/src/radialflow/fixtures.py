"""Access to the bundled feeder data and golden voltage table."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .ingest import RawTable, parse_branch_table

BUS69 = "bus69.branch"
BUS33 = "bus33.branch"
GOLDEN69 = "golden69_vmag.csv"


def fixture_path(name: str) -> Path:
    path = resources.files("radialflow.data").joinpath(name)
    return Path(str(path))


def load_table(name: str) -> RawTable:
    text = fixture_path(name).read_text()
    return parse_branch_table(text, "delimited", source_name=name)


def load_bus69() -> RawTable:
    return load_table(BUS69)


def load_bus33() -> RawTable:
    return load_table(BUS33)


def load_golden69() -> dict[int, float]:
    """Golden per-node voltage magnitudes for the 69-bus feeder."""
    rows = {}
    lines = fixture_path(GOLDEN69).read_text().splitlines()
    for line in lines[1:]:
        node, vmag = line.split(",")
        rows[int(node)] = float(vmag)
    return rows
