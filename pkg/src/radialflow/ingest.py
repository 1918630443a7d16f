"""Parsing, radial-topology validation, and sequential renumbering of branch tables."""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

from .model import (
    DEFAULT_BASE,
    BranchRecord,
    DataError,
    LoadFlowError,
    NetworkModel,
    PerUnitBase,
    to_per_unit,
)


class ParseError(DataError):
    """Malformed input text; carries the offending line number in the message."""


class TopologyError(LoadFlowError):
    """Closed branches do not form a tree rooted at the requested root."""


class OrderingError(TopologyError):
    """Tree is radial but violates the sequential branch-numbering property."""


@dataclass(frozen=True)
class RawTable:
    """Parsed branch rows before validation, in physical units."""

    rows: tuple[BranchRecord, ...]
    source_name: str = "<memory>"
    declared_base: PerUnitBase | None = None
    declared_root: int | None = None

    def __post_init__(self):
        if not self.rows:
            raise DataError(f"{self.source_name}: empty branch table")
        seen = set()
        for r in self.rows:
            if r.branch_id in seen:
                raise DataError(f"{self.source_name}: duplicate branch id {r.branch_id}")
            seen.add(r.branch_id)

    def closed_rows(self) -> tuple[BranchRecord, ...]:
        return tuple(r for r in self.rows if not r.is_tie)

    def tie_rows(self) -> tuple[BranchRecord, ...]:
        return tuple(r for r in self.rows if r.is_tie)


def _parse_float(token: str, lineno: int, source: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"{source}:{lineno}: bad numeric field {token!r}") from None


def _parse_int(token: str, lineno: int, source: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{source}:{lineno}: bad integer field {token!r}") from None


def _parse_delimited(text: str, source: str) -> tuple[BranchRecord, ...]:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.replace(",", " ").split()
        head = tokens[0]
        is_tie = head.endswith("*")
        if is_tie:
            head = head[:-1]
        branch_id = _parse_int(head, lineno, source)
        if len(tokens) < 5:
            raise ParseError(f"{source}:{lineno}: expected at least 5 columns, got {len(tokens)}")
        sending = _parse_int(tokens[1], lineno, source)
        receiving = _parse_int(tokens[2], lineno, source)
        r_ohm = _parse_float(tokens[3], lineno, source)
        x_ohm = _parse_float(tokens[4], lineno, source)
        rest = [_parse_float(t, lineno, source) for t in tokens[5:]]
        p = q = 0.0
        cap = None
        if is_tie and len(rest) == 1:
            # tie rows in the bundled feeder tables leave the load columns blank
            cap = rest[0]
        elif len(rest) == 2:
            p, q = rest
        elif len(rest) == 3:
            p, q, cap = rest
        elif rest:
            raise ParseError(f"{source}:{lineno}: unexpected column count {len(tokens)}")
        try:
            rows.append(
                BranchRecord(
                    branch_id=branch_id,
                    sending_node=sending,
                    receiving_node=receiving,
                    resistance=r_ohm,
                    reactance=x_ohm,
                    load_p=p,
                    load_q=q,
                    capacity=cap,
                    is_tie=is_tie,
                )
            )
        except DataError as exc:
            raise ParseError(f"{source}:{lineno}: {exc}") from None
    return tuple(rows)


def _parse_json(text: str, source: str) -> tuple[tuple[BranchRecord, ...], PerUnitBase | None, int | None]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: invalid JSON ({exc})") from None
    base = None
    if "base" in doc:
        base = PerUnitBase(kv_base=float(doc["base"]["kv"]), mva_base=float(doc["base"]["mva"]))
    root = int(doc["root"]) if "root" in doc else None
    rows = []
    for entry in doc.get("branches", []):
        is_tie = bool(entry.get("open", False))
        cap = entry.get("cap")
        rows.append(
            BranchRecord(
                branch_id=int(entry["id"]),
                sending_node=int(entry["from"]),
                receiving_node=int(entry["to"]),
                resistance=float(entry["r"]),
                reactance=float(entry["x"]),
                load_p=0.0 if is_tie else float(entry.get("p", 0.0)),
                load_q=0.0 if is_tie else float(entry.get("q", 0.0)),
                capacity=float(cap) if cap is not None else None,
                is_tie=is_tie,
            )
        )
    return tuple(rows), base, root


def parse_branch_table(text: str, fmt: str = "delimited", source_name: str = "<memory>") -> RawTable:
    """Parse a branch table from delimited text or the JSON network format.

    Delimited columns: branch from to r_ohm x_ohm p_kw q_kvar [cap_kva], with a
    trailing ``*`` on the branch number marking a tie line and ``#`` starting a
    comment. Tie rows may leave the load columns blank.
    """
    if fmt == "delimited":
        rows = _parse_delimited(text, source_name)
        return RawTable(rows=rows, source_name=source_name)
    if fmt == "json":
        rows, base, root = _parse_json(text, source_name)
        return RawTable(rows=rows, source_name=source_name, declared_base=base, declared_root=root)
    raise ValueError(f"unknown format {fmt!r}")


def format_branch_table(table: RawTable) -> str:
    """Serialize a RawTable back to the delimited format (a parse fixed point)."""
    lines = ["# branch from to r_ohm x_ohm p_kw q_kvar [cap_kva]"]
    for r in table.rows:
        head = f"{r.branch_id}*" if r.is_tie else f"{r.branch_id}"
        cols = [head, str(r.sending_node), str(r.receiving_node),
                repr(r.resistance), repr(r.reactance), repr(r.load_p), repr(r.load_q)]
        if r.capacity is not None:
            cols.append(repr(r.capacity))
        lines.append(" ".join(cols))
    return "\n".join(lines) + "\n"


def _check_tree(closed: tuple[BranchRecord, ...], root: int, source: str):
    """Verify closed branches form a tree rooted at root.

    Returns (nodes, children_ids, parent_of) on success; raises TopologyError
    naming a cycle edge, a disconnected node, or a doubly-fed node otherwise.
    """
    nodes = {root}
    for b in closed:
        nodes.add(b.sending_node)
        nodes.add(b.receiving_node)
    incoming: dict[int, BranchRecord] = {}
    children: dict[int, list[int]] = {n: [] for n in nodes}
    for b in closed:
        if b.receiving_node in incoming:
            raise TopologyError(
                f"{source}: node {b.receiving_node} is fed by branches "
                f"{incoming[b.receiving_node].branch_id} and {b.branch_id}"
            )
        incoming[b.receiving_node] = b
        children[b.sending_node].append(b.branch_id)
    if root in incoming:
        edge = incoming[root]
        raise TopologyError(
            f"{source}: cycle through branch {edge.branch_id} "
            f"({edge.sending_node}->{edge.receiving_node}) feeding the root"
        )
    for n in nodes:
        if n != root and n not in incoming:
            raise TopologyError(f"{source}: node {n} has no feeding branch")

    by_id = {b.branch_id: b for b in closed}
    reached = {root}
    frontier = [root]
    while frontier:
        nxt = []
        for n in frontier:
            for bid in children[n]:
                r = by_id[bid].receiving_node
                if r not in reached:
                    reached.add(r)
                    nxt.append(r)
        frontier = nxt
    if len(reached) != len(nodes):
        # unreached nodes all have a feeding branch, so they lie on a cycle
        start = min(n for n in nodes if n not in reached)
        seen = []
        n = start
        while n not in seen:
            seen.append(n)
            n = incoming[n].sending_node
        edge = incoming[n]
        raise TopologyError(
            f"{source}: cycle through branch {edge.branch_id} "
            f"({edge.sending_node}->{edge.receiving_node})"
        )
    parent_of = {r: b.branch_id for r, b in incoming.items()}
    return nodes, children, parent_of


def check_sequential_ordering(closed: tuple[BranchRecord, ...], root: int) -> int | None:
    """Return the id of the first branch violating sequential ordering, or None.

    The property: for every branch j not fed directly by the root, the branch
    delivering power to its sending node has a smaller id.
    """
    parent_of = {b.receiving_node: b.branch_id for b in closed}
    for b in sorted(closed, key=lambda b: b.branch_id):
        if b.sending_node == root:
            continue
        if parent_of[b.sending_node] >= b.branch_id:
            return b.branch_id
    return None


def validate_radial(
    table: RawTable,
    root: int | None = None,
    base: PerUnitBase | None = None,
    require_ordered: bool = True,
) -> NetworkModel:
    """Validate the closed branches as a radial tree and build a NetworkModel.

    Tie branches are set aside unenergized. With require_ordered the sequential
    branch-numbering property is enforced (recoverable via renumber_sequential);
    otherwise it is only recorded on the model.
    """
    if root is None:
        root = table.declared_root if table.declared_root is not None else 1
    if base is None:
        base = table.declared_base if table.declared_base is not None else DEFAULT_BASE
    closed = table.closed_rows()
    if not closed:
        raise TopologyError(f"{table.source_name}: no closed branches")
    sending = {b.sending_node for b in closed}
    if root not in sending:
        raise TopologyError(f"{table.source_name}: root {root} is not a sending node")
    nodes, children, _ = _check_tree(closed, root, table.source_name)

    bad = check_sequential_ordering(closed, root)
    ordered = bad is None
    if require_ordered and not ordered:
        raise OrderingError(
            f"{table.source_name}: branch {bad} precedes the branch feeding its "
            f"sending node (run renumber_sequential)"
        )

    branches = tuple(sorted((to_per_unit(b, base) for b in closed), key=lambda b: b.branch_id))
    return NetworkModel(
        node_count=len(nodes),
        branches=branches,
        root=root,
        tie_lines=table.tie_rows(),
        children={n: tuple(sorted(children[n])) for n in nodes},
        base=base,
        sequentially_ordered=ordered,
    )


@dataclass(frozen=True)
class RenumberMapping:
    """Old-to-new index maps produced by renumber_sequential."""

    node_old_to_new: dict[int, int]
    node_new_to_old: dict[int, int]
    branch_old_to_new: dict[int, int]

    def is_identity(self) -> bool:
        return all(o == n for o, n in self.node_old_to_new.items()) and all(
            o == n for o, n in self.branch_old_to_new.items()
        )


def renumber_sequential(table: RawTable, root: int | None = None) -> tuple[RawTable, RenumberMapping]:
    """Relabel nodes and branches so the sequential-ordering property holds.

    The frontier of reachable nodes is expanded lowest-old-index first, root
    getting new index 1; the branch feeding new node k gets id k-1. Tables that
    already satisfy the convention of the bundled feeder data (receiving node of
    branch j is j+1, laterals listed after their trunk) map to themselves.
    """
    if root is None:
        root = table.declared_root if table.declared_root is not None else 1
    closed = table.closed_rows()
    if not closed:
        raise TopologyError(f"{table.source_name}: no closed branches")
    _check_tree(closed, root, table.source_name)

    out_branches: dict[int, list[BranchRecord]] = {}
    for b in closed:
        out_branches.setdefault(b.sending_node, []).append(b)

    node_map = {root: 1}
    branch_map: dict[int, int] = {}
    new_rows = []
    heap = [(b.receiving_node, b) for b in out_branches.get(root, [])]
    heapq.heapify(heap)
    next_node = 2
    while heap:
        _, b = heapq.heappop(heap)
        node_map[b.receiving_node] = next_node
        new_id = next_node - 1
        branch_map[b.branch_id] = new_id
        new_rows.append(
            BranchRecord(
                branch_id=new_id,
                sending_node=node_map[b.sending_node],
                receiving_node=next_node,
                resistance=b.resistance,
                reactance=b.reactance,
                load_p=b.load_p,
                load_q=b.load_q,
                capacity=b.capacity,
                is_tie=False,
            )
        )
        for child in out_branches.get(b.receiving_node, []):
            heapq.heappush(heap, (child.receiving_node, child))
        next_node += 1

    next_branch = len(new_rows) + 1
    for t in sorted(table.tie_rows(), key=lambda b: b.branch_id):
        branch_map[t.branch_id] = next_branch
        new_rows.append(
            BranchRecord(
                branch_id=next_branch,
                sending_node=node_map[t.sending_node],
                receiving_node=node_map[t.receiving_node],
                resistance=t.resistance,
                reactance=t.reactance,
                load_p=0.0,
                load_q=0.0,
                capacity=t.capacity,
                is_tie=True,
            )
        )
        next_branch += 1

    mapping = RenumberMapping(
        node_old_to_new=node_map,
        node_new_to_old={n: o for o, n in node_map.items()},
        branch_old_to_new=branch_map,
    )
    new_table = RawTable(
        rows=tuple(new_rows),
        source_name=table.source_name,
        declared_base=table.declared_base,
        declared_root=1 if table.declared_root is not None else None,
    )
    return new_table, mapping
