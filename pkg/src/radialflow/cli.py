"""Command-line surface: validate and solve feeder files, compare against a
golden voltage table, and benchmark step counts on random feeders."""
from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import oracle, solver
from .ingest import (
    OrderingError,
    ParseError,
    RawTable,
    TopologyError,
    check_sequential_ordering,
    parse_branch_table,
    renumber_sequential,
    validate_radial,
)
from .model import BranchRecord, DataError, LoadFlowError, PerUnitBase
from .solver import NonConvergenceError, SolveOptions

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_TOPOLOGY = 3
EXIT_NONCONVERGENCE = 4
EXIT_COMPARE = 5


def _load_table(path: str, input_format: str) -> RawTable:
    p = Path(path)
    if input_format == "auto":
        input_format = "json" if p.suffix.lower() == ".json" else "delimited"
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return parse_branch_table(text, input_format, source_name=str(path))


def _base_from_args(args, table: RawTable) -> PerUnitBase | None:
    if args.kv is None and args.mva is None:
        return None  # let validate_radial fall back to the file/default base
    declared = table.declared_base
    kv = args.kv if args.kv is not None else (declared.kv_base if declared else 12.66)
    mva = args.mva if args.mva is not None else (declared.mva_base if declared else 10.0)
    return PerUnitBase(kv_base=kv, mva_base=mva)


def _options_from_args(args) -> SolveOptions:
    return SolveOptions(
        tolerance=args.tol,
        max_iterations=args.max_iter,
        debug_polar=args.debug_polar,
        literal_scan=args.literal_steps,
    )


def cmd_validate(args) -> int:
    table = _load_table(args.file, args.input_format)
    net = validate_radial(table, root=args.root, base=_base_from_args(args, table),
                          require_ordered=False)
    leaves = solver.find_leaf_nodes(net)
    ordered = "yes" if net.sequentially_ordered else "no"
    print(
        f"NB={net.node_count} LN={net.branch_count} ties={len(net.tie_lines)} "
        f"leaves={len(leaves)} ordered={ordered}"
    )
    if not net.sequentially_ordered:
        print("ordering violation: run solve with --renumber", file=sys.stderr)
        return EXIT_TOPOLOGY
    return EXIT_OK


def _run_solve(args):
    table = _load_table(args.file, args.input_format)
    if args.renumber:
        table, _ = renumber_sequential(table, root=args.root)
        root = 1 if args.root is not None else None
    else:
        root = args.root
    net = validate_radial(table, root=root, base=_base_from_args(args, table))
    report = solver.solve(net, _options_from_args(args))
    baseline_steps = 0
    if getattr(args, "baseline", False):
        baseline_steps = oracle.baseline_solve(net, _options_from_args(args)).step_count_baseline
    return net, report, baseline_steps


def _report_lines(net, report, baseline_steps) -> list[str]:
    lines = [
        f"converged yes",
        f"iterations {report.iterations}",
        f"leaves {report.leaf_count}",
        f"steps_proposed {report.step_count_proposed}",
        f"steps_baseline {baseline_steps}",
        "node vmag_pu angle_deg",
    ]
    for node, vmag, angle in report.node_voltages:
        lines.append(f"{node} {vmag:.5f} {angle:.5f}")
    lines.append("branch imag_pu loss_kw loss_kvar")
    loss_by_id = {bid: (lp, lq) for bid, lp, lq in report.branch_losses}
    for bid, imag in report.branch_currents:
        lp, lq = loss_by_id[bid]
        lines.append(f"{bid} {imag:.5f} {lp:.4f} {lq:.4f}")
    lines.append(f"total_loss_kw {report.total_loss_p:.4f}")
    lines.append(f"total_loss_kvar {report.total_loss_q:.4f}")
    return lines


def _report_json(net, report, baseline_steps) -> str:
    loss_by_id = {bid: (lp, lq) for bid, lp, lq in report.branch_losses}
    doc = {
        "converged": report.converged,
        "iterations": report.iterations,
        "leaves": report.leaf_count,
        "steps_proposed": report.step_count_proposed,
        "steps_baseline": baseline_steps,
        "nodes": [
            {"node": n, "vmag_pu": round(v, 5), "angle_deg": round(a, 5)}
            for n, v, a in report.node_voltages
        ],
        "branches": [
            {
                "branch": bid,
                "imag_pu": round(imag, 5),
                "loss_kw": round(loss_by_id[bid][0], 4),
                "loss_kvar": round(loss_by_id[bid][1], 4),
            }
            for bid, imag in report.branch_currents
        ],
        "total_loss_kw": round(report.total_loss_p, 4),
        "total_loss_kvar": round(report.total_loss_q, 4),
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def cmd_solve(args) -> int:
    net, report, baseline_steps = _run_solve(args)
    if args.format == "json":
        print(_report_json(net, report, baseline_steps))
    elif args.format == "csv":
        lines = [line.replace(" ", ",") for line in _report_lines(net, report, baseline_steps)]
        print("\n".join(lines))
    else:
        print("\n".join(_report_lines(net, report, baseline_steps)))
    return EXIT_OK


def cmd_compare(args) -> int:
    net, report, _ = _run_solve(args)
    golden = {}
    for lineno, line in enumerate(Path(args.golden).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("node"):
            continue
        try:
            node_txt, vmag_txt = line.split(",")
            golden[int(node_txt)] = float(vmag_txt)
        except ValueError:
            raise ParseError(f"{args.golden}:{lineno}: bad golden row {line!r}") from None
    solved = {n: v for n, v, _ in report.node_voltages}
    if set(golden) != set(solved):
        raise DataError(
            f"golden node set does not match network "
            f"(golden {len(golden)} nodes, network {len(solved)})"
        )
    print("node vmag_pu golden_pu deviation")
    worst_node = None
    worst = -1.0
    for node in sorted(golden):
        dev = abs(solved[node] - golden[node])
        print(f"{node} {solved[node]:.5f} {golden[node]:.5f} {dev:.6f}")
        if dev > worst:
            worst, worst_node = dev, node
    print(f"max_deviation {worst:.6f} at node {worst_node}")
    if worst > args.bound:
        print(
            f"FAIL: node {worst_node} deviates by {worst:.6f} > bound {args.bound}",
            file=sys.stderr,
        )
        return EXIT_COMPARE
    return EXIT_OK


def generate_random_table(n: int, leaf_fraction: float, rng: random.Random) -> RawTable:
    """Seeded random radial feeder with roughly the requested leaf fraction.

    Node k attaches to an already-placed parent; attaching to an internal node
    adds a leaf, attaching to a leaf keeps the count, so the builder steers the
    leaf count toward leaf_fraction * (n - 1). Loads shrink with n to keep the
    feeder comfortably convergent.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    target = max(1, round(leaf_fraction * (n - 1)))
    parent = {2: 1}
    leaves = {2}
    for k in range(3, n + 1):
        internal = [v for v in range(1, k) if v not in leaves]
        if len(leaves) < target and internal:
            p = rng.choice(internal)
        else:
            p = rng.choice(sorted(leaves))
            leaves.discard(p)
        parent[k] = p
        leaves.add(k)
    p_cap = 2000.0 / n
    rows = []
    for k in range(2, n + 1):
        rows.append(
            BranchRecord(
                branch_id=k - 1,
                sending_node=parent[k],
                receiving_node=k,
                resistance=rng.uniform(0.01, 0.3),
                reactance=rng.uniform(0.01, 0.3),
                load_p=rng.uniform(0.0, p_cap),
                load_q=rng.uniform(0.0, 0.75 * p_cap),
            )
        )
    return RawTable(rows=tuple(rows), source_name=f"random-{n}")


def cmd_bench(args) -> int:
    cells = sorted((n, f) for n in args.sizes for f in args.leaf_fractions)
    print("n leaf_frac m r iter_proposed pred_proposed iter_baseline pred_baseline saving")
    for n, frac in cells:
        rng = random.Random(f"{args.seed}:{n}:{frac:.4f}")
        table = generate_random_table(n, frac, rng)
        net = validate_radial(table)
        opts = SolveOptions(tolerance=args.tol, max_iterations=args.max_iter,
                            literal_scan=True)
        report = solver.solve(net, opts)
        base_report = oracle.baseline_solve(net, opts)
        m = report.leaf_count
        r = report.iterations
        # compare the per-iteration loop cost against the closed forms' r-terms;
        # the one-off prefix is excluded on both sides
        pred_prop, pred_base = solver.step_model(n, m, r)
        prefix = 3 * n + n * n
        pred_prop_iter = (pred_prop - prefix) // r
        pred_base_iter = (pred_base - prefix) // r
        iter_prop = sum(report.per_iteration_steps) // r
        iter_base = sum(base_report.per_iteration_steps) // r
        saving = iter_base / iter_prop
        print(
            f"{n} {frac:.2f} {m} {r} "
            f"{iter_prop} {pred_prop_iter} {iter_base} {pred_base_iter} {saving:.3f}"
        )
    return EXIT_OK


def _add_input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("file", help="branch table (delimited or .json)")
    p.add_argument("--input-format", choices=["auto", "delimited", "json"], default="auto")
    p.add_argument("--root", type=int, default=None, help="substation node (default 1)")
    p.add_argument("--kv", type=float, default=None, help="voltage base in kV")
    p.add_argument("--mva", type=float, default=None, help="power base in MVA")


def _add_solve_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=0.0001, help="convergence tolerance in p.u.")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--renumber", action="store_true", help="renumber into sequential order first")
    p.add_argument("--debug-polar", action="store_true",
                   help="cross-check the polar-form voltage equations every sweep")
    p.add_argument("--literal-steps", action="store_true",
                   help="count steps with the literal whole-table child scan")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radialflow",
                                     description="Radial feeder load flow by backward/forward sweep")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a branch table for radial topology")
    _add_input_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="run the load flow and print the solution")
    _add_input_args(p)
    _add_solve_args(p)
    p.add_argument("--format", choices=["table", "csv", "json"], default="table")
    p.add_argument("--no-baseline", dest="baseline", action="store_false",
                   help="skip the baseline step-count run")
    p.set_defaults(func=cmd_solve, baseline=True)

    p = sub.add_parser("compare", help="solve and compare against a golden voltage CSV")
    _add_input_args(p)
    _add_solve_args(p)
    p.add_argument("--golden", required=True, help="CSV of node,vmag_pu")
    p.add_argument("--bound", type=float, default=1e-3, help="max allowed deviation in p.u.")
    p.set_defaults(func=cmd_compare, baseline=False)

    p = sub.add_parser("bench", help="step-count benchmark on random feeders")
    p.add_argument("--sizes", type=int, nargs="+", required=True)
    p.add_argument("--leaf-fractions", type=float, nargs="+", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=0.0001)
    p.add_argument("--max-iter", type=int, default=100)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (OrderingError, TopologyError) as exc:
        print(f"topology error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except NonConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except LoadFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
