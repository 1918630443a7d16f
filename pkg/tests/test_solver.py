import math
import random

import pytest

import radialflow as rf
from conftest import chain_table, make_table
from radialflow.cli import generate_random_table
from radialflow.ingest import OrderingError, validate_radial
from radialflow.model import Phasor, SolveState
from radialflow.oracle import downstream_sum
from radialflow.solver import (
    LeafSet,
    NonConvergenceError,
    SolveOptions,
    StepCounter,
    VoltageCollapseError,
    backward_sweep,
    check_convergence,
    compute_load_currents,
    compute_losses,
    find_leaf_nodes,
    forward_sweep,
    is_leaf,
    solve,
    step_model,
)


def run_sweeps(net, iterations=1, literal=False):
    """Run full iterations by hand and return the state."""
    state = SolveState.flat_start(net)
    leaves = find_leaf_nodes(net)
    for _ in range(iterations):
        compute_load_currents(state, net)
        backward_sweep(state, net, leaves, literal_scan=literal)
        forward_sweep(state, net)
    return state


class TestFindLeafNodes:
    def test_chain(self):
        net = validate_radial(chain_table([(10, 5), (10, 5)]))
        assert find_leaf_nodes(net).leaves == (3,)

    def test_star(self):
        net = validate_radial(make_table([
            (1, 1, 2, 0.1, 0.1, 5, 2),
            (2, 1, 3, 0.1, 0.1, 5, 2),
            (3, 1, 4, 0.1, 0.1, 5, 2),
        ]))
        assert find_leaf_nodes(net).leaves == (2, 3, 4)

    def test_bus69_matches_sending_column_scan(self, bus69_table, bus69_net):
        closed = bus69_table.closed_rows()
        sending = {r.sending_node for r in closed}
        expected = tuple(sorted(r.receiving_node for r in closed if r.receiving_node not in sending))
        leaves = find_leaf_nodes(bus69_net)
        assert leaves.leaves == expected
        assert len(leaves) == 8

    def test_equals_empty_children_exactly(self, bus33_net):
        leaves = set(find_leaf_nodes(bus33_net).leaves)
        assert leaves == {n for n, kids in bus33_net.children.items() if not kids}

    def test_counts_steps(self, bus69_net):
        counter = StepCounter()
        find_leaf_nodes(bus69_net, counter)
        assert counter.leaf_scan_steps == 2 * bus69_net.branch_count


class TestIsLeaf:
    def test_singleton_hit_and_miss(self):
        leaves = LeafSet(leaves=(3,))
        assert is_leaf(leaves, 3)
        assert not is_leaf(leaves, 2)

    def test_comparison_count_bounded(self):
        leaves = LeafSet(leaves=(2, 5, 9, 14))
        counter = StepCounter()
        assert is_leaf(leaves, 9, counter)
        assert counter.current_steps <= 2 * 3

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            LeafSet(leaves=(5, 2))


class TestLoadCurrents:
    def test_zero_load_gives_exact_zero(self):
        net = validate_radial(chain_table([(0, 0)]))
        state = SolveState.flat_start(net)
        state.node_voltage[2] = Phasor(0.83, -0.11)
        compute_load_currents(state, net)
        assert state.load_current[2] == Phasor(0.0, 0.0)

    def test_unit_voltage_unit_load(self):
        net = validate_radial(chain_table([(1000.0, 0.0)]))  # 0.1 p.u. on default base
        state = SolveState.flat_start(net)
        compute_load_currents(state, net)
        assert state.load_current[2].re == pytest.approx(0.1, rel=1e-14)
        assert state.load_current[2].im == pytest.approx(0.0, abs=1e-15)

    def test_matches_independent_complex_arithmetic(self):
        net = validate_radial(chain_table([(100.0, 50.0)]))  # 0.01 + j0.005 p.u.
        state = SolveState.flat_start(net)
        v = 0.95 * complex(math.cos(-0.02), math.sin(-0.02))
        state.node_voltage[2] = Phasor(v.real, v.imag)
        compute_load_currents(state, net)
        expected = complex(0.01, -0.005) / v.conjugate()
        got = state.load_current[2]
        assert got.re == pytest.approx(expected.real, rel=1e-12)
        assert got.im == pytest.approx(expected.imag, rel=1e-12)
        # polar form: |LI| = sqrt(P^2+Q^2)/|V|, angle = theta_v - atan(Q/P)
        assert abs(got) == pytest.approx(math.hypot(0.01, 0.005) / 0.95, rel=1e-12)
        assert got.angle == pytest.approx(-0.02 - math.atan2(0.005, 0.01), abs=1e-12)

    def test_collapsed_voltage_raises(self):
        net = validate_radial(chain_table([(100.0, 50.0)]))
        state = SolveState.flat_start(net)
        state.node_voltage[2] = Phasor(0.0, 0.0)
        with pytest.raises(VoltageCollapseError, match="node 2"):
            compute_load_currents(state, net)


class TestBackwardSweep:
    def test_all_zero_loads(self, bus69_net):
        state = SolveState.flat_start(bus69_net)
        # leave load currents at zero
        backward_sweep(state, bus69_net, find_leaf_nodes(bus69_net))
        assert all(i == Phasor(0.0, 0.0) for i in state.branch_current.values())

    def test_chain_kcl(self):
        net = validate_radial(chain_table([(100.0, 60.0), (50.0, 30.0)]))
        state = SolveState.flat_start(net)
        compute_load_currents(state, net)
        backward_sweep(state, net, find_leaf_nodes(net))
        li2, li3 = state.load_current[2], state.load_current[3]
        assert state.branch_current[2] == li3
        total = li2 + li3
        assert state.branch_current[1].re == pytest.approx(total.re, abs=1e-15)
        assert state.branch_current[1].im == pytest.approx(total.im, abs=1e-15)

    def test_bus69_flat_voltage_equals_downstream_sums(self, bus69_net):
        state = SolveState.flat_start(bus69_net)
        compute_load_currents(state, bus69_net)
        backward_sweep(state, bus69_net, find_leaf_nodes(bus69_net))
        expected = downstream_sum(bus69_net, state.load_current)
        for bid, want in expected.items():
            got = state.branch_current[bid]
            assert abs((got - want).as_complex()) < 1e-12
        total = Phasor(0.0, 0.0)
        for node in bus69_net.nodes():
            total = total + state.load_current[node]
        assert abs((state.branch_current[1] - total).as_complex()) < 1e-12

    def test_literal_scan_mode_identical(self, bus33_net):
        fast = run_sweeps(bus33_net, iterations=3, literal=False)
        literal = run_sweeps(bus33_net, iterations=3, literal=True)
        for bid in fast.branch_current:
            assert fast.branch_current[bid] == literal.branch_current[bid]
        for node in fast.node_voltage:
            assert fast.node_voltage[node] == literal.node_voltage[node]

    def test_kcl_at_every_node(self, bus69_net):
        state = run_sweeps(bus69_net, iterations=2)
        compute_load_currents(state, bus69_net)
        backward_sweep(state, bus69_net, find_leaf_nodes(bus69_net))
        for node in bus69_net.nodes():
            if node == bus69_net.root:
                continue
            into = state.branch_current[bus69_net.parent_branch[node]]
            out = state.load_current[node]
            for child in bus69_net.children[node]:
                out = out + state.branch_current[child]
            assert abs((into - out).as_complex()) < 1e-12


class TestForwardSweep:
    def test_zero_current_propagates_voltage(self):
        net = validate_radial(chain_table([(0.0, 0.0)]))
        state = SolveState.flat_start(net)
        forward_sweep(state, net)
        assert state.node_voltage[2] == Phasor(1.0, 0.0)

    def test_direct_substitution(self):
        # V_s = 1, I = 1, Z = 0.01 + j0.01 -> V_r = 0.99 - j0.01
        zb = rf.DEFAULT_BASE.z_base
        net = validate_radial(chain_table([(0.0, 0.0)], impedance=(0.01 * zb, 0.01 * zb)))
        state = SolveState.flat_start(net)
        state.branch_current[1] = Phasor(1.0, 0.0)
        forward_sweep(state, net)
        assert state.node_voltage[2].re == pytest.approx(0.99, rel=1e-12)
        assert state.node_voltage[2].im == pytest.approx(-0.01, rel=1e-12)

    def test_polar_agreement_on_fixture_iterations(self, bus33_net):
        state = SolveState.flat_start(bus33_net)
        leaves = find_leaf_nodes(bus33_net)
        for _ in range(4):
            compute_load_currents(state, bus33_net)
            backward_sweep(state, bus33_net, leaves)
            dev = forward_sweep(state, bus33_net, debug_polar=True)
            assert dev <= 1e-10


class TestCheckConvergence:
    def test_identical_arrays_converged(self):
        net = validate_radial(chain_table([(10.0, 5.0)]))
        state = SolveState.flat_start(net)
        converged, max_delta = check_convergence(state, 0.0001)
        assert converged
        assert max_delta == 0.0

    def test_single_node_over_threshold(self):
        net = validate_radial(chain_table([(10.0, 5.0)]))
        state = SolveState.flat_start(net)
        state.node_voltage[2] = Phasor(0.999, 0.0)
        converged, max_delta = check_convergence(state, 0.0001)
        assert not converged
        assert max_delta == pytest.approx(0.001, rel=1e-12)

    def test_bus69_first_iteration_not_converged(self, bus69_net):
        state = run_sweeps(bus69_net, iterations=1)
        converged, max_delta = check_convergence(state, 0.0001)
        assert not converged
        assert max_delta > 0.0001


class TestComputeLosses:
    def test_zero_current_zero_loss(self):
        net = validate_radial(chain_table([(0.0, 0.0)]))
        state = SolveState.flat_start(net)
        rows, total_p, total_q = compute_losses(state, net)
        assert rows == [(1, 0.0, 0.0)]
        assert total_p == total_q == 0.0

    def test_direct_substitution(self):
        # |I| = 2 p.u., Z = 0.5 + j0.25 p.u. -> LP = 2.0, LQ = 1.0 p.u.
        zb = rf.DEFAULT_BASE.z_base
        net = validate_radial(chain_table([(0.0, 0.0)], impedance=(0.5 * zb, 0.25 * zb)))
        state = SolveState.flat_start(net)
        state.branch_current[1] = Phasor(2.0, 0.0)
        rows, total_p, total_q = compute_losses(state, net)
        to_kw = rf.DEFAULT_BASE.mva_base * 1000.0
        assert rows[0][1] == pytest.approx(2.0 * to_kw, rel=1e-12)
        assert rows[0][2] == pytest.approx(1.0 * to_kw, rel=1e-12)
        assert total_p == rows[0][1] and total_q == rows[0][2]


class TestSolve:
    def test_two_node_zero_load(self):
        net = validate_radial(chain_table([(0.0, 0.0)]))
        report = solve(net)
        assert report.converged
        assert report.iterations == 1
        assert report.node_voltages == ((1, 1.0, 0.0), (2, 1.0, 0.0))
        assert report.total_loss_p == 0.0 and report.total_loss_q == 0.0

    def test_report_totals_equal_row_sums(self, bus69_report):
        assert bus69_report.total_loss_p == sum(lp for _, lp, _ in bus69_report.branch_losses)
        assert bus69_report.total_loss_q == sum(lq for _, _, lq in bus69_report.branch_losses)

    def test_unordered_network_rejected(self):
        table = make_table([
            (1, 2, 3, 0.1, 0.1, 10, 5),
            (2, 1, 2, 0.1, 0.1, 10, 5),
        ])
        net = validate_radial(table, require_ordered=False)
        with pytest.raises(OrderingError):
            solve(net)

    def test_non_convergence_reported(self):
        # absurd load so the sweep oscillates or collapses instead of settling
        net = validate_radial(chain_table([(80000.0, 60000.0)], impedance=(8.0, 4.0)))
        with pytest.raises((NonConvergenceError, VoltageCollapseError)):
            solve(net, SolveOptions(max_iterations=50))

    def test_fixed_point_extra_iteration(self, bus69_net, bus69_report):
        state = SolveState(
            node_voltage=dict(bus69_report.final_voltage),
            load_current=dict(bus69_report.final_load_current),
            branch_current=dict(bus69_report.final_branch_current),
            prev_voltage_mag={
                n: p.magnitude for n, p in bus69_report.final_voltage.items()
            },
        )
        leaves = find_leaf_nodes(bus69_net)
        compute_load_currents(state, bus69_net)
        backward_sweep(state, bus69_net, leaves)
        forward_sweep(state, bus69_net)
        converged, max_delta = check_convergence(state, 0.0001)
        assert converged
        assert max_delta <= 0.0001

    def test_voltage_monotone_along_feeder(self, bus69_net, bus69_report):
        for b in bus69_net.branches:
            vs = bus69_report.voltage_magnitude(b.sending_node)
            vr = bus69_report.voltage_magnitude(b.receiving_node)
            assert vr <= vs + 1e-9

    def test_debug_polar_full_solve(self, bus69_net):
        report = solve(bus69_net, SolveOptions(debug_polar=True))
        assert report.max_polar_deviation is not None
        assert report.max_polar_deviation <= 1e-10


class TestStepModel:
    def test_smallest_case(self):
        assert step_model(2, 1, 1) == (18, 22)

    def test_proposed_never_worse(self):
        rng = random.Random(1)
        for _ in range(200):
            n = rng.randint(2, 500)
            m = rng.randint(1, n - 1)
            r = rng.randint(1, 20)
            proposed, baseline = step_model(n, m, r)
            assert proposed < baseline

    @pytest.mark.parametrize("n,m,r", [(1, 1, 1), (3, 0, 1), (3, 3, 1), (3, 1, 0)])
    def test_invalid_arguments(self, n, m, r):
        with pytest.raises(ValueError):
            step_model(n, m, r)


class TestStepCounting:
    def test_counters_monotone_and_consistent(self, bus33_net):
        report = solve(bus33_net, SolveOptions(literal_scan=True))
        assert report.step_count_proposed == report.pre_loop_steps + sum(report.per_iteration_steps)
        assert all(t > 0 for t in report.per_iteration_steps)

    def test_random_trees_proposed_cheaper_per_iteration(self):
        rng = random.Random(99)
        for _ in range(10):
            n = rng.randint(3, 40)
            table = generate_random_table(n, rng.uniform(0.1, 0.8), rng)
            net = validate_radial(table)
            opts = SolveOptions(literal_scan=True)
            rep = solve(net, opts)
            base = rf.baseline_solve(net, opts)
            for p_steps, b_steps in zip(rep.per_iteration_steps, base.per_iteration_steps):
                assert p_steps <= b_steps
