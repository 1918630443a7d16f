"""Backward/forward sweep load-flow with step-count instrumentation.

Branch currents are accumulated leaf-first with a work stack over the
sequentially ordered branch list; node voltages then propagate root-first.
Leaf identification runs once before the iteration loop, which is where the
step saving over the per-iteration rescanning baseline comes from.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .ingest import OrderingError
from .model import (
    LoadFlowError,
    NetworkModel,
    Phasor,
    SolveReport,
    SolveState,
    SweepScratch,
    wrap_angle,
)


class VoltageCollapseError(LoadFlowError):
    """Zero voltage magnitude at a loaded node."""


class NonConvergenceError(LoadFlowError):
    """Iteration limit reached; carries the last max voltage delta."""

    def __init__(self, iterations: int, max_delta: float):
        super().__init__(f"no convergence after {iterations} iterations (max delta {max_delta:.3e})")
        self.iterations = iterations
        self.max_delta = max_delta


class NumericError(LoadFlowError):
    """Non-finite intermediate value during a sweep."""


class SweepInvariantError(LoadFlowError):
    """Internal ordering violation: a child branch current was consumed before it was computed."""


class PolarMismatchError(LoadFlowError):
    """Polar-form voltage evaluation disagrees with the rectangular sweep."""


POLAR_AGREEMENT_TOL = 1e-10


@dataclass(frozen=True)
class LeafSet:
    """Ascending-sorted node indices with no outgoing closed branch."""

    leaves: tuple[int, ...]

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.leaves, self.leaves[1:])):
            raise ValueError("leaf list must be sorted strictly ascending")

    def __len__(self) -> int:
        return len(self.leaves)

    def __contains__(self, node: int) -> bool:
        return is_leaf(self, node)


@dataclass
class StepCounter:
    """Tally of elementary operations, split by solve phase.

    Counters only grow; total is their sum. iteration_totals records the steps
    spent inside each convergence-loop pass, pre_loop_steps everything before
    the loop (leaf identification in the proposed method).
    """

    leaf_scan_steps: int = 0
    current_steps: int = 0
    voltage_steps: int = 0
    convergence_steps: int = 0
    pre_loop_steps: int = 0
    iteration_totals: list[int] = field(default_factory=list)
    _iter_mark: int = 0

    @property
    def total(self) -> int:
        return (
            self.leaf_scan_steps
            + self.current_steps
            + self.voltage_steps
            + self.convergence_steps
        )

    def mark_pre_loop(self) -> None:
        self.pre_loop_steps = self.total
        self._iter_mark = self.total

    def end_iteration(self) -> None:
        t = self.total
        self.iteration_totals.append(t - self._iter_mark)
        self._iter_mark = t


@dataclass(frozen=True)
class SolveOptions:
    tolerance: float = 0.0001
    max_iterations: int = 100
    debug_polar: bool = False
    literal_scan: bool = False

    def __post_init__(self):
        if not (self.tolerance > 0.0):
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


def find_leaf_nodes(net: NetworkModel, counter: StepCounter | None = None) -> LeafSet:
    """Nodes appearing as receiving end of some branch but sending end of none."""
    sending = set()
    for b in net.branches:
        sending.add(b.sending_node)
        if counter:
            counter.leaf_scan_steps += 1
    leaves = []
    for b in net.branches:
        if b.receiving_node not in sending:
            leaves.append(b.receiving_node)
        if counter:
            counter.leaf_scan_steps += 1
    return LeafSet(leaves=tuple(sorted(leaves)))


def is_leaf(leaves: LeafSet, node: int, counter: StepCounter | None = None) -> bool:
    """Binary search over the sorted leaf list; comparisons are counted."""
    lst = leaves.leaves
    low, high = 0, len(lst) - 1
    while low <= high:
        mid = (low + high) // 2
        if counter:
            counter.current_steps += 1
        if lst[mid] > node:
            high = mid - 1
        else:
            if counter:
                counter.current_steps += 1
            if lst[mid] < node:
                low = mid + 1
            else:
                return True
    return False


def compute_load_currents(state: SolveState, net: NetworkModel, counter: StepCounter | None = None) -> None:
    """LI_i = (PL_i - j QL_i) / conj(V_i); exactly zero at zero-load nodes."""
    for node in net.nodes():
        if counter:
            counter.current_steps += 1
        s = net.node_load[node]
        if s.is_zero():
            state.load_current[node] = Phasor.zero()
            continue
        v = state.node_voltage[node]
        if v.magnitude == 0.0:
            raise VoltageCollapseError(f"zero voltage at loaded node {node}")
        state.load_current[node] = s.conjugate() / v.conjugate()


def backward_sweep(
    state: SolveState,
    net: NetworkModel,
    leaves: LeafSet,
    counter: StepCounter | None = None,
    literal_scan: bool = False,
) -> None:
    """Branch currents from the highest branch id down to 1.

    A leaf branch takes its receiving node's load current directly. Otherwise
    the branches fed by the receiving node are pushed on a work stack, popped
    and accumulated, and the node's own load current added last. literal_scan
    finds those child branches by scanning the whole branch list (the counting
    the complexity formulas assume); the default uses the precomputed children
    adjacency. Both orders of accumulation are identical.
    """
    ordered = sorted(net.branches, key=lambda b: b.branch_id, reverse=True)
    computed = set()
    for b in ordered:
        r = b.receiving_node
        if is_leaf(leaves, r, counter):
            state.branch_current[b.branch_id] = state.load_current[r]
            if counter:
                counter.current_steps += 1
        else:
            if literal_scan:
                stack = []
                for other in net.branches:
                    if counter:
                        counter.current_steps += 1
                    if other.sending_node == r:
                        stack.append(other.branch_id)
                        if counter:
                            counter.current_steps += 1
            else:
                stack = list(net.children[r])
                if counter:
                    counter.current_steps += len(stack)
            total = Phasor.zero()
            while stack:
                child = stack.pop()
                if counter:
                    counter.current_steps += 1
                if child not in computed:
                    raise SweepInvariantError(
                        f"branch {child} consumed before computation (branch {b.branch_id})"
                    )
                total = total + state.branch_current[child]
                if counter:
                    counter.current_steps += 1
            total = total + state.load_current[r]
            if counter:
                counter.current_steps += 1
            state.branch_current[b.branch_id] = total
        computed.add(b.branch_id)


def _polar_voltage(vs: Phasor, i_br: Phasor, z: Phasor) -> tuple[float, float]:
    """Receiving-end voltage via the squared-magnitude and angle-ratio forms."""
    scratch = SweepScratch(
        phi=wrap_angle(math.atan2(i_br.im, i_br.re) + math.atan2(z.im, z.re)),
        re_sum=i_br.re,
        im_sum=i_br.im,
    )
    vs_m = vs.magnitude
    drop = i_br.magnitude * z.magnitude
    theta_s = vs.angle
    vr_sq = vs_m * vs_m + drop * drop - 2.0 * vs_m * drop * math.cos(theta_s - scratch.phi)
    vr_mag = math.sqrt(max(vr_sq, 0.0))
    vr_ang = math.atan2(
        vs_m * math.sin(theta_s) - drop * math.sin(scratch.phi),
        vs_m * math.cos(theta_s) - drop * math.cos(scratch.phi),
    )
    return vr_mag, vr_ang


def forward_sweep(
    state: SolveState,
    net: NetworkModel,
    counter: StepCounter | None = None,
    debug_polar: bool = False,
) -> float:
    """V_r = V_s - I_br * Z_br in ascending branch order; root voltage is fixed.

    Returns the worst polar/rectangular disagreement seen (0.0 when debug_polar
    is off); disagreement beyond POLAR_AGREEMENT_TOL raises PolarMismatchError.
    """
    worst = 0.0
    for b in net.branches:
        vs = state.node_voltage[b.sending_node]
        i_br = state.branch_current[b.branch_id]
        vr = vs - i_br * b.z
        if not (math.isfinite(vr.re) and math.isfinite(vr.im)):
            raise NumericError(f"non-finite voltage on branch {b.branch_id}")
        if debug_polar:
            mag, ang = _polar_voltage(vs, i_br, b.z)
            dev = abs(mag - vr.magnitude)
            if mag > 0.0 and vr.magnitude > 0.0:
                dev = max(dev, abs(wrap_angle(ang - vr.angle)))
            worst = max(worst, dev)
            if dev > POLAR_AGREEMENT_TOL:
                raise PolarMismatchError(
                    f"branch {b.branch_id}: polar form deviates by {dev:.3e}"
                )
        state.node_voltage[b.receiving_node] = vr
        if counter:
            counter.voltage_steps += 1
    return worst


def check_convergence(
    state: SolveState,
    tolerance: float,
    counter: StepCounter | None = None,
) -> tuple[bool, float]:
    """Converged iff every node's voltage-magnitude change is within tolerance.

    Overwrites the stored previous magnitudes with the current ones.
    """
    within = 0
    max_delta = 0.0
    nodes = list(state.node_voltage)
    for node in nodes:
        if counter:
            counter.convergence_steps += 1
        mag = state.node_voltage[node].magnitude
        delta = abs(mag - state.prev_voltage_mag[node])
        if delta <= tolerance:
            within += 1
        max_delta = max(max_delta, delta)
        state.prev_voltage_mag[node] = mag
    return within == len(nodes), max_delta


def compute_losses(
    state: SolveState, net: NetworkModel
) -> tuple[list[tuple[int, float, float]], float, float]:
    """Per-branch and total losses in kW/kVAr: |I|^2 R and |I|^2 X scaled off p.u."""
    to_kw = net.base.mva_base * 1000.0
    rows = []
    total_p = 0.0
    total_q = 0.0
    for b in net.branches:
        i_sq = abs(state.branch_current[b.branch_id]) ** 2
        lp = i_sq * b.z.re * to_kw
        lq = i_sq * b.z.im * to_kw
        rows.append((b.branch_id, lp, lq))
        total_p += lp
        total_q += lq
    return rows, total_p, total_q


def solve(net: NetworkModel, options: SolveOptions | None = None) -> SolveReport:
    """Run the sweep iteration from a flat start until the voltage profile settles.

    Leaves are identified once before the loop. Each pass recomputes load
    currents, sweeps branch currents backward, voltages forward, and checks the
    per-node magnitude deltas against the tolerance.
    """
    if options is None:
        options = SolveOptions()
    if not net.sequentially_ordered:
        raise OrderingError("network branches are not sequentially ordered")

    state = SolveState.flat_start(net)
    counter = StepCounter()
    leaves = find_leaf_nodes(net, counter)
    counter.mark_pre_loop()

    converged = False
    max_delta = math.inf
    worst_polar = 0.0
    deltas = []
    iterations = 0
    for iterations in range(1, options.max_iterations + 1):
        compute_load_currents(state, net, counter)
        backward_sweep(state, net, leaves, counter, literal_scan=options.literal_scan)
        dev = forward_sweep(state, net, counter, debug_polar=options.debug_polar)
        worst_polar = max(worst_polar, dev)
        converged, max_delta = check_convergence(state, options.tolerance, counter)
        counter.end_iteration()
        deltas.append(max_delta)
        if converged:
            break
    if not converged:
        raise NonConvergenceError(iterations, max_delta)

    loss_rows, total_p, total_q = compute_losses(state, net)
    return SolveReport(
        converged=True,
        iterations=iterations,
        node_voltages=tuple(
            (n, state.node_voltage[n].magnitude, state.node_voltage[n].angle_degrees)
            for n in net.nodes()
        ),
        branch_currents=tuple(
            (b.branch_id, abs(state.branch_current[b.branch_id])) for b in net.branches
        ),
        branch_losses=tuple(loss_rows),
        total_loss_p=total_p,
        total_loss_q=total_q,
        step_count_proposed=counter.total,
        step_count_baseline=0,
        leaf_count=len(leaves),
        pre_loop_steps=counter.pre_loop_steps,
        per_iteration_steps=tuple(counter.iteration_totals),
        delta_history=tuple(deltas),
        max_polar_deviation=worst_polar if options.debug_polar else None,
        final_voltage=dict(state.node_voltage),
        final_load_current=dict(state.load_current),
        final_branch_current=dict(state.branch_current),
    )


def step_model(n: int, m: int, r: int) -> tuple[int, int]:
    """Closed-form predicted step counts (proposed, baseline) for an n-node,
    m-leaf network converging in r iterations."""
    if n < 2 or not (1 <= m < n) or r < 1:
        raise ValueError(f"invalid step-model arguments n={n} m={m} r={r}")
    prefix = 3 * n + n * n
    proposed = prefix + r * (n + n * m + n * (n - m) + n)
    baseline = prefix + r * (n + n * n + n * n + n)
    return proposed, baseline
