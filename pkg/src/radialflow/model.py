"""Core domain types: phasors, branch records, per-unit bases, networks, reports."""
from __future__ import annotations

import math
from dataclasses import dataclass, field


class LoadFlowError(Exception):
    """Base class for every error raised by this package."""


class DataError(LoadFlowError):
    """Invalid field values or inconsistent records in input data."""


class SingularityError(LoadFlowError):
    """Division by a zero-magnitude phasor."""


TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Normalize an angle in radians to (-pi, pi]."""
    a = math.fmod(angle, TWO_PI)
    if a > math.pi:
        a -= TWO_PI
    elif a <= -math.pi:
        a += TWO_PI
    return a


@dataclass(frozen=True)
class Phasor:
    """A complex electrical quantity stored in rectangular form.

    The rectangular representation is authoritative; magnitude and angle are
    derived views. Addition of phasors is therefore exact complex addition.
    """

    re: float
    im: float

    @classmethod
    def zero(cls) -> "Phasor":
        return cls(0.0, 0.0)

    @classmethod
    def from_polar(cls, magnitude: float, angle: float) -> "Phasor":
        return cls(magnitude * math.cos(angle), magnitude * math.sin(angle))

    @classmethod
    def from_complex(cls, z: complex) -> "Phasor":
        return cls(z.real, z.imag)

    @property
    def magnitude(self) -> float:
        return math.hypot(self.re, self.im)

    @property
    def angle(self) -> float:
        """Angle in radians, normalized to (-pi, pi]."""
        a = math.atan2(self.im, self.re)
        if a == -math.pi:
            a = math.pi
        return a

    @property
    def angle_degrees(self) -> float:
        return math.degrees(self.angle)

    def as_complex(self) -> complex:
        return complex(self.re, self.im)

    def conjugate(self) -> "Phasor":
        return Phasor(self.re, -self.im)

    def is_zero(self) -> bool:
        return self.re == 0.0 and self.im == 0.0

    def __add__(self, other: "Phasor") -> "Phasor":
        return Phasor(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "Phasor") -> "Phasor":
        return Phasor(self.re - other.re, self.im - other.im)

    def __neg__(self) -> "Phasor":
        return Phasor(-self.re, -self.im)

    def __mul__(self, other: "Phasor") -> "Phasor":
        return Phasor.from_complex(self.as_complex() * other.as_complex())

    def __truediv__(self, other: "Phasor") -> "Phasor":
        if other.re == 0.0 and other.im == 0.0:
            raise SingularityError("division by zero-magnitude phasor")
        return Phasor.from_complex(self.as_complex() / other.as_complex())

    def __abs__(self) -> float:
        return self.magnitude


def phasor_mul(a: Phasor, b: Phasor) -> Phasor:
    return a * b


def phasor_div(a: Phasor, b: Phasor) -> Phasor:
    return a / b


def phasor_conj(a: Phasor) -> Phasor:
    return a.conjugate()


@dataclass(frozen=True)
class PerUnitBase:
    """Voltage/power base pair; impedance base is derived from it."""

    kv_base: float
    mva_base: float

    def __post_init__(self):
        if not (self.kv_base > 0.0) or not math.isfinite(self.kv_base):
            raise DataError(f"kv_base must be positive and finite, got {self.kv_base}")
        if not (self.mva_base > 0.0) or not math.isfinite(self.mva_base):
            raise DataError(f"mva_base must be positive and finite, got {self.mva_base}")

    @property
    def z_base(self) -> float:
        """Impedance base in ohms: kv_base**2 / mva_base."""
        return self.kv_base * self.kv_base / self.mva_base


# Bases calibrated once against the bundled 69-bus golden voltage table; only
# kv_base affects the per-unit voltage profile.
DEFAULT_BASE = PerUnitBase(kv_base=12.66, mva_base=10.0)


@dataclass(frozen=True)
class BranchRecord:
    """One row of a branch table, in physical units (ohms, kW, kVAr, kVA)."""

    branch_id: int
    sending_node: int
    receiving_node: int
    resistance: float
    reactance: float
    load_p: float
    load_q: float
    capacity: float | None = None
    is_tie: bool = False

    def __post_init__(self):
        b = self.branch_id
        if b <= 0:
            raise DataError(f"branch id must be positive, got {b}")
        for name in ("resistance", "reactance", "load_p", "load_q"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DataError(f"branch {b}: non-finite {name} ({v})")
        if self.resistance < 0.0 or self.reactance < 0.0:
            raise DataError(f"branch {b}: negative impedance component")
        if self.capacity is not None and not (self.capacity > 0.0):
            raise DataError(f"branch {b}: capacity must be positive when present")
        if self.sending_node == self.receiving_node:
            raise DataError(f"branch {b}: sending and receiving node are both {self.sending_node}")
        if self.is_tie and (self.load_p != 0.0 or self.load_q != 0.0):
            raise DataError(f"branch {b}: tie-line must carry zero load")


@dataclass(frozen=True)
class PerUnitBranch:
    """A branch with impedance and receiving-end load converted to per-unit."""

    branch_id: int
    sending_node: int
    receiving_node: int
    z: Phasor
    s_load: Phasor
    capacity: float | None = None
    is_tie: bool = False


def to_per_unit(record: BranchRecord, base: PerUnitBase) -> PerUnitBranch:
    """Convert a physical-unit branch record to per-unit on the given base.

    Impedance divides by z_base; the kW/kVAr load divides by the MVA base
    after conversion to MW/MVAr. Tie branches convert impedance only.
    """
    zb = base.z_base
    z = Phasor(record.resistance / zb, record.reactance / zb)
    if record.is_tie:
        s = Phasor.zero()
    else:
        mva_kw = base.mva_base * 1000.0
        s = Phasor(record.load_p / mva_kw, record.load_q / mva_kw)
    return PerUnitBranch(
        branch_id=record.branch_id,
        sending_node=record.sending_node,
        receiving_node=record.receiving_node,
        z=z,
        s_load=s,
        capacity=record.capacity,
        is_tie=record.is_tie,
    )


def to_physical(branch: PerUnitBranch, base: PerUnitBase) -> BranchRecord:
    """Inverse of to_per_unit: recover a physical-unit record."""
    zb = base.z_base
    mva_kw = base.mva_base * 1000.0
    return BranchRecord(
        branch_id=branch.branch_id,
        sending_node=branch.sending_node,
        receiving_node=branch.receiving_node,
        resistance=branch.z.re * zb,
        reactance=branch.z.im * zb,
        load_p=branch.s_load.re * mva_kw,
        load_q=branch.s_load.im * mva_kw,
        capacity=branch.capacity,
        is_tie=branch.is_tie,
    )


@dataclass(frozen=True)
class NetworkModel:
    """A validated radial network in per-unit.

    branches hold the closed branches only, sorted by branch id; tie lines are
    parsed but never energized. children maps each node to the ids of branches
    it feeds. Instances are immutable after construction.
    """

    node_count: int
    branches: tuple[PerUnitBranch, ...]
    root: int
    tie_lines: tuple[BranchRecord, ...]
    children: dict[int, tuple[int, ...]]
    base: PerUnitBase
    sequentially_ordered: bool = True
    # derived maps, filled in __post_init__
    branch_by_id: dict[int, PerUnitBranch] = field(default_factory=dict, repr=False)
    parent_branch: dict[int, int] = field(default_factory=dict, repr=False)
    node_load: dict[int, Phasor] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        by_id = {b.branch_id: b for b in self.branches}
        parent = {b.receiving_node: b.branch_id for b in self.branches}
        load = {n: Phasor.zero() for n in self.nodes()}
        for b in self.branches:
            load[b.receiving_node] = b.s_load
        object.__setattr__(self, "branch_by_id", by_id)
        object.__setattr__(self, "parent_branch", parent)
        object.__setattr__(self, "node_load", load)

    def nodes(self) -> tuple[int, ...]:
        seen = {self.root}
        for b in self.branches:
            seen.add(b.sending_node)
            seen.add(b.receiving_node)
        return tuple(sorted(seen))

    @property
    def branch_count(self) -> int:
        return len(self.branches)


@dataclass
class SolveState:
    """Mutable per-iteration arrays for one solve."""

    node_voltage: dict[int, Phasor]
    load_current: dict[int, Phasor]
    branch_current: dict[int, Phasor]
    prev_voltage_mag: dict[int, float]

    @classmethod
    def flat_start(cls, net: NetworkModel) -> "SolveState":
        """All node voltages 1.0 at angle 0, all branch currents 0."""
        one = Phasor(1.0, 0.0)
        zero = Phasor.zero()
        nodes = net.nodes()
        return cls(
            node_voltage={n: one for n in nodes},
            load_current={n: zero for n in nodes},
            branch_current={b.branch_id: zero for b in net.branches},
            prev_voltage_mag={n: 1.0 for n in nodes},
        )


@dataclass
class SweepScratch:
    """Working values for one branch of the polar-form voltage evaluation."""

    phi: float = 0.0
    re_sum: float = 0.0
    im_sum: float = 0.0


@dataclass(frozen=True)
class SolveReport:
    """Converged results plus instrumentation for one solve.

    node_voltages rows are (node, magnitude p.u., angle degrees) sorted by
    node; branch_losses rows are (branch_id, kW, kVAr). step_count_baseline is
    zero unless a baseline run was attached.
    """

    converged: bool
    iterations: int
    node_voltages: tuple[tuple[int, float, float], ...]
    branch_currents: tuple[tuple[int, float], ...]
    branch_losses: tuple[tuple[int, float, float], ...]
    total_loss_p: float
    total_loss_q: float
    step_count_proposed: int
    step_count_baseline: int
    leaf_count: int
    pre_loop_steps: int
    per_iteration_steps: tuple[int, ...]
    delta_history: tuple[float, ...]
    max_polar_deviation: float | None
    final_voltage: dict[int, Phasor]
    final_load_current: dict[int, Phasor]
    final_branch_current: dict[int, Phasor]

    def voltage_magnitude(self, node: int) -> float:
        return self.final_voltage[node].magnitude
