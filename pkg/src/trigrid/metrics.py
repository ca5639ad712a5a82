"""Run instrumentation and the analytical cost model.

Wall times are measured per rank with monotonic clocks; every quantity a
CI assertion should touch (probe counts, task counts, byte volumes) is a
deterministic counter instead.
"""

from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import UndefinedMetricError
from .transport import grid_side_for


# ---------------------------------------------------------------------------
# scalar metric arithmetic


def load_imbalance(per_unit: "list[float] | np.ndarray") -> float:
    """max / mean of a per-rank quantity; 1.0 means perfect balance."""
    values = np.asarray(per_unit, dtype=np.float64)
    if values.size == 0:
        raise UndefinedMetricError("load imbalance of an empty vector")
    if np.any(values < 0):
        raise UndefinedMetricError("load imbalance needs non-negative values")
    mean = values.mean()
    if mean == 0:
        raise UndefinedMetricError("load imbalance undefined for an all-zero vector")
    return float(values.max() / mean)


def task_growth(counts: "list[int]") -> list[int]:
    """Successive percentage increases of a count sequence, rounded to the
    nearest percent."""
    if len(counts) < 2:
        raise UndefinedMetricError("task growth needs at least two counts")
    out = []
    for prev, cur in zip(counts, counts[1:]):
        if prev == 0:
            raise UndefinedMetricError("task growth undefined for a zero predecessor")
        out.append(round(100.0 * (cur - prev) / prev))
    return out


@dataclass(frozen=True)
class CostModelInputs:
    n: int
    m: int
    p: int
    d_avg: float
    d_max: int


def cost_model_pre(inputs: CostModelInputs) -> float:
    """Abstract preprocessing cost:
    p + m/p + n/p + log2(p) + d_max + d_max*log2(p)."""
    p = inputs.p
    lg = math.log2(p)
    return p + inputs.m / p + inputs.n / p + lg + inputs.d_max + inputs.d_max * lg


def cost_model_tc(inputs: CostModelInputs) -> float:
    """Abstract triangle-counting cost across the sqrt(p) shifts:
    d_avg * (n / sqrt(p)) * (d_avg / sqrt(p) + 1)."""
    side = grid_side_for(inputs.p)
    return inputs.d_avg * (inputs.n / side) * (inputs.d_avg / side + 1)


@dataclass
class PhaseTimings:
    """Per-rank wall/communication seconds and byte volumes, split by
    phase, plus per-shift per-rank compute times."""

    wall: dict[str, list[float]]
    comm: dict[str, list[float]]
    bytes_sent: dict[str, list[int]]
    shift_compute: list[list[float]] = field(default_factory=list)  # [z][rank]


def comm_fraction(t: PhaseTimings) -> dict[str, float]:
    """Fraction of each phase's total time spent communicating, in [0, 1]."""
    out = {}
    for phase, walls in t.wall.items():
        total = sum(walls)
        if total <= 0:
            raise UndefinedMetricError(f"phase {phase!r} has zero total time")
        out[phase] = sum(t.comm.get(phase, [])) / total
    return out


# ---------------------------------------------------------------------------
# per-rank recording

PHASE_PRE = "preprocess"
PHASE_TC = "count"


@dataclass
class ShiftRecord:
    z: int
    operand_class: int
    u_coord: tuple[int, int]
    l_coord: tuple[int, int]
    count: int
    probes: int
    tasks: int
    majors_scanned: int
    compute_seconds: float
    wall_seconds: float
    bytes_sent: int


@dataclass
class RankMetrics:
    rank: int
    u_nnz: int = 0
    l_nnz: int = 0
    task_nnz: int = 0
    local_count: int = 0
    shifts: list[ShiftRecord] = field(default_factory=list)
    phase_wall: dict[str, float] = field(default_factory=dict)
    phase_comm: dict[str, float] = field(default_factory=dict)
    phase_bytes: dict[str, int] = field(default_factory=dict)
    phase_msgs: dict[str, int] = field(default_factory=dict)

    @property
    def probes(self) -> int:
        return sum(s.probes for s in self.shifts)

    @property
    def tasks(self) -> int:
        return sum(s.tasks for s in self.shifts)


class RankRecorder:
    """Collects one rank's metrics while its program runs."""

    def __init__(self, handle):
        self._handle = handle
        self.metrics = RankMetrics(rank=handle.my_rank)

    @contextmanager
    def phase(self, name: str):
        self._handle.phase = name
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.metrics.phase_wall[name] = (
                self.metrics.phase_wall.get(name, 0.0) + time.perf_counter() - t0
            )

    def set_blocks(self, u_nnz: int, l_nnz: int, task_nnz: int) -> None:
        self.metrics.u_nnz = u_nnz
        self.metrics.l_nnz = l_nnz
        self.metrics.task_nnz = task_nnz

    def bytes_sent_so_far(self) -> int:
        return sum(self._handle.bytes_sent.values())

    def add_shift(self, record: ShiftRecord) -> None:
        self.metrics.shifts.append(record)

    def finish(self, local_count: int) -> RankMetrics:
        self.metrics.local_count = local_count
        self.metrics.phase_comm = dict(self._handle.comm_seconds)
        self.metrics.phase_bytes = dict(self._handle.bytes_sent)
        self.metrics.phase_msgs = dict(self._handle.messages_sent)
        return self.metrics


# ---------------------------------------------------------------------------
# whole-run report


@dataclass
class RunReport:
    p: int
    grid_side: int
    n: int
    m: int
    d_avg: float
    d_max: int
    count: int
    options: dict
    total_probes: int
    total_tasks: int
    total_majors_scanned: int
    phase_wall_max: dict[str, float]
    phase_comm_total: dict[str, float]
    phase_bytes_total: dict[str, int]
    phase_msgs_total: dict[str, int]
    comm_fraction: dict[str, float]
    task_imbalance: float | None
    shift_compute_imbalance: list[float]
    shift_wall_imbalance: list[float]
    cost_pre: float
    cost_tc: float
    per_rank: list[RankMetrics] = field(default_factory=list)

    def counters(self) -> dict:
        """The deterministic subset: identical across identical runs."""
        return {
            "count": self.count,
            "probes": self.total_probes,
            "tasks": self.total_tasks,
            "majors_scanned": self.total_majors_scanned,
            "bytes": dict(self.phase_bytes_total),
            "messages": dict(self.phase_msgs_total),
            "per_rank_tasks": [r.task_nnz for r in self.per_rank],
            "per_rank_probes": [r.probes for r in self.per_rank],
        }

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, default=str)

    def to_text(self) -> str:
        lines = [
            f"triangles          {self.count}",
            f"ranks              {self.p} ({self.grid_side} x {self.grid_side} grid)",
            f"graph              n={self.n} m={self.m} d_avg={self.d_avg:.3f} d_max={self.d_max}",
            f"probes             {self.total_probes}",
            f"tasks              {self.total_tasks}",
            f"majors scanned     {self.total_majors_scanned}",
        ]
        for phase in (PHASE_PRE, PHASE_TC):
            lines.append(
                f"{phase:<18} wall={self.phase_wall_max.get(phase, 0.0):.4f}s "
                f"comm={self.phase_comm_total.get(phase, 0.0):.4f}s "
                f"bytes={self.phase_bytes_total.get(phase, 0)} "
                f"comm_fraction={self.comm_fraction.get(phase, 0.0):.3f}"
            )
        if self.task_imbalance is not None:
            lines.append(f"task imbalance     {self.task_imbalance:.4f}")
        if self.shift_compute_imbalance:
            worst = max(self.shift_compute_imbalance)
            lines.append(f"shift imbalance    compute-only max {worst:.4f}")
        lines.append(f"cost model         pre={self.cost_pre:.1f} tc={self.cost_tc:.1f}")
        return "\n".join(lines)


def build_report(
    p: int,
    stats,
    count: int,
    options,
    rank_metrics: list[RankMetrics],
) -> RunReport:
    side = grid_side_for(p)
    phases = (PHASE_PRE, PHASE_TC)
    wall_max = {
        ph: max((r.phase_wall.get(ph, 0.0) for r in rank_metrics), default=0.0) for ph in phases
    }
    comm_total = {ph: sum(r.phase_comm.get(ph, 0.0) for r in rank_metrics) for ph in phases}
    bytes_total = {ph: sum(r.phase_bytes.get(ph, 0) for r in rank_metrics) for ph in phases}
    msgs_total = {ph: sum(r.phase_msgs.get(ph, 0) for r in rank_metrics) for ph in phases}
    fractions = {}
    for ph in phases:
        wall_sum = sum(r.phase_wall.get(ph, 0.0) for r in rank_metrics)
        fractions[ph] = comm_total[ph] / wall_sum if wall_sum > 0 else 0.0

    task_counts = [r.task_nnz for r in rank_metrics]
    try:
        task_imb = load_imbalance(task_counts)
    except UndefinedMetricError:
        task_imb = None

    compute_imb = []
    wall_imb = []
    for z in range(side):
        per_rank_c = [r.shifts[z].compute_seconds for r in rank_metrics if len(r.shifts) > z]
        per_rank_w = [r.shifts[z].wall_seconds for r in rank_metrics if len(r.shifts) > z]
        try:
            compute_imb.append(load_imbalance(per_rank_c))
        except UndefinedMetricError:
            compute_imb.append(1.0)
        try:
            wall_imb.append(load_imbalance(per_rank_w))
        except UndefinedMetricError:
            wall_imb.append(1.0)

    inputs = CostModelInputs(n=stats.n, m=stats.m, p=p, d_avg=stats.d_avg, d_max=stats.d_max)
    return RunReport(
        p=p,
        grid_side=side,
        n=stats.n,
        m=stats.m,
        d_avg=stats.d_avg,
        d_max=stats.d_max,
        count=count,
        options=options.as_dict() if hasattr(options, "as_dict") else dict(options),
        total_probes=sum(r.probes for r in rank_metrics),
        total_tasks=sum(r.tasks for r in rank_metrics),
        total_majors_scanned=sum(s.majors_scanned for r in rank_metrics for s in r.shifts),
        phase_wall_max=wall_max,
        phase_comm_total=comm_total,
        phase_bytes_total=bytes_total,
        phase_msgs_total=msgs_total,
        comm_fraction=fractions,
        task_imbalance=task_imb,
        shift_compute_imbalance=compute_imb,
        shift_wall_imbalance=wall_imb,
        cost_pre=cost_model_pre(inputs),
        cost_tc=cost_model_tc(inputs),
        per_rank=rank_metrics,
    )
