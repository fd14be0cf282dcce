"""Capacity-constrained steelmaking scheduling.

Jobs follow fixed routes through ordered stages on preassigned machines in
fixed machine orders; only timing is decided.  Earliest starts and latest
finishes come from critical-path passes and bound a time-indexed MILP with
one binary per (task, start slot).  The oxygen-consuming stages may run at
most ``WL`` tasks at once.  Schedules convert into per-period demand
curves by the share of blowing minutes falling in every period.
"""

from __future__ import annotations

import graphlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .instance import DemandCurve, Horizon
from .solver import INF, LpModel, solve_milp

Task = tuple[str, str]  # (job id, stage)


class ScheduleError(ValueError):
    """Invalid graph, cyclic precedences or a horizon too short for the windows."""


class GraphFormatError(ScheduleError):
    """Unreadable or incomplete task-graph file."""


class ScheduleInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class Operation:
    stage: str
    machine: str
    pt: int  # time units


@dataclass(frozen=True)
class Job:
    id: str
    ops: tuple[Operation, ...]

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))


@dataclass(frozen=True)
class Batch:
    id: str
    caster: str
    jobs: tuple[str, ...]
    setup: int

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))


@dataclass
class TaskGraph:
    stages: list[str]
    machines: dict[str, list[str]]
    jobs: list[Job]
    transfer: dict[tuple[str, str], int] = field(default_factory=dict)
    batches: list[Batch] = field(default_factory=list)
    oxygen_stages: set[str] = field(default_factory=set)
    users: dict[str, list[str]] = field(default_factory=dict)  # oxygen user -> machines
    sequences: Optional[dict[str, list[str]]] = None  # machine -> job order; default list order
    time_unit: int = 1  # minutes per time unit

    def __post_init__(self):
        if self.sequences is None:
            seq: dict[str, list[str]] = {}
            for job in self.jobs:
                for op in job.ops:
                    seq.setdefault(op.machine, []).append(job.id)
            self.sequences = seq
        self.validate()

    # -- lookups -----------------------------------------------------------
    @property
    def tasks(self) -> list[Task]:
        return [(j.id, op.stage) for j in self.jobs for op in j.ops]

    def op(self, task: Task) -> Operation:
        return self._ops[task]

    def pt(self, task: Task) -> int:
        return self._ops[task].pt

    def tt(self, g: str, gg: str) -> int:
        return int(self.transfer.get((g, gg), 0))

    @property
    def casting_stage(self) -> str:
        return self.stages[-1]

    def validate(self) -> None:
        self._ops: dict[Task, Operation] = {}
        rank = {s: k for k, s in enumerate(self.stages)}
        for job in self.jobs:
            if not job.ops:
                raise ScheduleError(f"job {job.id} has no operations")
            ranks = [rank.get(op.stage, -1) for op in job.ops]
            if min(ranks) < 0:
                raise ScheduleError(f"job {job.id} visits an unknown stage")
            if any(b <= a for a, b in zip(ranks, ranks[1:])):
                raise ScheduleError(f"job {job.id} must visit stages in increasing order")
            for op in job.ops:
                if op.machine not in self.machines.get(op.stage, []):
                    raise ScheduleError(f"machine {op.machine} is not in stage {op.stage}")
                if op.pt < 1:
                    raise ScheduleError(f"job {job.id} stage {op.stage}: processing time must be >= 1")
                self._ops[(job.id, op.stage)] = op
        seen: set[Task] = set()
        for mach, order in self.sequences.items():
            for jid in order:
                hits = [t for t in self._ops if t[0] == jid and self._ops[t].machine == mach]
                if len(hits) != 1:
                    raise ScheduleError(f"machine {mach} sequence names job {jid} without a task there")
                if hits[0] in seen:
                    raise ScheduleError(f"task {hits[0]} appears in two machine sequences")
                seen.add(hits[0])
        cast = self.casting_stage
        in_batch = [jid for b in self.batches for jid in b.jobs]
        if len(in_batch) != len(set(in_batch)):
            raise ScheduleError("batches must not share jobs")
        for b in self.batches:
            for jid in b.jobs:
                t = (jid, cast)
                if t not in self._ops or self._ops[t].machine != b.caster:
                    raise ScheduleError(f"batch {b.id}: job {jid} is not cast on {b.caster}")

    # -- precedence edges: (u, v, w, kind) meaning S_v - S_u >= w (== w for "batch") ----
    def edges(self) -> list[tuple[Task, Task, int, str]]:
        out = []
        for job in self.jobs:
            for a, b in zip(job.ops, job.ops[1:]):
                out.append(((job.id, a.stage), (job.id, b.stage), a.pt + self.tt(a.stage, b.stage) + 1, "route"))
        batch_pairs = set()
        cast = self.casting_stage
        for b in self.batches:
            for j, jj in zip(b.jobs, b.jobs[1:]):
                batch_pairs.add(((j, cast), (jj, cast)))
                out.append(((j, cast), (jj, cast), self.pt((j, cast)) + 1, "batch"))
        for mach, order in self.sequences.items():
            tasks = [next(t for t in self._ops if t[0] == jid and self._ops[t].machine == mach) for jid in order]
            for u, v in zip(tasks, tasks[1:]):
                if (u, v) not in batch_pairs:
                    out.append((u, v, self.pt(u) + 1, "machine"))
        # setups between consecutive batches on the same caster, in input order
        by_caster: dict[str, list[Batch]] = {}
        for b in self.batches:
            by_caster.setdefault(b.caster, []).append(b)
        for group in by_caster.values():
            for h, hh in zip(group, group[1:]):
                u, v = (h.jobs[-1], cast), (hh.jobs[0], cast)
                out.append((u, v, self.pt(u) + h.setup, "setup"))
        return out


@dataclass
class TimeWindows:
    es: dict[Task, int]
    lf: dict[Task, int]
    horizon: int

    def latest_start(self, graph: TaskGraph, task: Task) -> int:
        return self.lf[task] - graph.pt(task)


def _topo(graph: TaskGraph, edges) -> list[Task]:
    ts = graphlib.TopologicalSorter({t: set() for t in graph.tasks})
    for u, v, _, _ in edges:
        ts.add(v, u)
    try:
        return list(ts.static_order())
    except graphlib.CycleError as exc:
        raise ScheduleError(f"precedence cycle: {exc.args[1]}") from None


def forward_makespan(graph: TaskGraph) -> int:
    edges = graph.edges()
    es = _forward(graph, edges, _topo(graph, edges))
    return max(es[t] + graph.pt(t) for t in graph.tasks)


def _forward(graph, edges, order) -> dict[Task, int]:
    preds: dict[Task, list] = {t: [] for t in graph.tasks}
    for u, v, w, _ in edges:
        preds[v].append((u, w))
    es: dict[Task, int] = {}
    for t in order:
        es[t] = max([0] + [es[u] + w for u, w in preds[t]])
    return es


def default_horizon(graph: TaskGraph) -> int:
    return int(math.ceil(1.5 * forward_makespan(graph)))


def forward_backward(graph: TaskGraph, horizon_T: Optional[int] = None) -> TimeWindows:
    """Earliest starts and latest finishes from the precedence DAG.

    Every feasible schedule finishing by ``horizon_T`` starts each task
    within ``[ES, LF - PT]``.
    """
    edges = graph.edges()
    order = _topo(graph, edges)
    es = _forward(graph, edges, order)
    T = default_horizon(graph) if horizon_T is None else int(horizon_T)
    succ: dict[Task, list] = {t: [] for t in graph.tasks}
    for u, v, w, _ in edges:
        succ[u].append((v, w))
    ls: dict[Task, int] = {}
    for t in reversed(order):
        ls[t] = min([T - graph.pt(t)] + [ls[v] - w for v, w in succ[t]])
    bad = [t for t in order if ls[t] < es[t]]
    if bad:
        raise ScheduleError(f"horizon {T} is shorter than the critical path (task {bad[0]} has no slot)")
    return TimeWindows(es, {t: ls[t] + graph.pt(t) for t in order}, T)


@dataclass
class ScheduleModel:
    model: LpModel
    x: dict[Task, dict[int, int]]  # task -> start slot -> column
    cmax: int
    capacity_rows: list[int]
    graph: TaskGraph
    windows: TimeWindows

    def start_expr(self, task: Task) -> tuple[list[int], list[float]]:
        slots = self.x[task]
        return list(slots.values()), [float(s) for s in slots]


def _last_first(graph: TaskGraph, job: Job) -> tuple[Task, Task]:
    return (job.id, job.ops[0].stage), (job.id, job.ops[-1].stage)


def build_milp(graph: TaskGraph, windows: TimeWindows, capacity: int, horizon_T: Optional[int] = None
               ) -> ScheduleModel:
    """Time-indexed MILP minimising makespan plus total waiting."""
    m = LpModel("min", name="schedule")
    x: dict[Task, dict[int, int]] = {}
    for t in graph.tasks:
        lo, hi = windows.es[t], windows.latest_start(graph, t)
        if hi < lo:
            raise ScheduleError(f"task {t} has an empty start window")
        x[t] = {s: m.add_var(0, 1, 0.0, integer=True, name=f"x[{t[0]},{t[1]},{s}]") for s in range(lo, hi + 1)}
        m.add_row(list(x[t].values()), np.ones(len(x[t])), "==", 1, name=f"once[{t[0]},{t[1]}]")

    def start(t):
        return list(x[t].values()), [float(s) for s in x[t]]

    for u, v, w, kind in graph.edges():
        iv, cv = start(v)
        iu, cu = start(u)
        m.add_row(iv + iu, cv + [-c for c in cu], "==" if kind == "batch" else ">=", w,
                  name=f"{kind}[{u[0]},{u[1]}->{v[0]},{v[1]}]")

    # objective: C_max + sum_j (C_last - C_first - sum_{later stages} PT)
    cmax = m.add_var(0, INF, 1.0, name="cmax")
    offset = 0.0
    for job in graph.jobs:
        first, last = _last_first(graph, job)
        il, cl = start(last)
        m.add_row([cmax] + il, [1.0] + [-c for c in cl], ">=", graph.pt(last), name=f"cmax[{job.id}]")
        if first != last:
            obj = m.obj
            for j, c in zip(il, cl):
                m.set_obj(j, obj[j] + c)
            i1, c1 = start(first)
            for j, c in zip(i1, c1):
                m.set_obj(j, obj[j] - c)
            offset += graph.pt(last) - graph.pt(first) - sum(op.pt for op in job.ops[1:])
    m.obj_offset = offset

    # capacity on oxygen stages: tasks in process during unit t occupy [S, S + PT)
    otasks = [t for t in graph.tasks if t[1] in graph.oxygen_stages]
    rows = []
    if otasks:
        lo = min(windows.es[t] for t in otasks)
        hi = max(windows.lf[t] for t in otasks)
        for tu in range(lo, hi):
            idx, live = [], 0
            for t in otasks:
                cols = [col for s, col in x[t].items() if s <= tu < s + graph.pt(t)]
                idx += cols
                live += bool(cols)
            if live > capacity:  # at most one start per task, so fewer live tasks cannot bind
                rows.append(m.add_row(idx, np.ones(len(idx)), "<=", capacity, name=f"cap[{tu}]"))
    return ScheduleModel(m, x, cmax, rows, graph, windows)


@dataclass
class ScheduleSolution:
    start: dict[Task, int]
    completion: dict[Task, int]
    makespan: int
    waiting: int
    capacity: int
    objective: float
    graph: TaskGraph = field(repr=False)

    def in_process(self, stages: Optional[set[str]] = None) -> np.ndarray:
        """Count of running tasks per time unit (restricted to ``stages``)."""
        stages = self.graph.oxygen_stages if stages is None else stages
        out = np.zeros(self.makespan + 1, dtype=int)
        for t, s in self.start.items():
            if t[1] in stages:
                out[s:self.completion[t]] += 1
        return out


def solve_scenario(graph: TaskGraph, capacity: int, horizon_T: Optional[int] = None,
                   time_limit: Optional[float] = None) -> ScheduleSolution:
    """Optimal timing for one capacity limit; raises :class:`ScheduleInfeasible`."""
    win = forward_backward(graph, horizon_T)
    sm = build_milp(graph, win, capacity)
    sol = solve_milp(sm.model, time_limit=time_limit)
    if not sol.is_optimal:
        raise ScheduleInfeasible(f"no schedule with capacity {capacity} within horizon {win.horizon}")
    start = {t: next(s for s, col in slots.items() if sol.x[col] > 0.5) for t, slots in sm.x.items()}
    comp = {t: s + graph.pt(t) for t, s in start.items()}
    cmax = max(comp[_last_first(graph, j)[1]] for j in graph.jobs)
    wait = sum(comp[_last_first(graph, j)[1]] - comp[_last_first(graph, j)[0]]
               - sum(op.pt for op in j.ops[1:]) for j in graph.jobs)
    return ScheduleSolution(start, comp, cmax, wait, capacity, float(sol.objective), graph)


def demand_curve(solution: ScheduleSolution, user: str, nominal_total: float, deviation_total: float,
                 horizon: Horizon) -> DemandCurve:
    """Split a user's horizon totals over periods by its share of oxygen-stage minutes."""
    g = solution.graph
    machines = set(g.users[user])
    unit = g.time_unit
    tp = np.zeros(horizon.period_count)
    pm = horizon.period_minutes
    for t, s in solution.start.items():
        if t[1] not in g.oxygen_stages or g.op(t).machine not in machines:
            continue
        a, b = s * unit, solution.completion[t] * unit
        if b > horizon.minutes:
            raise ScheduleError(f"task {t} ends at minute {b}, beyond the {horizon.minutes}-minute horizon")
        for p in range(a // pm, min((b - 1) // pm, horizon.period_count - 1) + 1):
            tp[p] += max(0, min(b, (p + 1) * pm) - max(a, p * pm))
    total = tp.sum()
    if total <= 0:
        raise ScheduleError(f"user {user} has no oxygen-stage processing")
    share = tp / total
    return DemandCurve(tuple(nominal_total * share), tuple(deviation_total * share))


def export_gantt(solution: ScheduleSolution, out: io.TextIOBase) -> None:
    """Delimited rows (job, stage, machine, start, end) in minutes."""
    g = solution.graph
    out.write("job,stage,machine,start,end\n")
    for t in sorted(solution.start, key=lambda t: (solution.start[t], t)):
        out.write(f"{t[0]},{t[1]},{g.op(t).machine},{solution.start[t] * g.time_unit},"
                  f"{solution.completion[t] * g.time_unit}\n")


# -- synthetic graphs and file I/O --------------------------------------------

STEEL_STAGES = ["DP", "DC", "RF", "CC"]
STEEL_MACHINES = {"DP": ["DP1", "DP2"], "DC": ["DC1", "DC2", "DC3"], "RF": ["RF1", "RF2"], "CC": ["CC1", "CC2"]}


def synthetic_graph(seed: int, jobs: int = 6, time_unit: int = 5) -> TaskGraph:
    """Steelmaking shop with dephosphorisation, decarbonisation, refining and casting.

    Machines are assigned round-robin, processing times are drawn per task
    (in ``time_unit``-minute units) and jobs are cast in two batches per
    caster, in list order.
    """
    rng = np.random.default_rng(seed)
    pts = {"DP": (3, 6), "DC": (4, 8), "RF": (2, 5), "CC": (4, 7)}
    job_list = []
    for k in range(jobs):
        ops = []
        for g in STEEL_STAGES:
            ms = STEEL_MACHINES[g]
            ops.append(Operation(g, ms[k % len(ms)], int(rng.integers(*pts[g], endpoint=True))))
        job_list.append(Job(f"J{k + 1}", tuple(ops)))
    transfer = {(a, b): int(rng.integers(0, 2, endpoint=True)) for a, b in zip(STEEL_STAGES, STEEL_STAGES[1:])}
    batches = []
    for c in STEEL_MACHINES["CC"]:
        cast_jobs = [j.id for j in job_list if j.ops[-1].machine == c]
        half = max(1, len(cast_jobs) // 2)
        for h, part in enumerate((cast_jobs[:half], cast_jobs[half:])):
            if part:
                batches.append(Batch(f"{c}-{h + 1}", c, tuple(part), int(rng.integers(1, 3, endpoint=True))))
    return TaskGraph(list(STEEL_STAGES), {g: list(m) for g, m in STEEL_MACHINES.items()}, job_list,
                     transfer, batches, {"DP", "DC"}, {"DP": list(STEEL_MACHINES["DP"]),
                                                      "DC": list(STEEL_MACHINES["DC"])},
                     None, time_unit)


def graph_to_dict(g: TaskGraph) -> dict:
    return {
        "stages": g.stages, "machines": g.machines, "time_unit": g.time_unit,
        "jobs": [{"id": j.id, "tasks": [{"stage": o.stage, "machine": o.machine, "pt": o.pt} for o in j.ops]}
                 for j in g.jobs],
        "transfer": [{"from": a, "to": b, "time": t} for (a, b), t in g.transfer.items()],
        "batches": [{"id": b.id, "caster": b.caster, "jobs": list(b.jobs), "setup": b.setup} for b in g.batches],
        "oxygen_stages": sorted(g.oxygen_stages), "users": g.users, "sequences": g.sequences,
    }


def graph_from_dict(d: dict) -> TaskGraph:
    try:
        jobs = [Job(str(j["id"]), tuple(Operation(str(o["stage"]), str(o["machine"]), int(o["pt"]))
                                        for o in j["tasks"])) for j in d["jobs"]]
        transfer = {(str(t["from"]), str(t["to"])): int(t["time"]) for t in d.get("transfer", [])}
        batches = [Batch(str(b["id"]), str(b["caster"]), tuple(map(str, b["jobs"])), int(b["setup"]))
                   for b in d.get("batches", [])]
        return TaskGraph(list(d["stages"]), {k: list(v) for k, v in d["machines"].items()}, jobs, transfer,
                         batches, set(d.get("oxygen_stages", [])),
                         {k: list(v) for k, v in d.get("users", {}).items()},
                         d.get("sequences"), int(d.get("time_unit", 1)))
    except KeyError as exc:
        raise GraphFormatError(f"task graph is missing field {exc.args[0]!r}") from None


def save_graph(g: TaskGraph, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g), indent=2) + "\n")


def load_graph(path: Union[str, Path]) -> TaskGraph:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return graph_from_dict(d)
