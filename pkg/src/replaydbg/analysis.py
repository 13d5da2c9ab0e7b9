"""Post-mortem trace analysis: pruning, start-state search, replay planning.

The cyclic recording buffers cover different spans of time, so the first
step discards every entry older than the newest "oldest entry" across the
mandatory buffers; what remains is the consistent window. Replay then needs
a kernel checkpoint inside that window from which every later input and
switch is on record; the earliest such checkpoint wins. The plan bundles
the checkpoint, the forced switch sequence, the external injections and the
internal records kept for cross-checking.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from replaydbg.events import (
    ORIGIN_EXTERNAL,
    ORIGIN_INTERNAL,
    ControlFlowEvent,
    MessageIn,
    PeripheralIn,
    StateSnapshot,
)
from replaydbg.tracefile import (
    Trace,
    TraceRing,
    checkpoint_tick,
    event_tick,
    get_event,
    put_event,
    record_tick,
)
from replaydbg.wire import ReadError, Reader, Writer

PLAN_MAGIC = b"RDPL"
PLAN_VERSION = 1


class AnalysisError(Exception):
    """Base for analysis failures; ``name`` is the stable diagnostic code."""

    name = "AnalysisError"


class EmptyBufferError(AnalysisError):
    """A mandatory buffer holds no entries: recording was misconfigured."""

    name = "EmptyBuffer"


class InsufficientOverlapError(AnalysisError):
    """The mandatory buffers share no span of time."""

    name = "InsufficientOverlap"


class NoConsistentStartError(AnalysisError):
    """No checkpoint has complete forward information.

    Actionable: grow buffer capacities or shrink the checkpoint period.
    """

    name = "NoConsistentStart"


class GapInControlFlowError(AnalysisError):
    """Control-flow events are not sequence-dense: corrupted trace."""

    name = "GapInControlFlow"


@dataclass(frozen=True)
class TraceWindow:
    """Consistent temporal window: entries outside it are unusable."""

    begin: int  # oldest tick every mandatory buffer still covers
    end: int    # termination tick of the recorded run


@dataclass
class PruneResult:
    window: TraceWindow
    trace: Trace
    discarded: Dict[str, int]

    def report(self) -> str:
        lines = [
            f"window: [{self.window.begin}, {self.window.end}]",
            "discarded entries per buffer:",
        ]
        for name in sorted(self.discarded):
            lines.append(f"  {name}: {self.discarded[name]}")
        return "\n".join(lines)


def _mandatory_rings(trace: Trace) -> List[Tuple[str, TraceRing, object]]:
    rings = [
        ("control", trace.control, event_tick),
        ("checkpoints", trace.checkpoints, checkpoint_tick),
    ]
    names = trace.task_names()
    for tid in trace.replayed:
        rings.append((f"data:{names[tid]}", trace.data[tid], record_tick))
    return rings


def _pruned_ring(ring: TraceRing, tick_of, begin: int) -> Tuple[TraceRing, int]:
    kept = [e for e in ring.entries if tick_of(e) >= begin]
    pruned = TraceRing(
        capacity=ring.capacity,
        overwritten=ring.overwritten,
        covered_from=max(ring.covered_from, begin),
        entries=kept,
    )
    return pruned, len(ring.entries) - len(kept)


def prune(trace: Trace) -> PruneResult:
    """Discard entries outside the consistent temporal scope of all buffers.

    The window begin is the max over mandatory buffers of their oldest
    retained entry's tick; the end is the run's termination tick. The input
    trace is not modified.
    """
    begin = 0
    for name, ring, tick_of in _mandatory_rings(trace):
        oldest = ring.oldest_tick(tick_of)
        if oldest is None:
            raise EmptyBufferError(f"mandatory buffer {name!r} has no entries")
        begin = max(begin, oldest)
    end = trace.end_tick
    if begin > end:
        raise InsufficientOverlapError(
            f"buffers only overlap from tick {begin}, after the run ended at {end}"
        )
    window = TraceWindow(begin=begin, end=end)
    discarded: Dict[str, int] = {}
    control, discarded["control"] = _pruned_ring(trace.control, event_tick, begin)
    checkpoints, discarded["checkpoints"] = _pruned_ring(trace.checkpoints, checkpoint_tick, begin)
    data = {}
    names = trace.task_names()
    for tid, ring in trace.data.items():
        data[tid], discarded[f"data:{names[tid]}"] = _pruned_ring(ring, record_tick, begin)
    pruned = Trace(
        scenario_text=trace.scenario_text,
        scenario_hash=trace.scenario_hash,
        cause=trace.cause,
        end_tick=trace.end_tick,
        final_checksums=trace.final_checksums,
        replayed=trace.replayed,
        checkpoint_period=trace.checkpoint_period,
        costs=trace.costs,
        control=control,
        data=data,
        checkpoints=checkpoints,
        stats=trace.stats,
    )
    return PruneResult(window=window, trace=pruned, discarded=discarded)


@dataclass
class StartState:
    """A checkpoint from which replay has complete forward information."""

    tick: int
    checkpoint: bytes
    # per replayed task: (instance, snapshot tick, filtered bytes) of the
    # newest activation snapshot at or before the start tick, when retained
    governing: Dict[int, Optional[Tuple[int, int, bytes]]]


def find_start(trace: Trace, window: TraceWindow) -> StartState:
    """Earliest checkpoint in the window with full coverage to the end.

    A ring covers a tick when it either never overwrote or the tick is
    strictly newer than its oldest retained entry (entries sharing that
    oldest tick may have been lost).
    """
    candidates = sorted(
        (tick, blob) for tick, blob in trace.checkpoints.entries
        if window.begin <= tick <= window.end
    )
    rings = [(name, ring, tick_of) for name, ring, tick_of in _mandatory_rings(trace)
             if name != "checkpoints"]
    for tick, blob in candidates:
        if all(tick >= ring.covered_from for _, ring, _ in rings):
            governing: Dict[int, Optional[Tuple[int, int, bytes]]] = {}
            for tid in trace.replayed:
                snaps = [r for r in trace.data[tid].entries
                         if isinstance(r, StateSnapshot) and r.tick <= tick]
                if snaps:
                    best = max(snaps, key=lambda r: (r.tick, r.instance))
                    governing[tid] = (best.instance, best.tick, best.data)
                else:
                    governing[tid] = None
            return StartState(tick=tick, checkpoint=blob, governing=governing)
    raise NoConsistentStartError(
        "no checkpoint has complete logs through the failure; "
        "grow buffer capacities or shrink the checkpoint period"
    )


@dataclass(frozen=True)
class MsgRecord:
    queue: int
    origin: str
    payload: bytes
    tick: int


@dataclass(frozen=True)
class PortRecord:
    port: int
    value: int
    tick: int


@dataclass
class ReplayPlan:
    """Everything the replay engine needs, detached from the live buffers."""

    scenario_text: str
    scenario_hash: str
    cause: str
    t_start: int
    t_min: int
    t_fail: int
    checkpoint: bytes
    events: List[ControlFlowEvent]
    msg_records: Dict[Tuple[int, int, int], MsgRecord]      # (task, instance, index)
    port_records: Dict[Tuple[int, int, int], PortRecord]    # (task, instance, index)
    snapshots: Dict[Tuple[int, int], Tuple[int, bytes]]     # (task, instance) -> (tick, data)
    governing: Dict[int, Optional[Tuple[int, int, bytes]]]
    final_checksums: Dict[int, int]
    replayed: List[int]

    def injections(self) -> Dict[Tuple[int, int, int], MsgRecord]:
        return {k: v for k, v in self.msg_records.items() if v.origin == ORIGIN_EXTERNAL}

    def verification_log(self) -> Dict[Tuple[int, int, int], MsgRecord]:
        return {k: v for k, v in self.msg_records.items() if v.origin == ORIGIN_INTERNAL}


def build_plan(trace: Trace, start: StartState,
               window: Optional[TraceWindow] = None) -> ReplayPlan:
    """Slice the window's events and data records into a replay plan."""
    events = [e for e in trace.control.entries if e.tick >= start.tick]
    for prev, nxt in zip(events, events[1:]):
        if nxt.seq != prev.seq + 1:
            raise GapInControlFlowError(
                f"control-flow sequence jumps from {prev.seq} to {nxt.seq}"
            )
    msg_records: Dict[Tuple[int, int, int], MsgRecord] = {}
    port_records: Dict[Tuple[int, int, int], PortRecord] = {}
    snapshots: Dict[Tuple[int, int], Tuple[int, bytes]] = {}
    for tid in trace.replayed:
        for rec in trace.data[tid].entries:
            if rec.tick < start.tick:
                continue
            if isinstance(rec, MessageIn):
                msg_records[(rec.task, rec.instance, rec.index)] = MsgRecord(
                    queue=rec.queue, origin=rec.origin, payload=rec.payload, tick=rec.tick
                )
            elif isinstance(rec, PeripheralIn):
                port_records[(rec.task, rec.instance, rec.index)] = PortRecord(
                    port=rec.port, value=rec.value, tick=rec.tick
                )
            elif isinstance(rec, StateSnapshot):
                snapshots[(rec.task, rec.instance)] = (rec.tick, rec.data)
    return ReplayPlan(
        scenario_text=trace.scenario_text,
        scenario_hash=trace.scenario_hash,
        cause=trace.cause,
        t_start=start.tick,
        t_min=window.begin if window is not None
        else min((e.tick for e in trace.control.entries), default=start.tick),
        t_fail=trace.end_tick,
        checkpoint=start.checkpoint,
        events=events,
        msg_records=msg_records,
        port_records=port_records,
        snapshots=snapshots,
        governing=start.governing,
        final_checksums=trace.final_checksums,
        replayed=list(trace.replayed),
    )


def analyze(trace: Trace) -> Tuple[PruneResult, StartState, ReplayPlan]:
    """prune + find_start + build_plan in one step."""
    pruned = prune(trace)
    start = find_start(pruned.trace, pruned.window)
    plan = build_plan(pruned.trace, start, pruned.window)
    return pruned, start, plan


def analysis_report(pruned: PruneResult, start: StartState, plan: ReplayPlan) -> str:
    lines = [
        pruned.report(),
        f"start checkpoint: tick {start.tick}",
        f"forced events: {len(plan.events)}",
        f"external injections: {len(plan.injections()) + len(plan.port_records)}"
        f" ({len(plan.injections())} messages, {len(plan.port_records)} port reads)",
        f"verification records: {len(plan.verification_log())} messages,"
        f" {len(plan.snapshots)} snapshots",
    ]
    return "\n".join(lines)


# --- plan codec ------------------------------------------------------------

class PlanError(ValueError):
    """Plan bytes are malformed or carry an unsupported version."""


def plan_to_bytes(plan: ReplayPlan) -> bytes:
    w = Writer()
    w.u16(PLAN_VERSION)
    w.text(plan.scenario_text)
    w.text(plan.scenario_hash)
    w.text(plan.cause)
    w.u64(plan.t_start)
    w.u64(plan.t_min)
    w.u64(plan.t_fail)
    w.blob(plan.checkpoint)
    w.u32(len(plan.events))
    for e in plan.events:
        put_event(w, e)
    w.u32(len(plan.msg_records))
    for (task, instance, index) in sorted(plan.msg_records):
        rec = plan.msg_records[(task, instance, index)]
        w.u16(task)
        w.u32(instance)
        w.u32(index)
        w.u16(rec.queue)
        w.u8(0 if rec.origin == ORIGIN_EXTERNAL else 1)
        w.u64(rec.tick)
        w.blob(rec.payload)
    w.u32(len(plan.port_records))
    for (task, instance, index) in sorted(plan.port_records):
        rec = plan.port_records[(task, instance, index)]
        w.u16(task)
        w.u32(instance)
        w.u32(index)
        w.u16(rec.port)
        w.u8(rec.value)
        w.u64(rec.tick)
    w.u32(len(plan.snapshots))
    for (task, instance) in sorted(plan.snapshots):
        tick, data = plan.snapshots[(task, instance)]
        w.u16(task)
        w.u32(instance)
        w.u64(tick)
        w.blob(data)
    w.u16(len(plan.governing))
    for tid in sorted(plan.governing):
        w.u16(tid)
        gov = plan.governing[tid]
        if gov is None:
            w.u8(0)
        else:
            w.u8(1)
            w.u32(gov[0])
            w.u64(gov[1])
            w.blob(gov[2])
    w.u16(len(plan.final_checksums))
    for tid in sorted(plan.final_checksums):
        w.u16(tid)
        w.u32(plan.final_checksums[tid])
    w.u16(len(plan.replayed))
    for tid in plan.replayed:
        w.u16(tid)
    return PLAN_MAGIC + w.getvalue()


def plan_from_bytes(blob: bytes) -> ReplayPlan:
    if blob[:4] != PLAN_MAGIC:
        raise PlanError("not a replay plan file (bad magic)")
    r = Reader(blob[4:])
    try:
        version = r.u16()
        if version != PLAN_VERSION:
            raise PlanError(f"unsupported plan version {version}")
        scenario_text = r.text()
        sc_hash = r.text()
        cause = r.text()
        t_start = r.u64()
        t_min = r.u64()
        t_fail = r.u64()
        checkpoint = r.blob()
        events = [get_event(r) for _ in range(r.u32())]
        msg_records = {}
        for _ in range(r.u32()):
            task = r.u16()
            instance = r.u32()
            index = r.u32()
            queue = r.u16()
            origin = ORIGIN_EXTERNAL if r.u8() == 0 else ORIGIN_INTERNAL
            tick = r.u64()
            payload = r.blob()
            msg_records[(task, instance, index)] = MsgRecord(queue, origin, payload, tick)
        port_records = {}
        for _ in range(r.u32()):
            task = r.u16()
            instance = r.u32()
            index = r.u32()
            port_records[(task, instance, index)] = PortRecord(r.u16(), r.u8(), r.u64())
        snapshots = {}
        for _ in range(r.u32()):
            task = r.u16()
            instance = r.u32()
            snapshots[(task, instance)] = (r.u64(), r.blob())
        governing = {}
        for _ in range(r.u16()):
            tid = r.u16()
            if r.u8() == 0:
                governing[tid] = None
            else:
                governing[tid] = (r.u32(), r.u64(), r.blob())
        final = {}
        for _ in range(r.u16()):
            tid = r.u16()
            final[tid] = r.u32()
        replayed = [r.u16() for _ in range(r.u16())]
        r.expect_end()
    except ReadError as exc:
        raise PlanError(str(exc)) from exc
    return ReplayPlan(
        scenario_text=scenario_text,
        scenario_hash=sc_hash,
        cause=cause,
        t_start=t_start,
        t_min=t_min,
        t_fail=t_fail,
        checkpoint=checkpoint,
        events=events,
        msg_records=msg_records,
        port_records=port_records,
        snapshots=snapshots,
        governing=governing,
        final_checksums=final,
        replayed=replayed,
    )


def write_plan(plan: ReplayPlan, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(plan_to_bytes(plan))


def read_plan(path: str) -> ReplayPlan:
    with open(path, "rb") as fh:
        return plan_from_bytes(fh.read())
