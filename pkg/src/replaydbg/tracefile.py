"""Trace files: everything a recorded run leaves behind.

Binary layout: magic, version, scenario text and hash, termination info,
then one section per ring buffer (control flow, per-task data, checkpoints)
and the probe statistics. All integers little-endian, all variable-size
fields length-prefixed. ``dump_text`` renders the same content as JSON with
payloads hex-encoded, for debugging the debugger.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from replaydbg.events import (
    EVENT_KINDS,
    ORIGIN_EXTERNAL,
    ORIGIN_INTERNAL,
    ControlFlowEvent,
    DataFlowRecord,
    Marker,
    MessageIn,
    PeripheralIn,
    StateSnapshot,
)
from replaydbg.kernel import Kernel
from replaydbg.recorder import ProbeCosts, ProbeStats, Recorder, RecorderConfig
from replaydbg.ring import RingBuffer
from replaydbg.scenario import Scenario, parse_scenario, scenario_hash, serialize_scenario
from replaydbg.wire import ReadError, Reader, Writer

MAGIC = b"RDTR"
TRACE_VERSION = 1

_CAUSES = ["all_halted", "failed", "run_limit", "deadlocked"]
_PRIMITIVES = [None, "msgq_send", "msgq_recv", "sem_wait", "task_delay", "halt"]


class TraceError(ValueError):
    """Trace bytes are malformed or carry an unsupported version."""


@dataclass
class TraceRing:
    """Loaded contents of one recording ring.

    ``covered_from`` is the first tick for which this ring is known to hold
    every record it ever saw; 0 when nothing was overwritten. Pruning can
    only raise it.
    """

    capacity: int
    overwritten: int
    covered_from: int
    entries: List

    @classmethod
    def from_ring(cls, ring: RingBuffer, tick_of) -> "TraceRing":
        entries = ring.entries()
        if ring.overwritten_count == 0:
            covered = 0
        else:
            covered = (tick_of(entries[0]) + 1) if entries else None
            if covered is None:
                raise TraceError("ring overwrote everything it held")
        return cls(
            capacity=ring.capacity,
            overwritten=ring.overwritten_count,
            covered_from=covered,
            entries=entries,
        )

    def oldest_tick(self, tick_of) -> Optional[int]:
        return tick_of(self.entries[0]) if self.entries else None


def event_tick(e: ControlFlowEvent) -> int:
    return e.tick


def record_tick(r: DataFlowRecord) -> int:
    return r.tick


def checkpoint_tick(entry: Tuple[int, bytes]) -> int:
    return entry[0]


@dataclass
class Trace:
    scenario_text: str
    scenario_hash: str
    cause: str
    end_tick: int
    final_checksums: Dict[int, int]
    replayed: List[int]
    checkpoint_period: int
    costs: ProbeCosts
    control: TraceRing
    data: Dict[int, TraceRing]
    checkpoints: TraceRing
    stats: ProbeStats

    def scenario(self) -> Scenario:
        return parse_scenario(self.scenario_text)

    def task_names(self) -> List[str]:
        return [t.name for t in self.scenario().tasks]


def capture_trace(scenario: Scenario, recorder: Recorder) -> Trace:
    """Assemble a Trace from a finished recorded run."""
    if recorder.result is None:
        raise TraceError("run not finished; no result recorded")
    return Trace(
        scenario_text=serialize_scenario(scenario),
        scenario_hash=scenario_hash(scenario),
        cause=recorder.result.cause,
        end_tick=recorder.result.tick,
        final_checksums=dict(recorder.result.final_checksums),
        replayed=sorted(recorder.replayed_ids),
        checkpoint_period=recorder.config.checkpoint_period,
        costs=recorder.config.costs,
        control=TraceRing.from_ring(recorder.control, event_tick),
        data={tid: TraceRing.from_ring(ring, record_tick)
              for tid, ring in sorted(recorder.data.items())},
        checkpoints=TraceRing.from_ring(recorder.checkpoints, checkpoint_tick),
        stats=recorder.stats,
    )


def record_run(scenario: Scenario, config: Optional[RecorderConfig] = None) -> Trace:
    """Run a scenario with recording attached and return its trace."""
    recorder = Recorder(scenario, config)
    Kernel(scenario, recorder).run()
    return capture_trace(scenario, recorder)


# --- binary codec -----------------------------------------------------------

def _put_marker(w: Writer, marker: Optional[Marker]) -> None:
    if marker is None:
        w.u8(0)
        return
    w.u8(1)
    w.u16(marker.task)
    w.u32(marker.instance)
    w.u32(marker.pc)
    w.u32(marker.occurrence)
    w.u32(marker.checksum)


def _get_marker(r: Reader) -> Optional[Marker]:
    if r.u8() == 0:
        return None
    return Marker(task=r.u16(), instance=r.u32(), pc=r.u32(),
                  occurrence=r.u32(), checksum=r.u32())


def put_event(w: Writer, e: ControlFlowEvent) -> None:
    w.u64(e.seq)
    w.u64(e.tick)
    w.u8(EVENT_KINDS.index(e.kind))
    w.opt_i32(e.from_task)
    w.opt_i32(e.to_task)
    _put_marker(w, e.marker)
    w.u8(_PRIMITIVES.index(e.primitive))
    w.opt_i32(e.obj)


def get_event(r: Reader) -> ControlFlowEvent:
    return ControlFlowEvent(
        seq=r.u64(),
        tick=r.u64(),
        kind=EVENT_KINDS[r.u8()],
        from_task=r.opt_i32(),
        to_task=r.opt_i32(),
        marker=_get_marker(r),
        primitive=_PRIMITIVES[r.u8()],
        obj=r.opt_i32(),
    )


def put_record(w: Writer, rec: DataFlowRecord) -> None:
    if isinstance(rec, MessageIn):
        w.u8(1)
        w.u16(rec.task)
        w.u32(rec.instance)
        w.u64(rec.tick)
        w.u16(rec.queue)
        w.u8(0 if rec.origin == ORIGIN_EXTERNAL else 1)
        w.u32(rec.index)
        w.blob(rec.payload)
    elif isinstance(rec, PeripheralIn):
        w.u8(2)
        w.u16(rec.task)
        w.u32(rec.instance)
        w.u64(rec.tick)
        w.u16(rec.port)
        w.u8(rec.value)
        w.u32(rec.index)
    elif isinstance(rec, StateSnapshot):
        w.u8(3)
        w.u16(rec.task)
        w.u32(rec.instance)
        w.u64(rec.tick)
        w.blob(rec.data)
    else:
        raise TraceError(f"unknown record type {type(rec).__name__}")


def get_record(r: Reader) -> DataFlowRecord:
    kind = r.u8()
    if kind == 1:
        return MessageIn(task=r.u16(), instance=r.u32(), tick=r.u64(), queue=r.u16(),
                         origin=ORIGIN_EXTERNAL if r.u8() == 0 else ORIGIN_INTERNAL,
                         index=r.u32(), payload=r.blob())
    if kind == 2:
        return PeripheralIn(task=r.u16(), instance=r.u32(), tick=r.u64(),
                            port=r.u16(), value=r.u8(), index=r.u32())
    if kind == 3:
        return StateSnapshot(task=r.u16(), instance=r.u32(), tick=r.u64(), data=r.blob())
    raise TraceError(f"unknown record tag {kind}")


def _put_ring(w: Writer, ring: TraceRing, put_entry) -> None:
    w.u32(ring.capacity)
    w.u64(ring.overwritten)
    w.u64(ring.covered_from)
    w.u32(len(ring.entries))
    for entry in ring.entries:
        put_entry(w, entry)


def _get_ring(r: Reader, get_entry) -> TraceRing:
    capacity = r.u32()
    overwritten = r.u64()
    covered_from = r.u64()
    count = r.u32()
    return TraceRing(capacity=capacity, overwritten=overwritten,
                     covered_from=covered_from,
                     entries=[get_entry(r) for _ in range(count)])


def _put_checkpoint(w: Writer, entry: Tuple[int, bytes]) -> None:
    w.u64(entry[0])
    w.blob(entry[1])


def _get_checkpoint(r: Reader) -> Tuple[int, bytes]:
    return (r.u64(), r.blob())


def _put_costs(w: Writer, costs: ProbeCosts) -> None:
    for v in (costs.switch_hook, costs.blocking_call, costs.msg_log, costs.port_log,
              costs.snapshot_log, costs.checkpoint_log, costs.per_64_bytes):
        w.u32(v)


def _get_costs(r: Reader) -> ProbeCosts:
    return ProbeCosts(
        switch_hook=r.u32(), blocking_call=r.u32(), msg_log=r.u32(),
        port_log=r.u32(), snapshot_log=r.u32(), checkpoint_log=r.u32(),
        per_64_bytes=r.u32(),
    )


def _put_stats(w: Writer, stats: ProbeStats) -> None:
    keys = sorted(stats.invocations)
    w.u32(len(keys))
    for func, scope in keys:
        w.text(func)
        w.text(scope)
        w.u64(stats.invocations[(func, scope)])
        w.u64(stats.bytes_logged[(func, scope)])
        w.u64(stats.probe_ticks[(func, scope)])
    queues = sorted(stats.queue_msg_count)
    w.u32(len(queues))
    for name in queues:
        w.text(name)
        w.u64(stats.queue_msg_count[name])
        w.u64(stats.queue_msg_bytes[name])


def _get_stats(r: Reader) -> ProbeStats:
    stats = ProbeStats()
    for _ in range(r.u32()):
        func = r.text()
        scope = r.text()
        key = (func, scope)
        stats.invocations[key] = r.u64()
        stats.bytes_logged[key] = r.u64()
        stats.probe_ticks[key] = r.u64()
    for _ in range(r.u32()):
        name = r.text()
        stats.queue_msg_count[name] = r.u64()
        stats.queue_msg_bytes[name] = r.u64()
    return stats


def trace_to_bytes(trace: Trace) -> bytes:
    w = Writer()
    w.u16(TRACE_VERSION)
    w.text(trace.scenario_text)
    w.text(trace.scenario_hash)
    w.u8(_CAUSES.index(trace.cause))
    w.u64(trace.end_tick)
    w.u16(len(trace.final_checksums))
    for tid in sorted(trace.final_checksums):
        w.u16(tid)
        w.u32(trace.final_checksums[tid])
    w.u16(len(trace.replayed))
    for tid in trace.replayed:
        w.u16(tid)
    w.u32(trace.checkpoint_period)
    _put_costs(w, trace.costs)
    _put_ring(w, trace.control, put_event)
    w.u16(len(trace.data))
    for tid in sorted(trace.data):
        w.u16(tid)
        _put_ring(w, trace.data[tid], put_record)
    _put_ring(w, trace.checkpoints, _put_checkpoint)
    _put_stats(w, trace.stats)
    return MAGIC + w.getvalue()


def trace_from_bytes(blob: bytes) -> Trace:
    if blob[:4] != MAGIC:
        raise TraceError("not a trace file (bad magic)")
    r = Reader(blob[4:])
    try:
        version = r.u16()
        if version != TRACE_VERSION:
            raise TraceError(f"unsupported trace version {version}")
        scenario_text = r.text()
        sc_hash = r.text()
        cause = _CAUSES[r.u8()]
        end_tick = r.u64()
        final = {}
        for _ in range(r.u16()):
            tid = r.u16()
            final[tid] = r.u32()
        replayed = [r.u16() for _ in range(r.u16())]
        period = r.u32()
        costs = _get_costs(r)
        control = _get_ring(r, get_event)
        data = {}
        for _ in range(r.u16()):
            tid = r.u16()
            data[tid] = _get_ring(r, get_record)
        checkpoints = _get_ring(r, _get_checkpoint)
        stats = _get_stats(r)
        r.expect_end()
    except ReadError as exc:
        raise TraceError(str(exc)) from exc
    return Trace(
        scenario_text=scenario_text,
        scenario_hash=sc_hash,
        cause=cause,
        end_tick=end_tick,
        final_checksums=final,
        replayed=replayed,
        checkpoint_period=period,
        costs=costs,
        control=control,
        data=data,
        checkpoints=checkpoints,
        stats=stats,
    )


def write_trace(trace: Trace, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(trace_to_bytes(trace))


def read_trace(path: str) -> Trace:
    with open(path, "rb") as fh:
        return trace_from_bytes(fh.read())


# --- textual dump -----------------------------------------------------------

def _event_dict(e: ControlFlowEvent) -> dict:
    d = {
        "seq": e.seq,
        "tick": e.tick,
        "kind": e.kind,
        "from_task": e.from_task,
        "to_task": e.to_task,
    }
    if e.marker is not None:
        d["marker"] = {
            "task": e.marker.task,
            "instance": e.marker.instance,
            "pc": e.marker.pc,
            "occurrence": e.marker.occurrence,
            "checksum": e.marker.checksum,
        }
    if e.primitive is not None:
        d["primitive"] = e.primitive
    if e.obj is not None:
        d["obj"] = e.obj
    return d


def _record_dict(rec: DataFlowRecord) -> dict:
    if isinstance(rec, MessageIn):
        return {"type": "message_in", "task": rec.task, "instance": rec.instance,
                "tick": rec.tick, "queue": rec.queue, "origin": rec.origin,
                "index": rec.index, "payload": rec.payload.hex()}
    if isinstance(rec, PeripheralIn):
        return {"type": "peripheral_in", "task": rec.task, "instance": rec.instance,
                "tick": rec.tick, "port": rec.port, "value": rec.value,
                "index": rec.index}
    return {"type": "state_snapshot", "task": rec.task, "instance": rec.instance,
            "tick": rec.tick, "data": rec.data.hex()}


def trace_to_dict(trace: Trace) -> dict:
    def ring_dict(ring: TraceRing, entry_fn) -> dict:
        return {
            "capacity": ring.capacity,
            "overwritten": ring.overwritten,
            "covered_from": ring.covered_from,
            "entries": [entry_fn(e) for e in ring.entries],
        }

    return {
        "format": "replaydbg-trace",
        "version": TRACE_VERSION,
        "scenario_hash": trace.scenario_hash,
        "scenario_text": trace.scenario_text,
        "cause": trace.cause,
        "end_tick": trace.end_tick,
        "final_checksums": {str(k): v for k, v in sorted(trace.final_checksums.items())},
        "replayed_tasks": trace.replayed,
        "checkpoint_period": trace.checkpoint_period,
        "control": ring_dict(trace.control, _event_dict),
        "data": {str(tid): ring_dict(ring, _record_dict)
                 for tid, ring in sorted(trace.data.items())},
        "checkpoints": ring_dict(
            trace.checkpoints,
            lambda e: {"tick": e[0], "blob": e[1].hex()},
        ),
        "probe_stats": {
            "entries": [
                {"function": func, "scope": scope,
                 "invocations": trace.stats.invocations[(func, scope)],
                 "bytes": trace.stats.bytes_logged[(func, scope)],
                 "probe_ticks": trace.stats.probe_ticks[(func, scope)]}
                for func, scope in sorted(trace.stats.invocations)
            ],
            "queues": [
                {"queue": name, "messages": trace.stats.queue_msg_count[name],
                 "bytes": trace.stats.queue_msg_bytes[name]}
                for name in sorted(trace.stats.queue_msg_count)
            ],
        },
    }


def dump_text(trace: Trace) -> str:
    return json.dumps(trace_to_dict(trace), indent=2)
