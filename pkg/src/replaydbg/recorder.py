"""Recording instrumentation: hooks, ring buffers and probe cost accounting.

The recorder logs control-flow events system-wide, data-flow records per
replayed task, and periodic kernel checkpoints, all into fixed-capacity
ring buffers. Probe costs are charged to ``ProbeStats`` only; they never
advance the simulation clock, so recording cannot perturb scheduling.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

from replaydbg.events import (
    ORIGIN_EXTERNAL,
    ORIGIN_INTERNAL,
    ControlFlowEvent,
    DataFlowRecord,
    MessageIn,
    PeripheralIn,
    StateSnapshot,
)
from replaydbg.kernel import ExecutionResult, Kernel, KernelHooks, filtered_state
from replaydbg.ring import RingBuffer

# Logical size charged for one control-flow event (seq, tick, kind, tasks,
# marker fields); data probes are charged by payload size.
CONTROL_EVENT_BYTES = 32

# Probe function names as they appear in stats and benchmark tables
SWITCH_HOOK = "switch_hook"
MSG_LOG = "msg_log"
PORT_LOG = "port_log"
SNAPSHOT_LOG = "snapshot_log"
CHECKPOINT_LOG = "checkpoint_log"
SYSTEM_SCOPE = "system"


def wrapper_name(primitive: str) -> str:
    return f"wrap_{primitive}"


@dataclass
class ProbeCosts:
    """Ticks charged per probe invocation, plus a per-64-bytes surcharge."""

    switch_hook: int = 1
    blocking_call: int = 1
    msg_log: int = 1
    port_log: int = 1
    snapshot_log: int = 1
    checkpoint_log: int = 1
    per_64_bytes: int = 1

    def cost(self, base: int, nbytes: int) -> int:
        return base + (nbytes // 64) * self.per_64_bytes


@dataclass
class RecorderConfig:
    control_capacity: int = 4096
    data_capacity: int = 1024
    data_capacities: Dict[str, int] = field(default_factory=dict)  # per-task overrides
    checkpoint_capacity: int = 8
    checkpoint_period: int = 500
    replayed_tasks: Optional[List[str]] = None  # None means every task
    costs: ProbeCosts = field(default_factory=ProbeCosts)

    def validate(self) -> None:
        caps = [self.control_capacity, self.data_capacity, self.checkpoint_capacity,
                *self.data_capacities.values()]
        if any(c < 1 for c in caps):
            raise ValueError("buffer capacities must be >= 1")
        if self.checkpoint_capacity < 2:
            raise ValueError("checkpoint ring needs capacity >= 2")
        if self.checkpoint_period < 1:
            raise ValueError("checkpoint period must be >= 1")

    def capacity_for(self, task_name: str) -> int:
        return self.data_capacities.get(task_name, self.data_capacity)


class ProbeStats:
    """Invocation, byte and tick counters per (probe function, scope)."""

    def __init__(self):
        self.invocations: Dict[Tuple[str, str], int] = {}
        self.bytes_logged: Dict[Tuple[str, str], int] = {}
        self.probe_ticks: Dict[Tuple[str, str], int] = {}
        self.queue_msg_count: Dict[str, int] = {}
        self.queue_msg_bytes: Dict[str, int] = {}

    def charge(self, func: str, scope: str, nbytes: int, ticks: int) -> None:
        key = (func, scope)
        self.invocations[key] = self.invocations.get(key, 0) + 1
        self.bytes_logged[key] = self.bytes_logged.get(key, 0) + nbytes
        self.probe_ticks[key] = self.probe_ticks.get(key, 0) + ticks

    def charge_queue(self, queue: str, nbytes: int) -> None:
        self.queue_msg_count[queue] = self.queue_msg_count.get(queue, 0) + 1
        self.queue_msg_bytes[queue] = self.queue_msg_bytes.get(queue, 0) + nbytes

    def total_bytes(self) -> int:
        return sum(self.bytes_logged.values())

    def total_ticks(self) -> int:
        return sum(self.probe_ticks.values())


class Recorder(KernelHooks):
    """The instrumentation mechanism; attach as kernel hooks and run."""

    def __init__(self, scenario, config: Optional[RecorderConfig] = None):
        self.config = config or RecorderConfig()
        self.config.validate()
        self.scenario = scenario
        names = [t.name for t in scenario.tasks]
        if self.config.replayed_tasks is None:
            replayed = list(names)
        else:
            unknown = set(self.config.replayed_tasks) - set(names)
            if unknown:
                raise ValueError(f"unknown replayed task(s): {sorted(unknown)}")
            replayed = [n for n in names if n in self.config.replayed_tasks]
        self.replayed_names = replayed
        self.replayed_ids = {names.index(n) for n in replayed}
        self.control: RingBuffer[ControlFlowEvent] = RingBuffer(self.config.control_capacity)
        self.data: Dict[int, RingBuffer[DataFlowRecord]] = {
            names.index(n): RingBuffer(self.config.capacity_for(n)) for n in replayed
        }
        self.checkpoints: RingBuffer[Tuple[int, bytes]] = RingBuffer(self.config.checkpoint_capacity)
        self.stats = ProbeStats()
        self.result: Optional[ExecutionResult] = None
        self._next_checkpoint_due = 0

    # -- hook implementations ---------------------------------------------

    def on_boundary(self, kernel: Kernel) -> None:
        if kernel.clock >= self._next_checkpoint_due:
            blob = kernel.checkpoint_bytes()
            self.checkpoints.push((kernel.clock, blob))
            period = self.config.checkpoint_period
            self._next_checkpoint_due = (kernel.clock // period + 1) * period
            self.stats.charge(CHECKPOINT_LOG, SYSTEM_SCOPE, len(blob),
                              self.config.costs.cost(self.config.costs.checkpoint_log, len(blob)))

    def on_control_event(self, kernel: Kernel, event: ControlFlowEvent) -> None:
        self.control.push(event)
        scope = kernel.task_name(event.from_task) if event.from_task is not None else SYSTEM_SCOPE
        self.stats.charge(SWITCH_HOOK, scope, CONTROL_EVENT_BYTES,
                          self.config.costs.cost(self.config.costs.switch_hook, CONTROL_EVENT_BYTES))

    def on_blocking_call(self, kernel: Kernel, task: int, primitive: str,
                         obj: Optional[int], tick: int) -> None:
        self.stats.charge(wrapper_name(primitive), kernel.task_name(task), 0,
                          self.config.costs.blocking_call)

    def on_msg_received(self, kernel: Kernel, task: int, instance: int, tick: int,
                        queue: int, payload: bytes, sender: Optional[int], index: int) -> None:
        if task not in self.replayed_ids:
            return
        external = sender is None or sender not in self.replayed_ids
        rec = MessageIn(
            task=task,
            instance=instance,
            tick=tick,
            queue=queue,
            payload=payload,
            origin=ORIGIN_EXTERNAL if external else ORIGIN_INTERNAL,
            index=index,
        )
        self.data[task].push(rec)
        cost = self.config.costs.cost(self.config.costs.msg_log, len(payload))
        self.stats.charge(MSG_LOG, kernel.task_name(task), len(payload), cost)
        self.stats.charge_queue(kernel.queues[queue].name, len(payload))

    def on_peripheral_read(self, kernel: Kernel, task: int, instance: int, tick: int,
                           port: int, value: int, index: int) -> None:
        if task not in self.replayed_ids:
            return
        rec = PeripheralIn(task=task, instance=instance, tick=tick,
                           port=port, value=value, index=index)
        self.data[task].push(rec)
        self.stats.charge(PORT_LOG, kernel.task_name(task), 1,
                          self.config.costs.cost(self.config.costs.port_log, 1))

    def on_activation(self, kernel: Kernel, task: int, instance: int, tick: int) -> None:
        if task not in self.replayed_ids:
            return
        data = filtered_state(kernel.tasks[task])
        rec = StateSnapshot(task=task, instance=instance, tick=tick, data=data)
        self.data[task].push(rec)
        self.stats.charge(SNAPSHOT_LOG, kernel.task_name(task), len(data),
                          self.config.costs.cost(self.config.costs.snapshot_log, len(data)))

    def on_terminate(self, kernel: Kernel, result: ExecutionResult) -> None:
        self.result = result


class SwitchLog(KernelHooks):
    """Minimal hook that collects control-flow events in a plain list.

    Used to compare scheduling with and without the recorder attached.
    """

    def __init__(self):
        self.events: List[ControlFlowEvent] = []

    def on_control_event(self, kernel: Kernel, event: ControlFlowEvent) -> None:
        self.events.append(event)
