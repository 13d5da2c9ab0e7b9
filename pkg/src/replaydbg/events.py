"""Typed entries that flow through the recording buffers."""

from dataclasses import dataclass
from typing import Optional, Union

# Control-flow event kinds
BLOCKING_CALL = "blocking_call"
PREEMPTION = "preemption"
INTERRUPT_DISPATCH = "interrupt_dispatch"
DELAY_EXPIRY = "delay_expiry"
ACTIVATION = "activation"

EVENT_KINDS = (BLOCKING_CALL, PREEMPTION, INTERRUPT_DISPATCH, DELAY_EXPIRY, ACTIVATION)

# Blocking primitives as they appear in events
PRIM_MSGQ_SEND = "msgq_send"
PRIM_MSGQ_RECV = "msgq_recv"
PRIM_SEM_WAIT = "sem_wait"
PRIM_TASK_DELAY = "task_delay"
PRIM_HALT = "halt"

# Message origins, assigned at the receiver
ORIGIN_EXTERNAL = "external"
ORIGIN_INTERNAL = "internal"


@dataclass(frozen=True)
class Marker:
    """Identifies one precise execution point of a task.

    ``pc`` is the statement index the task will resume at; ``occurrence`` is
    how many ticks the task has already spent at that index within the
    current instance, so revisits (loops, multi-tick statements) stay
    distinguishable. The checksum covers state bytes, loop counters and pc.
    """

    task: int
    instance: int
    pc: int
    occurrence: int
    checksum: int


@dataclass(frozen=True)
class ControlFlowEvent:
    """One scheduling-relevant kernel event.

    Every context switch produces one; interrupt dispatches produce one even
    when no switch results (from_task == to_task then). ``marker`` describes
    the task leaving (or keeping) the CPU; it is None when the CPU was idle.
    """

    seq: int
    tick: int
    kind: str
    from_task: Optional[int]
    to_task: Optional[int]
    marker: Optional[Marker]
    primitive: Optional[str] = None  # blocking calls only
    obj: Optional[int] = None        # kernel object / queue involved


@dataclass(frozen=True)
class MessageIn:
    """A message entering a task, logged at the receiver on delivery.

    ``index`` counts message arrivals within (task, instance), densely from
    0; the activation message of an instance, when there is one, is index 0.
    """

    task: int
    instance: int
    tick: int
    queue: int
    payload: bytes
    origin: str
    index: int


@dataclass(frozen=True)
class PeripheralIn:
    """One port read; ``index`` is dense per (task, instance)."""

    task: int
    instance: int
    tick: int
    port: int
    value: int
    index: int


@dataclass(frozen=True)
class StateSnapshot:
    """Filtered state bytes captured once per instance, at activation."""

    task: int
    instance: int
    tick: int
    data: bytes


DataFlowRecord = Union[MessageIn, PeripheralIn, StateSnapshot]
