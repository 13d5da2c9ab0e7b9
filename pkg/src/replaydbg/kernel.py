"""Deterministic multitasking kernel simulation with logical time.

Time is a tick counter over *slots*; each slot holds exactly one action:

* a statement tick of the running task,
* a kernel intervention (blocking switch, message/semaphore handoffs,
  blocked-sender completion, instance reactivation, preemption),
* one interrupt dispatch (post plus any resulting delivery and switch),
* a delay-expiry batch, or
* an idle tick.

A statement and the kernel intervention it triggers are processed back to
back within one ``step_slot`` call, so the simulator only ever pauses at
clean boundaries. Scheduling is priority-preemptive (lower number = higher
priority) with FIFO order within a priority level; a preempted task keeps
the front of its level.

Tasks start ready at instance 1. When a task's body ends it blocks on its
activation queue; a delivered message starts the next instance at index 0.
An explicit RECV on the activation queue also ends the instance, with the
next one resuming after the RECV. Message deliveries to blocked receivers
are direct handoffs: the payload never sits in the queue.
"""

import random
import struct
import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Tuple

from replaydbg import dsl
from replaydbg.checksum import context_checksum
from replaydbg.events import (
    ACTIVATION,
    BLOCKING_CALL,
    DELAY_EXPIRY,
    INTERRUPT_DISPATCH,
    PREEMPTION,
    PRIM_HALT,
    PRIM_MSGQ_RECV,
    PRIM_MSGQ_SEND,
    PRIM_SEM_WAIT,
    PRIM_TASK_DELAY,
    ControlFlowEvent,
    Marker,
)
from replaydbg.scenario import Scenario
from replaydbg.wire import Reader, Writer

# Task scheduling states
READY = "ready"
RUNNING = "running"
BLOCKED_QUEUE = "blocked_queue"
BLOCKED_SEM = "blocked_sem"
DELAYED = "delayed"
HALTED = "halted"
FAILED = "failed"

_STATE_CODES = [READY, RUNNING, BLOCKED_QUEUE, BLOCKED_SEM, DELAYED, HALTED, FAILED]

# Termination causes
ALL_HALTED = "all_halted"
CAUSE_FAILED = "failed"
RUN_LIMIT = "run_limit"
DEADLOCKED = "deadlocked"

CHECKPOINT_VERSION = 1


class KernelError(Exception):
    """Internal invariant violation; indicates a simulator bug."""


class CheckpointError(ValueError):
    """A checkpoint blob is malformed or fails its integrity checksums."""


@dataclass
class LoopFrame:
    head: int       # index of the LOOP statement
    end: int        # index one past the body
    remaining: int  # iterations left, including the current one


@dataclass
class TCB:
    """Per-task run state; everything here is checkpointed."""

    id: int
    program: dsl.TaskProgram
    state: str = READY
    pc: int = 0
    instance: int = 0
    state_bytes: bytearray = field(default_factory=bytearray)
    frames: List[LoopFrame] = field(default_factory=list)
    pc_visits: Dict[int, int] = field(default_factory=dict)
    compute_left: int = 0
    instr_in_instance: int = 0
    arrival_idx: int = 0
    port_idx: int = 0
    wake_tick: int = 0
    blocked_kind: Optional[str] = None     # "recv" | "send" | "sem"
    blocked_obj: Optional[int] = None
    blocked_var: Optional[int] = None      # RECV target, None for activation wait
    blocked_is_activation: bool = False
    held_payload: Optional[bytes] = None   # message in hand while send-blocked

    @property
    def priority(self) -> int:
        return self.program.priority

    def loop_counters(self) -> List[int]:
        return [f.remaining for f in self.frames]


@dataclass
class MsgQueue:
    id: int
    name: str
    capacity: int
    pending: Deque[Tuple[bytes, Optional[int]]] = field(default_factory=deque)
    blocked_recv: Deque[int] = field(default_factory=deque)
    blocked_send: Deque[int] = field(default_factory=deque)
    sent: int = 0
    delivered: int = 0
    dropped: int = 0


@dataclass
class Semaphore:
    id: int
    name: str
    count: int
    blocked: Deque[int] = field(default_factory=deque)


@dataclass
class ExecutionResult:
    cause: str
    tick: int
    final_checksums: Dict[int, int]
    sent: Dict[int, int]
    delivered: Dict[int, int]
    dropped: Dict[int, int]
    events_emitted: int


class KernelHooks:
    """No-op instrumentation interface; the recorder implements it."""

    def on_boundary(self, kernel: "Kernel") -> None:
        pass

    def on_control_event(self, kernel: "Kernel", event: ControlFlowEvent) -> None:
        pass

    def on_blocking_call(self, kernel: "Kernel", task: int, primitive: str,
                         obj: Optional[int], tick: int) -> None:
        pass

    def on_msg_received(self, kernel: "Kernel", task: int, instance: int, tick: int,
                        queue: int, payload: bytes, sender: Optional[int], index: int) -> None:
        pass

    def on_peripheral_read(self, kernel: "Kernel", task: int, instance: int, tick: int,
                           port: int, value: int, index: int) -> None:
        pass

    def on_activation(self, kernel: "Kernel", task: int, instance: int, tick: int) -> None:
        pass

    def on_terminate(self, kernel: "Kernel", result: ExecutionResult) -> None:
        pass


def filtered_state(tcb: TCB) -> bytes:
    """State bytes with init-only variables removed, in index order."""
    skip = tcb.program.init_only_vars
    return bytes(b for i, b in enumerate(tcb.state_bytes) if i not in skip)


class Kernel:
    """Sequential interpreter over one scenario.

    Single-threaded by contract: hooks run synchronously inside slots and
    must not re-enter kernel operations.
    """

    def __init__(self, scenario: Scenario, hooks: Optional[KernelHooks] = None):
        self.scenario = scenario
        self.hooks = hooks or KernelHooks()
        self.queue_ids = {q.name: i for i, q in enumerate(scenario.queues)}
        self.sem_ids = {s.name: i for i, s in enumerate(scenario.sems)}
        self.port_ids = {p.name: i for i, p in enumerate(scenario.ports)}
        self.task_ids = {t.name: i for i, t in enumerate(scenario.tasks)}
        self.tasks: List[TCB] = [
            TCB(id=i, program=prog, state_bytes=bytearray(prog.initial_state))
            for i, prog in enumerate(scenario.tasks)
        ]
        self.queues = [MsgQueue(i, q.name, q.capacity) for i, q in enumerate(scenario.queues)]
        self.sems = [Semaphore(i, s.name, s.count) for i, s in enumerate(scenario.sems)]
        self.clock = 0
        self.current: Optional[int] = None
        self.irq_cursor = 0
        self.event_seq = 0
        self.result: Optional[ExecutionResult] = None
        self._ready: Dict[int, Deque[int]] = {}
        self._started = False
        self._fx: Deque[tuple] = deque()
        self._leaving: Optional[Tuple[str, Optional[int]]] = None
        self._port_cache: List[bytearray] = [bytearray() for _ in scenario.ports]
        self._port_rngs: List[Optional[random.Random]] = [None] * len(scenario.ports)
        self._port_cursor: List[int] = [0] * len(scenario.ports)

    def task_name(self, tid: Optional[int]) -> str:
        return "-" if tid is None else self.scenario.tasks[tid].name

    # -- public driving ------------------------------------------------

    def start(self) -> None:
        """Activate every task (declaration order) and dispatch; costs no tick."""
        if self._started:
            raise KernelError("already started")
        self._started = True
        for tcb in self.tasks:
            self._activate(tcb, payload=None, sender=None, queue_id=None, var=None, resume_pc=0)
            self._make_ready(tcb.id)
        nxt = self._pick_next()
        if nxt is not None:
            self.tasks[nxt].state = RUNNING
            self.current = nxt

    def run(self) -> ExecutionResult:
        if not self._started:
            self.start()
        while self.result is None:
            self.step_slot()
        return self.result

    def step_slot(self) -> str:
        """Advance by one action; returns a tag naming what happened.

        A statement that triggers kernel work also consumes the follow-up
        intervention slot within the same call, so every return is a clean
        boundary.
        """
        if self.result is not None:
            return "done"
        if all(t.state in (HALTED, FAILED) for t in self.tasks):
            self._terminate(ALL_HALTED)
            return "done"
        if self.clock >= self.scenario.limit:
            self._terminate(RUN_LIMIT)
            return "done"
        self.hooks.on_boundary(self)
        if self._delay_due():
            self._delay_slot()
            return "delay"
        if self._irq_due():
            self._interrupt_slot()
            return "irq"
        if self.current is None:
            if self._best_ready_prio() is not None:
                raise KernelError("idle with ready tasks outside dispatch points")
            if not self._delay_pending() and not self._stimulus_pending():
                self._terminate(DEADLOCKED)
                return "done"
            self.clock += 1
            return "idle"
        return self._statement_slot()

    # -- termination -----------------------------------------------------

    def _terminate(self, cause: str) -> None:
        self.result = ExecutionResult(
            cause=cause,
            tick=self.clock,
            final_checksums={t.id: self._ctx_checksum(t) for t in self.tasks},
            sent={q.id: q.sent for q in self.queues},
            delivered={q.id: q.delivered for q in self.queues},
            dropped={q.id: q.dropped for q in self.queues},
            events_emitted=self.event_seq,
        )
        self.hooks.on_terminate(self, self.result)

    # -- ready queue management -------------------------------------------

    def _make_ready(self, tid: int, front: bool = False) -> None:
        tcb = self.tasks[tid]
        tcb.state = READY
        dq = self._ready.setdefault(tcb.priority, deque())
        if front:
            dq.appendleft(tid)
        else:
            dq.append(tid)

    def _pick_next(self) -> Optional[int]:
        for prio in sorted(self._ready):
            dq = self._ready[prio]
            if dq:
                return dq.popleft()
        return None

    def _best_ready_prio(self) -> Optional[int]:
        best = None
        for prio, dq in self._ready.items():
            if dq and (best is None or prio < best):
                best = prio
        return best

    def _take_ready(self, tid: int) -> None:
        """Remove a specific task from the ready structure (forced scheduling)."""
        dq = self._ready.get(self.tasks[tid].priority)
        if dq is None or tid not in dq:
            raise KernelError(f"task {tid} not in ready queue")
        dq.remove(tid)

    # -- context markers ----------------------------------------------------

    def _ctx_checksum(self, tcb: TCB) -> int:
        return context_checksum(bytes(tcb.state_bytes), tcb.loop_counters(), tcb.pc)

    def _ctx_marker(self, tcb: TCB) -> Marker:
        return Marker(
            task=tcb.id,
            instance=tcb.instance,
            pc=tcb.pc,
            occurrence=tcb.pc_visits.get(tcb.pc, 0),
            checksum=self._ctx_checksum(tcb),
        )

    def _emit(self, kind: str, from_task: Optional[int], to_task: Optional[int],
              marker: Optional[Marker], tick: int,
              primitive: Optional[str] = None, obj: Optional[int] = None) -> None:
        event = ControlFlowEvent(
            seq=self.event_seq,
            tick=tick,
            kind=kind,
            from_task=from_task,
            to_task=to_task,
            marker=marker,
            primitive=primitive,
            obj=obj,
        )
        self.event_seq += 1
        self.hooks.on_control_event(self, event)

    # -- stimulus (overridden during replay) ---------------------------------

    def _irq_due(self) -> bool:
        return (
            self.irq_cursor < len(self.scenario.interrupts)
            and self.scenario.interrupts[self.irq_cursor].tick <= self.clock
        )

    def _stimulus_pending(self) -> bool:
        return self.irq_cursor < len(self.scenario.interrupts)

    def _irq_payload(self, index: int) -> bytes:
        spec = self.scenario.interrupts[index]
        if spec.payload is not None:
            return spec.payload
        rng = random.Random(f"{self.scenario.seed}|irq|{index}")
        return bytes(rng.randrange(256) for _ in range(spec.rand_len))

    def _interrupt_slot(self) -> None:
        slot = self.clock
        spec = self.scenario.interrupts[self.irq_cursor]
        payload = self._irq_payload(self.irq_cursor)
        self.irq_cursor += 1
        qid = self.queue_ids[spec.queue]
        q = self.queues[qid]
        cur = self.tasks[self.current] if self.current is not None else None
        self._emit(INTERRUPT_DISPATCH, self.current, self.current,
                   self._ctx_marker(cur) if cur else None, slot, obj=qid)
        if q.blocked_recv:
            q.sent += 1
            receiver = q.blocked_recv.popleft()
            self._complete_recv(receiver, payload, None, qid)
        elif len(q.pending) < q.capacity:
            q.sent += 1
            q.pending.append((payload, None))
        else:
            # interrupt context cannot block; posts to a full queue are lost
            q.dropped += 1
        self._drain_fx()
        self.clock += 1
        self._post_slot_schedule(slot, PREEMPTION, ACTIVATION)

    # -- delays ----------------------------------------------------------

    def _delay_due(self) -> bool:
        return any(t.state == DELAYED and t.wake_tick <= self.clock for t in self.tasks)

    def _delay_pending(self) -> bool:
        return any(t.state == DELAYED for t in self.tasks)

    def _delay_slot(self) -> None:
        slot = self.clock
        due = [t for t in self.tasks if t.state == DELAYED and t.wake_tick <= self.clock]
        due.sort(key=lambda t: (t.wake_tick, t.id))
        for tcb in due:
            if tcb.pc == len(tcb.program.body):
                # the delay was the instance's last statement
                self._instance_end(tcb)
                if tcb.blocked_kind is None:
                    self._make_ready(tcb.id)
            else:
                self._make_ready(tcb.id)
        self._drain_fx()
        self.clock += 1
        self._post_slot_schedule(slot, DELAY_EXPIRY, DELAY_EXPIRY)

    # -- scheduling after a slot ------------------------------------------

    def _post_slot_schedule(self, slot: int, preempt_kind: str, idle_kind: str) -> None:
        if self._leaving is not None:
            primitive, obj = self._leaving
            self._leaving = None
            old = self.current
            marker = self._ctx_marker(self.tasks[old])
            self.current = None
            nxt = self._pick_next()
            if nxt is not None:
                self.tasks[nxt].state = RUNNING
            self._emit(BLOCKING_CALL, old, nxt, marker, slot, primitive=primitive, obj=obj)
            self.current = nxt
            return
        if self.current is None:
            nxt = self._pick_next()
            if nxt is not None:
                self.tasks[nxt].state = RUNNING
                self._emit(idle_kind, None, nxt, None, slot)
                self.current = nxt
            return
        cur = self.tasks[self.current]
        best = self._best_ready_prio()
        if best is not None and best < cur.priority:
            marker = self._ctx_marker(cur)
            old = self.current
            self._make_ready(old, front=True)
            nxt = self._pick_next()
            self.tasks[nxt].state = RUNNING
            self._emit(preempt_kind, old, nxt, marker, slot)
            self.current = nxt

    # -- decisions and inputs (overridden during replay) ----------------------

    def _recv_should_block(self, tcb: TCB, qid: int, activation: bool) -> bool:
        return not self.queues[qid].pending

    def _send_should_block(self, tcb: TCB, qid: int) -> bool:
        q = self.queues[qid]
        return len(q.pending) >= q.capacity

    def _sem_should_block(self, tcb: TCB, sid: int) -> bool:
        return self.sems[sid].count == 0

    def _room_for_completion(self, q: MsgQueue) -> bool:
        return len(q.pending) < q.capacity

    def _assert_scheduling_invariant(self, tcb: TCB) -> None:
        best = self._best_ready_prio()
        if best is not None and best < tcb.priority:
            raise KernelError("higher-priority task ready while a lower one runs")

    def _try_consume(self, tcb: TCB, qid: int, activation: bool) -> Optional[Tuple[bytes, Optional[int]]]:
        """Pop the next pending message, scheduling sender completion."""
        q = self.queues[qid]
        if not q.pending:
            return None
        payload, sender = q.pending.popleft()
        q.delivered += 1
        if q.blocked_send:
            self._fx.append(("space", qid))
        return payload, sender

    def _read_port_value(self, tcb: TCB) -> int:
        pid = self.port_ids[tcb.program.body[tcb.pc].obj]
        cursor = self._port_cursor[pid]
        self._port_cursor[pid] = cursor + 1
        decl = self.scenario.ports[pid]
        if decl.data is not None:
            return decl.data[cursor % len(decl.data)]
        cache = self._port_cache[pid]
        if self._port_rngs[pid] is None:
            self._port_rngs[pid] = random.Random(f"{self.scenario.seed}|port|{decl.name}")
        rng = self._port_rngs[pid]
        while len(cache) <= cursor:
            cache.append(rng.randrange(256))
        return cache[cursor]

    def _verify_message(self, task: int, instance: int, index: int,
                        qid: int, payload: bytes) -> None:
        """Replay compares every delivered payload against the recording."""

    def _verify_activation(self, tcb: TCB) -> None:
        """Replay compares a fresh instance's state against its snapshot."""

    # -- instance lifecycle -------------------------------------------------

    def _activate(self, tcb: TCB, payload: Optional[bytes], sender: Optional[int],
                  queue_id: Optional[int], var: Optional[int], resume_pc: int) -> None:
        tcb.instance += 1
        tcb.pc_visits = {}
        tcb.arrival_idx = 0
        tcb.port_idx = 0
        tcb.instr_in_instance = 0
        tcb.pc = resume_pc
        self.hooks.on_activation(self, tcb.id, tcb.instance, self.clock)
        self._verify_activation(tcb)
        if payload is not None:
            self._verify_message(tcb.id, tcb.instance, 0, queue_id, payload)
            self.hooks.on_msg_received(self, tcb.id, tcb.instance, self.clock,
                                       queue_id, payload, sender, 0)
            tcb.arrival_idx = 1
            if var is not None:
                tcb.state_bytes[var] = payload[0]

    def _instance_end(self, tcb: TCB) -> None:
        """Body finished: reactivate from a pending message or await one."""
        if tcb.frames:
            raise KernelError("loop frames survived past body end")
        tcb.pc = 0
        tcb.pc_visits = {}
        aq = self.queue_ids[tcb.program.activation]
        if not self._recv_should_block(tcb, aq, activation=True):
            got = self._try_consume(tcb, aq, activation=True)
            if got is None:
                raise KernelError("activation consume failed after block check")
            payload, sender = got
            self._activate(tcb, payload, sender, aq, var=None, resume_pc=0)
            return
        tcb.state = BLOCKED_QUEUE
        tcb.blocked_kind = "recv"
        tcb.blocked_obj = aq
        tcb.blocked_var = None
        tcb.blocked_is_activation = True
        self.queues[aq].blocked_recv.append(tcb.id)
        if self.current == tcb.id:
            self._leaving = (PRIM_MSGQ_RECV, aq)

    # -- pc movement --------------------------------------------------------

    def _normalize_pc(self, tcb: TCB, target: int) -> int:
        while tcb.frames and target == tcb.frames[-1].end:
            top = tcb.frames[-1]
            top.remaining -= 1
            if top.remaining > 0:
                return top.head + 1
            tcb.frames.pop()
        return target

    def _advance_pc(self, tcb: TCB) -> None:
        tcb.pc = self._normalize_pc(tcb, tcb.pc + 1)
        if tcb.pc == len(tcb.program.body):
            self._fx.append(("iend", tcb.id))

    # -- effect application ---------------------------------------------------

    def _complete_recv(self, receiver: int, payload: bytes, sender: Optional[int], qid: int) -> None:
        """Finish a blocked receive with a delivered message (direct handoff)."""
        tcb = self.tasks[receiver]
        if tcb.state != BLOCKED_QUEUE or tcb.blocked_kind != "recv":
            raise KernelError("delivery to a task that is not receive-blocked")
        self.queues[qid].delivered += 1
        was_activation = tcb.blocked_is_activation
        var = tcb.blocked_var
        tcb.blocked_kind = None
        tcb.blocked_obj = None
        tcb.blocked_var = None
        tcb.blocked_is_activation = False
        if was_activation:
            resume = 0 if var is None else self._normalize_pc(tcb, tcb.pc + 1)
            self._activate(tcb, payload, sender, qid, var=var, resume_pc=resume)
        else:
            self._verify_message(tcb.id, tcb.instance, tcb.arrival_idx, qid, payload)
            tcb.state_bytes[var] = payload[0]
            self.hooks.on_msg_received(self, tcb.id, tcb.instance, self.clock,
                                       qid, payload, sender, tcb.arrival_idx)
            tcb.arrival_idx += 1
            tcb.pc = self._normalize_pc(tcb, tcb.pc + 1)
        if tcb.pc == len(tcb.program.body):
            self._instance_end(tcb)
        if tcb.blocked_kind is None:
            self._make_ready(tcb.id)

    def _complete_send(self, qid: int) -> None:
        q = self.queues[qid]
        if not q.blocked_send or not self._room_for_completion(q):
            return
        sid = q.blocked_send.popleft()
        tcb = self.tasks[sid]
        if tcb.state != BLOCKED_QUEUE or tcb.blocked_kind != "send":
            raise KernelError("send completion for a task that is not send-blocked")
        q.pending.append((tcb.held_payload, sid))
        q.sent += 1
        tcb.held_payload = None
        tcb.blocked_kind = None
        tcb.blocked_obj = None
        tcb.pc = self._normalize_pc(tcb, tcb.pc + 1)
        if tcb.pc == len(tcb.program.body):
            self._instance_end(tcb)
        if tcb.blocked_kind is None:
            self._make_ready(tcb.id)

    def _complete_sem_wait(self, sid: int) -> None:
        sem = self.sems[sid]
        if not sem.blocked:
            raise KernelError("semaphore handoff without waiters")
        tid = sem.blocked.popleft()
        tcb = self.tasks[tid]
        if tcb.state != BLOCKED_SEM:
            raise KernelError("semaphore handoff to a non-waiting task")
        tcb.blocked_kind = None
        tcb.blocked_obj = None
        tcb.pc = self._normalize_pc(tcb, tcb.pc + 1)
        if tcb.pc == len(tcb.program.body):
            self._instance_end(tcb)
        if tcb.blocked_kind is None:
            self._make_ready(tcb.id)

    def _drain_fx(self) -> None:
        while self._fx:
            fx = self._fx.popleft()
            if fx[0] == "handoff":
                _, qid, payload, sender = fx
                q = self.queues[qid]
                if not q.blocked_recv:
                    raise KernelError("handoff with no blocked receiver")
                receiver = q.blocked_recv.popleft()
                self._complete_recv(receiver, payload, sender, qid)
            elif fx[0] == "space":
                self._complete_send(fx[1])
            elif fx[0] == "sem":
                self._complete_sem_wait(fx[1])
            elif fx[0] == "iend":
                self._instance_end(self.tasks[fx[1]])
            else:
                raise KernelError(f"unknown effect {fx[0]!r}")

    # -- statement execution ---------------------------------------------------

    def _statement_slot(self) -> str:
        tcb = self.tasks[self.current]
        self._assert_scheduling_invariant(tcb)
        body = tcb.program.body
        if not 0 <= tcb.pc < len(body):
            raise KernelError(f"pc {tcb.pc} out of bounds for task {tcb.id}")
        stmt = body[tcb.pc]
        if stmt.op == dsl.FAIL:
            tcb.state = FAILED
            self._terminate(CAUSE_FAILED)
            return "done"
        tcb.pc_visits[tcb.pc] = tcb.pc_visits.get(tcb.pc, 0) + 1
        tcb.instr_in_instance += 1
        self._exec_stmt(tcb, stmt)
        self.clock += 1
        if self._leaving is not None and not self._fx and all(
            t.state in (HALTED, FAILED) for t in self.tasks
        ):
            # nothing left to switch to; the run ends at this tick
            self._leaving = None
            return "stmt"
        if self._fx or self._leaving is not None:
            slot = self.clock
            self._drain_fx()
            self.clock += 1
            self._post_slot_schedule(slot, PREEMPTION, ACTIVATION)
        return "stmt"

    def _exec_stmt(self, tcb: TCB, stmt: dsl.Statement) -> None:
        op = stmt.op
        if op == dsl.COMPUTE:
            if tcb.compute_left == 0:
                tcb.compute_left = stmt.count
            tcb.compute_left -= 1
            if tcb.compute_left == 0:
                self._advance_pc(tcb)
            return
        if op == dsl.SET:
            tcb.state_bytes[stmt.var] = stmt.expr.eval(bytes(tcb.state_bytes))
            self._advance_pc(tcb)
            return
        if op == dsl.HALT:
            tcb.state = HALTED
            self._leaving = (PRIM_HALT, None)
            return
        if op == dsl.LOOP:
            tcb.frames.append(LoopFrame(head=tcb.pc, end=stmt.end, remaining=stmt.count))
            tcb.pc = tcb.pc + 1
            return
        if op == dsl.IF:
            taken = dsl.compare(tcb.state_bytes[stmt.var], stmt.cmp, stmt.const)
            target = tcb.pc + 1 if taken else stmt.end
            tcb.pc = self._normalize_pc(tcb, target)
            if tcb.pc == len(tcb.program.body):
                self._fx.append(("iend", tcb.id))
            return
        if op == dsl.DELAY:
            self.hooks.on_blocking_call(self, tcb.id, PRIM_TASK_DELAY, None, self.clock)
            tcb.pc = self._normalize_pc(tcb, tcb.pc + 1)
            # if the body just ended, the instance end is handled on wake
            tcb.state = DELAYED
            tcb.wake_tick = self.clock + 1 + stmt.count
            self._leaving = (PRIM_TASK_DELAY, None)
            return
        if op == dsl.READ_PORT:
            pid = self.port_ids[stmt.obj]
            value = self._read_port_value(tcb)
            tcb.state_bytes[stmt.var] = value
            self.hooks.on_peripheral_read(self, tcb.id, tcb.instance, self.clock,
                                          pid, value, tcb.port_idx)
            tcb.port_idx += 1
            self._advance_pc(tcb)
            return
        if op == dsl.SEND:
            qid = self.queue_ids[stmt.obj]
            q = self.queues[qid]
            self.hooks.on_blocking_call(self, tcb.id, PRIM_MSGQ_SEND, qid, self.clock)
            payload = bytes([stmt.expr.eval(bytes(tcb.state_bytes))])
            if q.blocked_recv:
                q.sent += 1
                self._fx.append(("handoff", qid, payload, tcb.id))
                self._advance_pc(tcb)
            elif self._send_should_block(tcb, qid):
                tcb.state = BLOCKED_QUEUE
                tcb.blocked_kind = "send"
                tcb.blocked_obj = qid
                tcb.held_payload = payload
                q.blocked_send.append(tcb.id)
                self._leaving = (PRIM_MSGQ_SEND, qid)
            else:
                q.pending.append((payload, tcb.id))
                q.sent += 1
                self._advance_pc(tcb)
            return
        if op == dsl.RECV:
            qid = self.queue_ids[stmt.obj]
            self.hooks.on_blocking_call(self, tcb.id, PRIM_MSGQ_RECV, qid, self.clock)
            is_activation = qid == self.queue_ids[tcb.program.activation]
            if self._recv_should_block(tcb, qid, activation=is_activation):
                tcb.state = BLOCKED_QUEUE
                tcb.blocked_kind = "recv"
                tcb.blocked_obj = qid
                tcb.blocked_var = stmt.var
                tcb.blocked_is_activation = is_activation
                self.queues[qid].blocked_recv.append(tcb.id)
                self._leaving = (PRIM_MSGQ_RECV, qid)
                return
            got = self._try_consume(tcb, qid, activation=is_activation)
            if got is None:
                raise KernelError("consume failed after block check")
            payload, sender = got
            if is_activation:
                resume = self._normalize_pc(tcb, tcb.pc + 1)
                self._activate(tcb, payload, sender, qid, var=stmt.var, resume_pc=resume)
                if tcb.pc == len(tcb.program.body):
                    self._fx.append(("iend", tcb.id))
            else:
                self._verify_message(tcb.id, tcb.instance, tcb.arrival_idx, qid, payload)
                tcb.state_bytes[stmt.var] = payload[0]
                self.hooks.on_msg_received(self, tcb.id, tcb.instance, self.clock,
                                           qid, payload, sender, tcb.arrival_idx)
                tcb.arrival_idx += 1
                self._advance_pc(tcb)
            return
        if op == dsl.SEM_WAIT:
            sid = self.sem_ids[stmt.obj]
            self.hooks.on_blocking_call(self, tcb.id, PRIM_SEM_WAIT, sid, self.clock)
            if self._sem_should_block(tcb, sid):
                tcb.state = BLOCKED_SEM
                tcb.blocked_kind = "sem"
                tcb.blocked_obj = sid
                self.sems[sid].blocked.append(tcb.id)
                self._leaving = (PRIM_SEM_WAIT, sid)
            else:
                self.sems[sid].count -= 1
                self._advance_pc(tcb)
            return
        if op == dsl.SEM_SIGNAL:
            sid = self.sem_ids[stmt.obj]
            self.hooks.on_blocking_call(self, tcb.id, "sem_signal", sid, self.clock)
            sem = self.sems[sid]
            if sem.blocked:
                self._fx.append(("sem", sid))
            else:
                sem.count += 1
            self._advance_pc(tcb)
            return
        raise KernelError(f"unknown opcode {op!r}")

    # -- checkpointing -----------------------------------------------------

    def checkpoint_bytes(self) -> bytes:
        """Serialize the complete run state; callable at boundaries only."""
        if self._fx or self._leaving is not None:
            raise KernelError("checkpoint taken mid-intervention")
        w = Writer()
        w.u16(CHECKPOINT_VERSION)
        w.u64(self.clock)
        w.opt_i32(self.current)
        w.u32(self.irq_cursor)
        w.u64(self.event_seq)
        w.u8(1 if self._started else 0)
        w.u16(len(self.tasks))
        kinds = {None: 0, "recv": 1, "send": 2, "sem": 3}
        for tcb in self.tasks:
            w.u8(_STATE_CODES.index(tcb.state))
            w.u32(tcb.pc)
            w.u32(tcb.instance)
            w.u32(tcb.compute_left)
            w.u64(tcb.instr_in_instance)
            w.u32(tcb.arrival_idx)
            w.u32(tcb.port_idx)
            w.u64(tcb.wake_tick)
            w.u8(kinds[tcb.blocked_kind])
            w.opt_i32(tcb.blocked_obj)
            w.opt_i32(tcb.blocked_var)
            w.u8(1 if tcb.blocked_is_activation else 0)
            w.u8(1 if tcb.held_payload is not None else 0)
            w.blob(tcb.held_payload if tcb.held_payload is not None else b"")
            w.blob(bytes(tcb.state_bytes))
            w.u16(len(tcb.frames))
            for f in tcb.frames:
                w.u32(f.head)
                w.u32(f.end)
                w.u32(f.remaining)
            visits = sorted(tcb.pc_visits.items())
            w.u32(len(visits))
            for pc, count in visits:
                w.u32(pc)
                w.u32(count)
            w.u32(self._ctx_checksum(tcb))
        ready_flat = []
        for prio in sorted(self._ready):
            ready_flat.extend(self._ready[prio])
        w.u16(len(ready_flat))
        for tid in ready_flat:
            w.u16(tid)
        w.u16(len(self.queues))
        for q in self.queues:
            w.u16(len(q.pending))
            for payload, sender in q.pending:
                w.opt_i32(sender)
                w.blob(payload)
            w.u16(len(q.blocked_recv))
            for tid in q.blocked_recv:
                w.u16(tid)
            w.u16(len(q.blocked_send))
            for tid in q.blocked_send:
                w.u16(tid)
            w.u64(q.sent)
            w.u64(q.delivered)
            w.u64(q.dropped)
        w.u16(len(self.sems))
        for s in self.sems:
            w.u32(s.count)
            w.u16(len(s.blocked))
            for tid in s.blocked:
                w.u16(tid)
        w.u16(len(self._port_cursor))
        for cursor in self._port_cursor:
            w.u32(cursor)
        body = w.getvalue()
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    def restore_bytes(self, blob: bytes) -> None:
        """Replace the run state with a checkpoint's; verifies integrity."""
        if len(blob) < 4:
            raise CheckpointError("checkpoint too short")
        body, crc = blob[:-4], struct.unpack("<I", blob[-4:])[0]
        if zlib.crc32(body) & 0xFFFFFFFF != crc:
            raise CheckpointError("checkpoint blob checksum mismatch")
        r = Reader(body)
        version = r.u16()
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        self.clock = r.u64()
        self.current = r.opt_i32()
        self.irq_cursor = r.u32()
        self.event_seq = r.u64()
        self._started = r.u8() == 1
        n_tasks = r.u16()
        if n_tasks != len(self.tasks):
            raise CheckpointError("task count mismatch with scenario")
        kinds_rev = {0: None, 1: "recv", 2: "send", 3: "sem"}
        for tcb in self.tasks:
            tcb.state = _STATE_CODES[r.u8()]
            tcb.pc = r.u32()
            tcb.instance = r.u32()
            tcb.compute_left = r.u32()
            tcb.instr_in_instance = r.u64()
            tcb.arrival_idx = r.u32()
            tcb.port_idx = r.u32()
            tcb.wake_tick = r.u64()
            tcb.blocked_kind = kinds_rev[r.u8()]
            tcb.blocked_obj = r.opt_i32()
            tcb.blocked_var = r.opt_i32()
            tcb.blocked_is_activation = r.u8() == 1
            has_held = r.u8() == 1
            held = r.blob()
            tcb.held_payload = held if has_held else None
            tcb.state_bytes = bytearray(r.blob())
            if len(tcb.state_bytes) != tcb.program.state_size:
                raise CheckpointError(f"task {tcb.id}: state size mismatch")
            tcb.frames = [
                LoopFrame(head=r.u32(), end=r.u32(), remaining=r.u32())
                for _ in range(r.u16())
            ]
            tcb.pc_visits = {}
            for _ in range(r.u32()):
                pc = r.u32()
                tcb.pc_visits[pc] = r.u32()
            expected = r.u32()
            if self._ctx_checksum(tcb) != expected:
                raise CheckpointError(f"task {tcb.id}: context checksum mismatch")
        self._ready = {}
        n_ready = r.u16()
        for _ in range(n_ready):
            tid = r.u16()
            self._ready.setdefault(self.tasks[tid].priority, deque()).append(tid)
        n_queues = r.u16()
        if n_queues != len(self.queues):
            raise CheckpointError("queue count mismatch with scenario")
        for q in self.queues:
            q.pending = deque()
            for _ in range(r.u16()):
                sender = r.opt_i32()
                q.pending.append((r.blob(), sender))
            n_recv = r.u16()
            q.blocked_recv = deque(r.u16() for _ in range(n_recv))
            n_send = r.u16()
            q.blocked_send = deque(r.u16() for _ in range(n_send))
            q.sent = r.u64()
            q.delivered = r.u64()
            q.dropped = r.u64()
        n_sems = r.u16()
        if n_sems != len(self.sems):
            raise CheckpointError("sem count mismatch with scenario")
        for s in self.sems:
            s.count = r.u32()
            n_blocked = r.u16()
            s.blocked = deque(r.u16() for _ in range(n_blocked))
        n_ports = r.u16()
        if n_ports != len(self._port_cursor):
            raise CheckpointError("port count mismatch with scenario")
        self._port_cursor = [r.u32() for _ in range(n_ports)]
        self._port_cache = [bytearray() for _ in self._port_cursor]
        self._port_rngs = [None] * len(self._port_cursor)
        r.expect_end()
        self._fx.clear()
        self._leaving = None
        self.result = None
