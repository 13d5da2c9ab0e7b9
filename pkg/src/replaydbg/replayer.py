"""Replay engine: deterministic re-execution under a recorded plan.

The engine restores the kernel from the plan's checkpoint and re-runs task
code with three substitutions:

* scheduling is forced: every recorded context switch is applied at its
  recorded point, verified against the outgoing task's live context
  (statement index, occurrence, instance and checksum must all match);
* asynchronous interrupt dispatches are applied when the running task's
  context reaches the recorded marker, with the recorded tick as a
  cross-check, and their payloads come from the injection records;
* external inputs (interrupt messages, port reads) are answered from the
  plan, while internally produced messages are re-created by re-execution
  and compared against the recording.

Any disagreement is a divergence and ends the session: it means an input
the recorder did not capture influenced the run.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from replaydbg.analysis import ReplayPlan
from replaydbg.events import (
    BLOCKING_CALL,
    DELAY_EXPIRY,
    INTERRUPT_DISPATCH,
    ORIGIN_EXTERNAL,
    ORIGIN_INTERNAL,
    PRIM_MSGQ_SEND,
    PRIM_SEM_WAIT,
    ControlFlowEvent,
    Marker,
)
from replaydbg.kernel import (
    RUNNING,
    CheckpointError,
    Kernel,
    KernelError,
    KernelHooks,
    MsgQueue,
    TCB,
    filtered_state,
)
from replaydbg.scenario import parse_scenario, scenario_hash

STATUS_LOADED = "loaded"
STATUS_RUNNING = "running"
STATUS_HALTED = "halted_at_breakpoint"
STATUS_COMPLETED = "completed"
STATUS_DIVERGED = "divergence_detected"


class ChecksumMismatch(Exception):
    """Restored contexts disagree with the checkpoint's stored checksums."""


class BreakpointOutOfRange(ValueError):
    """Breakpoint target lies outside [t_start, t_fail]."""


class SessionStateError(RuntimeError):
    """Operation not valid in the session's current status."""


@dataclass
class DivergenceInfo:
    reason: str
    tick: int
    expected: Optional[Marker] = None
    observed: Optional[Marker] = None
    event_seq: Optional[int] = None

    def to_dict(self) -> dict:
        def marker_dict(m):
            if m is None:
                return None
            return {"task": m.task, "instance": m.instance, "pc": m.pc,
                    "occurrence": m.occurrence, "checksum": m.checksum}

        return {
            "reason": self.reason,
            "tick": self.tick,
            "expected": marker_dict(self.expected),
            "observed": marker_dict(self.observed),
            "event_seq": self.event_seq,
        }


class DivergenceError(Exception):
    def __init__(self, info: DivergenceInfo):
        super().__init__(f"divergence at tick {info.tick}: {info.reason}")
        self.info = info


class ReplayKernel(Kernel):
    """Kernel subclass with forced scheduling and injected inputs."""

    def __init__(self, scenario, plan: ReplayPlan, hooks: Optional[KernelHooks] = None):
        super().__init__(scenario, hooks)
        self.plan = plan
        self.cursor = 0
        self.replayed = set(plan.replayed)
        self.restored_remaining: Dict[int, int] = {}
        self.phantom_posts: Dict[int, int] = {}
        self.verified_internal = 0
        self.verified_snapshots = 0
        self.injected_external = 0
        self.divergence: Optional[DivergenceInfo] = None

    def load(self) -> None:
        try:
            self.restore_bytes(self.plan.checkpoint)
        except CheckpointError as exc:
            raise ChecksumMismatch(str(exc)) from exc
        if self.clock != self.plan.t_start:
            raise ChecksumMismatch(
                f"checkpoint tick {self.clock} disagrees with plan start {self.plan.t_start}"
            )
        self.restored_remaining = {q.id: len(q.pending) for q in self.queues}

    # -- divergence ----------------------------------------------------------

    def _diverge(self, reason: str, expected: Optional[Marker] = None,
                 observed: Optional[Marker] = None,
                 event: Optional[ControlFlowEvent] = None) -> None:
        if expected is None and event is not None:
            expected = event.marker
        self.divergence = DivergenceInfo(
            reason=reason,
            tick=self.clock,
            expected=expected,
            observed=observed,
            event_seq=event.seq if event is not None else None,
        )
        raise DivergenceError(self.divergence)

    def _observed(self) -> Optional[Marker]:
        if self.current is None:
            return None
        return self._ctx_marker(self.tasks[self.current])

    # -- forced event helpers --------------------------------------------------

    def _next_forced(self) -> Optional[ControlFlowEvent]:
        if self.cursor < len(self.plan.events):
            return self.plan.events[self.cursor]
        return None

    @staticmethod
    def _marker_position_match(expected: Marker, observed: Marker) -> bool:
        """Position equality: statement index, occurrence and instance.

        The occurrence ordinal is what distinguishes revisits of one
        statement index (loop iterations, multi-tick statements); dropping
        it makes the first revisit match and replay derails.
        """
        return (
            expected.pc == observed.pc
            and expected.occurrence == observed.occurrence
            and expected.instance == observed.instance
        )

    def _check_marker(self, ev: ControlFlowEvent, tcb: TCB) -> None:
        observed = self._ctx_marker(tcb)
        expected = ev.marker
        if expected is None or expected.task != observed.task:
            self._diverge("switch recorded for a different task",
                          expected=expected, observed=observed, event=ev)
        if not self._marker_position_match(expected, observed):
            self._diverge("context position differs from recorded marker",
                          expected=expected, observed=observed, event=ev)
        if expected.checksum != observed.checksum:
            self._diverge("context checksum differs at the recorded position",
                          expected=expected, observed=observed, event=ev)

    # -- stepping with pre-checks ----------------------------------------------

    def step_slot(self) -> str:
        if self.result is not None:
            return "done"
        ev = self._next_forced()
        if ev is not None:
            if ev.tick < self.clock:
                self._diverge("recorded event is overdue", event=ev,
                              observed=self._observed())
            if ev.tick == self.clock:
                if ev.kind == INTERRUPT_DISPATCH:
                    if not self._irq_due():
                        self._diverge("interrupt context was not reached at its tick",
                                      event=ev, observed=self._observed())
                elif ev.kind == DELAY_EXPIRY:
                    if not self._delay_due():
                        self._diverge("recorded delay expiry has no due timer",
                                      event=ev, observed=self._observed())
                else:
                    self._diverge("recorded switch was not produced",
                                  event=ev, observed=self._observed())
        return super().step_slot()

    # -- stimulus -----------------------------------------------------------

    def _irq_due(self) -> bool:
        ev = self._next_forced()
        if ev is None or ev.kind != INTERRUPT_DISPATCH:
            return False
        if self.current is None:
            return ev.from_task is None and ev.tick == self.clock
        if ev.from_task != self.current or ev.marker is None:
            return False
        return self._marker_position_match(ev.marker, self._ctx_marker(self.tasks[self.current]))

    def _stimulus_pending(self) -> bool:
        return self.cursor < len(self.plan.events)

    def _interrupt_slot(self) -> None:
        slot = self.clock
        ev = self.plan.events[self.cursor]
        if ev.tick != slot:
            # context matched but at the wrong time: an occurrence-level skew
            self._diverge("interrupt context matched at the wrong tick",
                          event=ev, observed=self._observed())
        if self.current is not None:
            self._check_marker(ev, self.tasks[self.current])
        self.cursor += 1
        self.hooks.on_control_event(self, ev)
        qid = ev.obj
        q = self.queues[qid]
        if q.blocked_recv:
            receiver = q.blocked_recv.popleft()
            payload = self._delivery_payload(receiver, qid, ev)
            q.sent += 1
            self._complete_recv(receiver, payload, None, qid)
        else:
            self.phantom_posts[qid] = self.phantom_posts.get(qid, 0) + 1
        self._drain_fx()
        self.clock += 1
        self._post_slot_schedule(slot, "preemption", "activation")

    def _delivery_payload(self, receiver: int, qid: int, ev: ControlFlowEvent) -> bytes:
        tcb = self.tasks[receiver]
        if tcb.blocked_is_activation:
            key = (receiver, tcb.instance + 1, 0)
        else:
            key = (receiver, tcb.instance, tcb.arrival_idx)
        rec = self.plan.msg_records.get(key)
        if rec is None or rec.origin != ORIGIN_EXTERNAL or rec.queue != qid:
            self._diverge("interrupt delivery without a matching external record",
                          event=ev, observed=self._observed())
        if rec.tick != self.clock:
            self._diverge("external record tick disagrees with delivery",
                          event=ev, observed=self._observed())
        return rec.payload

    # -- forced scheduling -------------------------------------------------------

    def _post_slot_schedule(self, slot: int, preempt_kind: str, idle_kind: str) -> None:
        ev = self._next_forced()
        due = ev is not None and ev.tick == slot and ev.kind != INTERRUPT_DISPATCH
        if self._leaving is not None:
            primitive, obj = self._leaving
            self._leaving = None
            old = self.current
            otcb = self.tasks[old]
            if not due or ev.kind != BLOCKING_CALL:
                self._diverge("task blocked where no blocking switch was recorded",
                              observed=self._ctx_marker(otcb), event=ev if due else None)
            if ev.from_task != old or ev.primitive != primitive or ev.obj != obj:
                self._diverge("blocking switch disagrees with recording",
                              observed=self._ctx_marker(otcb), event=ev)
            self._check_marker(ev, otcb)
            self.cursor += 1
            self.current = None
            if ev.to_task is not None:
                self._force_dispatch(ev)
            self.hooks.on_control_event(self, ev)
            return
        if due:
            if ev.kind == BLOCKING_CALL:
                self._diverge("recorded blocking switch but the task did not block",
                              event=ev, observed=self._observed())
            if ev.from_task != self.current:
                self._diverge("switch source disagrees with recording",
                              event=ev, observed=self._observed())
            if self.current is not None:
                self._check_marker(ev, self.tasks[self.current])
                self._make_ready(self.current, front=True)
                self.current = None
            if ev.to_task is None:
                self._diverge("recorded preemption without a target", event=ev)
            self._force_dispatch(ev)
            self.cursor += 1
            self.hooks.on_control_event(self, ev)
            return
        if self.current is None:
            return
        best = self._best_ready_prio()
        if best is not None and best < self.tasks[self.current].priority:
            self._diverge("preemption condition arose with no recorded switch",
                          observed=self._observed())

    def _force_dispatch(self, ev: ControlFlowEvent) -> None:
        try:
            self._take_ready(ev.to_task)
        except KernelError:
            self._diverge("switch target is not ready", event=ev,
                          observed=self._observed())
        self.tasks[ev.to_task].state = RUNNING
        self.current = ev.to_task

    # -- decisions and inputs ---------------------------------------------------

    def _msg_key(self, tcb: TCB, activation: bool) -> Tuple[int, int, int]:
        if activation:
            return (tcb.id, tcb.instance + 1, 0)
        return (tcb.id, tcb.instance, tcb.arrival_idx)

    def _recv_should_block(self, tcb: TCB, qid: int, activation: bool) -> bool:
        rec = self.plan.msg_records.get(self._msg_key(tcb, activation))
        return rec is None or rec.tick != self.clock or rec.queue != qid

    def _send_should_block(self, tcb: TCB, qid: int) -> bool:
        ev = self._next_forced()
        if (
            ev is None
            or ev.kind != BLOCKING_CALL
            or ev.primitive != PRIM_MSGQ_SEND
            or ev.from_task != tcb.id
            or ev.obj != qid
            or ev.tick != self.clock + 1
            or ev.marker is None
        ):
            return False
        return self._marker_position_match(ev.marker, self._ctx_marker(tcb))

    def _sem_should_block(self, tcb: TCB, sid: int) -> bool:
        ev = self._next_forced()
        forced = (
            ev is not None
            and ev.kind == BLOCKING_CALL
            and ev.primitive == PRIM_SEM_WAIT
            and ev.from_task == tcb.id
            and ev.obj == sid
            and ev.tick == self.clock + 1
            and ev.marker is not None
            and self._marker_position_match(ev.marker, self._ctx_marker(tcb))
        )
        count = self.sems[sid].count
        if forced and count > 0:
            self._diverge("semaphore holds a count where the recording blocked",
                          observed=self._ctx_marker(tcb))
        if not forced and count == 0:
            self._diverge("semaphore is empty where the recording proceeded",
                          observed=self._ctx_marker(tcb))
        return forced

    def _room_for_completion(self, q: MsgQueue) -> bool:
        # queue occupancy may run under or over the recording's because
        # external posts are not physically re-created; completions follow
        # the recording via the forced schedule instead of the capacity test
        return True

    def _assert_scheduling_invariant(self, tcb: TCB) -> None:
        pass

    def _try_consume(self, tcb: TCB, qid: int, activation: bool):
        key = self._msg_key(tcb, activation)
        rec = self.plan.msg_records.get(key)
        if rec is None or rec.queue != qid or rec.tick != self.clock:
            self._diverge("message consumed with no matching record",
                          observed=self._observed())
        q = self.queues[qid]
        remaining = self.restored_remaining.get(qid, 0)
        if remaining > 0:
            if not q.pending:
                self._diverge("checkpointed message missing from queue",
                              observed=self._observed())
            self.restored_remaining[qid] = remaining - 1
            payload, sender = q.pending.popleft()
            q.delivered += 1
            if q.blocked_send:
                self._fx.append(("space", qid))
            if payload != rec.payload:
                self._diverge("checkpointed payload differs from the recording",
                              observed=self._observed())
            return payload, sender
        if rec.origin == ORIGIN_INTERNAL:
            if not q.pending:
                self._diverge("re-executed message missing from queue",
                              observed=self._observed())
            payload, sender = q.pending.popleft()
            q.delivered += 1
            if q.blocked_send:
                self._fx.append(("space", qid))
            return payload, sender
        # external and not in the restored prefix: pure injection
        return rec.payload, None

    def _read_port_value(self, tcb: TCB) -> int:
        pid = self.port_ids[tcb.program.body[tcb.pc].obj]
        rec = self.plan.port_records.get((tcb.id, tcb.instance, tcb.port_idx))
        if rec is None or rec.port != pid or rec.tick != self.clock:
            self._diverge("port read with no matching record",
                          observed=self._ctx_marker(tcb))
        self.injected_external += 1
        return rec.value

    def _verify_message(self, task: int, instance: int, index: int,
                        qid: int, payload: bytes) -> None:
        rec = self.plan.msg_records.get((task, instance, index))
        if rec is None:
            self._diverge("message input was never recorded", observed=self._observed())
        if rec.queue != qid or rec.payload != payload:
            self._diverge("message payload disagrees with the recording",
                          observed=self._observed())
        if rec.origin == ORIGIN_INTERNAL:
            self.verified_internal += 1
        else:
            self.injected_external += 1

    def _verify_activation(self, tcb: TCB) -> None:
        snap = self.plan.snapshots.get((tcb.id, tcb.instance))
        if snap is None:
            self._diverge("activation snapshot missing from the recording",
                          observed=self._ctx_marker(tcb))
        tick, data = snap
        if tick != self.clock:
            self._diverge("activation happened at an unrecorded tick",
                          observed=self._ctx_marker(tcb))
        if filtered_state(tcb) != data:
            self._diverge("instance state differs from its recorded snapshot",
                          observed=self._ctx_marker(tcb))
        self.verified_snapshots += 1


# --- breakpoints and sessions -------------------------------------------------

AT_TICK = "tick"
AT_MARKER = "marker"
AT_EVENT = "event"


@dataclass
class Breakpoint:
    id: int
    kind: str
    enabled: bool = True
    one_shot: bool = False
    fired: bool = False
    tick: Optional[int] = None
    task: Optional[int] = None
    pc: Optional[int] = None
    occurrence: Optional[int] = None
    instance: Optional[int] = None
    seq: Optional[int] = None

    def describe(self) -> str:
        if self.kind == AT_TICK:
            return f"tick {self.tick}"
        if self.kind == AT_EVENT:
            return f"event {self.seq}"
        return (f"task {self.task} pc {self.pc} occurrence {self.occurrence} "
                f"instance {self.instance}")


@dataclass
class DeterminismReport:
    checks: Dict[str, bool]
    counts: Dict[str, int]
    divergence: Optional[DivergenceInfo] = None

    @property
    def all_passed(self) -> bool:
        return self.divergence is None and all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "all_passed": self.all_passed,
            "checks": dict(self.checks),
            "counts": dict(self.counts),
            "divergence": self.divergence.to_dict() if self.divergence else None,
        }

    def summary(self) -> str:
        lines = [f"determinism report: {'PASS' if self.all_passed else 'FAIL'}"]
        for name, ok in self.checks.items():
            lines.append(f"  [{'ok' if ok else 'FAIL'}] {name}")
        for name, value in self.counts.items():
            lines.append(f"  {name}: {value}")
        if self.divergence is not None:
            lines.append(f"  divergence: {self.divergence.reason} at tick {self.divergence.tick}")
        return "\n".join(lines)


class ReplaySession:
    """One controllable replay of one plan.

    Operations are serialized by contract; a session owns its simulator.
    Travelling backward reloads from the start checkpoint and re-runs, so
    no state survives a rewind.
    """

    def __init__(self, plan: ReplayPlan, hooks: Optional[KernelHooks] = None):
        self.plan = plan
        self.scenario = parse_scenario(plan.scenario_text)
        if scenario_hash(self.scenario) != plan.scenario_hash:
            raise ChecksumMismatch("plan's scenario text does not match its hash")
        self._hooks = hooks
        self.breakpoints: Dict[int, Breakpoint] = {}
        self._next_bp_id = 1
        self.halted_at: Optional[Breakpoint] = None
        self.kernel = self._fresh_kernel()
        self.status = STATUS_LOADED

    def _fresh_kernel(self) -> ReplayKernel:
        kernel = ReplayKernel(self.scenario, self.plan, self._hooks)
        kernel.load()
        return kernel

    # -- breakpoints -------------------------------------------------------

    def add_breakpoint(self, *, tick: Optional[int] = None,
                       marker: Optional[Tuple[int, int, int, int]] = None,
                       event_seq: Optional[int] = None,
                       one_shot: bool = False) -> Breakpoint:
        """One of: tick, marker=(task, pc, occurrence, instance), event_seq."""
        given = [x is not None for x in (tick, marker, event_seq)]
        if sum(given) != 1:
            raise ValueError("exactly one breakpoint target required")
        bp = Breakpoint(id=self._next_bp_id, kind=AT_TICK, one_shot=one_shot)
        self._next_bp_id += 1
        if tick is not None:
            if not self.plan.t_start <= tick <= self.plan.t_fail:
                raise BreakpointOutOfRange(
                    f"tick {tick} outside [{self.plan.t_start}, {self.plan.t_fail}]"
                )
            bp.kind = AT_TICK
            bp.tick = tick
        elif marker is not None:
            task, pc, occurrence, instance = marker
            if task not in self.plan.replayed:
                raise BreakpointOutOfRange(f"task {task} is not replayed")
            bp.kind = AT_MARKER
            bp.task, bp.pc, bp.occurrence, bp.instance = task, pc, occurrence, instance
        else:
            seqs = [e.seq for e in self.plan.events]
            if event_seq not in seqs:
                raise BreakpointOutOfRange(f"event seq {event_seq} not in plan")
            bp.kind = AT_EVENT
            bp.seq = event_seq
        self.breakpoints[bp.id] = bp
        return bp

    def remove_breakpoint(self, bp_id: int) -> None:
        self.breakpoints.pop(bp_id, None)

    def _bp_matches(self, bp: Breakpoint) -> bool:
        k = self.kernel
        if bp.kind == AT_TICK:
            return k.clock >= bp.tick
        if bp.kind == AT_EVENT:
            ev = k._next_forced()
            return ev is not None and ev.seq == bp.seq
        if k.current != bp.task:
            return False
        m = k._ctx_marker(k.tasks[bp.task])
        if (m.pc, m.occurrence, m.instance) == (bp.pc, bp.occurrence, bp.instance):
            return True
        # blocking-call markers are taken inside a statement/intervention
        # pair; the closest clean boundary is just before the pair
        ev = k._next_forced()
        if ev is not None and ev.marker is not None and ev.from_task == bp.task \
                and ev.tick == k.clock + 1:
            em = ev.marker
            return (em.pc, em.occurrence, em.instance) == (bp.pc, bp.occurrence, bp.instance)
        return False

    def _match_breakpoint(self) -> Optional[Breakpoint]:
        for bp in self.breakpoints.values():
            if bp.enabled and not bp.fired and self._bp_matches(bp):
                return bp
        return None

    # -- driving -------------------------------------------------------------

    def _require(self, *statuses: str) -> None:
        if self.status not in statuses:
            raise SessionStateError(f"operation invalid in status {self.status!r}")

    def _finish_check(self) -> bool:
        """True when the session just completed (or diverged on skew)."""
        k = self.kernel
        if k.clock > self.plan.t_fail:
            self.status = STATUS_DIVERGED
            k.divergence = DivergenceInfo(
                reason="replay ran past the recorded end", tick=k.clock
            )
            return True
        if k.clock == self.plan.t_fail or k.result is not None:
            if k.clock == self.plan.t_fail:
                self.status = STATUS_COMPLETED
            else:
                self.status = STATUS_DIVERGED
                k.divergence = DivergenceInfo(
                    reason="replay terminated before the recorded end", tick=k.clock
                )
            return True
        return False

    def continue_(self) -> str:
        self._require(STATUS_LOADED, STATUS_HALTED)
        skip_bp_once = self.status == STATUS_HALTED
        self.status = STATUS_RUNNING
        self.halted_at = None
        while True:
            if self._finish_check():
                return self.status
            if not skip_bp_once:
                bp = self._match_breakpoint()
                if bp is not None:
                    bp.fired = True
                    if bp.one_shot:
                        self.breakpoints.pop(bp.id, None)
                    self.halted_at = bp
                    self.status = STATUS_HALTED
                    return self.status
            skip_bp_once = False
            if not self._step_guarded():
                return self.status

    def step(self) -> str:
        """Advance by exactly one statement of the scheduled task."""
        self._require(STATUS_LOADED, STATUS_HALTED)
        self.status = STATUS_RUNNING
        while True:
            if self._finish_check():
                return self.status
            tag = self._step_guarded_tag()
            if tag is None:
                return self.status
            if tag == "stmt":
                if not self._finish_check():
                    self.status = STATUS_HALTED
                return self.status

    def _step_guarded(self) -> bool:
        return self._step_guarded_tag() is not None

    def _step_guarded_tag(self) -> Optional[str]:
        try:
            return self.kernel.step_slot()
        except DivergenceError:
            self.status = STATUS_DIVERGED
            return None

    def run_to(self, *, tick: Optional[int] = None,
               marker: Optional[Tuple[int, int, int, int]] = None,
               event_seq: Optional[int] = None) -> str:
        """Continue to a one-shot target; an earlier tick rewinds first."""
        if tick is not None and tick < self.kernel.clock:
            self.reload()
        if self.status in (STATUS_COMPLETED, STATUS_DIVERGED):
            raise SessionStateError(f"cannot run_to in status {self.status!r}")
        self.add_breakpoint(tick=tick, marker=marker, event_seq=event_seq, one_shot=True)
        return self.continue_()

    def reload(self) -> None:
        """Fresh simulator from the start checkpoint; breakpoints survive."""
        self.kernel = self._fresh_kernel()
        for bp in self.breakpoints.values():
            bp.fired = False
        self.halted_at = None
        self.status = STATUS_LOADED

    # -- inspection --------------------------------------------------------------

    def inspect(self, task: int) -> dict:
        self._require(STATUS_LOADED, STATUS_HALTED, STATUS_COMPLETED, STATUS_DIVERGED)
        if task not in self.kernel.replayed:
            raise ValueError(f"task {task} is not part of the replayed set")
        tcb = self.kernel.tasks[task]
        pending_msgs = sorted(
            idx for (tid, inst, idx), rec in self.plan.msg_records.items()
            if tid == task and inst == tcb.instance and idx >= tcb.arrival_idx
            and rec.origin == ORIGIN_EXTERNAL
        )
        pending_ports = sorted(
            idx for (tid, inst, idx) in self.plan.port_records
            if tid == task and inst == tcb.instance and idx >= tcb.port_idx
        )
        return {
            "task": task,
            "name": tcb.program.name,
            "sched_state": tcb.state,
            "pc": tcb.pc,
            "instance": tcb.instance,
            "state_bytes": bytes(tcb.state_bytes).hex(),
            "loop_counters": tcb.loop_counters(),
            "statements_in_instance": tcb.instr_in_instance,
            "pending_external_messages": pending_msgs,
            "pending_port_reads": pending_ports,
        }

    def state_fingerprint(self) -> bytes:
        """Full kernel serialization; equal fingerprints mean equal states."""
        return self.kernel.checkpoint_bytes()

    def timeline(self, begin: int, end: int) -> List[ControlFlowEvent]:
        return [e for e in self.plan.events if begin <= e.tick <= end]

    # -- verification -----------------------------------------------------------

    def verify(self) -> DeterminismReport:
        """Determinism report; valid once the session completed or diverged."""
        self._require(STATUS_COMPLETED, STATUS_DIVERGED)
        k = self.kernel
        plan = self.plan
        internal_expected = sum(
            1 for rec in plan.msg_records.values() if rec.origin == ORIGIN_INTERNAL
        )
        external_expected = sum(
            1 for rec in plan.msg_records.values() if rec.origin == ORIGIN_EXTERNAL
        ) + len(plan.port_records)
        final_ok = all(
            k._ctx_checksum(k.tasks[tid]) == plan.final_checksums.get(tid)
            for tid in plan.replayed
        )
        checks = {
            "completed_at_recorded_end": self.status == STATUS_COMPLETED
            and k.clock == plan.t_fail,
            "forced_switches_consumed": k.cursor == len(plan.events),
            "internal_messages_verified": k.verified_internal == internal_expected,
            "snapshots_verified": k.verified_snapshots == len(plan.snapshots),
            "external_injections_consumed": k.injected_external == external_expected,
            "final_state_checksums_match": final_ok,
        }
        counts = {
            "forced_events": len(plan.events),
            "events_applied": k.cursor,
            "internal_messages": internal_expected,
            "external_injections": external_expected,
            "snapshots": len(plan.snapshots),
            "phantom_posts": sum(k.phantom_posts.values()),
            "end_tick": k.clock,
        }
        return DeterminismReport(checks=checks, counts=counts, divergence=k.divergence)


def load(plan: ReplayPlan, hooks: Optional[KernelHooks] = None) -> ReplaySession:
    """Build a session from a plan; raises ChecksumMismatch on corruption."""
    return ReplaySession(plan, hooks)


def replay_and_verify(plan: ReplayPlan) -> DeterminismReport:
    session = load(plan)
    session.continue_()
    return session.verify()
