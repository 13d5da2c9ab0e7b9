"""Kernel semantics: scheduling, blocking primitives, checkpoints."""

import pytest

from replaydbg import events, kernel as k
from replaydbg.kernel import Kernel
from replaydbg.recorder import SwitchLog
from replaydbg.scenario import parse_scenario


def run_logged(text, upto=None):
    sc = parse_scenario(text)
    log = SwitchLog()
    sim = Kernel(sc, log)
    result = sim.run()
    return sim, log, result


def test_single_task_compute_halt_terminates_at_tick_6():
    # 5 compute ticks in slots 0-4, HALT in slot 5, no switch slot afterwards
    sim, log, result = run_logged(
        """
        queue Q capacity 1
        task solo priority 1 state 2 activation Q {
            COMPUTE 5
            HALT
        }
        """
    )
    assert result.cause == k.ALL_HALTED
    assert result.tick == 6
    assert log.events == []


def test_equal_priority_declared_first_runs_first():
    sim, log, result = run_logged(
        """
        queue Q capacity 1
        task second_in_file priority 3 state 2 activation Q {
            COMPUTE 1
            HALT
        }
        task also_prio_3 priority 3 state 2 activation Q {
            COMPUTE 1
            HALT
        }
        """
    )
    assert result.cause == k.ALL_HALTED
    first_switch = log.events[0]
    assert first_switch.kind == events.BLOCKING_CALL
    assert first_switch.primitive == events.PRIM_HALT
    assert first_switch.from_task == 0
    assert first_switch.to_task == 1


def test_interrupt_activation_preempts_low_priority_mid_compute():
    # hi runs first (priority), finishes, awaits activation; lo grinds a long
    # COMPUTE; the interrupt at tick 10 activates hi and preempts lo there.
    sim, log, result = run_logged(
        """
        limit 200
        queue HQ capacity 1
        queue LQ capacity 1
        task hi priority 1 state 2 activation HQ {
            COMPUTE 2
        }
        task lo priority 5 state 2 activation LQ {
            COMPUTE 30
        }
        at 10 post HQ [1]
        """
    )
    dispatch = next(e for e in log.events if e.kind == events.INTERRUPT_DISPATCH)
    assert dispatch.tick == 10
    switch = next(e for e in log.events if e.kind == events.PREEMPTION)
    assert switch.tick == 10
    assert sim.task_name(switch.from_task) == "lo"
    assert sim.task_name(switch.to_task) == "hi"
    # the preempted task keeps a mid-statement position
    assert switch.marker is not None
    assert switch.marker.task == switch.from_task


def test_sem_wait_with_count_does_not_block():
    sim, log, result = run_logged(
        """
        queue Q capacity 1
        sem S count 1
        task t priority 1 state 2 activation Q {
            SEM_WAIT S
            HALT
        }
        """
    )
    assert result.cause == k.ALL_HALTED
    assert sim.sems[0].count == 0
    assert all(e.primitive != events.PRIM_SEM_WAIT for e in log.events)


def test_sem_fifo_wakeup_order():
    sim, log, result = run_logged(
        """
        limit 100
        queue Q capacity 1
        sem S count 0
        task a priority 1 state 2 activation Q {
            SEM_WAIT S
            SET v0 = 1
            HALT
        }
        task b priority 2 state 2 activation Q {
            SEM_WAIT S
            SET v0 = 1
            HALT
        }
        task c priority 3 state 2 activation Q {
            SEM_SIGNAL S
            SEM_SIGNAL S
            COMPUTE 1
            HALT
        }
        """
    )
    assert result.cause == k.ALL_HALTED
    # both waiters completed their post-wait statement
    assert sim.tasks[0].state_bytes[0] == 1
    assert sim.tasks[1].state_bytes[0] == 1
    # a blocked before b, so a was woken by the first signal: the first
    # preemption of c goes to a, the second to b
    wakes = [e for e in log.events if e.kind == events.PREEMPTION and e.from_task == 2]
    assert [sim.task_name(e.to_task) for e in wakes] == ["a", "b"]


def test_two_blocked_receivers_first_blocked_wakes_first():
    sim, log, result = run_logged(
        """
        limit 100
        queue Q capacity 1
        queue D capacity 1
        task r1 priority 1 state 2 activation Q {
            RECV D v0
            HALT
        }
        task r2 priority 2 state 2 activation Q {
            RECV D v0
            HALT
        }
        task s priority 3 state 2 activation Q {
            SEND D 7
            COMPUTE 1
            HALT
        }
        """
    )
    assert sim.tasks[0].state_bytes[0] == 7
    assert sim.tasks[0].state == k.HALTED
    # r2 never got a message and still waits on the queue
    assert sim.tasks[1].state == k.BLOCKED_QUEUE
    assert result.cause == k.DEADLOCKED


def test_send_to_full_queue_blocks_until_space():
    sim, log, result = run_logged(
        """
        limit 100
        queue Q capacity 1
        queue D capacity 1
        task producer priority 1 state 2 activation Q {
            SEND D 1
            SEND D 2
            SET v1 = 9
            HALT
        }
        task consumer priority 2 state 2 activation Q {
            COMPUTE 3
            RECV D v0
            COMPUTE 1
            RECV D v0
            HALT
        }
        """
    )
    assert result.cause == k.ALL_HALTED
    blocked_send = [e for e in log.events if e.primitive == events.PRIM_MSGQ_SEND]
    assert len(blocked_send) == 1  # the second send blocked on the full queue
    assert sim.tasks[0].state_bytes[1] == 9
    assert sim.tasks[1].state_bytes[0] == 2  # consumer saw both messages in order


def test_message_conservation_per_queue():
    sim, log, result = run_logged(
        """
        limit 300
        queue Q capacity 2
        queue D capacity 2
        task p priority 1 state 2 activation Q {
            SEND D 1
            SEND D 2
            SEND D 3
            HALT
        }
        task c priority 2 state 2 activation Q {
            RECV D v0
            HALT
        }
        at 5 post Q [1]
        """
    )
    for q in sim.queues:
        assert q.sent == q.delivered + len(q.pending)


def test_deadlock_reported_as_cause_not_error():
    sim, log, result = run_logged(
        """
        limit 50
        queue Q capacity 1
        task t priority 1 state 2 activation Q {
            COMPUTE 1
        }
        """
    )
    assert result.cause == k.DEADLOCKED


def test_run_limit_cause():
    sim, log, result = run_logged(
        """
        limit 10
        queue Q capacity 1
        task t priority 1 state 2 activation Q {
            LOOP 100 {
                COMPUTE 5
            }
        }
        """
    )
    assert result.cause == k.RUN_LIMIT
    assert result.tick >= 10


def test_fail_statement_sets_failure_tick():
    sim, log, result = run_logged(
        """
        queue Q capacity 1
        task t priority 1 state 2 activation Q {
            COMPUTE 3
            FAIL
        }
        """
    )
    assert result.cause == k.CAUSE_FAILED
    assert result.tick == 3  # fail detected when fetched, clock does not advance


def test_delay_sleeps_exactly_n_ticks():
    sim, log, result = run_logged(
        """
        limit 50
        queue Q capacity 1
        task t priority 1 state 2 activation Q {
            DELAY 4
            HALT
        }
        """
    )
    # slot 0 delay statement, slot 1 switch to idle, wake at tick 5,
    # delay-expiry slot 5, halt slot 6
    assert result.cause == k.ALL_HALTED
    expiry = next(e for e in log.events if e.kind == events.DELAY_EXPIRY)
    assert expiry.tick == 5
    assert result.tick == 7


def test_activation_message_starts_new_instance():
    sim, log, result = run_logged(
        """
        limit 100
        queue ACT capacity 2
        task t priority 1 state 2 activation ACT {
            SET v0 = v0 + 1
        }
        at 8 post ACT [1]
        at 20 post ACT [2]
        """
    )
    assert sim.tasks[0].instance == 3  # initial + two activations
    assert sim.tasks[0].state_bytes[0] == 3
    assert result.cause == k.DEADLOCKED


def run_twice_and_compare(text):
    sim1, log1, res1 = run_logged(text)
    sim2, log2, res2 = run_logged(text)
    assert log1.events == log2.events
    assert res1.final_checksums == res2.final_checksums
    assert res1.tick == res2.tick


def test_rerun_is_identical():
    run_twice_and_compare(
        """
        seed 7
        limit 400
        queue A capacity 2
        queue B capacity 1
        port P rand
        task x priority 1 state 4 activation A {
            READ_PORT P v0
            IF v0 > 128 {
                SEND B v0
            }
            COMPUTE 2
        }
        task y priority 2 state 4 activation B {
            RECV B v1
            COMPUTE 3
        }
        at 3 post A rand 2
        at 9 post A rand 2
        at 30 post A rand 1
        """
    )


CHECKPOINT_SCENARIO = """
seed 11
limit 600
queue CMD capacity 2
queue OUT capacity 2
sem L count 1
port P data [9 200 4 77]
task ctl priority 1 state 6 activation CMD {
    READ_PORT P v0
    SEM_WAIT L
    SET v1 = v1 + v0
    SEM_SIGNAL L
    SEND OUT v1
    COMPUTE 2
}
task wrk priority 2 state 4 activation OUT {
    RECV OUT v0
    LOOP 2 {
        COMPUTE 3
        SET v1 = v1 ^ v0
    }
}
at 4 post CMD [5]
at 18 post CMD [6]
at 40 post CMD [7]
"""


def test_checkpoint_restore_at_tick_zero_matches_fresh_run():
    sc = parse_scenario(CHECKPOINT_SCENARIO)
    base = Kernel(sc)
    base.start()
    blob = base.checkpoint_bytes()

    log_a = SwitchLog()
    a = Kernel(sc, log_a)
    a.run()

    log_b = SwitchLog()
    b = Kernel(sc, log_b)
    b.restore_bytes(blob)
    b.run()

    assert log_a.events == log_b.events
    assert a.result.final_checksums == b.result.final_checksums


def test_checkpoint_mid_run_resumes_identically():
    sc = parse_scenario(CHECKPOINT_SCENARIO)
    log_a = SwitchLog()
    a = Kernel(sc, log_a)
    a.start()
    while a.clock < 25 and a.result is None:
        a.step_slot()
    blob = a.checkpoint_bytes()
    cut = a.clock
    a.run()

    log_b = SwitchLog()
    b = Kernel(sc, log_b)
    b.restore_bytes(blob)
    b.run()

    assert a.result.final_checksums == b.result.final_checksums
    assert a.result.tick == b.result.tick
    tail_a = [e for e in log_a.events if e.tick >= cut]
    assert tail_a == log_b.events


def test_checkpoint_serialization_round_trips_byte_identical():
    sc = parse_scenario(CHECKPOINT_SCENARIO)
    a = Kernel(sc)
    a.start()
    while a.clock < 30 and a.result is None:
        a.step_slot()
    blob = a.checkpoint_bytes()
    b = Kernel(sc)
    b.restore_bytes(blob)
    assert b.checkpoint_bytes() == blob


def test_restore_rejects_corrupted_state():
    sc = parse_scenario(CHECKPOINT_SCENARIO)
    a = Kernel(sc)
    a.start()
    while a.clock < 20 and a.result is None:
        a.step_slot()
    blob = bytearray(a.checkpoint_bytes())
    # flip a byte inside some task's state-preserving structure
    blob[len(blob) // 2] ^= 0xFF
    b = Kernel(sc)
    with pytest.raises(k.CheckpointError):
        b.restore_bytes(bytes(blob))


def test_scheduler_never_runs_lower_priority_with_higher_ready():
    # exercised implicitly by the kernel's internal assertion on every
    # statement slot; a run completing without KernelError is the check
    run_logged(CHECKPOINT_SCENARIO)
