import pytest

from replaydbg import dsl
from replaydbg.scenario import (
    InterruptSpec,
    ScenarioError,
    parse_scenario,
    scenario_hash,
    serialize_scenario,
)

MINIMAL = """
queue Q capacity 2
task solo priority 1 state 4 activation Q {
    COMPUTE 5
    HALT
}
"""

FULL = """
seed 42
limit 900
queue CMD capacity 4
queue OUT capacity 2
sem LOCK count 1
port GYRO data [1 2 250]
port NOISE rand
task control priority 1 state 8 init {0=3 1} activation CMD {
    COMPUTE 2
    READ_PORT GYRO v4
    IF v4 > 10 {
        SEM_WAIT LOCK
        SET v2 = v2 + 1
        SEM_SIGNAL LOCK
    }
    SEND OUT v2
}
task worker priority 2 state 4 activation OUT {
    RECV OUT v0
    LOOP 3 {
        COMPUTE 2
        SET v1 = v0 ^ v1
    }
}
at 10 post CMD [7]
at 25 post CMD rand 3
"""


def test_minimal_scenario_parses():
    sc = parse_scenario(MINIMAL)
    assert len(sc.tasks) == 1
    assert len(sc.queues) == 1
    assert sc.tasks[0].body[0].op == dsl.COMPUTE


def test_undeclared_queue_is_unresolved_identifier():
    text = MINIMAL.replace("activation Q", "activation Q9")
    with pytest.raises(ScenarioError, match="unresolved"):
        parse_scenario(text)


def test_round_trip_is_identity():
    sc = parse_scenario(FULL)
    text = serialize_scenario(sc)
    again = parse_scenario(text)
    assert again == sc
    assert serialize_scenario(again) == text
    assert scenario_hash(again) == scenario_hash(sc)


def test_loop_indices_are_flat_and_dense():
    sc = parse_scenario(FULL)
    control = sc.task("control")
    if_stmt = next(s for s in control.body if s.op == dsl.IF)
    assert if_stmt.end is not None and if_stmt.end <= len(control.body)
    worker = sc.task("worker")
    loop_stmt = next(s for s in worker.body if s.op == dsl.LOOP)
    assert worker.body[loop_stmt.end - 1].op == dsl.SET


def test_interrupt_ticks_must_increase():
    text = FULL + "\nat 25 post CMD [1]\n"
    with pytest.raises(ScenarioError, match="strictly increasing"):
        parse_scenario(text)


def test_parse_error_carries_position():
    with pytest.raises(ScenarioError, match="line"):
        parse_scenario("queue Q capacity nope")


def test_writing_init_only_var_rejected():
    text = """
queue Q capacity 1
task t priority 1 state 4 init {0} activation Q {
    SET v0 = 1
}
"""
    with pytest.raises(ScenarioError, match="init-only"):
        parse_scenario(text)


def test_loop_count_must_be_positive():
    text = """
queue Q capacity 1
task t priority 1 state 2 activation Q {
    LOOP 0 {
        COMPUTE 1
    }
}
"""
    with pytest.raises(ScenarioError, match="LOOP"):
        parse_scenario(text)


def test_interrupt_spec_defaults():
    sc = parse_scenario(FULL)
    assert sc.interrupts[0] == InterruptSpec(10, "CMD", bytes([7]))
    assert sc.interrupts[1].payload is None
    assert sc.interrupts[1].rand_len == 3
