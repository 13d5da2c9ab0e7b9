"""Deterministic record/replay debugging for a simulated multitasking RT kernel.

The pipeline has three moving parts:

* recording -- run a scenario on the simulated kernel with instrumentation
  hooks that log control-flow events, data-flow records and periodic kernel
  checkpoints into fixed-capacity ring buffers (``recorder``, ``tracefile``);
* analysis -- prune the buffers to a consistent window, locate a usable
  start checkpoint and emit a replay plan (``analysis``);
* replay -- re-execute the system from the start checkpoint under forced
  scheduling, injecting external inputs and verifying determinism, with
  breakpoints and rewind (``replayer``).
"""

from replaydbg.checksum import context_checksum
from replaydbg.ring import RingBuffer
from replaydbg.scenario import Scenario, parse_scenario, serialize_scenario
from replaydbg.kernel import Kernel, ExecutionResult
from replaydbg.recorder import Recorder, RecorderConfig, ProbeStats
from replaydbg.tracefile import Trace, read_trace, write_trace, record_run
from replaydbg.analysis import (
    TraceWindow,
    StartState,
    ReplayPlan,
    prune,
    find_start,
    build_plan,
    analyze,
    read_plan,
    write_plan,
)
from replaydbg.replayer import (
    Breakpoint,
    ReplaySession,
    DeterminismReport,
    replay_and_verify,
)

__version__ = "0.1.0"

__all__ = [
    "context_checksum",
    "RingBuffer",
    "Scenario",
    "parse_scenario",
    "serialize_scenario",
    "Kernel",
    "ExecutionResult",
    "Recorder",
    "RecorderConfig",
    "ProbeStats",
    "Trace",
    "read_trace",
    "write_trace",
    "record_run",
    "TraceWindow",
    "StartState",
    "ReplayPlan",
    "prune",
    "find_start",
    "build_plan",
    "analyze",
    "read_plan",
    "write_plan",
    "Breakpoint",
    "ReplaySession",
    "DeterminismReport",
    "replay_and_verify",
]
