"""Scenario files: the declarative input format for simulated runs.

A scenario declares kernel objects, task programs, external stimulus
(an interrupt schedule and peripheral port data) and run parameters::

    seed 7
    limit 5000
    queue CMD capacity 4
    sem LOCK count 1
    port GYRO data [1 2 250]
    task control priority 1 state 8 init {0=3 1} activation CMD {
        COMPUTE 2
        READ_PORT GYRO v4
        IF v4 > 10 {
            SEM_WAIT LOCK
            SET v2 = v2 + 1
            SEM_SIGNAL LOCK
        }
        SEND CMD v2
    }
    at 10 post CMD [7]
    at 25 post CMD rand 3

``at <tick> post <queue> <payload>`` schedules an interrupt that posts a
message; ``rand n`` payloads and ``port <name> rand`` streams are drawn
from generators seeded by the scenario seed, so runs stay deterministic.
Serialization is canonical: parse(serialize(s)) == s.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from replaydbg import dsl
from replaydbg.dsl import Expr, ProgramError, Statement, TaskProgram


class ScenarioError(ValueError):
    """Scenario text is malformed or has dangling references."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        if line:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class QueueDecl:
    name: str
    capacity: int


@dataclass(frozen=True)
class SemDecl:
    name: str
    count: int


@dataclass(frozen=True)
class PortDecl:
    name: str
    data: Optional[bytes]  # None means a seeded random stream


@dataclass(frozen=True)
class InterruptSpec:
    tick: int
    queue: str
    payload: Optional[bytes]  # None means `rand_len` seeded random bytes
    rand_len: int = 0


@dataclass
class Scenario:
    seed: int = 0
    limit: int = 10000
    queues: List[QueueDecl] = field(default_factory=list)
    sems: List[SemDecl] = field(default_factory=list)
    ports: List[PortDecl] = field(default_factory=list)
    tasks: List[TaskProgram] = field(default_factory=list)
    interrupts: List[InterruptSpec] = field(default_factory=list)

    def queue_names(self) -> List[str]:
        return [q.name for q in self.queues]

    def task_names(self) -> List[str]:
        return [t.name for t in self.tasks]

    def task(self, name: str) -> TaskProgram:
        for t in self.tasks:
            if t.name == name:
                return t
        raise KeyError(name)

    def validate(self) -> None:
        for kind, names in (
            ("queue", [q.name for q in self.queues]),
            ("sem", [s.name for s in self.sems]),
            ("port", [p.name for p in self.ports]),
            ("task", [t.name for t in self.tasks]),
        ):
            dupes = {n for n in names if names.count(n) > 1}
            if dupes:
                raise ScenarioError(f"duplicate {kind} name(s): {sorted(dupes)}")
        if self.limit < 1:
            raise ScenarioError("limit must be >= 1")
        for q in self.queues:
            if q.capacity < 1:
                raise ScenarioError(f"queue {q.name}: capacity must be >= 1")
        for s in self.sems:
            if s.count < 0:
                raise ScenarioError(f"sem {s.name}: count must be >= 0")
        queue_set = set(self.queue_names())
        sem_set = {s.name for s in self.sems}
        port_set = {p.name for p in self.ports}
        for t in self.tasks:
            try:
                t.validate()
            except ProgramError as exc:
                raise ScenarioError(str(exc)) from exc
            if t.activation not in queue_set:
                raise ScenarioError(f"task {t.name}: unresolved activation queue {t.activation!r}")
            for idx, stmt in enumerate(t.body):
                if stmt.op in (dsl.SEND, dsl.RECV) and stmt.obj not in queue_set:
                    raise ScenarioError(f"task {t.name} statement {idx}: unresolved queue {stmt.obj!r}")
                if stmt.op in (dsl.SEM_WAIT, dsl.SEM_SIGNAL) and stmt.obj not in sem_set:
                    raise ScenarioError(f"task {t.name} statement {idx}: unresolved sem {stmt.obj!r}")
                if stmt.op == dsl.READ_PORT and stmt.obj not in port_set:
                    raise ScenarioError(f"task {t.name} statement {idx}: unresolved port {stmt.obj!r}")
                if stmt.op in (dsl.SET, dsl.RECV, dsl.READ_PORT) and stmt.var in t.init_only_vars:
                    raise ScenarioError(
                        f"task {t.name} statement {idx}: writes init-only variable v{stmt.var}"
                    )
        prev = -1
        for irq in self.interrupts:
            if irq.queue not in queue_set:
                raise ScenarioError(f"interrupt at {irq.tick}: unresolved queue {irq.queue!r}")
            if irq.tick <= prev:
                raise ScenarioError(f"interrupt ticks must be strictly increasing (at {irq.tick})")
            if irq.payload is None and irq.rand_len < 1:
                raise ScenarioError(f"interrupt at {irq.tick}: rand length must be >= 1")
            if irq.payload is not None and len(irq.payload) < 1:
                raise ScenarioError(f"interrupt at {irq.tick}: empty payload")
            prev = irq.tick


# --- tokenizer -------------------------------------------------------------

_PUNCT = ("{", "}", "[", "]", "=", ",")


@dataclass(frozen=True)
class _Tok:
    text: str
    line: int
    col: int


_TWO_CHAR = ("==", "<=", ">=", "!=")


def _tokenize(text: str) -> List[_Tok]:
    toks: List[_Tok] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        i = 0
        n = len(line)
        while i < n:
            ch = line[i]
            if ch.isspace():
                i += 1
                continue
            start = i
            if line[i : i + 2] in _TWO_CHAR:
                toks.append(_Tok(line[i : i + 2], lineno, start + 1))
                i += 2
                continue
            if ch in "{}[],=<>":
                toks.append(_Tok(ch, lineno, start + 1))
                i += 1
                continue
            while (
                i < n
                and not line[i].isspace()
                and line[i] not in "{}[],=<>"
                and line[i : i + 2] not in _TWO_CHAR
            ):
                i += 1
            toks.append(_Tok(line[start:i], lineno, start + 1))
    return toks


class _Cursor:
    def __init__(self, toks: List[_Tok]):
        self.toks = toks
        self.i = 0

    def peek(self) -> Optional[_Tok]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what: str = "token") -> _Tok:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1] if self.toks else _Tok("", 1, 1)
            raise ScenarioError(f"unexpected end of input, expected {what}", last.line, last.col)
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next(repr(text))
        if tok.text != text:
            raise ScenarioError(f"expected {text!r}, got {tok.text!r}", tok.line, tok.col)
        return tok

    def int_(self, what: str = "integer") -> int:
        tok = self.next(what)
        try:
            return int(tok.text)
        except ValueError:
            raise ScenarioError(f"expected {what}, got {tok.text!r}", tok.line, tok.col) from None

    def name(self, what: str = "name") -> str:
        tok = self.next(what)
        if not tok.text or not (tok.text[0].isalpha() or tok.text[0] == "_"):
            raise ScenarioError(f"expected {what}, got {tok.text!r}", tok.line, tok.col)
        return tok.text


def _parse_bytes(cur: _Cursor) -> bytes:
    cur.expect("[")
    out = bytearray()
    while True:
        tok = cur.next("byte or ']'")
        if tok.text == "]":
            break
        if tok.text == ",":
            continue
        try:
            value = int(tok.text)
        except ValueError:
            raise ScenarioError(f"expected byte value, got {tok.text!r}", tok.line, tok.col) from None
        if not 0 <= value <= 255:
            raise ScenarioError(f"byte out of range: {value}", tok.line, tok.col)
        out.append(value)
    return bytes(out)


def _parse_var(tok: _Tok) -> int:
    if not tok.text.startswith("v") or not tok.text[1:].isdigit():
        raise ScenarioError(f"expected variable like v0, got {tok.text!r}", tok.line, tok.col)
    return int(tok.text[1:])


def _parse_term(cur: _Cursor) -> Tuple[Optional[int], Optional[int]]:
    tok = cur.next("term")
    if tok.text.startswith("v") and tok.text[1:].isdigit():
        return int(tok.text[1:]), None
    try:
        return None, int(tok.text) & 0xFF
    except ValueError:
        raise ScenarioError(f"expected variable or literal, got {tok.text!r}", tok.line, tok.col) from None


def _parse_expr(cur: _Cursor) -> Expr:
    lv, lc = _parse_term(cur)
    nxt = cur.peek()
    if nxt is not None and nxt.text in dsl.EXPR_OPS:
        cur.next()
        rv, rc = _parse_term(cur)
        return Expr(lhs_var=lv, lhs_const=lc, op=nxt.text, rhs_var=rv, rhs_const=rc)
    return Expr(lhs_var=lv, lhs_const=lc)


def _parse_body(cur: _Cursor) -> list:
    cur.expect("{")
    body = []
    while True:
        tok = cur.peek()
        if tok is None:
            raise ScenarioError("unterminated task body", 0, 0)
        if tok.text == "}":
            cur.next()
            return body
        body.append(_parse_stmt(cur))


def _parse_stmt(cur: _Cursor):
    tok = cur.next("statement")
    op = tok.text
    if op == dsl.COMPUTE:
        return dsl.plain(Statement(op=op, count=cur.int_("COMPUTE count")))
    if op == dsl.DELAY:
        return dsl.plain(Statement(op=op, count=cur.int_("DELAY ticks")))
    if op == dsl.SET:
        var = _parse_var(cur.next("variable"))
        cur.expect("=")
        return dsl.plain(Statement(op=op, var=var, expr=_parse_expr(cur)))
    if op == dsl.SEND:
        queue = cur.name("queue")
        return dsl.plain(Statement(op=op, obj=queue, expr=_parse_expr(cur)))
    if op == dsl.RECV:
        queue = cur.name("queue")
        return dsl.plain(Statement(op=op, obj=queue, var=_parse_var(cur.next("variable"))))
    if op in (dsl.SEM_WAIT, dsl.SEM_SIGNAL):
        return dsl.plain(Statement(op=op, obj=cur.name("sem")))
    if op == dsl.READ_PORT:
        port = cur.name("port")
        return dsl.plain(Statement(op=op, obj=port, var=_parse_var(cur.next("variable"))))
    if op in (dsl.FAIL, dsl.HALT):
        return dsl.plain(Statement(op=op))
    if op == dsl.LOOP:
        count = cur.int_("LOOP count")
        return dsl.loop(count, _parse_body(cur))
    if op == dsl.IF:
        var = _parse_var(cur.next("variable"))
        cmp_tok = cur.next("comparator")
        if cmp_tok.text not in dsl.COMPARATORS:
            raise ScenarioError(f"bad comparator {cmp_tok.text!r}", cmp_tok.line, cmp_tok.col)
        const = cur.int_("comparison literal")
        return dsl.when(var, cmp_tok.text, const, _parse_body(cur))
    raise ScenarioError(f"unknown statement {op!r}", tok.line, tok.col)


def _parse_task(cur: _Cursor) -> TaskProgram:
    name = cur.name("task name")
    cur.expect("priority")
    priority = cur.int_("priority")
    cur.expect("state")
    state_size = cur.int_("state size")
    init_vars: Dict[int, int] = {}
    tok = cur.peek()
    if tok is not None and tok.text == "init":
        cur.next()
        cur.expect("{")
        while True:
            t = cur.next("init var or '}'")
            if t.text == "}":
                break
            if t.text == ",":
                continue
            try:
                idx = int(t.text)
            except ValueError:
                raise ScenarioError(f"expected var index, got {t.text!r}", t.line, t.col) from None
            value = 0
            nxt = cur.peek()
            if nxt is not None and nxt.text == "=":
                cur.next()
                value = cur.int_("init value") & 0xFF
            init_vars[idx] = value
    cur.expect("activation")
    activation = cur.name("activation queue")
    body = dsl.flatten(_parse_body(cur))
    initial = bytearray(state_size)
    for idx, value in init_vars.items():
        if not 0 <= idx < state_size:
            raise ScenarioError(f"task {name}: init var {idx} out of bounds")
        initial[idx] = value
    return TaskProgram(
        name=name,
        priority=priority,
        state_size=state_size,
        activation=activation,
        body=body,
        init_only_vars=set(init_vars),
        initial_state=bytes(initial),
    )


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text, resolving and checking every cross-reference."""
    cur = _Cursor(_tokenize(text))
    sc = Scenario()
    while True:
        tok = cur.peek()
        if tok is None:
            break
        cur.next()
        if tok.text == "seed":
            sc.seed = cur.int_("seed")
        elif tok.text == "limit":
            sc.limit = cur.int_("limit")
        elif tok.text == "queue":
            name = cur.name("queue name")
            cur.expect("capacity")
            sc.queues.append(QueueDecl(name, cur.int_("capacity")))
        elif tok.text == "sem":
            name = cur.name("sem name")
            cur.expect("count")
            sc.sems.append(SemDecl(name, cur.int_("count")))
        elif tok.text == "port":
            name = cur.name("port name")
            mode = cur.next("'data' or 'rand'")
            if mode.text == "data":
                sc.ports.append(PortDecl(name, _parse_bytes(cur)))
            elif mode.text == "rand":
                sc.ports.append(PortDecl(name, None))
            else:
                raise ScenarioError(f"expected 'data' or 'rand', got {mode.text!r}", mode.line, mode.col)
        elif tok.text == "task":
            sc.tasks.append(_parse_task(cur))
        elif tok.text == "at":
            tick = cur.int_("tick")
            cur.expect("post")
            queue = cur.name("queue")
            nxt = cur.peek()
            if nxt is not None and nxt.text == "rand":
                cur.next()
                sc.interrupts.append(InterruptSpec(tick, queue, None, cur.int_("rand length")))
            else:
                sc.interrupts.append(InterruptSpec(tick, queue, _parse_bytes(cur)))
        else:
            raise ScenarioError(f"unknown declaration {tok.text!r}", tok.line, tok.col)
    sc.validate()
    return sc


# --- serializer ------------------------------------------------------------

def _render_stmts(body: List[Statement], start: int, end: int, indent: int) -> List[str]:
    pad = "    " * indent
    lines = []
    i = start
    while i < end:
        stmt = body[i]
        if stmt.op == dsl.COMPUTE:
            lines.append(f"{pad}COMPUTE {stmt.count}")
        elif stmt.op == dsl.DELAY:
            lines.append(f"{pad}DELAY {stmt.count}")
        elif stmt.op == dsl.SET:
            lines.append(f"{pad}SET v{stmt.var} = {stmt.expr.render()}")
        elif stmt.op == dsl.SEND:
            lines.append(f"{pad}SEND {stmt.obj} {stmt.expr.render()}")
        elif stmt.op == dsl.RECV:
            lines.append(f"{pad}RECV {stmt.obj} v{stmt.var}")
        elif stmt.op in (dsl.SEM_WAIT, dsl.SEM_SIGNAL):
            lines.append(f"{pad}{stmt.op} {stmt.obj}")
        elif stmt.op == dsl.READ_PORT:
            lines.append(f"{pad}READ_PORT {stmt.obj} v{stmt.var}")
        elif stmt.op in (dsl.FAIL, dsl.HALT):
            lines.append(f"{pad}{stmt.op}")
        elif stmt.op == dsl.LOOP:
            lines.append(f"{pad}LOOP {stmt.count} {{")
            lines.extend(_render_stmts(body, i + 1, stmt.end, indent + 1))
            lines.append(f"{pad}}}")
            i = stmt.end
            continue
        elif stmt.op == dsl.IF:
            lines.append(f"{pad}IF v{stmt.var} {stmt.cmp} {stmt.const} {{")
            lines.extend(_render_stmts(body, i + 1, stmt.end, indent + 1))
            lines.append(f"{pad}}}")
            i = stmt.end
            continue
        i += 1
    return lines


def _render_bytes(data: bytes) -> str:
    return "[" + " ".join(str(b) for b in data) + "]"


def serialize_scenario(sc: Scenario) -> str:
    """Canonical text form; declaration order is preserved (it is semantic)."""
    lines = [f"seed {sc.seed}", f"limit {sc.limit}"]
    for q in sc.queues:
        lines.append(f"queue {q.name} capacity {q.capacity}")
    for s in sc.sems:
        lines.append(f"sem {s.name} count {s.count}")
    for p in sc.ports:
        if p.data is None:
            lines.append(f"port {p.name} rand")
        else:
            lines.append(f"port {p.name} data {_render_bytes(p.data)}")
    for t in sc.tasks:
        init = ""
        if t.init_only_vars:
            parts = []
            for idx in sorted(t.init_only_vars):
                value = t.initial_state[idx]
                parts.append(f"{idx}={value}" if value else str(idx))
            init = " init {" + " ".join(parts) + "}"
        lines.append(
            f"task {t.name} priority {t.priority} state {t.state_size}{init} activation {t.activation} {{"
        )
        lines.extend(_render_stmts(t.body, 0, len(t.body), 1))
        lines.append("}")
    for irq in sc.interrupts:
        if irq.payload is None:
            lines.append(f"at {irq.tick} post {irq.queue} rand {irq.rand_len}")
        else:
            lines.append(f"at {irq.tick} post {irq.queue} {_render_bytes(irq.payload)}")
    return "\n".join(lines) + "\n"


def scenario_hash(sc: Scenario) -> str:
    return hashlib.sha256(serialize_scenario(sc).encode()).hexdigest()
