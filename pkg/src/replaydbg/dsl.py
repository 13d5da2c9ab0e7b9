"""Statement DSL that task bodies are written in.

Programs are flat statement lists; the list index of a statement is the
program-counter analog that markers and checkpoints refer to. Block
statements (LOOP, IF) are flattened by recording the index one past their
body, so indices stay dense and stable.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Set, Tuple

# Opcodes
COMPUTE = "COMPUTE"
SET = "SET"
SEND = "SEND"
RECV = "RECV"
SEM_WAIT = "SEM_WAIT"
SEM_SIGNAL = "SEM_SIGNAL"
DELAY = "DELAY"
READ_PORT = "READ_PORT"
LOOP = "LOOP"
IF = "IF"
FAIL = "FAIL"
HALT = "HALT"

COMPARATORS = ("==", "!=", "<", "<=", ">", ">=")
EXPR_OPS = ("+", "-", "*", "^")


class ProgramError(ValueError):
    """A task body violates a structural constraint."""


@dataclass(frozen=True)
class Expr:
    """Tiny byte-valued expression: a term or `term op term`.

    Terms are either a state variable index or a literal; all arithmetic is
    modulo 256.
    """

    lhs_var: Optional[int]
    lhs_const: Optional[int]
    op: Optional[str] = None
    rhs_var: Optional[int] = None
    rhs_const: Optional[int] = None

    def eval(self, state: bytes) -> int:
        left = state[self.lhs_var] if self.lhs_var is not None else self.lhs_const
        if self.op is None:
            return left & 0xFF
        right = state[self.rhs_var] if self.rhs_var is not None else self.rhs_const
        if self.op == "+":
            value = left + right
        elif self.op == "-":
            value = left - right
        elif self.op == "*":
            value = left * right
        else:  # ^
            value = left ^ right
        return value & 0xFF

    def variables(self) -> Set[int]:
        out = set()
        if self.lhs_var is not None:
            out.add(self.lhs_var)
        if self.rhs_var is not None:
            out.add(self.rhs_var)
        return out

    def render(self) -> str:
        def term(var, const):
            return f"v{var}" if var is not None else str(const)

        text = term(self.lhs_var, self.lhs_const)
        if self.op is not None:
            text += f" {self.op} {term(self.rhs_var, self.rhs_const)}"
        return text


def const_expr(value: int) -> Expr:
    return Expr(lhs_var=None, lhs_const=value & 0xFF)


def var_expr(index: int) -> Expr:
    return Expr(lhs_var=index, lhs_const=None)


@dataclass(frozen=True)
class Statement:
    """One flattened statement.

    ``end`` is only meaningful for LOOP/IF and names the index one past the
    block body. All operand fields that do not apply are None.
    """

    op: str
    count: Optional[int] = None          # COMPUTE n, LOOP n, DELAY n
    var: Optional[int] = None            # SET / RECV / READ_PORT target, IF subject
    expr: Optional[Expr] = None          # SET / SEND value
    obj: Optional[str] = None            # queue / semaphore / port name
    cmp: Optional[str] = None            # IF comparator
    const: Optional[int] = None          # IF right-hand literal
    end: Optional[int] = None            # LOOP / IF body end (exclusive)


@dataclass
class TaskProgram:
    """A task: priority, a state-preserving byte structure, and a body.

    The body is the code of one task instance. Tasks start ready; when the
    body ends the task blocks on its activation queue and a delivered
    message starts the next instance from index 0.
    ``init_only_vars`` are state bytes assigned at setup and never changed
    afterwards; activation snapshots filter them out.
    """

    name: str
    priority: int
    state_size: int
    activation: str
    body: List[Statement] = field(default_factory=list)
    init_only_vars: Set[int] = field(default_factory=set)
    initial_state: bytes = b""

    def __post_init__(self):
        if not self.initial_state:
            self.initial_state = bytes(self.state_size)

    def validate(self) -> None:
        if self.state_size < 0:
            raise ProgramError(f"task {self.name}: negative state size")
        if len(self.initial_state) != self.state_size:
            raise ProgramError(f"task {self.name}: initial state size mismatch")
        bad = {v for v in self.init_only_vars if not 0 <= v < self.state_size}
        if bad:
            raise ProgramError(f"task {self.name}: init-only vars {sorted(bad)} out of bounds")
        for idx, stmt in enumerate(self.body):
            self._validate_stmt(idx, stmt)

    def _validate_stmt(self, idx: int, stmt: Statement) -> None:
        where = f"task {self.name} statement {idx}"
        if stmt.op == COMPUTE and (stmt.count is None or stmt.count < 1):
            raise ProgramError(f"{where}: COMPUTE needs count >= 1")
        if stmt.op == LOOP:
            if stmt.count is None or stmt.count < 1:
                raise ProgramError(f"{where}: LOOP needs count >= 1")
            if stmt.end is None or stmt.end <= idx + 1 or stmt.end > len(self.body):
                raise ProgramError(f"{where}: LOOP body empty or out of range")
        if stmt.op == IF:
            if stmt.end is None or stmt.end <= idx + 1 or stmt.end > len(self.body):
                raise ProgramError(f"{where}: IF body empty or out of range")
            if stmt.cmp not in COMPARATORS:
                raise ProgramError(f"{where}: bad comparator {stmt.cmp!r}")
        if stmt.op == DELAY and (stmt.count is None or stmt.count < 1):
            raise ProgramError(f"{where}: DELAY needs count >= 1")
        for var in self._stmt_vars(stmt):
            if not 0 <= var < self.state_size:
                raise ProgramError(f"{where}: variable v{var} out of bounds")

    @staticmethod
    def _stmt_vars(stmt: Statement) -> Set[int]:
        out: Set[int] = set()
        if stmt.var is not None:
            out.add(stmt.var)
        if stmt.expr is not None:
            out |= stmt.expr.variables()
        return out


def compare(value: int, cmp: str, const: int) -> bool:
    if cmp == "==":
        return value == const
    if cmp == "!=":
        return value != const
    if cmp == "<":
        return value < const
    if cmp == "<=":
        return value <= const
    if cmp == ">":
        return value > const
    return value >= const


# Structured building helpers used by the parser and the fuzz generator.
# A structured body is a list of tuples mirroring statements, where LOOP/IF
# carry a nested list instead of an end index; flatten() assigns indices.

def flatten(structured: Sequence) -> List[Statement]:
    out: List[Statement] = []
    _flatten_into(structured, out)
    return out


def _flatten_into(structured: Sequence, out: List[Statement]) -> None:
    for node in structured:
        if node[0] == LOOP:
            _, count, body = node
            head = len(out)
            out.append(Statement(op=LOOP, count=count, end=-1))
            _flatten_into(body, out)
            out[head] = Statement(op=LOOP, count=count, end=len(out))
        elif node[0] == IF:
            _, var, cmp, const, body = node
            head = len(out)
            out.append(Statement(op=IF, var=var, cmp=cmp, const=const, end=-1))
            _flatten_into(body, out)
            out[head] = Statement(op=IF, var=var, cmp=cmp, const=const, end=len(out))
        else:
            out.append(node[1])


def loop(count: int, body: Sequence) -> Tuple:
    return (LOOP, count, list(body))


def when(var: int, cmp: str, const: int, body: Sequence) -> Tuple:
    return (IF, var, cmp, const, list(body))


def plain(stmt: Statement) -> Tuple:
    return ("STMT", stmt)
