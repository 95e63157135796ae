"""Symbolic instructions, programs and the instruction set."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..encodings import TABLE_OPS

# Opcodes the differentiable machine executes, in opcode-field order.
# add sits at index 0 so that T[0] is the addition table.
MACHINE_OPS: tuple[str, ...] = TABLE_OPS

# call/ret are lowered by the linker into store/inc/jump/jumpr
MACROS = ("call", "ret")

OPCODES = MACHINE_OPS + MACROS

TRUE_REG = 0  # always holds 1; the unconditional jump flag
RA_REG = 1    # return address written by call
CONVENTION_REGS = (TRUE_REG, RA_REG)

# source operand order -> (field, kind); kind is reg | imm | line | program
_BINARY = (("arg1", "reg"), ("arg2", "reg"), ("dest", "reg"))
SIGNATURES: dict[str, tuple[tuple[str, str], ...]] = {
    "add": _BINARY,
    "sub": _BINARY,
    "mul": _BINARY,
    "max": _BINARY,
    "min": _BINARY,
    "inc": (("arg1", "reg"), ("dest", "reg")),
    "dec": (("arg1", "reg"), ("dest", "reg")),
    "copy": (("arg1", "reg"), ("dest", "reg")),
    "set": (("arg1", "imm"), ("dest", "reg")),
    "read": (("arg1", "reg"), ("dest", "reg")),
    "write": (("arg1", "reg"), ("arg2", "reg")),
    "store": (("dest", "reg"),),
    "jump": (("arg1", "reg"), ("arg2", "line")),
    "jumpr": (("arg1", "reg"), ("arg2", "reg")),
    "halt": (),
    "call": (("arg1", "program"),),
    "ret": (),
}

# one-operand shorthand accepted by the parser: ``inc 3`` means ``inc 3 3``
SHORTHAND = {"inc", "dec"}


@dataclass(frozen=True)
class Operand:
    kind: str  # "reg", "imm" or "label"
    value: int | str

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class SymbolicInstruction:
    op: str
    arg1: Operand | None = None
    arg2: Operand | None = None
    dest: Operand | None = None
    line: int = field(default=0, compare=False)

    def operands(self) -> list[Operand]:
        return [getattr(self, f) for f, _ in SIGNATURES[self.op]]

    def __str__(self) -> str:
        return " ".join([self.op] + [str(o) for o in self.operands()])


@dataclass(frozen=True)
class SymbolicProgram:
    name: str
    lines: tuple[SymbolicInstruction, ...]
    labels: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.lines)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymbolicProgram):
            return NotImplemented
        return self.name == other.name and self.lines == other.lines and self.labels == other.labels

    def __hash__(self):
        return hash((self.name, self.lines, tuple(sorted(self.labels.items()))))

    def text(self) -> str:
        return format_program(self)

    def uses_macros(self) -> bool:
        return any(ins.op in MACROS for ins in self.lines)


def format_program(prog: SymbolicProgram) -> str:
    by_line: dict[int, list[str]] = {}
    for name, idx in sorted(prog.labels.items(), key=lambda kv: (kv[1], kv[0])):
        by_line.setdefault(idx, []).append(name)
    out = []
    for i, ins in enumerate(prog.lines):
        out.extend(f"{name}:" for name in by_line.get(i, ()))
        out.append(f"    {ins}")
    out.extend(f"{name}:" for name in by_line.get(len(prog.lines), ()))
    return "\n".join(out) + "\n"
