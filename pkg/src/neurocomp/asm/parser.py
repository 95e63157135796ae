"""Assembly text parser.

Syntax: one instruction per line, whitespace-separated operands, optional
``label:`` prefixes (alone or before an instruction) and ``#`` comments.
Registers may be written ``3`` or ``r3``.
"""

from __future__ import annotations

import re

from .program import (
    OPCODES,
    SHORTHAND,
    SIGNATURES,
    Operand,
    SymbolicInstruction,
    SymbolicProgram,
)

_LABEL = re.compile(r"\s*([A-Za-z_][\w.]*):")
_IDENT = re.compile(r"^[A-Za-z_][\w.]*$")
_REG = re.compile(r"^[rR]?(\d+)$")
_INT = re.compile(r"^\d+$")


class AsmError(ValueError):
    kind = "syntax"

    def __init__(self, message: str, line: int = 0, column: int = 0, source: str = "<asm>"):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        super().__init__(f"{source}:{line}:{column}: {self.kind} error: {message}")


class UnknownOpcodeError(AsmError):
    kind = "unknown-opcode"


class ArityError(AsmError):
    kind = "arity"


class UndefinedLabelError(AsmError):
    kind = "undefined-label"


class DuplicateLabelError(AsmError):
    kind = "duplicate-label"


class ImmediateRangeError(AsmError):
    kind = "range"


def parse(text: str, name: str = "main", n: int = 16, source: str | None = None) -> SymbolicProgram:
    """Parse assembly into a SymbolicProgram; operands must fit words of size ``n``."""
    source = source or name
    lines: list[SymbolicInstruction] = []
    labels: dict[str, int] = {}
    label_refs: list[tuple[str, int, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        pos = 0
        while m := _LABEL.match(body, pos):
            label = m.group(1)
            if label in labels:
                raise DuplicateLabelError(f"label {label!r} defined twice", lineno, m.start(1) + 1, source)
            labels[label] = len(lines)
            pos = m.end()
        toks = [(t.group(), pos + t.start() + 1) for t in re.finditer(r"\S+", body[pos:])]
        if not toks:
            continue
        (op, col), args = toks[0], toks[1:]
        op = op.lower()
        if op not in OPCODES:
            raise UnknownOpcodeError(f"unknown opcode {op!r}", lineno, col, source)
        sig = SIGNATURES[op]
        if op in SHORTHAND and len(args) == 1:
            args = args * 2
        if len(args) != len(sig):
            raise ArityError(
                f"{op} takes {len(sig)} operand(s), got {len(args)}", lineno, col, source
            )
        fields: dict[str, Operand] = {}
        for (fname, kind), (tok, tcol) in zip(sig, args):
            fields[fname] = _operand(tok, kind, n, lineno, tcol, source)
            if fields[fname].kind == "label" and kind == "line":
                label_refs.append((tok, lineno, tcol))
        lines.append(SymbolicInstruction(op, line=lineno, **fields))

    for label, lineno, col in label_refs:
        if label not in labels:
            raise UndefinedLabelError(f"undefined label {label!r}", lineno, col, source)
    return SymbolicProgram(name, tuple(lines), labels)


def _operand(tok: str, kind: str, n: int, lineno: int, col: int, source: str) -> Operand:
    if kind == "reg":
        m = _REG.match(tok)
        if not m:
            raise AsmError(f"expected a register, got {tok!r}", lineno, col, source)
        idx = int(m.group(1))
        if idx >= n:
            raise ImmediateRangeError(f"register {idx} does not fit word size {n}", lineno, col, source)
        return Operand("reg", idx)
    if kind in ("imm", "line"):
        if _INT.match(tok):
            value = int(tok)
            if value >= n:
                raise ImmediateRangeError(f"immediate {value} >= word size {n}", lineno, col, source)
            return Operand("imm", value)
        if kind == "line" and _IDENT.match(tok):
            return Operand("label", tok)
        raise AsmError(f"expected an immediate, got {tok!r}", lineno, col, source)
    if kind == "program":
        if not _IDENT.match(tok):
            raise AsmError(f"expected a program name, got {tok!r}", lineno, col, source)
        return Operand("label", tok)
    raise AssertionError(kind)
