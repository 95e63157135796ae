"""Symbolic side of the differentiable computer: parse, link, interpret, decompile."""

from .decompile import Decompiled, decompile
from .linker import Library, LinkError, convention_violations, link
from .oracle import FAULT, HALTED, TIMEOUT, OracleState, oracle_run
from .parser import (
    ArityError,
    AsmError,
    DuplicateLabelError,
    ImmediateRangeError,
    UndefinedLabelError,
    UnknownOpcodeError,
    parse,
)
from .program import (
    CONVENTION_REGS,
    MACHINE_OPS,
    RA_REG,
    SIGNATURES,
    TRUE_REG,
    Operand,
    SymbolicInstruction,
    SymbolicProgram,
    format_program,
)

__all__ = [
    "ArityError", "AsmError", "CONVENTION_REGS", "Decompiled", "DuplicateLabelError", "FAULT",
    "HALTED", "ImmediateRangeError", "Library", "LinkError", "MACHINE_OPS", "Operand",
    "OracleState", "RA_REG", "SIGNATURES", "SymbolicInstruction", "SymbolicProgram", "TIMEOUT",
    "TRUE_REG", "UndefinedLabelError", "UnknownOpcodeError", "convention_violations", "decompile",
    "format_program", "link", "oracle_run", "parse",
]
