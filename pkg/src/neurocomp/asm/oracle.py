"""Deterministic integer interpreter: the reference semantics for the machine."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..encodings import op_value
from ..layout import MachineLayout
from .linker import Library, link
from .program import TRUE_REG, SymbolicProgram

HALTED, TIMEOUT, FAULT = "halted", "timeout", "fault"


@dataclass
class OracleState:
    mem: list[int]
    regs: list[int]
    pc: int
    halted: bool = False
    steps: int = 0
    status: str = "running"
    trace: list[int] = field(default_factory=list)


def initial_values(values, size: int, n: int, what: str) -> list[int]:
    out = [0] * size
    if values is None:
        return out
    items = values.items() if isinstance(values, Mapping) else enumerate(values)
    for i, v in items:
        if not 0 <= i < size:
            raise IndexError(f"{what} index {i} outside [0, {size})")
        if not 0 <= v < n:
            raise ValueError(f"{what}[{i}] = {v} outside [0, {n})")
        out[i] = int(v)
    return out


def oracle_run(
    lib: Library | SymbolicProgram,
    start: str | None = None,
    mem0: Sequence[int] | Mapping[int, int] | None = None,
    regs0: Sequence[int] | Mapping[int, int] | None = None,
    max_steps: int = 1000,
    layout: MachineLayout | None = None,
) -> OracleState:
    """Run to halt, fault or step budget. Never raises on program behaviour.

    Register 0 is forced to hold 1. Memory addresses and register operands
    wrap modulo their sizes; jumping outside the program is a fault.
    """
    layout = layout or MachineLayout()
    if isinstance(lib, SymbolicProgram):
        lib = link(lib, strict=False)
    n, r, msize = layout.n, layout.registers, layout.mem_size
    L = len(lib.lines)
    mem = initial_values(mem0, msize, n, "mem")
    regs = initial_values(regs0, r, n, "reg")
    regs[TRUE_REG] = 1
    state = OracleState(mem, regs, lib.entry(start))
    program = [
        (
            ins.op,
            None if ins.arg1 is None else lib.resolve(ins.arg1),
            None if ins.arg2 is None else lib.resolve(ins.arg2),
            None if ins.dest is None else lib.resolve(ins.dest),
        )
        for ins in lib.lines
    ]

    while state.steps < max_steps:
        pc = state.pc
        if not 0 <= pc < L:
            state.status = FAULT
            return state
        op, a1, a2, dst = program[pc]
        state.steps += 1
        state.trace.append(pc)
        u = regs[a1 % r] if a1 is not None else 0
        v = regs[a2 % r] if a2 is not None else 0
        nxt = pc + 1
        if op == "halt":
            state.halted = True
            state.status = HALTED
            return state
        if op == "set":
            regs[dst % r] = a1
        elif op == "read":
            regs[dst % r] = mem[u % msize]
        elif op == "write":
            mem[u % msize] = v
        elif op == "store":
            regs[dst % r] = (pc + 1) % L % n
        elif op == "jump":
            if u == 1:
                nxt = a2
        elif op == "jumpr":
            if u == 1:
                nxt = v
        else:
            regs[dst % r] = op_value(op, u, v, n)
        state.pc = nxt
    state.status = TIMEOUT
    return state
