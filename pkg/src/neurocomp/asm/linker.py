"""Concatenate programs into a library and lower call/ret."""

from __future__ import annotations

from dataclasses import dataclass, field

from .program import (
    CONVENTION_REGS,
    RA_REG,
    TRUE_REG,
    Operand,
    SymbolicInstruction,
    SymbolicProgram,
)


class LinkError(ValueError):
    pass


@dataclass(frozen=True)
class Library:
    """Linked programs sharing one line space.

    ``lines`` holds the lowered instructions (no call/ret); jump targets are
    label operands resolved through ``labels``.
    """

    programs: tuple[SymbolicProgram, ...]
    lines: tuple[SymbolicInstruction, ...]
    labels: dict[str, int]
    entry_points: dict[str, int]
    name: str = "library"
    spans: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.lines)

    def flatten(self) -> SymbolicProgram:
        return SymbolicProgram(self.name, self.lines, dict(self.labels))

    def text(self) -> str:
        return self.flatten().text()

    def resolve(self, operand: Operand) -> int:
        if operand.kind == "label":
            return self.labels[operand.value]
        return int(operand.value)

    def entry(self, name: str | None = None) -> int:
        if name is None:
            return 0
        if name not in self.entry_points:
            raise KeyError(f"no program named {name!r} (have {sorted(self.entry_points)})")
        return self.entry_points[name]


def _reg(i: int) -> Operand:
    return Operand("reg", i)


def _lower(ins: SymbolicInstruction, callee_label) -> list[SymbolicInstruction]:
    if ins.op == "call":
        # RA <- pc + 1 (the jump line); ret bumps it past the jump before returning
        return [
            SymbolicInstruction("store", dest=_reg(RA_REG), line=ins.line),
            SymbolicInstruction("jump", arg1=_reg(TRUE_REG), arg2=callee_label(ins.arg1.value), line=ins.line),
        ]
    if ins.op == "ret":
        return [
            SymbolicInstruction("inc", arg1=_reg(RA_REG), dest=_reg(RA_REG), line=ins.line),
            SymbolicInstruction("jumpr", arg1=_reg(TRUE_REG), arg2=_reg(RA_REG), line=ins.line),
        ]
    return [ins]


def _relocate_jump(ins, prog, relocated, qualify) -> SymbolicInstruction:
    target = ins.arg2
    if target.kind == "label":
        target = Operand("label", qualify(prog.name, target.value))
    else:
        if target.value >= len(prog.lines):
            raise LinkError(f"{prog.name}: jump target line {target.value} is past the end of the program")
        target = Operand("imm", relocated[target.value])
    return SymbolicInstruction("jump", arg1=ins.arg1, arg2=target, line=ins.line)


def convention_violations(prog: SymbolicProgram) -> list[str]:
    """Explicit writes to the reserved registers r0 (constant 1) and r1 (return address)."""
    out = []
    for i, ins in enumerate(prog.lines):
        if ins.dest is not None and ins.dest.value in CONVENTION_REGS:
            out.append(f"{prog.name}:{ins.line or i}: {ins} writes reserved register r{ins.dest.value}")
    return out


def link(programs, n: int | None = None, strict: bool = True, name: str | None = None) -> Library:
    """Concatenate ``programs`` in order.

    ``strict`` rejects programs that write the convention registers. Local
    labels keep their names in a single-program library and are qualified as
    ``program.label`` otherwise; program names label their entry lines.
    """
    if isinstance(programs, SymbolicProgram):
        programs = [programs]
    programs = tuple(programs)
    if not programs:
        raise LinkError("nothing to link")
    names = [p.name for p in programs]
    dupes = sorted({x for x in names if names.count(x) > 1})
    if dupes:
        raise LinkError(f"duplicate program names: {dupes}")
    if strict:
        problems = [v for p in programs for v in convention_violations(p)]
        if problems:
            raise LinkError("; ".join(problems))

    single = len(programs) == 1
    qualify = (lambda prog, lab: lab) if single else (lambda prog, lab: f"{prog}.{lab}")

    def callee_label(target: str) -> Operand:
        if target not in names:
            raise LinkError(f"call to undefined program {target!r}")
        return Operand("label", target)

    lines: list[SymbolicInstruction] = []
    labels: dict[str, int] = {}
    entry_points: dict[str, int] = {}
    spans: dict[str, tuple[int, int]] = {}
    for prog in programs:
        start = len(lines)
        entry_points[prog.name] = start
        if not single:
            labels[prog.name] = start
        relocated = [start]
        for ins in prog.lines:
            relocated.append(relocated[-1] + len(_lower(ins, lambda t: Operand("label", t))))
        for ins in prog.lines:
            for low in _lower(ins, callee_label):
                if low.op == "jump" and ins.op != "call":
                    low = _relocate_jump(low, prog, relocated, qualify)
                lines.append(low)
        for lab, idx in prog.labels.items():
            labels[qualify(prog.name, lab)] = relocated[idx]
        spans[prog.name] = (start, len(lines))

    if single and any(ins.op == "call" for ins in programs[0].lines):
        if programs[0].name in labels:
            raise LinkError(f"label {programs[0].name!r} clashes with the program name")
        labels[programs[0].name] = 0
    if n is not None and len(lines) > n:
        raise LinkError(f"linked library has {len(lines)} lines but the word size is {n}")
    return Library(
        programs,
        tuple(lines),
        labels,
        entry_points,
        name=programs[0].name if single else (name or "library"),
        spans=spans,
    )
