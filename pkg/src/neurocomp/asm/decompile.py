"""Read a probabilistic program back as assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .program import SIGNATURES, Operand, SymbolicInstruction, SymbolicProgram


@dataclass(frozen=True)
class Decompiled:
    program: SymbolicProgram
    confidences: tuple[float, ...]
    uncertain: tuple[bool, ...]

    @property
    def text(self) -> str:
        return self.program.text()


def decompile(rho, threshold: float = 0.9, name: str | None = None) -> Decompiled:
    """Argmax every field of every line.

    ``rho`` is a ProgramMatrix. A line's confidence is the smallest argmax
    probability among the fields its opcode uses; lines below ``threshold``
    are flagged uncertain. Label names stored with the matrix are restored.
    """
    probs = np.asarray(rho.probs)
    layout = rho.layout
    fields = layout.fields
    line_labels = {}
    for label, idx in rho.labels.items():
        line_labels.setdefault(idx, label)
    refs = {int(k): v for k, v in rho.label_refs.items()}

    lines, confs = [], []
    for i, row in enumerate(probs):
        op_dist = row[fields["op"]]
        op = layout.ops[int(np.argmax(op_dist))]
        conf = float(op_dist.max())
        kwargs = {}
        for fname, kind in SIGNATURES[op]:
            dist = row[fields[fname]]
            value = int(np.argmax(dist))
            conf = min(conf, float(dist.max()))
            if kind == "reg":
                kwargs[fname] = Operand("reg", value)
            elif kind == "line" and i in refs and rho.labels.get(refs[i]) == value:
                kwargs[fname] = Operand("label", refs[i])
            else:
                kwargs[fname] = Operand("imm", value)
        lines.append(SymbolicInstruction(op, **kwargs))
        confs.append(conf)
    prog = SymbolicProgram(name or rho.name, tuple(lines), dict(rho.labels))
    return Decompiled(prog, tuple(confs), tuple(c < threshold for c in confs))
