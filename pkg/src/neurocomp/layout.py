"""Machine dimensions and the ProgramMatrix field layout."""

from __future__ import annotations

from dataclasses import dataclass

from .encodings import TABLE_OPS


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class MachineLayout:
    """Word size ``n``, register count, memory rows and the opcode list.

    A ProgramMatrix row is ``opcode (|A|) | arg1 (n) | arg2 (n) | dest (n)``.
    """

    n: int = 16
    registers: int = 8
    mem_size: int = 16
    ops: tuple[str, ...] = TABLE_OPS

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        if self.n < 2:
            raise LayoutError("word size must be at least 2")
        if not 2 <= self.registers <= self.n:
            raise LayoutError(f"register count {self.registers} must lie in [2, n={self.n}]")
        if not 1 <= self.mem_size <= self.n:
            raise LayoutError(f"memory size {self.mem_size} must lie in [1, n={self.n}]")

    @property
    def n_ops(self) -> int:
        return len(self.ops)

    @property
    def width(self) -> int:
        return self.n_ops + 3 * self.n

    @property
    def fields(self) -> dict[str, slice]:
        a, n = self.n_ops, self.n
        return {
            "op": slice(0, a),
            "arg1": slice(a, a + n),
            "arg2": slice(a + n, a + 2 * n),
            "dest": slice(a + 2 * n, a + 3 * n),
        }

    def op_index(self, op: str) -> int:
        return self.ops.index(op)

    def to_dict(self) -> dict:
        return {"n": self.n, "registers": self.registers, "mem_size": self.mem_size, "ops": list(self.ops)}

    @classmethod
    def from_dict(cls, d: dict) -> "MachineLayout":
        return cls(d["n"], d["registers"], d["mem_size"], tuple(d.get("ops", TABLE_OPS)))
