"""Bundled assembly programs and the libraries built from them."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .asm.linker import Library, link
from .asm.parser import parse
from .asm.program import SymbolicProgram
from .layout import MachineLayout


@dataclass(frozen=True)
class CorpusLibrary:
    name: str
    members: tuple[tuple[str, str], ...]  # (program name, source file stem)
    layout: MachineLayout
    strict: bool = True
    description: str = ""

    def programs(self) -> list[SymbolicProgram]:
        return [parse(source(stem), name=prog, n=self.layout.n, source=f"{stem}.asm")
                for prog, stem in self.members]

    def library(self) -> Library:
        return link(self.programs(), n=self.layout.n, strict=self.strict, name=self.name)


SMALL = MachineLayout(n=16, registers=8, mem_size=16)
WIDE = MachineLayout(n=32, registers=10, mem_size=32)

ARITH_OPS = ("add", "sub", "mul", "max", "min")

LIBRARIES: dict[str, CorpusLibrary] = {
    lib.name: lib
    for lib in [
        CorpusLibrary("listing1", (("listing1", "listing1"),), SMALL, strict=False,
                      description="example loop, label form; never halts"),
        CorpusLibrary("listing1_numeric", (("listing1_numeric", "listing1_numeric"),), SMALL, strict=False,
                      description="example loop, numeric jump target"),
        CorpusLibrary("fib_tape", (("fib_tape", "fib_tape"),), SMALL, strict=False,
                      description="Fibonacci terms onto mem[r3..]"),
        CorpusLibrary("fib", (("fib", "fib"),), SMALL, description="pairwise-sum recursion to mem[0]"),
        CorpusLibrary("arith", tuple((op, f"arith_{op}") for op in ARITH_OPS), SMALL,
                      description="one program per binary op, result to mem[0]"),
        CorpusLibrary("call", (("main", "call_main"), ("double", "call_double")), SMALL,
                      description="call/ret across two programs"),
        CorpusLibrary("sort", (("sort", "sort"),), WIDE, description="bubble sort of mem[0..r2-1]"),
    ]
}

# parse-only material (no halting behaviour worth checking)
FRAGMENTS = ("fragment_a", "fragment_b", "fragment_c")


def source(stem: str) -> str:
    return resources.files("neurocomp").joinpath("corpus", f"{stem}.asm").read_text()


def sources() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("neurocomp").joinpath("corpus").iterdir()
                  if p.name.endswith(".asm"))


def load(name: str) -> CorpusLibrary:
    if name not in LIBRARIES:
        raise KeyError(f"unknown corpus library {name!r}; have {sorted(LIBRARIES)}")
    return LIBRARIES[name]
