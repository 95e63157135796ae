"""Neural compilation: linked assembly -> ProgramMatrix of Dirac distributions."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .asm.decompile import decompile
from .asm.linker import Library, link
from .asm.program import SIGNATURES, SymbolicProgram
from .layout import LayoutError, MachineLayout
from .substrate import (
    ParameterMask,
    ShapeError,
    Tensor,
    TrainConfig,
    concat,
    log_softmax,
    make_optimizer,
    softmax,
)

KAPPA = 10.0


@dataclass
class ProgramMatrix:
    """L x (|A| + 3n) matrix of per-field distributions plus symbol metadata."""

    probs: np.ndarray
    layout: MachineLayout
    name: str = "program"
    labels: dict[str, int] = field(default_factory=dict)
    label_refs: dict[int, str] = field(default_factory=dict)
    entry_points: dict[str, int] = field(default_factory=dict)
    spans: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[1] != self.layout.width:
            raise ShapeError(f"program matrix shape {self.probs.shape} does not match layout width {self.layout.width}")
        if self.probs.shape[0] > self.layout.n:
            raise LayoutError(f"{self.probs.shape[0]} lines exceed word size {self.layout.n}")

    @property
    def n_lines(self) -> int:
        return self.probs.shape[0]

    def field(self, name: str) -> np.ndarray:
        return self.probs[:, self.layout.fields[name]]

    def is_valid(self, atol: float = 1e-9) -> bool:
        if np.any(self.probs < -atol):
            return False
        return all(np.allclose(self.field(f).sum(axis=1), 1.0, atol=atol) for f in self.layout.fields)

    def logits(self, kappa: float = KAPPA) -> np.ndarray:
        """Trainable parametrisation: +kappa on the Dirac entry, -kappa elsewhere."""
        return kappa * (2.0 * self.probs - 1.0)

    def with_probs(self, probs: np.ndarray) -> "ProgramMatrix":
        return ProgramMatrix(probs, self.layout, self.name, dict(self.labels), dict(self.label_refs),
                             dict(self.entry_points), dict(self.spans))

    def symbolic(self, threshold: float = 0.9) -> Library:
        """Decompile into a Library with this matrix's entry points and spans."""
        prog = decompile(self, threshold).program
        return Library((prog,), prog.lines, dict(prog.labels), dict(self.entry_points) or {self.name: 0},
                       self.name, dict(self.spans))

    # -- serialization ----------------------------------------------------------
    _MAGIC = b"NCPM"
    _VERSION = 1

    def _header(self) -> dict:
        return {
            "layout": self.layout.to_dict(),
            "field_order": ["op", "arg1", "arg2", "dest"],
            "name": self.name,
            "lines": self.n_lines,
            "labels": self.labels,
            "label_refs": {str(k): v for k, v in sorted(self.label_refs.items())},
            "entry_points": self.entry_points,
            "spans": {k: list(v) for k, v in self.spans.items()},
        }

    def to_bytes(self) -> bytes:
        header = json.dumps(self._header(), sort_keys=True, separators=(",", ":")).encode()
        return (
            struct.pack("<4sHI", self._MAGIC, self._VERSION, len(header))
            + header
            + self.probs.astype("<f8").tobytes()
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> "ProgramMatrix":
        magic, version, hlen = struct.unpack_from("<4sHI", buf, 0)
        if magic != cls._MAGIC:
            raise ValueError("not a program matrix file")
        if version != cls._VERSION:
            raise ValueError(f"unsupported program matrix version {version}")
        off = struct.calcsize("<4sHI")
        meta = json.loads(buf[off:off + hlen].decode())
        layout = MachineLayout.from_dict(meta["layout"])
        probs = np.frombuffer(buf, dtype="<f8", offset=off + hlen).reshape(meta["lines"], layout.width)
        return cls(
            probs.copy(),
            layout,
            meta["name"],
            meta["labels"],
            {int(k): v for k, v in meta["label_refs"].items()},
            meta["entry_points"],
            {k: tuple(v) for k, v in meta["spans"].items()},
        )

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ProgramMatrix":
        return cls.from_bytes(Path(path).read_bytes())

    def debug_dict(self) -> dict:
        dec = decompile(self, threshold=0.0)
        rows = []
        for i, row in enumerate(self.probs):
            entry = {"line": i, "text": str(dec.program.lines[i]), "confidence": dec.confidences[i]}
            for fname, sl in self.layout.fields.items():
                dist = row[sl]
                k = int(np.argmax(dist))
                entry[fname] = {"argmax": self.layout.ops[k] if fname == "op" else k, "p": float(dist[k])}
            rows.append(entry)
        return {**self._header(), "rows": rows, "text": dec.text}


def _as_library(lib, layout: MachineLayout) -> Library:
    if isinstance(lib, Library):
        return lib
    if isinstance(lib, SymbolicProgram):
        return link(lib, n=layout.n, strict=False)
    return link(list(lib), n=layout.n)


def compile_program(lib: Library | SymbolicProgram, layout: MachineLayout | None = None) -> ProgramMatrix:
    """Lower every symbolic field to a Dirac distribution.

    Unused operand fields are filled so the always-on register write is a
    no-op: operands default to register 0 and the destination of a
    destination-less opcode is its first operand (whose table slice passes
    that operand through unchanged).
    """
    layout = layout or MachineLayout()
    lib = _as_library(lib, layout)
    L = len(lib.lines)
    if L > layout.n:
        raise LayoutError(f"library has {L} lines but word size is {layout.n}")
    probs = np.zeros((L, layout.width))
    f = layout.fields
    label_refs: dict[int, str] = {}
    for i, ins in enumerate(lib.lines):
        if ins.op not in layout.ops:
            raise LayoutError(f"opcode {ins.op!r} is not in the machine's instruction set")
        values = {"arg1": 0, "arg2": 0}
        for fname, kind in SIGNATURES[ins.op]:
            operand = getattr(ins, fname)
            v = lib.resolve(operand)
            if kind == "reg" and v >= layout.registers:
                raise LayoutError(f"line {i}: register {v} exceeds register count {layout.registers}")
            if kind == "line":
                if v >= L:
                    raise LayoutError(f"line {i}: jump target {v} is past the end ({L} lines)")
                if operand.kind == "label":
                    label_refs[i] = operand.value
            if v >= layout.n:
                raise LayoutError(f"line {i}: operand {v} does not fit word size {layout.n}")
            values[fname] = v
        values.setdefault("dest", values["arg1"])
        probs[i, layout.op_index(ins.op)] = 1.0
        for fname in ("arg1", "arg2", "dest"):
            probs[i, f[fname].start + values[fname]] = 1.0
    return ProgramMatrix(
        probs,
        layout,
        lib.name,
        dict(lib.labels),
        label_refs,
        dict(lib.entry_points),
        dict(lib.spans),
    )


# ``compile`` shadows the builtin only inside this namespace
compile = compile_program


def field_softmax(logits: Tensor, layout: MachineLayout) -> Tensor:
    """Per-field softmax of an (..., width) logit tensor."""
    parts = [softmax(logits[(..., sl)], axis=-1) for sl in layout.fields.values()]
    return concat(parts, axis=-1)


def field_log_softmax(logits: Tensor, layout: MachineLayout) -> Tensor:
    parts = [log_softmax(logits[(..., sl)], axis=-1) for sl in layout.fields.values()]
    return concat(parts, axis=-1)


def freeze_mask(rho: ProgramMatrix, protected) -> ParameterMask:
    """Mask that is 0 over ``protected`` entries and 1 elsewhere.

    ``protected`` is ``"all"``, a program name, a line index, a
    ``(line, field)`` pair, or an iterable mixing these.
    """
    mask = np.ones(rho.probs.shape)
    items = [protected] if isinstance(protected, (str, int, tuple)) else list(protected)
    for item in items:
        if item == "all":
            mask[:] = 0
        elif isinstance(item, str):
            if item not in rho.spans:
                raise KeyError(f"no program {item!r} in this matrix (have {sorted(rho.spans)})")
            lo, hi = rho.spans[item]
            mask[lo:hi] = 0
        elif isinstance(item, tuple):
            line, fname = item
            _check_line(rho, line)
            if fname not in rho.layout.fields:
                raise KeyError(f"unknown field {fname!r}")
            mask[line, rho.layout.fields[fname]] = 0
        else:
            _check_line(rho, item)
            mask[item] = 0
    return ParameterMask(mask)


def _check_line(rho: ProgramMatrix, line: int) -> None:
    if not 0 <= int(line) < rho.n_lines:
        raise IndexError(f"line {line} outside [0, {rho.n_lines})")


# -- compilation by memorization -------------------------------------------------------

@dataclass
class MemorizeResult:
    controller: object
    matched: bool
    epochs: int
    final_loss: float
    line_loss: np.ndarray
    status: str
    history: list[float]
    decompiled: object = None
    first_match: int | None = None


def memorize(target: ProgramMatrix, controller, config: TrainConfig, tolerance: float = 1e-3,
             check_every: int = 10) -> MemorizeResult:
    """Overfit ``controller`` (a line generator) to emit ``target``.

    Loss is the per-field cross-entropy against the target distributions,
    averaged over lines. Training stops once the decompiled output matches
    the target and the mean loss is below ``tolerance``, or at
    ``config.max_epochs``.
    """
    layout = target.layout
    if tuple(controller.output_shape) != target.probs.shape:
        raise ShapeError(
            f"controller emits {tuple(controller.output_shape)} but the target program is {target.probs.shape}"
        )
    want = decompile(target).text
    goal = Tensor(target.probs)
    params = controller.parameters()
    opt = make_optimizer(config, params)
    history: list[float] = []
    matched = False
    first_match = None
    line_loss = np.full(target.n_lines, np.inf)
    status = "max_epochs"
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        opt.zero_grad()
        logp = field_log_softmax(controller.forward(), layout)
        per_line = -(goal * logp).sum(axis=-1)
        loss = per_line.mean()
        if not np.isfinite(loss.data):
            status = "diverged"
            break
        loss.backward()
        opt.step()
        history.append(float(loss.data))
        line_loss = per_line.data.copy()
        if epoch % check_every == 0 or epoch == config.max_epochs:
            matched = decompile(controller.program(target)).text == want
            if matched and first_match is None:
                first_match = epoch
            if matched and history[-1] < tolerance:
                status = "converged"
                break
    out = controller.program(target)
    dec = decompile(out)
    return MemorizeResult(controller, dec.text == want, epoch, history[-1] if history else float("nan"),
                          line_loss, status, history, dec, first_match)


def library_matrix(programs: Iterable[SymbolicProgram], layout: MachineLayout, strict: bool = True) -> ProgramMatrix:
    return compile_program(link(list(programs), n=layout.n, strict=strict), layout)
