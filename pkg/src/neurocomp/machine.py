"""The differentiable register machine.

Every quantity is a distribution: the counter over program lines, each
register and memory row over values 0..n-1, and each instruction field.
One ``step`` executes all lines, opcodes and addresses at once, weighted by
those distributions. With Dirac inputs it reduces exactly to the integer
interpreter in ``asm.oracle``.

All state tensors carry a leading batch axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .compiler import ProgramMatrix
from .encodings import AluTable, build_mod_table, decode
from .layout import MachineLayout
from .substrate import Tensor, concat, contract, log, mix, stack

SOFT, THRESHOLDED = "soft", "thresholded"


@dataclass
class MachineState:
    M: Tensor  # (B, mem_size, n)
    R: Tensor  # (B, registers, n)
    c: Tensor  # (B, L)
    h: Tensor  # (B,)
    t: int = 0

    @property
    def batch(self) -> int:
        return self.c.shape[0]


@dataclass
class Instruction:
    op: Tensor    # (B, |A|)
    arg1: Tensor  # (B, n)
    arg2: Tensor
    dest: Tensor

    def mass(self, layout: MachineLayout, name: str) -> Tensor:
        return self.op[:, layout.op_index(name)]


@dataclass
class RunReport:
    final: MachineState
    halting: list[Tensor]       # per-step halting increments, each (B,)
    steps: np.ndarray           # (B,) steps executed (first step reaching the threshold)
    mode: str
    status: list[str]
    expected_memory: Tensor | None = None
    layout: MachineLayout | None = None

    def memory(self, mode: str | None = None) -> Tensor:
        if (mode or ("expected" if self.mode == SOFT else "final")) == "expected":
            if self.expected_memory is None:
                raise ValueError("expected memory is only accumulated in soft mode")
            return self.expected_memory
        return self.final.M

    def to_dict(self, index: int = 0) -> dict:
        return {
            "mode": self.mode,
            "status": self.status[index],
            "steps": int(self.steps[index]),
            "memory": decode(self.final.M.data[index]).tolist(),
            "registers": decode(self.final.R.data[index]).tolist(),
            "counter": int(decode(self.final.c.data[index])),
            "halting_mass": float(self.final.h.data[index]),
            "halting_trace": [float(dh.data[index]) for dh in self.halting],
        }

    def to_json(self, index: int = 0) -> str:
        return json.dumps(self.to_dict(index), indent=2)


# -- constant routing matrices -------------------------------------------------------

@lru_cache(maxsize=None)
def _fold(n: int, k: int) -> np.ndarray:
    """n x k: value v addresses slot v mod k."""
    out = np.zeros((n, k))
    out[np.arange(n), np.arange(n) % k] = 1.0
    return out


@lru_cache(maxsize=None)
def _shift(L: int) -> np.ndarray:
    """L x L: c @ S moves every line's mass to the next line (wrapping)."""
    return np.roll(np.eye(L), 1, axis=1)


@lru_cache(maxsize=None)
def _op_masks(ops: tuple[str, ...]):
    table = np.array([op not in ("set", "read", "store") for op in ops], dtype=float)
    plain = np.array([op not in ("jump", "jumpr", "halt") for op in ops], dtype=float)
    return table, plain


def _fold_t(w: Tensor, k: int) -> Tensor:
    n = w.shape[-1]
    if n == k:
        return w
    return contract("bn,nk->bk", w, Tensor(_fold(n, k)))


def _scale(p: Tensor, x: Tensor) -> Tensor:
    """Per-batch scalar times a batched tensor."""
    return p.reshape(p.shape + (1,) * (x.ndim - 1)) * x


# -- state construction ------------------------------------------------------------------

def _rows(values, count: int, n: int, batch: int, default: dict[int, int]) -> Tensor:
    """Stack ``count`` Word rows; ``values`` maps index -> int | int array | Word tensor."""
    values = dict(values or {})
    rows = []
    for i in range(count):
        v = values.get(i, default.get(i, 0))
        if isinstance(v, Tensor):
            rows.append(v if v.ndim == 2 else v.reshape((1, n)) * Tensor(np.ones((batch, 1))))
            continue
        arr = np.asarray(v)
        if arr.ndim == 1 and arr.shape[0] == n and arr.dtype.kind == "f":
            rows.append(Tensor(np.broadcast_to(arr, (batch, n)).copy()))
            continue
        idx = np.broadcast_to(arr.astype(np.intp), (batch,))
        if idx.min() < 0 or idx.max() >= n:
            raise ValueError(f"initial value outside [0, {n}) at index {i}")
        rows.append(Tensor(np.eye(n)[idx]))
    return stack(rows, axis=1)


def initial_state(
    layout: MachineLayout,
    n_lines: int,
    batch: int = 1,
    mem=None,
    regs=None,
    counter=0,
) -> MachineState:
    """Build S0 = (M, R, c, h=0).

    ``mem``/``regs`` are sequences or dicts of per-slot values: an int (or an
    int array over the batch) becomes a Dirac row, a Tensor (B, n) is used as
    the row distribution. Register 0 holds 1 unless overridden. ``counter``
    is a line index, an int array, or a (B, L) Tensor.
    """
    n = layout.n
    if not isinstance(mem, dict) and mem is not None:
        mem = dict(enumerate(mem))
    if not isinstance(regs, dict) and regs is not None:
        regs = dict(enumerate(regs))
    M = _rows(mem, layout.mem_size, n, batch, {})
    R = _rows(regs, layout.registers, n, batch, {0: 1})
    if isinstance(counter, Tensor):
        c = counter
    else:
        idx = np.broadcast_to(np.asarray(counter, dtype=np.intp), (batch,))
        c = Tensor(np.eye(n_lines)[idx])
    return MachineState(M, R, c, Tensor(np.zeros(batch)))


# -- the four data paths -------------------------------------------------------------------

def _program_tensor(rho) -> Tensor:
    if isinstance(rho, ProgramMatrix):
        return Tensor(rho.probs)
    return rho if isinstance(rho, Tensor) else Tensor(rho)


def fetch(rho, c: Tensor, layout: MachineLayout) -> Instruction:
    """iota = sum_i c_i rho_i: the counter-weighted mixture of program lines."""
    P = _program_tensor(rho)
    inst = contract("bl,lw->bw" if P.ndim == 2 else "bl,blw->bw", c, P)
    f = layout.fields
    return Instruction(inst[:, f["op"]], inst[:, f["arg1"]], inst[:, f["arg2"]], inst[:, f["dest"]])


def read_mem(M: Tensor, a: Tensor) -> Tensor:
    """r_j = sum_i M_ij a_i."""
    return contract("bi,bij->bj", a, M)


def write_mem(M: Tensor, a: Tensor, value: Tensor, p: Tensor) -> Tensor:
    """M_new = (1 - p) M + p [(1 - a) * M + a (x) value]."""
    written = _scale_rows(1.0 - a, M) + contract("bi,bj->bij", a, value)
    return mix(p, M, written)


def write_reg(R: Tensor, a: Tensor, value: Tensor) -> Tensor:
    """R <- (1 - a) * R + a (x) value (registers are written every step)."""
    return _scale_rows(1.0 - a, R) + contract("bi,bj->bij", a, value)


def _scale_rows(w: Tensor, X: Tensor) -> Tensor:
    return w.reshape(w.shape + (1,)) * X


def resolve_args(inst: Instruction, R: Tensor, layout: MachineLayout) -> tuple[Tensor, Tensor]:
    """u, v = values of the registers addressed by arg1 and arg2."""
    r = layout.registers
    u = read_mem(R, _fold_t(inst.arg1, r))
    v = read_mem(R, _fold_t(inst.arg2, r))
    return u, v


def alu(T: AluTable, inst: Instruction, R: Tensor, layout: MachineLayout | None = None) -> Tensor:
    """o_l = T_ijkl f_i u_j v_k with u, v resolved from the registers."""
    layout = layout or MachineLayout(n=T.n, registers=R.shape[1], ops=T.op_names)
    u, v = resolve_args(inst, R, layout)
    return contract("fijk,bf,bi,bj->bk", Tensor(T.table), inst.op, u, v)


def step(S: MachineState, rho, T: AluTable, layout: MachineLayout) -> tuple[MachineState, Tensor]:
    """One superposed interpreter step; returns (S', halting increment)."""
    inst = fetch(rho, S.c, layout)
    u, v = resolve_args(inst, S.R, layout)
    table_mask, plain_mask = _op_masks(layout.ops)
    L = S.c.shape[1]

    inc_c = contract("bl,lk->bk", S.c, Tensor(_shift(L)))

    # register datapath: table ops, immediates, memory reads, return addresses
    f_table = inst.op * Tensor(table_mask)
    out = contract("fijk,bf,bi,bj->bk", Tensor(T.table), f_table, u, v)
    out = out + _scale(inst.mass(layout, "set"), inst.arg1)
    addr = _fold_t(u, layout.mem_size)
    out = out + _scale(inst.mass(layout, "read"), read_mem(S.M, addr))
    if L < layout.n:
        pc_next = concat([inc_c, Tensor(np.zeros((S.batch, layout.n - L)))], axis=-1)
    else:
        pc_next = _fold_t(inc_c, layout.n)
    out = out + _scale(inst.mass(layout, "store"), pc_next)
    R_new = write_reg(S.R, _fold_t(inst.dest, layout.registers), out)

    M_new = write_mem(S.M, addr, v, inst.mass(layout, "write"))

    # counter: fall through, conditional jumps, and halt as a self-loop
    cond = u[:, 1]
    to_imm = mix(cond, inc_c, _fold_t(inst.arg2, L))
    to_reg = mix(cond, inc_c, _fold_t(v, L))
    p_plain = contract("bf,f->b", inst.op, Tensor(plain_mask))
    p_halt = inst.mass(layout, "halt")
    c_new = (
        _scale(p_plain, inc_c)
        + _scale(inst.mass(layout, "jump"), to_imm)
        + _scale(inst.mass(layout, "jumpr"), to_reg)
        + _scale(p_halt, S.c)
    )

    dh = (1.0 - S.h) * p_halt
    return MachineState(M_new, R_new, c_new, S.h + dh, S.t + 1), dh


def _freeze(done: np.ndarray, old: MachineState, new: MachineState) -> MachineState:
    if not done.any():
        return new
    keep = Tensor(done.astype(float))
    return MachineState(
        mix(keep, new.M, old.M), mix(keep, new.R, old.R), mix(keep, new.c, old.c),
        mix(keep, new.h, old.h), new.t,
    )


def run(
    S0: MachineState,
    rho,
    T: AluTable | None = None,
    max_steps: int = 100,
    mode: str = THRESHOLDED,
    halt_threshold: float = 0.99,
    layout: MachineLayout | None = None,
) -> RunReport:
    """Execute up to ``max_steps`` steps.

    Thresholded mode stops (per batch element) once h >= ``halt_threshold``
    and freezes finished elements. Soft mode runs exactly ``max_steps`` and
    also returns the halting-weighted memory sum_t dh_t M_t + (1 - h_T) M_T.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    if not 0 < halt_threshold <= 1:
        raise ValueError("halt_threshold must lie in (0, 1]")
    if mode not in (SOFT, THRESHOLDED):
        raise ValueError(f"unknown mode {mode!r}")
    if layout is None:
        layout = rho.layout if isinstance(rho, ProgramMatrix) else MachineLayout()
    T = T or default_table(layout)

    S = S0
    B = S.batch
    trace: list[Tensor] = []
    steps = np.full(B, max_steps)
    done = np.zeros(B, dtype=bool)
    expected = None
    for t in range(1, max_steps + 1):
        S_next, dh = step(S, rho, T, layout)
        if mode == THRESHOLDED:
            S_next = _freeze(done, S, S_next)
            dh = dh * Tensor((~done).astype(float))
        else:
            term = _scale(dh, S_next.M)
            expected = term if expected is None else expected + term
        trace.append(dh)
        S = S_next
        newly = (S.h.data >= halt_threshold) & ~done
        steps[newly] = t
        done |= newly
        if mode == THRESHOLDED and done.all():
            break
    if mode == SOFT:
        rest = _scale(1.0 - S.h, S.M)
        expected = rest if expected is None else expected + rest
    status = ["halted" if d else "timeout" for d in done]
    return RunReport(S, trace, steps, mode, status, expected, layout)


@lru_cache(maxsize=8)
def _cached_table(ops: tuple[str, ...], n: int) -> AluTable:
    return build_mod_table(ops, n)


def default_table(layout: MachineLayout) -> AluTable:
    return _cached_table(layout.ops, layout.n)


def loss_on_memory(report: RunReport, targets, mode: str | None = None, eps: float = 1e-12) -> Tensor:
    """Mean cross-entropy between memory rows and targets.

    ``targets`` is a list of ``(address, expected)`` where ``expected`` is an
    int array over the batch (Dirac targets) or a Word array (B, n) / (n,).
    ``mode`` picks the halting-weighted ("expected") or final memory.
    """
    M = report.memory(mode)
    B, _, n = M.shape
    total = None
    for address, expected in targets:
        exp = np.asarray(expected)
        if exp.dtype.kind in "iu" or exp.ndim <= 1 and exp.shape != (n,):
            goal = np.eye(n)[np.broadcast_to(exp.astype(np.intp), (B,))]
        else:
            goal = np.broadcast_to(exp.astype(float), (B, n))
        ce = -(Tensor(goal) * log(M[:, address, :] + eps)).sum(axis=-1).mean()
        total = ce if total is None else total + ce
    return total * (1.0 / len(targets))
