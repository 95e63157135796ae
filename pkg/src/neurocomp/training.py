"""Train controllers that drive a frozen, compiled library through the machine."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import corpus
from .asm.linker import Library
from .compiler import KAPPA, ProgramMatrix, compile_program, field_softmax, freeze_mask
from .controllers import Controller, ControllerSpec
from .encodings import decode
from .layout import MachineLayout
from .machine import SOFT, initial_state, loss_on_memory, run
from .substrate import Tensor, TrainConfig, contract, make_optimizer
from .tasks import Dataset, Split

OK, DIVERGED = "ok", "diverged"


@dataclass(frozen=True)
class Binding:
    """How a dataset drives a library: entry points, input registers, answer cell, step budget."""

    entries: tuple[str, ...]
    registers: tuple[int, ...]
    out_address: int
    steps: int


FIB_ITERATION_STEPS = 6   # lines inside the fib loop
FIB_EPILOGUE_STEPS = 3    # set, write, halt


def fib_steps(depth: int) -> int:
    return FIB_ITERATION_STEPS * depth + FIB_EPILOGUE_STEPS


def default_binding(task: Dataset, lib: Library) -> Binding:
    if task.kind == "mod_arith":
        return Binding(tuple(task.operations), (2, 3), 0, 3)
    if task.kind.startswith("fib_depth"):
        return Binding(("fib",), (2, 3, 4), 0, fib_steps(task.params["depth"]))
    raise ValueError(f"no library binding for task {task.kind!r}")


def default_library(task: Dataset) -> corpus.CorpusLibrary:
    if task.kind == "mod_arith":
        return corpus.load("arith")
    if task.kind.startswith("fib_depth"):
        return corpus.load("fib")
    raise ValueError(f"no default library for task {task.kind!r}")


@dataclass
class ExperimentResult:
    task: str
    seed: int
    config: dict
    history: list[dict] = field(default_factory=list)   # rows: epoch, split, accuracy, loss
    wall_time: float = 0.0
    status: str = OK
    extra: dict = field(default_factory=dict)
    library: LibraryParameters | None = field(default=None, repr=False, compare=False)

    def series(self, split: str, key: str = "accuracy") -> list[float]:
        return [row[key] for row in self.history if row["split"] == split]

    def final(self, split: str = "test") -> float:
        s = self.series(split)
        return s[-1] if s else float("nan")

    def epochs_to(self, split: str, accuracy: float) -> int | None:
        for row in self.history:
            if row["split"] == split and row["accuracy"] >= accuracy:
                return row["epoch"]
        return None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("task", "seed", "config", "history", "wall_time", "status", "extra")}


def controller_for(task: Dataset, binding: Binding, encoder: str = "pool", seed: int = 0,
                   embed: int = 32, hidden: int = 64, head_gain: float = 1.0) -> Controller:
    spec = ControllerSpec(task.vocab_size, task.seq_len, len(binding.entries), binding.registers, task.n,
                          embed=embed, hidden=hidden, encoder=encoder, head_gain=head_gain)
    return Controller(spec, seed=seed)


def entry_matrix(rho: ProgramMatrix, entries) -> np.ndarray:
    """(K, L) Dirac rows at each named entry point."""
    eye = np.eye(rho.n_lines)
    return np.stack([eye[rho.entry_points[e]] for e in entries])


def controller_forward(ctrl: Controller, tokens, rho: ProgramMatrix, binding: Binding,
                       layout: MachineLayout):
    """Selection and register Words -> machine initial state.

    The counter is the selection-weighted mixture of entry-point Diracs.
    """
    selection, regs = ctrl.forward(tokens)
    counter = contract("zk,kl->zl", selection, Tensor(entry_matrix(rho, binding.entries)))
    S0 = initial_state(layout, rho.n_lines, selection.shape[0], regs=regs, counter=counter)
    return selection, regs, S0


class LibraryParameters:
    """The compiled library held as trainable kappa-logits behind an all-zero mask."""

    def __init__(self, rho: ProgramMatrix, kappa: float = KAPPA):
        self.rho = rho
        self.logits = Tensor(rho.logits(kappa), requires_grad=True)
        self.mask = freeze_mask(rho, "all")
        self.initial = self.logits.data.copy()

    def probs(self) -> Tensor:
        return field_softmax(self.logits, self.rho.layout)

    def unchanged(self) -> bool:
        return bool(np.array_equal(self.logits.data, self.initial))


def _batches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, size):
        yield order[i:i + size]


def _evaluate(ctrl, split: Split, lib: LibraryParameters, binding: Binding, layout: MachineLayout,
              batch: int) -> tuple[float, float]:
    correct, loss_sum = 0, 0.0
    rho_t = lib.probs()
    for i in range(0, len(split), batch):
        part = split.subset(slice(i, i + batch))
        loss, mem = _forward(ctrl, part, lib, rho_t, binding, layout)
        correct += int((decode(mem) == part.gold).sum())
        loss_sum += float(loss.data) * len(part)
    return 100.0 * correct / max(1, len(split)), loss_sum / max(1, len(split))


def _forward(ctrl, part: Split, lib: LibraryParameters, rho_t: Tensor, binding: Binding,
             layout: MachineLayout):
    _, _, S0 = controller_forward(ctrl, part.tokens, lib.rho, binding, layout)
    report = run(S0, rho_t, max_steps=binding.steps, mode=SOFT, layout=layout)
    loss = loss_on_memory(report, [(binding.out_address, part.gold)])
    return loss, report.expected_memory.data[:, binding.out_address]


def train(task: Dataset, ctrl: Controller, lib: Library | ProgramMatrix, layout: MachineLayout,
          config: TrainConfig, binding: Binding | None = None, target_accuracy: float | None = None,
          eval_train: bool = True) -> ExperimentResult:
    """Supervise only the answer cell of the machine's halting-weighted memory.

    The library never moves: its logits sit behind an all-zero mask. Stops
    early once test accuracy reaches ``target_accuracy`` (when given), and
    aborts with status ``diverged`` on a non-finite loss.
    """
    started = time.perf_counter()
    rho = lib if isinstance(lib, ProgramMatrix) else compile_program(lib, layout)
    binding = binding or default_binding(task, rho)
    missing = [e for e in binding.entries if e not in rho.entry_points]
    if missing:
        raise ValueError(f"library has no entry points {missing}")
    if ctrl.spec.n != layout.n or ctrl.spec.n_entries != len(binding.entries):
        raise ValueError("controller heads do not match the layout and binding")
    libp = LibraryParameters(rho)
    params = ctrl.parameters() + [libp.logits]
    masks = [None] * len(ctrl.parameters()) + [libp.mask]
    opt = make_optimizer(config, params, masks)
    rng = np.random.default_rng(config.seed)
    result = ExperimentResult(task.kind, config.seed, {"train": asdict(config), "binding": asdict(binding),
                                                        "controller": ctrl.spec.to_dict(), "n": layout.n})
    for epoch in range(1, config.max_epochs + 1):
        total, count = 0.0, 0
        for idx in _batches(len(task.train), config.batch_size, rng):
            part = task.train.subset(idx)
            opt.zero_grad()
            loss, _ = _forward(ctrl, part, libp, libp.probs(), binding, layout)
            if not np.isfinite(loss.data):
                result.status = DIVERGED
                result.extra["diverged_at"] = {"epoch": epoch, "loss": float(loss.data)}
                break
            loss.backward()
            opt.step()
            total += float(loss.data) * len(idx)
            count += len(idx)
        if result.status == DIVERGED:
            break
        if eval_train:
            acc, ev_loss = _evaluate(ctrl, task.train, libp, binding, layout, 256)
            result.history.append({"epoch": epoch, "split": "train", "accuracy": acc, "loss": ev_loss})
        else:
            result.history.append({"epoch": epoch, "split": "train_running", "accuracy": float("nan"),
                                   "loss": total / max(1, count)})
        acc, ev_loss = _evaluate(ctrl, task.test, libp, binding, layout, 256)
        result.history.append({"epoch": epoch, "split": "test", "accuracy": acc, "loss": ev_loss})
        if target_accuracy is not None and acc >= target_accuracy:
            break
    result.wall_time = time.perf_counter() - started
    result.extra["library_frozen"] = libp.unchanged()
    result.library = libp
    return result


COMMUTATIVE = frozenset({"add", "mul", "max", "min"})


def inspect_parse(ctrl: Controller, split: Split, binding: Binding) -> float:
    """Percent of examples whose decoded selection and register Words equal the templated parse.

    For a commutative entry point the two operands may arrive in either order.
    """
    selection, regs = ctrl.forward(split.tokens)
    ok = decode(selection.data) == split.labels
    got = [decode(regs[r].data) for r in binding.registers[: split.inputs.shape[1]]]
    exact = np.all([g == split.inputs[:, k] for k, g in enumerate(got)], axis=0)
    if len(got) >= 2:
        swapped = (got[0] == split.inputs[:, 1]) & (got[1] == split.inputs[:, 0])
        for g, want in zip(got[2:], split.inputs[:, 2:].T):
            swapped &= g == want
        commutes = np.array([binding.entries[k] in COMMUTATIVE for k in split.labels])
        exact |= swapped & commutes
    return 100.0 * float((ok & exact).mean())
