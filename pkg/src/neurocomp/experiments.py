"""Experiment drivers: tool use, Fibonacci depth, tables vs circuits, memorization.

Each driver returns plain Python data and, given ``out_dir``, writes metric
CSVs, a JSON summary and the exact config it ran with.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus
from .circuits import ripple_add
from .compiler import compile_program, memorize
from .controllers import ProgramGenerator
from .encodings import bits_to_int, build_mod_table, decode, int_to_bits, table_lookup
from .substrate import Tensor, TrainConfig, contract, log, make_optimizer, softmax
from .tasks import Dataset, make_task
from .training import ExperimentResult, controller_for, default_binding, default_library, fib_steps, inspect_parse, train

EXPERIMENTS = ("mod_arith", "fib_depth", "tables_vs_circuits", "memorize")

DEFAULTS: dict[str, dict] = {
    "mod_arith": {"n": 16, "seeds": [0, 1, 2], "epochs": 100, "learning_rate": 0.003, "batch_size": 32,
                  "encoder": "attention", "head_gain": 1.0, "target_accuracy": 95.0},
    "fib_depth": {"n": 16, "seeds": [0, 1, 2], "depths": [1, 2, 3], "epochs": 60, "learning_rate": 0.003,
                  "batch_size": 8, "encoder": "pool", "head_gain": 6.0, "steps": None},
    "tables_vs_circuits": {"n": 16, "seeds": [0, 1, 2], "epochs": 3, "learning_rate": 0.05,
                           "batch_size": 32, "size": 2048, "slots": 4, "wide_bits": 6},
    "memorize": {"n": 16, "seeds": [0, 1, 2], "program": "fib", "epochs": 500, "learning_rate": 0.01,
                 "hidden": 64, "check_every": 10},
}


class StepBudgetError(ValueError):
    """The interpreter step budget cannot cover the requested recursion depth."""


def resolve_config(name: str, overrides: dict | None = None) -> dict:
    if name not in DEFAULTS:
        raise KeyError(f"unknown experiment {name!r}; valid experiments: {', '.join(EXPERIMENTS)}")
    unknown = set(overrides or {}) - set(DEFAULTS[name])
    if unknown:
        raise KeyError(f"unknown config keys for {name}: {sorted(unknown)}")
    return {**DEFAULTS[name], **(overrides or {})}


def _config(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(learning_rate=cfg["learning_rate"], max_epochs=cfg["epochs"], seed=seed,
                       batch_size=cfg.get("batch_size", 32))


# -- tool use ---------------------------------------------------------------------------

def run_mod_arith(cfg: dict, seed: int) -> tuple[ExperimentResult, float]:
    """Train one controller; returns the result and the parse-match rate on the test split."""
    task = make_task("mod_arith", cfg["n"], seed=seed)
    lib = default_library(task)
    rho = compile_program(lib.library(), lib.layout)
    binding = default_binding(task, rho)
    ctrl = controller_for(task, binding, cfg["encoder"], seed, head_gain=cfg["head_gain"])
    res = train(task, ctrl, rho, lib.layout, _config(cfg, seed), binding,
                target_accuracy=cfg.get("target_accuracy"))
    parse = inspect_parse(ctrl, task.test, binding)
    res.extra["parse_match"] = parse
    return res, parse


# -- depth study ------------------------------------------------------------------------

def check_budget(depth: int, steps: int | None) -> int:
    need = fib_steps(depth)
    if steps is None:
        return need
    if steps < need:
        raise StepBudgetError(f"depth {depth} needs at least {need} interpreter steps, budget is {steps}")
    return steps


def run_depth_study(depths, seeds, cfg: dict | None = None) -> dict:
    """Train a fresh controller per (depth, seed); report final test accuracy per depth.

    Returns ``{"rows": [...], "summary": [...], "results": {...}}``.
    """
    cfg = resolve_config("fib_depth", cfg)
    budgets = {d: check_budget(d, cfg["steps"]) for d in depths}
    rows, results = [], {}
    for d in depths:
        for seed in seeds:
            task = make_task(f"fib_depth({d})", cfg["n"], seed=seed)
            lib = default_library(task)
            rho = compile_program(lib.library(), lib.layout)
            binding = default_binding(task, rho)
            binding = type(binding)(binding.entries, binding.registers, binding.out_address, budgets[d])
            ctrl = controller_for(task, binding, cfg["encoder"], seed, head_gain=cfg["head_gain"])
            res = train(task, ctrl, rho, lib.layout, _config(cfg, seed), binding)
            results[(d, seed)] = res
            rows.append({"depth": d, "seed": seed, "steps": budgets[d], "test_accuracy": res.final("test"),
                         "train_accuracy": res.final("train"), "status": res.status})
    summary = []
    for d in depths:
        accs = [r["test_accuracy"] for r in rows if r["depth"] == d]
        summary.append({"depth": d, "steps": budgets[d], "mean": statistics.fmean(accs),
                        "stdev": statistics.stdev(accs) if len(accs) > 1 else 0.0, "seeds": len(accs)})
    return {"rows": rows, "summary": summary, "results": results}


# -- tables vs circuits -----------------------------------------------------------------

@dataclass
class Router:
    """Two softmax selectors over K input slots, one per operand."""

    first: Tensor
    second: Tensor

    @classmethod
    def create(cls, slots: int, seed: int) -> "Router":
        rng = np.random.default_rng(seed)
        return cls(Tensor(rng.normal(0.0, 0.1, slots), requires_grad=True),
                   Tensor(rng.normal(0.0, 0.1, slots), requires_grad=True))

    def parameters(self) -> list[Tensor]:
        return [self.first, self.second]

    def route(self, slots: Tensor) -> tuple[Tensor, Tensor]:
        """slots: (B, K, w) distributions or bit probabilities -> two (B, w) mixtures."""
        return (contract("k,zkw->zw", softmax(self.first), slots),
                contract("k,zkw->zw", softmax(self.second), slots))


class TableBackend:
    name = "table"

    def __init__(self, n: int):
        self.n = n
        self.table = build_mod_table(("add",), n)
        self.f = np.ones(1)

    def encode(self, values: np.ndarray) -> Tensor:
        if values.max() >= self.n:
            raise ValueError(f"a table of size {self.n} cannot represent operand {values.max()}")
        return Tensor(np.eye(self.n)[values])

    def forward(self, x: Tensor, y: Tensor) -> Tensor:
        f = np.broadcast_to(self.f, (x.shape[0], 1))
        return table_lookup(self.table, f, x, y)

    def loss(self, out: Tensor, gold: np.ndarray) -> Tensor:
        return -(Tensor(np.eye(self.n)[gold]) * log(out + 1e-12)).sum(axis=-1).mean()

    def decode(self, out: Tensor) -> np.ndarray:
        return decode(out.data)


class CircuitBackend:
    """Ripple-carry adder on bit probabilities; width follows the input."""

    name = "circuit"

    def __init__(self, bits: int):
        self.bits = bits

    def encode(self, values: np.ndarray) -> Tensor:
        return Tensor(int_to_bits(values, self.bits).astype(float))

    def forward(self, x: Tensor, y: Tensor) -> Tensor:
        return ripple_add(x, y)[(..., slice(0, self.bits))]

    def loss(self, out: Tensor, gold: np.ndarray) -> Tensor:
        t = Tensor(int_to_bits(gold, self.bits).astype(float))
        eps = 1e-12
        return -(t * log(out + eps) + (1.0 - t) * log(1.0 - out + eps)).sum(axis=-1).mean()

    def decode(self, out: Tensor) -> np.ndarray:
        return bits_to_int(out.data)


def _accuracy(router: Router, backend, data) -> float:
    x, y = router.route(backend.encode(data.tokens))
    return 100.0 * float((backend.decode(backend.forward(x, y)) == data.gold).mean())


def train_router(task: Dataset, backend, cfg: dict, seed: int, wide: Dataset | None = None) -> list[dict]:
    router = Router.create(task.params["slots"], seed)
    opt = make_optimizer(_config(cfg, seed), router.parameters())
    rng = np.random.default_rng(seed)
    rows = []
    for epoch in range(1, cfg["epochs"] + 1):
        order = rng.permutation(len(task.train))
        losses = []
        for i in range(0, len(order), cfg["batch_size"]):
            part = task.train.subset(order[i:i + cfg["batch_size"]])
            opt.zero_grad()
            x, y = router.route(backend.encode(part.tokens))
            loss = backend.loss(backend.forward(x, y), part.gold)
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        row = {"epoch": epoch, "backend": backend.name, "seed": seed, "loss": float(np.mean(losses)),
               "train": _accuracy(router, backend, task.train), "test": _accuracy(router, backend, task.test)}
        if wide is not None:
            # a table cannot encode the wider operands, so it gets no score there
            row["out_of_range"] = (_accuracy(router, CircuitBackend(_bits(wide.n)), wide.test)
                                   if isinstance(backend, CircuitBackend) else None)
        rows.append(row)
    return rows


def _bits(n: int) -> int:
    b = int(n).bit_length() - 1
    if 1 << b != n:
        raise ValueError(f"circuit width needs a power-of-two word size, got {n}")
    return b


def run_tables_vs_circuits(cfg: dict | None = None) -> dict:
    """Same routing task under both arithmetic backends.

    Out-of-range data uses the same hidden slots with operands up to
    2**wide_bits - 1, beyond what an n-entry table can encode.
    """
    cfg = resolve_config("tables_vs_circuits", cfg)
    rows, summary = [], []
    chance = 100.0 / (1 << cfg["wide_bits"])
    for seed in cfg["seeds"]:
        task = make_task("permutation_routing", cfg["n"], cfg["size"], seed, slots=cfg["slots"])
        wide = make_task("permutation_routing", 1 << cfg["wide_bits"], cfg["size"], seed, slots=cfg["slots"])
        for backend in (TableBackend(cfg["n"]), CircuitBackend(_bits(cfg["n"]))):
            series = train_router(task, backend, cfg, seed, wide)
            rows += series
            first_perfect = next((r["epoch"] for r in series if r["train"] >= 100.0), None)
            summary.append({"seed": seed, "backend": backend.name, "epochs_to_100": first_perfect,
                            "final_test": series[-1]["test"], "out_of_range": series[-1]["out_of_range"],
                            "representable_out_of_range": backend.name == "circuit"})
    return {"rows": rows, "summary": summary, "chance": chance}


# -- memorization -----------------------------------------------------------------------

def run_memorize(cfg: dict | None = None) -> dict:
    cfg = resolve_config("memorize", cfg)
    lib = corpus.load(cfg["program"])
    if lib.layout.n != cfg["n"]:
        raise ValueError(f"library {cfg['program']!r} is laid out for n={lib.layout.n}")
    target = compile_program(lib.library(), lib.layout)
    rows, summary = [], []
    for seed in cfg["seeds"]:
        gen = ProgramGenerator(target.n_lines, target.layout, hidden=cfg["hidden"], seed=seed)
        res = memorize(target, gen, TrainConfig(learning_rate=cfg["learning_rate"], max_epochs=cfg["epochs"],
                                                seed=seed), check_every=cfg["check_every"])
        rows += [{"seed": seed, "epoch": i + 1, "loss": v} for i, v in enumerate(res.history)]
        summary.append({"seed": seed, "matched": res.matched, "epochs": res.epochs,
                        "first_match": res.first_match, "final_loss": res.final_loss, "status": res.status})
    return {"rows": rows, "summary": summary}


# -- orchestration ----------------------------------------------------------------------

def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    fields = list(dict.fromkeys(k for r in rows for k in r))
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def run_experiment(name: str, overrides: dict | None = None, out_dir=None) -> dict:
    """Run ``name`` with ``overrides`` on top of the defaults; write artifacts when ``out_dir`` is set."""
    cfg = resolve_config(name, overrides)
    started = time.perf_counter()
    if name == "mod_arith":
        rows, summary = [], []
        for seed in cfg["seeds"]:
            res, parse = run_mod_arith(cfg, seed)
            rows += [{"seed": seed, **r} for r in res.history]
            summary.append({"seed": seed, "final_test": res.final("test"), "best_test": max(res.series("test")),
                            "epochs": res.history[-1]["epoch"] if res.history else 0, "parse_match": parse,
                            "library_frozen": res.extra["library_frozen"], "status": res.status})
        out = {"rows": rows, "summary": summary}
    elif name == "fib_depth":
        study = run_depth_study(cfg["depths"], cfg["seeds"], cfg)
        out = {"rows": study["rows"], "summary": study["summary"],
               "curves": [{"depth": d, "seed": s, **r} for (d, s), res in study["results"].items()
                          for r in res.history]}
    elif name == "tables_vs_circuits":
        out = run_tables_vs_circuits(cfg)
    else:
        out = run_memorize(cfg)
    out["config"] = cfg
    out["experiment"] = name
    out["wall_time"] = time.perf_counter() - started
    if out_dir is not None:
        write_artifacts(out, Path(out_dir))
    return out


def write_artifacts(out: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    name = out["experiment"]
    _write_csv(out_dir / f"{name}_metrics.csv", out["rows"])
    if "curves" in out:
        _write_csv(out_dir / f"{name}_curves.csv", out["curves"])
    if name == "fib_depth":
        _write_csv(out_dir / f"{name}_table.csv", out["summary"])
    (out_dir / "config.json").write_text(json.dumps(out["config"], indent=2, sort_keys=True) + "\n")
    summary = {k: out[k] for k in ("experiment", "summary", "wall_time") if k in out}
    summary.update({k: out[k] for k in ("chance",) if k in out})
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
