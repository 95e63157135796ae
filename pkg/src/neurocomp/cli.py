"""``neurocomp`` command line: compile, run, decompile, train, experiment.

Exit codes: 0 success, 2 input error, 3 timeout or divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .asm import AsmError, LinkError, link, oracle_run, parse
from .compiler import ProgramMatrix, compile_program
from .experiments import EXPERIMENTS, StepBudgetError, resolve_config, run_experiment
from .layout import LayoutError, MachineLayout
from .machine import SOFT, THRESHOLDED, initial_state, run
from .tasks import parse_kind

OUT_ENV = "NEUROCOMP_OUT"
EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3


class InputError(Exception):
    pass


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "neurocomp-out"))


def _assignments(items: list[str] | None, what: str) -> dict[int, int]:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        try:
            if not sep:
                raise ValueError
            out[int(key)] = int(value)
        except ValueError:
            raise InputError(f"bad {what} assignment {item!r}; expected INDEX=VALUE") from None
    return out


def _layout(args) -> MachineLayout:
    return MachineLayout(n=args.n, registers=args.registers, mem_size=args.mem)


# -- subcommands ------------------------------------------------------------------------

def cmd_compile(args) -> int:
    layout = _layout(args)
    programs = []
    for src in args.sources:
        name, sep, file = src.partition("=")
        path = Path(file if sep else src)
        if not path.is_file():
            raise InputError(f"no such source file: {path}")
        programs.append(parse(path.read_text(), name=name if sep else path.stem, n=layout.n, source=str(path)))
    lib = link(programs, n=layout.n, strict=not args.lenient, name=args.name or programs[0].name)
    pm = compile_program(lib, layout)
    out = Path(args.out) if args.out else Path(f"{programs[0].name}.pm")
    out.parent.mkdir(parents=True, exist_ok=True)
    pm.save(out)
    debug = out.with_suffix(".json")
    debug.write_text(json.dumps(pm.debug_dict(), indent=2, sort_keys=True) + "\n")
    print(json.dumps({"matrix": str(out), "debug": str(debug), "lines": pm.n_lines,
                      "entry_points": pm.entry_points}))
    return EXIT_OK


def _load_matrix(path: str) -> ProgramMatrix:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such program matrix: {path}")
    try:
        return ProgramMatrix.load(p)
    except (ValueError, KeyError) as exc:
        raise InputError(f"{path}: {exc}") from None


def cmd_run(args) -> int:
    pm = _load_matrix(args.matrix)
    layout = pm.layout
    regs = _assignments(args.reg, "register")
    mem = _assignments(args.memory, "memory")
    for i, v in list(regs.items()) + list(mem.items()):
        if not 0 <= v < layout.n:
            raise InputError(f"value {v} does not fit word size {layout.n}")
    if any(not 0 <= i < layout.registers for i in regs) or any(not 0 <= i < layout.mem_size for i in mem):
        raise InputError("register or memory index outside the layout")
    if args.entry is not None and args.entry not in pm.entry_points:
        raise InputError(f"no entry point {args.entry!r}; have {sorted(pm.entry_points)}")
    start = pm.entry_points.get(args.entry, 0) if args.entry else 0

    if args.oracle:
        st = oracle_run(pm.symbolic(), start=args.entry, mem0=mem, regs0=regs, max_steps=args.steps,
                        layout=layout)
        report = {"mode": "oracle", "status": st.status, "steps": st.steps, "memory": st.mem,
                  "registers": st.regs, "counter": st.pc, "trace": st.trace}
        print(json.dumps(report))
        return EXIT_OK if st.status == "halted" else EXIT_RUNTIME

    S0 = initial_state(layout, pm.n_lines, 1, mem=mem, regs=regs, counter=start)
    rep = run(S0, pm, max_steps=args.steps, mode=args.mode, halt_threshold=args.threshold)
    print(rep.to_json())
    return EXIT_OK if rep.status[0] == "halted" else EXIT_RUNTIME


def cmd_decompile(args) -> int:
    from .asm import decompile

    pm = _load_matrix(args.matrix)
    dec = decompile(pm, threshold=args.threshold)
    text = dec.text
    if any(dec.uncertain):
        flagged = [f"# line {i}: confidence {c:.3f}" for i, (c, u) in
                   enumerate(zip(dec.confidences, dec.uncertain)) if u]
        text = "\n".join(flagged) + "\n" + text
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_OK


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such config file: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return cfg


def _run_and_report(name: str, overrides: dict, out_dir: Path) -> int:
    try:
        resolve_config(name, overrides)
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from None
    out = run_experiment(name, overrides, out_dir)
    print(json.dumps({"experiment": name, "out_dir": str(out_dir), "summary": out["summary"]}, default=str))
    statuses = [s.get("status") for s in out["summary"] if isinstance(s, dict)]
    return EXIT_RUNTIME if "diverged" in statuses else EXIT_OK


def _common_overrides(args, cfg: dict) -> dict:
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
    if args.epochs is not None:
        cfg["epochs"] = args.epochs
    return cfg


def cmd_train(args) -> int:
    try:
        kind, depth = parse_kind(args.task)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if kind == "permutation_routing":
        raise InputError("permutation_routing is trained by the tables_vs_circuits experiment")
    name = "mod_arith" if kind == "mod_arith" else "fib_depth"
    cfg = _common_overrides(args, _load_config(args.config))
    cfg.setdefault("seeds", [0])
    if depth is not None:
        cfg["depths"] = [depth]
    if args.steps is not None and name == "fib_depth":
        cfg["steps"] = args.steps
    return _run_and_report(name, cfg, Path(args.out) if args.out else default_out_dir() / args.task)


def cmd_experiment(args) -> int:
    if args.name not in EXPERIMENTS:
        raise InputError(f"unknown experiment {args.name!r}; valid experiments: {', '.join(EXPERIMENTS)}")
    cfg = _common_overrides(args, _load_config(args.config))
    return _run_and_report(args.name, cfg, Path(args.out) if args.out else default_out_dir() / args.name)


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neurocomp", description="Compile assembly into differentiable programs "
                                "and execute them on a differentiable register machine.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="assemble, link and compile sources into a program matrix")
    c.add_argument("sources", nargs="+", metavar="[NAME=]FILE",
                   help="assembly sources; the program name defaults to the file stem")
    c.add_argument("-o", "--out", help="output .pm path (a .json debug dump is written beside it)")
    c.add_argument("--name", help="library name (default: first source's stem)")
    c.add_argument("--n", type=int, default=16, help="word size")
    c.add_argument("--registers", type=int, default=8)
    c.add_argument("--mem", type=int, default=16, help="memory rows")
    c.add_argument("--lenient", action="store_true",
                   help="allow explicit writes to the reserved registers 0 and 1")
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("run", help="execute a program matrix and print a JSON report")
    r.add_argument("matrix")
    r.add_argument("--entry", help="entry point name (default: line 0)")
    r.add_argument("--reg", action="append", metavar="R=V", help="initial register value (repeatable)")
    r.add_argument("--memory", action="append", metavar="A=V", help="initial memory value (repeatable)")
    r.add_argument("--mode", choices=(THRESHOLDED, SOFT), default=THRESHOLDED)
    r.add_argument("--steps", type=int, default=100, help="step budget")
    r.add_argument("--threshold", type=float, default=0.99, help="halting threshold")
    r.add_argument("--oracle", action="store_true", help="run the integer interpreter instead")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("decompile", help="print the argmax assembly of a program matrix")
    d.add_argument("matrix")
    d.add_argument("--threshold", type=float, default=0.9, help="confidence below which lines are flagged")
    d.set_defaults(func=cmd_decompile)

    t = sub.add_parser("train", help="train one controller on mod_arith or fib_depth(k)")
    t.add_argument("task", help="mod_arith or fib_depth(K)")
    e = sub.add_parser("experiment", help=f"run an experiment suite ({', '.join(EXPERIMENTS)})")
    e.add_argument("name")
    for q in (t, e):
        q.add_argument("--config", help="JSON object of config overrides")
        q.add_argument("--seed", type=int, help="run this single seed")
        q.add_argument("--epochs", type=int)
        q.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./neurocomp-out)")
    t.add_argument("--steps", type=int, help="interpreter step budget (fib_depth only)")
    t.set_defaults(func=cmd_train)
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, AsmError, LinkError, LayoutError, StepBudgetError) as exc:
        print(f"neurocomp: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
