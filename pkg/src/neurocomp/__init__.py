"""Differentiable register machine with a neural compiler for a small assembly language."""

from .asm import decompile, link, oracle_run, parse
from .compiler import KAPPA, ProgramMatrix, compile_program, freeze_mask, memorize
from .encodings import AluTable, build_mod_table, binary_to_unit, one_hot, unit_to_binary
from .layout import MachineLayout
from .machine import RunReport, initial_state, loss_on_memory, run
from .substrate import Tensor, TrainConfig, grad_check

__version__ = "0.1.0"

__all__ = [
    "AluTable", "KAPPA", "MachineLayout", "ProgramMatrix", "RunReport", "Tensor", "TrainConfig",
    "binary_to_unit", "build_mod_table", "compile_program", "decompile", "freeze_mask", "grad_check",
    "initial_state", "link", "loss_on_memory", "memorize", "one_hot", "oracle_run", "parse", "run",
    "unit_to_binary",
]
