"""Binary arithmetic from probabilistic logic gates.

Circuits are recorded once per bit width as a ``GateExpr`` (a topologically
ordered DAG over and/or/xor/not) and then evaluated on BitWord tensors, so
the same structure serves exact Boolean inputs and soft bit probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .substrate import ShapeError, Tensor, concat, stack


# -- gates ----------------------------------------------------------------------

def gate_and(a, b):
    return a * b


def gate_or(a, b):
    return a * b + (1 - a) * b + a * (1 - b)


def gate_xor(a, b):
    return (1 - a) * b + a * (1 - b)


def gate_not(a):
    return 1 - a


GATES = {"and": gate_and, "or": gate_or, "xor": gate_xor, "not": gate_not}


# -- circuit DAGs -----------------------------------------------------------------

@dataclass(frozen=True)
class GateExpr:
    """A gate DAG.

    Node ids ``0 .. n_inputs-1`` are the circuit inputs, the next two are the
    constants 0 and 1, and every later node is a gate whose operands have
    smaller ids (which is what makes the DAG acyclic).
    """

    n_inputs: int
    gates: tuple[tuple[str, tuple[int, ...]], ...]
    outputs: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.gates)

    def depth(self) -> int:
        level = [0] * (self.n_inputs + 2)
        for _, args in self.gates:
            level.append(1 + max(level[a] for a in args))
        return max((level[o] for o in self.outputs), default=0)

    def evaluate(self, bits) -> Tensor:
        """Evaluate on a tensor whose last axis holds the ``n_inputs`` input bits."""
        bits = bits if isinstance(bits, Tensor) else Tensor(bits)
        if bits.shape[-1] != self.n_inputs:
            raise ShapeError(f"circuit expects {self.n_inputs} input bits, got {bits.shape[-1]}")
        zero = Tensor(np.zeros(bits.shape[:-1]))
        values: list = [bits[(..., i)] for i in range(self.n_inputs)] + [zero, 1 - zero]
        for name, args in self.gates:
            values.append(GATES[name](*(values[a] for a in args)))
        return stack([values[o] for o in self.outputs], axis=-1)


class CircuitBuilder:
    def __init__(self, n_inputs: int):
        self.n_inputs = n_inputs
        self.zero = n_inputs
        self.one = n_inputs + 1
        self._gates: list[tuple[str, tuple[int, ...]]] = []

    def _add(self, name: str, *args: int) -> int:
        self._gates.append((name, args))
        return self.n_inputs + 1 + len(self._gates)

    def and_(self, a, b):
        return self._add("and", a, b)

    def or_(self, a, b):
        return self._add("or", a, b)

    def xor(self, a, b):
        return self._add("xor", a, b)

    def not_(self, a):
        return self._add("not", a)

    def build(self, outputs: Sequence[int]) -> GateExpr:
        return GateExpr(self.n_inputs, tuple(self._gates), tuple(outputs))


def full_adder(c: CircuitBuilder, a: int, b: int, cin: int) -> tuple[int, int]:
    axb = c.xor(a, b)
    s = c.xor(axb, cin)
    carry = c.or_(c.and_(a, b), c.and_(cin, axb))
    return s, carry


def ripple(c: CircuitBuilder, xs: Sequence[int], ys: Sequence[int], cin: int) -> tuple[list[int], int]:
    out = []
    carry = cin
    for a, b in zip(xs, ys):
        s, carry = full_adder(c, a, b, carry)
        out.append(s)
    return out, carry


def subtractor(c: CircuitBuilder, xs, ys) -> tuple[list[int], int]:
    """Two's complement x + not(y) + 1; returns (difference bits, borrow)."""
    diff, carry = ripple(c, xs, [c.not_(y) for y in ys], c.one)
    return diff, c.not_(carry)


@lru_cache(maxsize=None)
def adder_circuit(b: int) -> GateExpr:
    c = CircuitBuilder(2 * b)
    s, carry = ripple(c, range(b), range(b, 2 * b), c.zero)
    return c.build(s + [carry])


@lru_cache(maxsize=None)
def subtractor_circuit(b: int) -> GateExpr:
    c = CircuitBuilder(2 * b)
    diff, borrow = subtractor(c, list(range(b)), list(range(b, 2 * b)))
    return c.build(diff + [borrow])


@lru_cache(maxsize=None)
def multiplier_circuit(b: int) -> GateExpr:
    c = CircuitBuilder(2 * b)
    xs, ys = list(range(b)), list(range(b, 2 * b))
    width = 2 * b
    acc = [c.zero] * width
    for i, y in enumerate(ys):
        partial = [c.zero] * i + [c.and_(y, x) for x in xs]
        partial += [c.zero] * (width - len(partial))
        acc, _ = ripple(c, acc, partial, c.zero)  # carry-out is always 0: x*y < 2^(2b)
    return c.build(acc)


@lru_cache(maxsize=None)
def divider_circuit(b: int) -> GateExpr:
    """Restoring division; outputs quotient (b), remainder (b), divide-by-zero flag."""
    c = CircuitBuilder(2 * b)
    xs, ys = list(range(b)), list(range(b, 2 * b))
    ys_wide = ys + [c.zero]
    rem = [c.zero] * (b + 1)
    quotient = [c.zero] * b
    for i in reversed(range(b)):
        rem = [xs[i]] + rem[:-1]
        diff, borrow = subtractor(c, rem, ys_wide)
        q = c.not_(borrow)
        nq = c.not_(q)
        rem = [c.or_(c.and_(q, d), c.and_(nq, r)) for d, r in zip(diff, rem)]
        quotient[i] = q
    flag = c.not_(ys[0])
    for y in ys[1:]:
        flag = c.and_(flag, c.not_(y))
    return c.build(quotient + rem[:b] + [flag])


# -- arithmetic on BitWords -------------------------------------------------------

def _pair(x, y) -> tuple[Tensor, int]:
    x = x if isinstance(x, Tensor) else Tensor(x)
    y = y if isinstance(y, Tensor) else Tensor(y)
    if x.shape != y.shape:
        raise ShapeError(f"operand widths differ: {x.shape} vs {y.shape}")
    return concat([x, y], axis=-1), x.shape[-1]


def ripple_add(x, y) -> Tensor:
    """x + y as a (b+1)-bit BitWord (the top bit is the carry-out)."""
    xy, b = _pair(x, y)
    return adder_circuit(b).evaluate(xy)


def ripple_sub(x, y) -> tuple[Tensor, Tensor]:
    """(x - y mod 2^b, borrow) where borrow is 1 exactly when x < y."""
    xy, b = _pair(x, y)
    out = subtractor_circuit(b).evaluate(xy)
    return out[(..., slice(0, b))], out[(..., b)]


def shift_add_mul(x, y) -> Tensor:
    """x * y as a 2b-bit BitWord."""
    xy, b = _pair(x, y)
    return multiplier_circuit(b).evaluate(xy)


class DivResult(NamedTuple):
    quotient: Tensor
    remainder: Tensor
    div_by_zero: Tensor


def long_divide(x, y) -> DivResult:
    """Restoring division.

    A zero divisor yields quotient all-ones, remainder x and ``div_by_zero``
    equal to 1, so losses stay finite.
    """
    xy, b = _pair(x, y)
    out = divider_circuit(b).evaluate(xy)
    return DivResult(out[(..., slice(0, b))], out[(..., slice(b, 2 * b))], out[(..., 2 * b)])
