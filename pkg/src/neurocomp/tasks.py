"""Synthetic datasets: templated arithmetic requests, Fibonacci depth, slot routing.

Every generator is deterministic in ``seed`` and produces integer gold values
from a plain integer oracle, never from the differentiable machine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .encodings import CapacityError, op_value

MAX_NUMBER_TOKENS = 32

WORDS = (
    "<pad>", "add", "sub", "mul", "max", "min", "and", "what", "is", "plus", "subtract",
    "from", "minus", "multiply", "by", "times", "maximum", "minimum", "of", "calculate",
    "fib", "starting", "with", "to", "depth",
)
VOCAB: tuple[str, ...] = WORDS + tuple(str(k) for k in range(MAX_NUMBER_TOKENS))
TOKEN_ID = {tok: i for i, tok in enumerate(VOCAB)}
PAD = TOKEN_ID["<pad>"]

MOD_OPS = ("add", "sub", "mul", "max", "min")

# {a} and {b} keep their roles even when the sentence mentions b first
TEMPLATES: dict[str, tuple[str, ...]] = {
    "add": ("add {a} {b}", "add {a} and {b}", "what is {a} plus {b}"),
    "sub": ("sub {a} {b}", "subtract {b} from {a}", "what is {a} minus {b}"),
    "mul": ("mul {a} {b}", "multiply {a} by {b}", "what is {a} times {b}"),
    "max": ("max {a} {b}", "maximum of {a} and {b}"),
    "min": ("min {a} {b}", "minimum of {a} and {b}"),
    "fib": ("fib {a} {b} depth {k}", "calculate fib starting with {a} and {b} to depth {k}"),
}


def tokenize(text: str) -> list[int]:
    out = []
    for word in text.lower().split():
        if word not in TOKEN_ID:
            raise KeyError(f"token {word!r} is not in the vocabulary")
        out.append(TOKEN_ID[word])
    return out


def detokenize(ids) -> str:
    return " ".join(VOCAB[i] for i in ids if i != PAD)


def pad_batch(seqs: list[list[int]], length: int | None = None) -> np.ndarray:
    length = length or max(len(s) for s in seqs)
    out = np.full((len(seqs), length), PAD, dtype=np.intp)
    for i, s in enumerate(seqs):
        if len(s) > length:
            raise ValueError(f"sequence of length {len(s)} exceeds {length}")
        out[i, :len(s)] = s
    return out


def fib_pairwise(x: int, y: int, depth: int, n: int | None = None) -> int:
    """Value after ``depth`` pairwise-sum steps (x, y) -> (y, x + y)."""
    for _ in range(depth):
        x, y = y, x + y
        if n is not None:
            x, y = x % n, y % n
    return y


@dataclass
class Split:
    tokens: np.ndarray          # (N, S) token ids, PAD-filled
    gold: np.ndarray            # (N,) integers
    inputs: np.ndarray          # (N, k) the integers the sentence mentions, in role order
    labels: np.ndarray          # (N,) index of the requested operation (0 when there is one)

    def __len__(self) -> int:
        return len(self.gold)

    def subset(self, idx) -> "Split":
        return Split(self.tokens[idx], self.gold[idx], self.inputs[idx], self.labels[idx])


@dataclass
class Dataset:
    kind: str
    n: int
    seed: int
    train: Split
    test: Split
    operations: tuple[str, ...] = ()
    params: dict = field(default_factory=dict)

    @property
    def seq_len(self) -> int:
        return self.train.tokens.shape[1]

    @property
    def vocab_size(self) -> int:
        return len(VOCAB)


_FIB = re.compile(r"fib_depth(?:\((\d+)\)|:(\d+))?$")


def parse_kind(kind: str, depth: int | None = None) -> tuple[str, int | None]:
    """``"fib_depth(3)"``, ``"fib_depth:3"`` or ``"fib_depth"`` with ``depth``."""
    m = _FIB.match(kind)
    if m:
        d = m.group(1) or m.group(2)
        d = int(d) if d else depth
        if d is None or d < 1:
            raise ValueError("fib_depth needs a depth of at least 1")
        return "fib_depth", d
    if kind in ("mod_arith", "permutation_routing"):
        return kind, None
    raise ValueError(f"unknown task kind {kind!r}; expected mod_arith, fib_depth(k) or permutation_routing")


def make_task(kind: str, n: int = 16, size: int | None = None, seed: int = 0, *, depth: int | None = None,
              slots: int = 4, test_fraction: float = 0.1) -> Dataset:
    """Build a deterministic dataset with a 90/10 train/test split.

    ``size`` caps the number of examples; by default every (operation,
    operand) combination appears once (routing defaults to 2048 rows).
    """
    kind, depth = parse_kind(kind, depth)
    if n < 2:
        raise CapacityError("word size must be at least 2")
    rng = np.random.default_rng(seed)
    if kind == "permutation_routing":
        return _routing(n, size or 2048, seed, slots, test_fraction)
    if n > MAX_NUMBER_TOKENS:
        raise CapacityError(f"the vocabulary spells numbers below {MAX_NUMBER_TOKENS}; n={n} is too large")

    rows = []
    if kind == "mod_arith":
        for o, op in enumerate(MOD_OPS):
            for a in range(n):
                for b in range(n):
                    rows.append((o, op, a, b, op_value(op, a, b, n)))
    else:
        for a in range(n):
            for b in range(n):
                rows.append((0, "fib", a, b, fib_pairwise(a, b, depth, n)))
    order = rng.permutation(len(rows))
    if size is not None:
        if size < 2:
            raise ValueError("size must allow both a train and a test example")
        order = order[:size]
    seqs, gold, inputs, labels = [], [], [], []
    for i in order:
        o, op, a, b, g = rows[i]
        template = TEMPLATES[op][rng.integers(len(TEMPLATES[op]))]
        seqs.append(tokenize(template.format(a=a, b=b, k=depth)))
        gold.append(g)
        inputs.append((a, b) if kind == "mod_arith" else (a, b, depth))
        labels.append(o)
    full = Split(pad_batch(seqs), np.array(gold), np.array(inputs), np.array(labels))
    train, test = _split(full, test_fraction)
    ops = MOD_OPS if kind == "mod_arith" else ("fib",)
    params = {"depth": depth} if depth else {}
    return Dataset(kind if depth is None else f"fib_depth({depth})", n, seed, train, test, ops, params)


def _split(full: Split, test_fraction: float) -> tuple[Split, Split]:
    n_test = max(1, int(round(len(full) * test_fraction)))
    idx = np.arange(len(full))
    return full.subset(idx[n_test:]), full.subset(idx[:n_test])


def routing_positions(seed: int, slots: int) -> tuple[int, int]:
    """The two slots holding the operands; depends on the seed only, not on n."""
    if slots < 2:
        raise CapacityError("routing needs at least two slots")
    rng = np.random.default_rng([seed, slots])
    i, j = rng.choice(slots, size=2, replace=False)
    return int(i), int(j)


def _routing(n: int, size: int, seed: int, slots: int, test_fraction: float) -> Dataset:
    """Slot values in 0..n-1; gold = (v[i] + v[j]) mod n for hidden fixed slots i, j."""
    i, j = routing_positions(seed, slots)
    rng = np.random.default_rng([seed, n])
    values = rng.integers(0, n, size=(size, slots))
    gold = (values[:, i] + values[:, j]) % n
    full = Split(values, gold, values[:, [i, j]], np.zeros(size, dtype=int))
    train, test = _split(full, test_fraction)
    return Dataset("permutation_routing", n, seed, train, test, ("add",), {"slots": slots, "positions": (i, j)})
