"""One-hot Words, binary BitWords, conversions between them, and ALU lookup tables.

Conventions:
  * A Word of size n is a length-n probability vector over the integers 0..n-1.
  * A BitWord of width b is a length-b vector of independent bit probabilities,
    least-significant bit first.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .substrate import ShapeError, Tensor, concat, contract

MAX_TABLE_N = 128


class CapacityError(ValueError):
    """A representation is too small (or a table too large) for the request."""


def one_hot(k: int, n: int) -> np.ndarray:
    if not 0 <= k < n:
        raise IndexError(f"value {k} outside [0, {n})")
    w = np.zeros(n)
    w[k] = 1.0
    return w


def one_hot_batch(values, n: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.intp)
    if values.size and (values.min() < 0 or values.max() >= n):
        raise IndexError(f"values outside [0, {n})")
    return np.eye(n)[values]


def decode(w) -> int | np.ndarray:
    """Argmax readout; ties resolve to the smallest index."""
    arr = w.data if isinstance(w, Tensor) else np.asarray(w)
    out = np.argmax(arr, axis=-1)
    return int(out) if out.ndim == 0 else out


def is_word(w, atol: float = 1e-9) -> bool:
    arr = w.data if isinstance(w, Tensor) else np.asarray(w)
    return bool(np.all(arr >= -atol) and np.allclose(arr.sum(axis=-1), 1.0, atol=atol))


# -- binary encodings -----------------------------------------------------------

def binary_table(n: int, b: int) -> np.ndarray:
    """n x b matrix whose row k holds the bits of k (LSB first)."""
    if n > 2**b:
        raise CapacityError(f"{b} bits cannot represent {n} values")
    k = np.arange(n)[:, None]
    return ((k >> np.arange(b)[None, :]) & 1).astype(np.float64)


def int_to_bits(values, b: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    return ((values[..., None] >> np.arange(b)) & 1).astype(np.float64)


def bits_to_int(bits) -> int | np.ndarray:
    arr = bits.data if isinstance(bits, Tensor) else np.asarray(bits)
    hard = (arr >= 0.5).astype(np.int64)
    out = (hard << np.arange(arr.shape[-1])).sum(axis=-1)
    return int(out) if out.ndim == 0 else out


def unit_to_binary(w, b: int) -> Tensor:
    """Expected bits under the Word distribution (dot product with the binary table)."""
    w = w if isinstance(w, Tensor) else Tensor(w)
    table = binary_table(w.shape[-1], b)
    lead = _lead(w.ndim - 1)
    return contract(f"{lead}k,kb->{lead}b", w, Tensor(table))


def binary_to_unit(bits) -> Tensor:
    """Independent-coin expansion: entry k is the product over bits of P(bit_i = k_i)."""
    bits = bits if isinstance(bits, Tensor) else Tensor(bits)
    b = bits.shape[-1]
    lead = bits.shape[:-1]
    # build LSB-first: after processing bit i the vector indexes the low i+1 bits
    word = None
    for i in range(b):
        bi = bits[(..., i)].reshape(lead + (1,))
        pair = concat([1.0 - bi, bi], axis=-1)  # [P(bit=0), P(bit=1)]
        if word is None:
            word = pair
            continue
        # new index = old + 2^i * bit  -> bit is the slower-varying axis
        sub = _lead(len(lead))
        outer = contract(f"{sub}j,{sub}k->{sub}kj", word, pair)
        word = outer.reshape(lead + (2 ** (i + 1),))
    return word


def _lead(k: int) -> str:
    return "zyxwvuts"[:k]


# -- lookup tables ------------------------------------------------------------------

# integer semantics of each opcode: (first, second, n) -> value (before mod n)
ARITH: dict[str, Callable[[int, int, int], int]] = {
    "add": lambda a, b, n: a + b,
    "sub": lambda a, b, n: a - b,
    "mul": lambda a, b, n: a * b,
    "inc": lambda a, b, n: a + 1,
    "dec": lambda a, b, n: a - 1,
    "max": lambda a, b, n: max(a, b),
    "min": lambda a, b, n: min(a, b),
}

# opcodes whose table slice passes the first argument through; their real
# effect (memory, counter, immediates) is produced by the machine
PASS_THROUGH = ("copy", "set", "read", "write", "store", "jump", "jumpr", "halt")

TABLE_OPS = tuple(ARITH) + PASS_THROUGH


def op_value(op: str, a: int, b: int, n: int) -> int:
    """Integer reference semantics of a table slice."""
    if op in ARITH:
        return ARITH[op](a, b, n) % n
    if op in PASS_THROUGH:
        return a
    raise KeyError(f"unknown opcode {op!r}")


@dataclass(frozen=True)
class AluTable:
    """|A| x n x n x n tensor: table[f, i, j] is the one-hot answer of op f on (i, j)."""

    table: np.ndarray
    op_names: tuple[str, ...]
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.table.ndim != 4 or self.table.shape[0] != len(self.op_names):
            raise ShapeError(f"table shape {self.table.shape} does not match {len(self.op_names)} opcodes")
        object.__setattr__(self, "_index", {name: i for i, name in enumerate(self.op_names)})

    @property
    def n(self) -> int:
        return self.table.shape[1]

    def index(self, op: str) -> int:
        return self._index[op]

    def op_word(self, op: str) -> np.ndarray:
        return one_hot(self.index(op), len(self.op_names))

    _MAGIC = b"NCAT"
    _VERSION = 1

    def to_bytes(self) -> bytes:
        names = json.dumps(list(self.op_names)).encode()
        header = struct.pack("<4sHII", self._MAGIC, self._VERSION, self.n, len(self.op_names))
        answers = np.argmax(self.table, axis=-1).astype("<u2")
        return header + struct.pack("<I", len(names)) + names + answers.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "AluTable":
        magic, version, n, n_ops = struct.unpack_from("<4sHII", buf, 0)
        if magic != cls._MAGIC:
            raise ValueError("not an ALU table file")
        if version != cls._VERSION:
            raise ValueError(f"unsupported ALU table version {version}")
        off = struct.calcsize("<4sHII")
        (name_len,) = struct.unpack_from("<I", buf, off)
        off += 4
        names = tuple(json.loads(buf[off:off + name_len].decode()))
        off += name_len
        answers = np.frombuffer(buf, dtype="<u2", offset=off, count=n_ops * n * n).reshape(n_ops, n, n)
        table = np.eye(n)[answers.astype(np.intp)]
        return cls(table, names)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "AluTable":
        return cls.from_bytes(Path(path).read_bytes())


def build_mod_table(ops: Sequence[str], n: int) -> AluTable:
    """Fill the one-hot answer tensor for ``ops`` with arithmetic mod ``n``."""
    if n > MAX_TABLE_N:
        raise CapacityError(
            f"a table-backed ALU with n={n} exceeds the cap of {MAX_TABLE_N}; use the circuit backend"
        )
    for op in ops:
        if op not in ARITH and op not in PASS_THROUGH:
            raise KeyError(f"unknown opcode {op!r}")
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    answers = np.empty((len(ops), n, n), dtype=np.intp)
    vec = {
        "add": lambda: i + j,
        "sub": lambda: i - j,
        "mul": lambda: i * j,
        "inc": lambda: i + 1 + 0 * j,
        "dec": lambda: i - 1 + 0 * j,
        "max": lambda: np.maximum(i, j),
        "min": lambda: np.minimum(i, j),
    }
    for f, op in enumerate(ops):
        answers[f] = vec[op]() % n if op in ARITH else np.broadcast_to(i, (n, n))
    return AluTable(np.eye(n)[answers], tuple(ops))


def table_lookup(T: AluTable, f, a, b) -> Tensor:
    """c_k = T[h, i, j, k] f_h a_i b_j (leading batch axes allowed on f, a, b)."""
    f, a, b = (x if isinstance(x, Tensor) else Tensor(x) for x in (f, a, b))
    if f.shape[-1] != len(T.op_names) or a.shape[-1] != T.n or b.shape[-1] != T.n:
        raise ShapeError(
            f"lookup operands {f.shape}, {a.shape}, {b.shape} do not fit a table of shape {T.table.shape}"
        )
    lead = _lead(f.ndim - 1)
    return contract(f"hijk,{lead}h,{lead}i,{lead}j->{lead}k", Tensor(T.table), f, a, b)
