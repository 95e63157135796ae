"""Trainable networks that emit programs or program inputs."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .compiler import ProgramMatrix, field_softmax
from .layout import MachineLayout
from .substrate import Tensor, concat, contract, softmax, take, tanh

ENCODERS = ("pool", "attention")


def _dense(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float = 1.0) -> tuple[Tensor, Tensor]:
    scale = gain * np.sqrt(1.0 / fan_in)
    return (Tensor(rng.normal(0.0, scale, (fan_in, fan_out)), requires_grad=True),
            Tensor(np.zeros(fan_out), requires_grad=True))


def _affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    lead = "zyxw"[: x.ndim - 1]
    return contract(f"{lead}i,io->{lead}o", x, W) + b


@dataclass(frozen=True)
class ControllerSpec:
    vocab_size: int
    seq_len: int
    n_entries: int
    registers: tuple[int, ...]
    n: int
    embed: int = 32
    hidden: int = 64
    encoder: str = "pool"
    head_gain: float = 1.0   # init scale of the register heads; larger starts them sharper

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}")
        if self.n_entries < 1:
            raise ValueError("a controller needs at least one entry point to select")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["registers"] = list(self.registers)
        return d


class Controller:
    """Tokens -> (selection over library entry points, one Word per input register).

    Each token is embedded together with its position and passed through a
    per-token layer before mean pooling, so pooling still sees word order.

    With the ``attention`` encoder each register head instead points at a
    token: a single attention head, queried from the pooled sentence, mixes
    the raw token embeddings, and the register Word is read off that mix.
    The same number token then decodes to the same value whatever its role.
    """

    def __init__(self, spec: ControllerSpec, seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        E, H = spec.embed, spec.hidden
        self.tok = Tensor(rng.normal(0.0, 0.5, (spec.vocab_size, E)), requires_grad=True)
        self.pos = Tensor(rng.normal(0.0, 0.5, (spec.seq_len, E)), requires_grad=True)
        self.W0, self.b0 = _dense(rng, 2 * E, H)
        if spec.encoder == "attention":
            self.Wk, _ = _dense(rng, H, H)
            self.queries = {r: _dense(rng, H, H) for r in spec.registers}
        self.W1, self.b1 = _dense(rng, H, H)
        self.W2, self.b2 = _dense(rng, H, H)
        self.Ws, self.bs = _dense(rng, H, spec.n_entries)
        width = E if spec.encoder == "attention" else H
        self.heads = {r: _dense(rng, width, spec.n, spec.head_gain) for r in spec.registers}

    def parameters(self) -> list[Tensor]:
        ps = [self.tok, self.pos, self.W0, self.b0, self.W1, self.b1, self.W2, self.b2, self.Ws, self.bs]
        if self.spec.encoder == "attention":
            ps.append(self.Wk)
            for W, b in self.queries.values():
                ps += [W, b]
        for W, b in self.heads.values():
            ps += [W, b]
        return ps

    def encode(self, tokens) -> tuple[Tensor, Tensor, Tensor]:
        """(sentence vector (B, H), per-token features (B, S, H), token embeddings (B, S, E))."""
        tokens = np.asarray(tokens, dtype=np.intp)
        if tokens.ndim != 2 or tokens.shape[1] > self.spec.seq_len:
            raise ValueError(f"expected (batch, <= {self.spec.seq_len}) token ids, got {tokens.shape}")
        if tokens.min() < 0 or tokens.max() >= self.spec.vocab_size:
            raise ValueError("token id outside the vocabulary")
        B, S = tokens.shape
        emb = take(self.tok, tokens)
        pos = take(self.pos, np.broadcast_to(np.arange(S), (B, S)))
        x = tanh(_affine(concat([emb, pos], axis=-1), self.W0, self.b0))  # (B, S, H)
        h = tanh(_affine(x.mean(axis=1), self.W1, self.b1))
        return tanh(_affine(h, self.W2, self.b2)), x, emb

    def forward(self, tokens) -> tuple[Tensor, dict[int, Tensor]]:
        h, x, emb = self.encode(tokens)
        selection = softmax(_affine(h, self.Ws, self.bs), axis=-1)
        if self.spec.encoder == "pool":
            regs = {r: softmax(_affine(h, W, b), axis=-1) for r, (W, b) in self.heads.items()}
            return selection, regs
        keys = contract("zsi,io->zso", x, self.Wk)
        regs = {}
        for r, (W, b) in self.heads.items():
            q = _affine(h, *self.queries[r])
            att = softmax(contract("zso,zo->zs", keys, q) * (1.0 / np.sqrt(self.spec.hidden)), axis=-1)
            regs[r] = softmax(_affine(contract("zs,zse->ze", att, emb), W, b), axis=-1)
        return selection, regs

    __call__ = forward

    def state_dict(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]


class ProgramGenerator:
    """Two dense layers from a one-hot line index to that line's field logits."""

    def __init__(self, n_lines: int, layout: MachineLayout, hidden: int = 64, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.layout = layout
        self.n_lines = n_lines
        self.W1, self.b1 = _dense(rng, n_lines, hidden)
        self.W2, self.b2 = _dense(rng, hidden, layout.width)

    @property
    def output_shape(self) -> tuple[int, int]:
        return (self.n_lines, self.layout.width)

    def parameters(self) -> list[Tensor]:
        return [self.W1, self.b1, self.W2, self.b2]

    def forward(self) -> Tensor:
        lines = Tensor(np.eye(self.n_lines))
        return _affine(tanh(_affine(lines, self.W1, self.b1)), self.W2, self.b2)

    def program(self, like: ProgramMatrix) -> ProgramMatrix:
        """Current output as a ProgramMatrix carrying ``like``'s symbols."""
        return like.with_probs(field_softmax(self.forward(), self.layout).data)
