"""Recurrent and attention building blocks.

The recurrent cell is a standard gated memory cell driven by the
concatenation [previous hidden, current input], hidden part first, with a
zero initial state and a single forward-in-position direction. The attention
side is an encoder-only stack: sinusoidal position table, per-head scaled
dot-product attention, position-wise feed-forward, and post-norm residual
wiring. Dropout exists as a slot on the encoder block but defaults to 0 and
stays off unless a caller explicitly turns it on; see TrainConfig for the
matching guard.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, ShapeError

LAYER_NORM_EPS = 1e-5


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)


# -- recurrent side -----------------------------------------------------------


@dataclass
class LstmParams:
    """Gate weights over the concatenated [hidden, input] vector.

    Each W_* is (hidden x (hidden + input)); each b_* has length hidden.
    Field order here is the checkpoint serialization order.
    """

    W_f: Tensor
    W_i: Tensor
    W_c: Tensor
    W_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_c: Tensor
    b_o: Tensor

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    def parameters(self) -> list[Tensor]:
        return [self.W_f, self.W_i, self.W_c, self.W_o, self.b_f, self.b_i, self.b_c, self.b_o]

    @classmethod
    def init(cls, hidden_size: int, input_size: int, rng: np.random.Generator, dtype=np.float64) -> "LstmParams":
        if hidden_size < 1 or input_size < 1:
            raise ConfigError(f"lstm sizes must be positive, got hidden={hidden_size} input={input_size}")
        fan_in = hidden_size + input_size
        mats = [
            Tensor(glorot_uniform(rng, fan_in, hidden_size, (hidden_size, fan_in), dtype))
            for _ in range(4)
        ]
        biases = [Tensor(np.zeros(hidden_size, dtype=dtype)) for _ in range(4)]
        return cls(*mats, *biases)


@dataclass
class LstmState:
    h: Tensor
    C: Tensor

    @classmethod
    def zeros(cls, hidden_size: int, dtype=np.float64) -> "LstmState":
        return cls(Tensor(np.zeros(hidden_size, dtype=dtype)), Tensor(np.zeros(hidden_size, dtype=dtype)))


def lstm_cell_step(p: LstmParams, state: LstmState, y: Tensor) -> LstmState:
    """One recurrent update: forget/input/candidate gates, cell mix, output gate."""
    if y.data.ndim != 1 or y.shape[0] != p.input_size:
        raise ShapeError(f"cell input must be a length-{p.input_size} vector, got shape {y.shape}")
    if state.h.shape != (p.hidden_size,) or state.C.shape != (p.hidden_size,):
        raise ShapeError(
            f"state shapes {state.h.shape}/{state.C.shape} do not match hidden size {p.hidden_size}"
        )
    z = ad.concat([state.h, y], axis=0)
    f = ad.sigmoid(ad.matmul(p.W_f, z) + p.b_f)
    i = ad.sigmoid(ad.matmul(p.W_i, z) + p.b_i)
    c_tilde = ad.tanh(ad.matmul(p.W_c, z) + p.b_c)
    C = f * state.C + i * c_tilde
    o = ad.sigmoid(ad.matmul(p.W_o, z) + p.b_o)
    h = o * ad.tanh(C)
    return LstmState(h=h, C=C)


def lstm_layer(p: LstmParams, seq: Tensor) -> Tensor:
    """Unroll the cell over the rows of seq (L x input), zero initial state.

    Returns the full hidden trajectory as an L x hidden matrix. Output row x
    depends only on input rows 0..x.
    """
    if seq.data.ndim != 2:
        raise ShapeError(f"lstm_layer needs a rank-2 sequence, got shape {seq.shape}")
    if seq.shape[1] != p.input_size:
        raise ShapeError(f"sequence width {seq.shape[1]} does not match cell input size {p.input_size}")
    state = LstmState.zeros(p.hidden_size, dtype=seq.dtype)
    outputs = []
    for x in range(seq.shape[0]):
        state = lstm_cell_step(p, state, ad.row(seq, x))
        outputs.append(state.h)
    return ad.stack_rows(outputs)


# -- attention side -----------------------------------------------------------


def positional_encoding(length: int, dim: int, dtype=np.float64) -> Tensor:
    """Sinusoid table: PE[pos, 2j] = sin(pos / 10000^(2j/dim)), odd columns cos.

    Constant (no parents), values in [-1, 1]. dim must be even so sin/cos
    columns pair up.
    """
    if length < 1:
        raise ContractError(f"positional encoding needs length >= 1, got {length}")
    if dim < 2 or dim % 2 != 0:
        raise ContractError(f"positional encoding needs a positive even dim, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    rates = 10000.0 ** (np.arange(0, dim, 2, dtype=np.float64) / dim)
    table = np.empty((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(pos / rates)
    table[:, 1::2] = np.cos(pos / rates)
    return Tensor(table.astype(dtype))


@dataclass
class AttentionHeadParams:
    W_q: Tensor
    W_k: Tensor
    W_v: Tensor


@dataclass
class EncoderParams:
    """One post-norm encoder block.

    num_heads * d_head must equal the block width; the feed-forward expands
    to d_ff and back. dropout_rate is a slot that stays at 0 by default.
    """

    heads: list[AttentionHeadParams]
    W_O: Tensor
    W_1: Tensor
    b_1: Tensor
    W_2: Tensor
    b_2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    dropout_rate: float = 0.0

    @property
    def width(self) -> int:
        return self.W_O.shape[1]

    @property
    def num_heads(self) -> int:
        return len(self.heads)

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for h in self.heads:
            out.extend([h.W_q, h.W_k, h.W_v])
        out.extend(
            [self.W_O, self.W_1, self.b_1, self.W_2, self.b_2,
             self.ln1_gain, self.ln1_bias, self.ln2_gain, self.ln2_bias]
        )
        return out

    @classmethod
    def init(cls, width: int, num_heads: int, d_ff: int, rng: np.random.Generator,
             dtype=np.float64, dropout_rate: float = 0.0) -> "EncoderParams":
        if width < 1 or num_heads < 1 or d_ff < 1:
            raise ConfigError(f"encoder dims must be positive, got width={width} heads={num_heads} d_ff={d_ff}")
        if width % num_heads != 0:
            raise ConfigError(f"width {width} not divisible by num_heads {num_heads}")
        d_head = width // num_heads
        heads = [
            AttentionHeadParams(
                W_q=Tensor(glorot_uniform(rng, width, d_head, (width, d_head), dtype)),
                W_k=Tensor(glorot_uniform(rng, width, d_head, (width, d_head), dtype)),
                W_v=Tensor(glorot_uniform(rng, width, d_head, (width, d_head), dtype)),
            )
            for _ in range(num_heads)
        ]
        return cls(
            heads=heads,
            W_O=Tensor(glorot_uniform(rng, num_heads * d_head, width, (num_heads * d_head, width), dtype)),
            W_1=Tensor(glorot_uniform(rng, width, d_ff, (width, d_ff), dtype)),
            b_1=Tensor(np.zeros(d_ff, dtype=dtype)),
            W_2=Tensor(glorot_uniform(rng, d_ff, width, (d_ff, width), dtype)),
            b_2=Tensor(np.zeros(width, dtype=dtype)),
            ln1_gain=Tensor(np.ones(width, dtype=dtype)),
            ln1_bias=Tensor(np.zeros(width, dtype=dtype)),
            ln2_gain=Tensor(np.ones(width, dtype=dtype)),
            ln2_bias=Tensor(np.zeros(width, dtype=dtype)),
            dropout_rate=dropout_rate,
        )


def attention_head(Z: Tensor, W_q: Tensor, W_k: Tensor, W_v: Tensor) -> Tensor:
    """softmax(Q K^T / sqrt(d_k)) V with Q = Z W_q, K = Z W_k, V = Z W_v.

    No causal mask: every position attends to every position.
    """
    if Z.data.ndim != 2:
        raise ShapeError(f"attention input must be rank 2, got shape {Z.shape}")
    d_k = W_k.shape[1]
    Q = ad.matmul(Z, W_q)
    K = ad.matmul(Z, W_k)
    V = ad.matmul(Z, W_v)
    scores = ad.scale(ad.matmul(Q, ad.transpose(K)), 1.0 / math.sqrt(d_k))
    return ad.matmul(ad.softmax_rows(scores), V)


def multi_head_attention(Z: Tensor, p: EncoderParams) -> Tensor:
    """Concatenate per-head outputs along features, then project with W_O."""
    outputs = [attention_head(Z, h.W_q, h.W_k, h.W_v) for h in p.heads]
    return ad.matmul(ad.concat(outputs, axis=1), p.W_O)


def feed_forward(Z: Tensor, p: EncoderParams) -> Tensor:
    """Per-position W_2 relu(z W_1 + b_1) + b_2."""
    return ad.matmul(ad.relu(ad.matmul(Z, p.W_1) + p.b_1), p.W_2) + p.b_2


def layer_norm(Z: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each row to zero mean and unit variance, then scale and shift."""
    if Z.data.ndim != 2:
        raise ShapeError(f"layer_norm needs rank 2, got shape {Z.shape}")
    d = Z.shape[1]
    mean = ad.scale(ad.sum_along(Z, 1), 1.0 / d)
    centered = ad.sub(Z, mean)
    var = ad.scale(ad.sum_along(ad.power(centered, 2.0), 1), 1.0 / d)
    std = ad.power(ad.add_scalar(var, eps), 0.5)
    return ad.add(ad.mul(ad.div(centered, std), gain), bias)


def _dropout(t: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    if rate <= 0.0 or not training:
        return t
    if rng is None:
        raise ContractError("dropout with a nonzero rate needs an rng")
    keep = (rng.random(t.shape) >= rate).astype(t.data.dtype) / (1.0 - rate)
    return ad.mul(t, Tensor(keep))


def encoder_block(Z: Tensor, p: EncoderParams, *, training: bool = False,
                  dropout_rng: np.random.Generator | None = None) -> Tensor:
    """Post-norm block: LN(Z + MHA(Z)) then LN(out + FFN(out)).

    The dropout slots sit after the attention and feed-forward sublayers and
    are inert at the default rate of 0.
    """
    if Z.shape[1] != p.width:
        raise ShapeError(f"input width {Z.shape[1]} does not match block width {p.width}")
    attended = _dropout(multi_head_attention(Z, p), p.dropout_rate, dropout_rng, training)
    out1 = layer_norm(ad.add(Z, attended), p.ln1_gain, p.ln1_bias)
    lifted = _dropout(feed_forward(out1, p), p.dropout_rate, dropout_rng, training)
    return layer_norm(ad.add(out1, lifted), p.ln2_gain, p.ln2_bias)
