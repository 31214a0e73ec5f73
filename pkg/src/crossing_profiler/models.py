"""The three hybrid sequence models and their checkpoint format.

All variants project the 7 input channels to d_model once, then differ in how
the recurrent and attention stages are wired:

  variant 1  projection -> positions -> encoder blocks -> recurrent -> head
  variant 2  projection -> recurrent -> positions -> encoder blocks -> head
  variant 3  projection -> recurrent branch and encoder branch in parallel,
             features concatenated (recurrent first) and fused back to d_model

The attention stage always runs at the width of whatever feeds it: d_model in
variants 1 and 3, the recurrent output width in variant 2. That asymmetry is
what makes the parallel variant far lighter than the sequential one when
lstm_hidden is much larger than d_model. Variant 2 therefore needs an
lstm_hidden that is even and divisible by num_heads.

Checkpoints are a single binary file: magic "HLTX", a little-endian u32
format version, a u32 JSON byte length, the UTF-8 JSON header (model spec and
optional standardization statistics), then every parameter in declaration
order as little-endian float64.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CheckpointError, ConfigError, ContractError, ShapeError
from .layers import (
    EncoderParams,
    LstmParams,
    encoder_block,
    glorot_uniform,
    lstm_layer,
    positional_encoding,
)

CHECKPOINT_MAGIC = b"HLTX"
CHECKPOINT_VERSION = 1

VARIANT_NAMES = {
    1: "transformer-then-lstm",
    2: "lstm-then-transformer",
    3: "parallel-lstm-transformer",
}

_VARIANT_ALIASES = {
    "1": 1, "model1": 1, "transformer-then-lstm": 1, "transformer-lstm": 1,
    "2": 2, "model2": 2, "lstm-then-transformer": 2, "lstm-transformer": 2,
    "3": 3, "model3": 3, "parallel-lstm-transformer": 3, "parallel": 3,
}


def parse_variant(value) -> int:
    """Resolve a variant number or one of its name aliases to 1, 2, or 3."""
    key = str(value).strip().lower().replace("_", "-")
    if key not in _VARIANT_ALIASES:
        raise ConfigError(f"unknown model variant {value!r}; expected one of {sorted(set(_VARIANT_ALIASES))}")
    return _VARIANT_ALIASES[key]


@dataclass
class ModelSpec:
    """Static description of one model; this is what checkpoints embed.

    d_ff defaults to lstm_hidden for variant 1 and 2 * lstm_hidden for
    variants 2 and 3, which reproduces the published 1024 / 2048 / 2048
    widths at the full-scale recurrent size of 1024.
    """

    variant: int
    input_channels: int = 7
    d_model: int = 64
    lstm_hidden: int = 64
    num_heads: int = 2
    d_ff: int | None = None
    num_encoder_blocks: int = 1
    sequence_length: int = 512

    def __post_init__(self):
        self.variant = int(self.variant)
        if self.d_ff is None:
            self.d_ff = self.lstm_hidden * (1 if self.variant == 1 else 2)
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.variant in (1, 2, 3), f"variant must be 1, 2, or 3, got {self.variant}"),
            (self.input_channels >= 1, f"input_channels must be positive, got {self.input_channels}"),
            (self.d_model >= 2, f"d_model must be at least 2, got {self.d_model}"),
            (self.d_model % 2 == 0, f"d_model must be even for the position table, got {self.d_model}"),
            (self.lstm_hidden >= 1, f"lstm_hidden must be positive, got {self.lstm_hidden}"),
            (self.num_heads >= 1, f"num_heads must be positive, got {self.num_heads}"),
            (self.d_ff >= 1, f"d_ff must be positive, got {self.d_ff}"),
            (self.num_encoder_blocks >= 1, f"num_encoder_blocks must be positive, got {self.num_encoder_blocks}"),
            (self.sequence_length >= 1, f"sequence_length must be positive, got {self.sequence_length}"),
        ]
        if self.variant in (1, 3):
            checks.append(
                (self.d_model % self.num_heads == 0,
                 f"d_model {self.d_model} not divisible by num_heads {self.num_heads}")
            )
        if self.variant == 2:
            # the encoder runs on the recurrent output, so its width rules move there
            checks.append(
                (self.lstm_hidden % 2 == 0,
                 f"variant 2 needs an even lstm_hidden for the position table, got {self.lstm_hidden}")
            )
            checks.append(
                (self.lstm_hidden % self.num_heads == 0,
                 f"variant 2 needs lstm_hidden divisible by num_heads, got {self.lstm_hidden} and {self.num_heads}")
            )
        failures = [msg for ok, msg in checks if not ok]
        if failures:
            raise ConfigError("invalid model spec: " + "; ".join(failures))

    @property
    def encoder_width(self) -> int:
        return self.lstm_hidden if self.variant == 2 else self.d_model

    @property
    def head_width(self) -> int:
        return self.d_model if self.variant == 3 else self.lstm_hidden

    @classmethod
    def desk_scale(cls, variant: int) -> "ModelSpec":
        """Small dims for laptops and tests: everything at width 64."""
        return cls(variant=variant)

    @classmethod
    def full_scale(cls, variant: int) -> "ModelSpec":
        """Published dims: recurrent width 1024, d_ff 1024/2048/2048, 2 heads."""
        return cls(variant=variant, lstm_hidden=1024)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown model spec fields: {sorted(extra)}")
        return cls(**d)


@dataclass
class Affine:
    W: Tensor
    b: Tensor


class HybridModel:
    """One assembled variant: parameters plus the forward wiring.

    Graphs built by forward() are confined to the calling thread; the
    parameter arrays themselves may be read concurrently once training is
    done.
    """

    def __init__(self, spec: ModelSpec, input_proj: Affine, lstm: LstmParams,
                 encoders: list[EncoderParams], fusion: Affine | None, head: Affine,
                 standardization: dict | None = None):
        self.spec = spec
        self.input_proj = input_proj
        self.lstm = lstm
        self.encoders = encoders
        self.fusion = fusion
        self.head = head
        self.standardization = standardization
        self._pe_cache: dict[tuple[int, int], Tensor] = {}

    @property
    def dtype(self):
        return self.input_proj.W.dtype

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """Every parameter in declaration order; this order is the checkpoint layout."""
        out = [("input_proj.W", self.input_proj.W), ("input_proj.b", self.input_proj.b)]
        for name, t in zip(("W_f", "W_i", "W_c", "W_o", "b_f", "b_i", "b_c", "b_o"),
                           self.lstm.parameters()):
            out.append((f"lstm.{name}", t))
        for k, enc in enumerate(self.encoders):
            for j, h in enumerate(enc.heads):
                out.append((f"encoder.{k}.head.{j}.W_q", h.W_q))
                out.append((f"encoder.{k}.head.{j}.W_k", h.W_k))
                out.append((f"encoder.{k}.head.{j}.W_v", h.W_v))
            for name, t in zip(
                ("W_O", "W_1", "b_1", "W_2", "b_2", "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias"),
                enc.parameters()[3 * len(enc.heads):],
            ):
                out.append((f"encoder.{k}.{name}", t))
        if self.fusion is not None:
            out.append(("fusion.W", self.fusion.W))
            out.append(("fusion.b", self.fusion.b))
        out.append(("head.W", self.head.W))
        out.append(("head.b", self.head.b))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def _pe(self, length: int, width: int) -> Tensor:
        key = (length, width)
        if key not in self._pe_cache:
            self._pe_cache[key] = positional_encoding(length, width, dtype=self.dtype)
        return self._pe_cache[key]

    def forward(self, x, *, bypass_encoder: bool = False, training: bool = False,
                dropout_rng: np.random.Generator | None = None) -> Tensor:
        """Map an N x input_channels array to an N x 1 profile estimate.

        bypass_encoder replaces the attention stage with the identity (zeros
        for the parallel branch), leaving a pure recurrent path; used for
        causality ablations.
        """
        if isinstance(x, Tensor):
            xt = x
        else:
            xt = Tensor(np.asarray(x), dtype=self.dtype)
        if xt.data.ndim != 2 or xt.shape[1] != self.spec.input_channels:
            raise ShapeError(
                f"forward expects N x {self.spec.input_channels}, got shape {xt.shape}"
            )
        n = xt.shape[0]
        if n < 1 or n > self.spec.sequence_length:
            raise ContractError(
                f"sequence length {n} outside 1..{self.spec.sequence_length} supported by this spec"
            )

        z = ad.matmul(xt, self.input_proj.W) + self.input_proj.b

        def run_encoder(t: Tensor) -> Tensor:
            t = ad.add(t, self._pe(t.shape[0], t.shape[1]))
            for enc in self.encoders:
                t = encoder_block(t, enc, training=training, dropout_rng=dropout_rng)
            return t

        if self.spec.variant == 1:
            t = z if bypass_encoder else run_encoder(z)
            h = lstm_layer(self.lstm, t)
        elif self.spec.variant == 2:
            h = lstm_layer(self.lstm, z)
            if not bypass_encoder:
                h = run_encoder(h)
        else:
            recurrent = lstm_layer(self.lstm, z)
            if bypass_encoder:
                attended = Tensor(np.zeros((n, self.spec.d_model), dtype=self.dtype))
            else:
                attended = run_encoder(z)
            joined = ad.concat([recurrent, attended], axis=1)
            h = ad.matmul(joined, self.fusion.W) + self.fusion.b
        return ad.matmul(h, self.head.W) + self.head.b

    def predict(self, x) -> np.ndarray:
        """forward() without keeping the graph; returns a plain N x 1 array."""
        return self.forward(x).data


def build_model(spec: ModelSpec, seed: int, dtype=np.float64) -> HybridModel:
    """Deterministically initialize a model: one rng, parameters drawn in
    declaration order, matrices uniform +-sqrt(6/(fan_in+fan_out)), biases zero."""
    spec.validate()
    rng = np.random.default_rng(seed)

    def affine(fan_in: int, fan_out: int) -> Affine:
        return Affine(
            W=Tensor(glorot_uniform(rng, fan_in, fan_out, (fan_in, fan_out), dtype)),
            b=Tensor(np.zeros(fan_out, dtype=dtype)),
        )

    input_proj = affine(spec.input_channels, spec.d_model)
    lstm = LstmParams.init(spec.lstm_hidden, spec.d_model, rng, dtype=dtype)
    encoders = [
        EncoderParams.init(spec.encoder_width, spec.num_heads, spec.d_ff, rng, dtype=dtype)
        for _ in range(spec.num_encoder_blocks)
    ]
    fusion = affine(spec.lstm_hidden + spec.d_model, spec.d_model) if spec.variant == 3 else None
    head = affine(spec.head_width, 1)
    return HybridModel(spec, input_proj, lstm, encoders, fusion, head)


def param_count(model: HybridModel) -> int:
    return int(sum(t.data.size for t in model.parameters()))


def save_checkpoint(model: HybridModel, path, stats: dict | None = None) -> None:
    """Write the model to one binary file; see the module docstring for layout.

    stats, when given, is embedded in the JSON header so prediction needs
    only the checkpoint. Parameters are always stored as float64.
    """
    if stats is None:
        stats = model.standardization
    header = {"spec": model.spec.to_dict(), "standardization": stats}
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<I", len(payload))
    blob += payload
    for _, t in model.named_parameters():
        blob += np.ascontiguousarray(t.data, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path) -> HybridModel:
    """Read a checkpoint back; corrupt or truncated files raise CheckpointError
    without producing a partial model."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise CheckpointError(f"checkpoint too short to contain a header: {path}")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic bytes {raw[:4]!r}, expected {CHECKPOINT_MAGIC!r}: {path}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}: {path}")
    (json_len,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + json_len:
        raise CheckpointError(f"truncated checkpoint header: {path}")
    try:
        header = json.loads(raw[12:12 + json_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint header: {e}") from e
    spec = ModelSpec.from_dict(header["spec"])
    model = build_model(spec, seed=0, dtype=np.float64)
    model.standardization = header.get("standardization")
    body = raw[12 + json_len:]
    expected = sum(t.data.size for t in model.parameters()) * 8
    if len(body) != expected:
        raise CheckpointError(
            f"checkpoint body has {len(body)} bytes, expected {expected}: {path}"
        )
    offset = 0
    for _, t in model.named_parameters():
        n = t.data.size
        values = np.frombuffer(body, dtype="<f8", count=n, offset=offset)
        t.data[...] = values.reshape(t.data.shape)
        offset += n * 8
    return model
