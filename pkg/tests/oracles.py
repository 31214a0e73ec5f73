"""Hand-unrolled scalar reference implementations.

Everything here is written with python floats and explicit loops, no numpy
vectorization and no imports from the package under test, so agreement with
the vectorized implementations is a genuine two-route check. These are the
frozen oracles the equation tests and the acceptance suite compare against.
"""
from __future__ import annotations

import math


def sigmoid_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def lstm_cell_reference(Wf, Wi, Wc, Wo, bf, bi, bc, bo, h_prev, c_prev, y):
    """One recurrent cell update, scalar by scalar.

    Gate order: forget, input, candidate, cell, output, hidden. The gate
    input is the concatenation [h_prev, y], hidden part first.
    """
    hidden = len(h_prev)
    z = [float(v) for v in h_prev] + [float(v) for v in y]

    def affine(W, b, k):
        return sum(float(W[k][a]) * z[a] for a in range(len(z))) + float(b[k])

    h_new, c_new = [], []
    for k in range(hidden):
        f = sigmoid_scalar(affine(Wf, bf, k))
        i = sigmoid_scalar(affine(Wi, bi, k))
        c_tilde = math.tanh(affine(Wc, bc, k))
        c = f * float(c_prev[k]) + i * c_tilde
        o = sigmoid_scalar(affine(Wo, bo, k))
        c_new.append(c)
        h_new.append(o * math.tanh(c))
    return h_new, c_new


def attention_head_reference(Z, Wq, Wk, Wv):
    """Scaled dot-product attention for one head, explicit loops."""
    L, d = len(Z), len(Z[0])
    dk = len(Wk[0])

    def project(W):
        cols = len(W[0])
        return [
            [sum(float(Z[i][a]) * float(W[a][j]) for a in range(d)) for j in range(cols)]
            for i in range(L)
        ]

    Q, K, V = project(Wq), project(Wk), project(Wv)
    out = []
    for i in range(L):
        scores = [
            sum(Q[i][t] * K[j][t] for t in range(dk)) / math.sqrt(dk) for j in range(L)
        ]
        peak = max(scores)
        exps = [math.exp(s - peak) for s in scores]
        total = sum(exps)
        weights = [e / total for e in exps]
        out.append(
            [sum(weights[j] * V[j][c] for j in range(L)) for c in range(len(V[0]))]
        )
    return out


def feed_forward_reference(Z, W1, b1, W2, b2):
    """Position-wise two-layer network with a ReLU between, explicit loops."""
    L, d = len(Z), len(Z[0])
    d_ff = len(W1[0])
    out = []
    for i in range(L):
        hidden = [
            max(0.0, sum(float(Z[i][a]) * float(W1[a][j]) for a in range(d)) + float(b1[j]))
            for j in range(d_ff)
        ]
        out.append(
            [
                sum(hidden[j] * float(W2[j][c]) for j in range(d_ff)) + float(b2[c])
                for c in range(len(W2[0]))
            ]
        )
    return out


def positional_encoding_reference(length: int, dim: int):
    """Sinusoid table: column 2j is sin, column 2j+1 is cos, rate 10000^(2j/dim)."""
    table = []
    for pos in range(length):
        row = []
        for col in range(dim):
            j = col // 2
            angle = pos / (10000.0 ** (2.0 * j / dim))
            row.append(math.sin(angle) if col % 2 == 0 else math.cos(angle))
        table.append(row)
    return table


def layer_norm_reference(Z, gain, bias, eps: float = 1e-5):
    """Row normalization with population variance, then affine."""
    out = []
    for zrow in Z:
        vals = [float(v) for v in zrow]
        d = len(vals)
        mean = sum(vals) / d
        var = sum((v - mean) ** 2 for v in vals) / d
        denom = math.sqrt(var + eps)
        out.append(
            [(v - mean) / denom * float(gain[c]) + float(bias[c]) for c, v in enumerate(vals)]
        )
    return out


def rmse_reference(pred, truth) -> float:
    total = 0.0
    for p, t in zip(pred, truth):
        total += (float(p) - float(t)) ** 2
    return math.sqrt(total / len(pred))


def mae_reference(pred, truth) -> float:
    total = 0.0
    for p, t in zip(pred, truth):
        total += abs(float(p) - float(t))
    return total / len(pred)


def truncated_normal_sd(sigma: float, cut: float = 2.0) -> float:
    """Std dev of a zero-mean normal truncated to [-cut*sigma, cut*sigma]."""
    phi = math.exp(-cut * cut / 2.0) / math.sqrt(2.0 * math.pi)
    mass = math.erf(cut / math.sqrt(2.0))
    return sigma * math.sqrt(1.0 - 2.0 * cut * phi / mass)


def param_count_reference(
    variant: int,
    input_channels: int,
    d_model: int,
    lstm_hidden: int,
    num_heads: int,
    d_ff: int,
    num_encoder_blocks: int,
) -> int:
    """Closed-form parameter enumeration, matrix by matrix.

    Variant 1 runs the encoder at d_model and the head on the recurrent
    output; variant 2 runs the encoder at the recurrent output width;
    variant 3 runs the encoder branch at d_model next to the recurrent
    branch and fuses the concatenation back to d_model.
    """

    def lstm(inp: int, hid: int) -> int:
        return 4 * (hid * (hid + inp) + hid)

    def encoder(width: int) -> int:
        d_head = width // num_heads
        attention = num_heads * 3 * width * d_head + (num_heads * d_head) * width
        ffn = width * d_ff + d_ff + d_ff * width + width
        norms = 2 * (width + width)
        return attention + ffn + norms

    projection = input_channels * d_model + d_model
    if variant == 1:
        total = projection
        total += num_encoder_blocks * encoder(d_model)
        total += lstm(d_model, lstm_hidden)
        total += lstm_hidden * 1 + 1
    elif variant == 2:
        total = projection
        total += lstm(d_model, lstm_hidden)
        total += num_encoder_blocks * encoder(lstm_hidden)
        total += lstm_hidden * 1 + 1
    elif variant == 3:
        total = projection
        total += lstm(d_model, lstm_hidden)
        total += num_encoder_blocks * encoder(d_model)
        total += (lstm_hidden + d_model) * d_model + d_model
        total += d_model * 1 + 1
    else:
        raise ValueError(f"unknown variant {variant}")
    return total
