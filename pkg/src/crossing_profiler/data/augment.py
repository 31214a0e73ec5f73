"""Sequence augmentation: bounded noise injection and odd/even splitting.

Both techniques expand a small corpus of aligned sequences into many
training children while leaving the surveyed target column untouched.
"""

import numpy as np

from ..errors import ContractError
from .preprocess import GPS_COLUMN, TARGET_COLUMN, AlignedSequence

# Noise scale as a fraction of the GPS profile's elevation range, and the
# hard truncation of the perturbation distribution in units of its sd.
NOISE_RANGE_FRACTION = 0.04
NOISE_TRUNCATION_SDS = 2.0

# Shortest parent an odd/even split may be asked to divide.  Keeps both
# children at or above the smallest alignable window half-width.
MIN_SPLIT_LENGTH = 33


def truncated_normal(rng: np.random.Generator, sd: float, size: int,
                     cut: float = NOISE_TRUNCATION_SDS) -> np.ndarray:
    """Zero-mean normal draws conditioned on |x| <= cut * sd.

    Rejection sampling, so the result follows the exact truncated
    distribution rather than a clipped one.
    """
    if sd < 0:
        raise ContractError("noise sd must be non-negative, got %r" % sd)
    if sd == 0.0 or size == 0:
        return np.zeros(size, dtype=np.float64)
    bound = cut * sd
    out = rng.normal(0.0, sd, size)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.normal(0.0, sd, int(bad.sum()))
        bad = np.abs(out) > bound
    return out


def augment_noise(seq: AlignedSequence, rng: np.random.Generator) -> AlignedSequence:
    """Perturb the GPS profile channel with bounded random noise.

    The noise sd is NOISE_RANGE_FRACTION of that channel's elevation
    range, truncated at NOISE_TRUNCATION_SDS standard deviations.  Every
    other column, including the target, is returned bit-identical.  A
    constant GPS profile has zero range and comes back unchanged.
    """
    child = seq.copy()
    gps = child.data[:, GPS_COLUMN]
    value_range = float(gps.max() - gps.min())
    if value_range == 0.0:
        return child
    sd = NOISE_RANGE_FRACTION * value_range
    child.data[:, GPS_COLUMN] = gps + truncated_normal(rng, sd, gps.shape[0])
    return child


def augment_downsample(
    seq: AlignedSequence,
    rng: np.random.Generator,
    min_length: int = MIN_SPLIT_LENGTH,
) -> tuple[AlignedSequence, AlignedSequence]:
    """Noise the sequence, then split it into even-row and odd-row children.

    Interleaving the two children row by row reconstructs the noisy
    parent exactly.  Child lengths differ by at most one.  Parents
    shorter than min_length are rejected.
    """
    if len(seq) < min_length:
        raise ContractError(
            "sequence of length %d is too short to split; need at least %d"
            % (len(seq), min_length)
        )
    noisy = augment_noise(seq, rng)

    def subsample(start: int) -> AlignedSequence:
        data = noisy.data[start::2].copy()
        return AlignedSequence(
            source_id=seq.source_id,
            data=data,
            positions_m=noisy.positions_m[start::2].copy(),
            peak_index=int(np.argmax(data[:, TARGET_COLUMN])),
            name=seq.name,
        )

    return subsample(0), subsample(1)
