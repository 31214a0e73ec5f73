"""Corpus assembly: augmentation fan-out, source-level splits, persistence.

A handful of measured crossings become a training corpus by fanning each
source sequence out into many augmented children.  Split membership is
decided per SOURCE, so every child of a crossing lands in the same split
and no crossing leaks across the train/validation/test boundary.
Standardization statistics come from the training split alone.
"""

import hashlib
import json
import os
import shutil
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from ..errors import AlignmentError, ConfigError, ContractError
from .augment import augment_downsample, augment_noise
from .io_csv import export_csv, ingest_sequence_csv
from .preprocess import AlignedSequence, record_to_sequence, resample_to_length

SPLIT_NAMES = ("train", "validation", "test")
MANIFEST_NAME = "manifest.json"


def stable_seed(*parts) -> int:
    """Deterministic 63-bit seed derived from string/int parts.

    Hash-based so it is stable across processes and platforms, unlike
    python's builtin hash.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass(frozen=True)
class AugmentPlan:
    """How to fan sources out into children and split them.

    Defaults give 42 + 2*21 = 84 children per source, so 127 sources
    yield 10668 sequences, split roughly 74/13/13 by source count.
    """

    noise_copies: int = 42
    downsample_pairs: int = 21
    split_ratios: Tuple[float, float, float] = (0.74, 0.13, 0.13)
    sequence_length: int = 512
    seed: int = 0

    @property
    def children_per_source(self) -> int:
        return self.noise_copies + 2 * self.downsample_pairs

    def validate(self):
        problems = []
        if self.noise_copies < 0:
            problems.append("noise_copies must be >= 0")
        if self.downsample_pairs < 0:
            problems.append("downsample_pairs must be >= 0")
        if self.noise_copies + 2 * self.downsample_pairs < 1:
            problems.append("plan must produce at least one child per source")
        if self.sequence_length < 2:
            problems.append("sequence_length must be >= 2")
        if len(self.split_ratios) != len(SPLIT_NAMES):
            problems.append("split_ratios needs one entry per split")
        elif any(r < 0 for r in self.split_ratios):
            problems.append("split ratios must be non-negative")
        elif abs(sum(self.split_ratios) - 1.0) > 1e-9:
            problems.append(
                "split ratios must sum to 1, got %r" % (sum(self.split_ratios),)
            )
        if problems:
            raise ConfigError("invalid augmentation plan: " + "; ".join(problems))

    def to_dict(self) -> dict:
        return {
            "noise_copies": self.noise_copies,
            "downsample_pairs": self.downsample_pairs,
            "split_ratios": list(self.split_ratios),
            "sequence_length": self.sequence_length,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPlan":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError("unknown plan fields: %s" % ", ".join(sorted(unknown)))
        kwargs = dict(d)
        if "split_ratios" in kwargs:
            kwargs["split_ratios"] = tuple(kwargs["split_ratios"])
        plan = cls(**kwargs)
        plan.validate()
        return plan


@dataclass
class FeatureStats:
    """Per-channel standardization statistics from the training split."""

    feature_means: np.ndarray
    feature_stds: np.ndarray
    target_mean: float
    target_std: float

    def __post_init__(self):
        self.feature_means = np.asarray(self.feature_means, dtype=np.float64)
        self.feature_stds = np.asarray(self.feature_stds, dtype=np.float64)
        if self.feature_means.shape != self.feature_stds.shape:
            raise ContractError("feature mean/sd vectors must match in shape")

    def standardize(self, data: np.ndarray) -> np.ndarray:
        """Standardize an N x 8 array (7 feature columns plus target)."""
        data = np.asarray(data, dtype=np.float64)
        k = self.feature_means.shape[0]
        out = np.empty_like(data)
        out[:, :k] = (data[:, :k] - self.feature_means) / self.feature_stds
        out[:, k] = (data[:, k] - self.target_mean) / self.target_std
        return out

    def standardize_features(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        return (features - self.feature_means) / self.feature_stds

    def destandardize_target(self, values: np.ndarray) -> np.ndarray:
        """Map standardized target values back to meters."""
        return np.asarray(values, dtype=np.float64) * self.target_std + self.target_mean

    def standardize_target(self, values_m: np.ndarray) -> np.ndarray:
        return (np.asarray(values_m, dtype=np.float64) - self.target_mean) / self.target_std

    def to_dict(self) -> dict:
        return {
            "feature_means": self.feature_means.tolist(),
            "feature_stds": self.feature_stds.tolist(),
            "target_mean": float(self.target_mean),
            "target_std": float(self.target_std),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(
            feature_means=np.asarray(d["feature_means"], dtype=np.float64),
            feature_stds=np.asarray(d["feature_stds"], dtype=np.float64),
            target_mean=float(d["target_mean"]),
            target_std=float(d["target_std"]),
        )


def compute_stats(sequences: List[AlignedSequence]) -> FeatureStats:
    """Population mean/sd per channel over every row of every sequence.

    Zero-variance channels get sd 1 so standardization stays defined.
    """
    if not sequences:
        raise ContractError("cannot compute statistics over an empty split")
    width = sequences[0].data.shape[1]
    count = 0
    total = np.zeros(width)
    for seq in sequences:
        total += seq.data.sum(axis=0)
        count += seq.data.shape[0]
    means = total / count
    sq = np.zeros(width)
    for seq in sequences:
        sq += ((seq.data - means) ** 2).sum(axis=0)
    stds = np.sqrt(sq / count)
    stds[stds == 0.0] = 1.0
    return FeatureStats(
        feature_means=means[:-1],
        feature_stds=stds[:-1],
        target_mean=float(means[-1]),
        target_std=float(stds[-1]),
    )


def apportion_counts(n: int, ratios) -> List[int]:
    """Split n items into len(ratios) groups by largest remainder.

    Guarantees the counts sum to n exactly; remainder ties go to the
    earlier group.
    """
    exact = [n * r for r in ratios]
    floors = [int(e) for e in exact]
    leftover = n - sum(floors)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - floors[i]), i))
    for i in order[:leftover]:
        floors[i] += 1
    return floors


def assign_source_splits(source_ids, ratios, seed: int) -> Dict[str, str]:
    """Shuffle sorted source ids and deal them into splits by ratio."""
    ids = sorted(source_ids)
    rng = np.random.default_rng(stable_seed(seed, "source-split"))
    order = rng.permutation(len(ids))
    counts = apportion_counts(len(ids), ratios)
    assignment = {}
    cursor = 0
    for name, count in zip(SPLIT_NAMES, counts):
        for j in range(cursor, cursor + count):
            assignment[ids[order[j]]] = name
        cursor += count
    return assignment


@dataclass
class DatasetBundle:
    """Standardized fixed-length splits plus everything needed to reuse them."""

    splits: Dict[str, List[AlignedSequence]]
    stats: FeatureStats
    plan: AugmentPlan
    source_splits: Dict[str, str]
    technique_counts: Dict[str, int]

    @property
    def split_counts(self) -> Tuple[int, int, int]:
        return tuple(len(self.splits[name]) for name in SPLIT_NAMES)

    def split_source_ids(self, name: str) -> set:
        return {seq.source_id for seq in self.splits[name]}

    def all_source_ids(self) -> set:
        return set(self.source_splits)


def _augment_source(seq: AlignedSequence, plan: AugmentPlan,
                    rng: np.random.Generator) -> List[AlignedSequence]:
    # Fixed production order: all noisy copies, then all split pairs.
    children = []
    for _ in range(plan.noise_copies):
        children.append(augment_noise(seq, rng))
    for _ in range(plan.downsample_pairs):
        children.extend(augment_downsample(seq, rng))
    return [resample_to_length(c, plan.sequence_length) for c in children]


def build_dataset(records, plan: AugmentPlan) -> DatasetBundle:
    """Align, augment, split, and standardize a list of raw records.

    Deterministic for a given plan: source order does not matter because
    sources are processed in sorted-id order with per-source rngs keyed
    on (seed, id).
    """
    plan.validate()
    if len(records) < 3:
        raise ContractError(
            "at least 3 source records are required, got %d" % len(records)
        )
    by_id = {}
    for rec in records:
        if rec.crossing_id in by_id:
            raise ContractError("duplicate crossing id %r" % rec.crossing_id)
        by_id[rec.crossing_id] = rec

    aligned: Dict[str, AlignedSequence] = {}
    failures = []
    for cid in sorted(by_id):
        try:
            aligned[cid] = record_to_sequence(by_id[cid])
        except AlignmentError as exc:
            failures.append("%s: %s" % (cid, exc))
    if failures:
        raise AlignmentError(
            "alignment failed for %d of %d records: %s"
            % (len(failures), len(records), "; ".join(failures))
        )

    source_splits = assign_source_splits(aligned, plan.split_ratios, plan.seed)
    splits: Dict[str, List[AlignedSequence]] = {name: [] for name in SPLIT_NAMES}
    technique_counts = {"noise": 0, "downsample": 0}
    for cid in sorted(aligned):
        rng = np.random.default_rng(stable_seed(plan.seed, "augment", cid))
        children = _augment_source(aligned[cid], plan, rng)
        splits[source_splits[cid]].extend(children)
        technique_counts["noise"] += plan.noise_copies
        technique_counts["downsample"] += 2 * plan.downsample_pairs

    stats = compute_stats(splits["train"])
    for name in SPLIT_NAMES:
        for seq in splits[name]:
            seq.data = stats.standardize(seq.data)
    return DatasetBundle(
        splits=splits,
        stats=stats,
        plan=plan,
        source_splits=source_splits,
        technique_counts=technique_counts,
    )


def bundle_manifest(bundle: DatasetBundle) -> dict:
    return {
        "plan": bundle.plan.to_dict(),
        "seed": bundle.plan.seed,
        "split_counts": {
            name: len(bundle.splits[name]) for name in SPLIT_NAMES
        },
        "source_splits": dict(sorted(bundle.source_splits.items())),
        "technique_counts": dict(bundle.technique_counts),
        "standardization": bundle.stats.to_dict(),
    }


def save_bundle(bundle: DatasetBundle, out_dir: str):
    """Persist a bundle as manifest.json plus one CSV per sequence.

    Builds the directory under a .partial name and renames it into place
    at the end, so a crash never leaves a half-written bundle at the
    target path.
    """
    out_dir = os.fspath(out_dir)
    if os.path.exists(out_dir):
        raise FileExistsError("bundle target already exists: %s" % out_dir)
    partial = out_dir.rstrip("/\\") + ".partial"
    if os.path.exists(partial):
        shutil.rmtree(partial)
    os.makedirs(partial)
    with open(os.path.join(partial, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(bundle_manifest(bundle), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name in SPLIT_NAMES:
        split_dir = os.path.join(partial, name)
        os.makedirs(split_dir)
        for i, seq in enumerate(bundle.splits[name]):
            path = os.path.join(split_dir, "%s__%05d.csv" % (seq.source_id, i))
            export_csv(seq, path)
    os.rename(partial, out_dir)


def load_bundle(bundle_dir: str) -> DatasetBundle:
    """Read back a bundle saved by save_bundle; sequences stay standardized."""
    bundle_dir = os.fspath(bundle_dir)
    manifest_path = os.path.join(bundle_dir, MANIFEST_NAME)
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    plan = AugmentPlan.from_dict(manifest["plan"])
    stats = FeatureStats.from_dict(manifest["standardization"])
    splits: Dict[str, List[AlignedSequence]] = {}
    for name in SPLIT_NAMES:
        split_dir = os.path.join(bundle_dir, name)
        entries = []
        for fn in os.listdir(split_dir):
            if not fn.endswith(".csv"):
                continue
            stem = fn[: -len(".csv")]
            index = int(stem.rsplit("__", 1)[1])
            entries.append((index, fn))
        entries.sort()
        sequences = []
        for _, fn in entries:
            seq, _ = ingest_sequence_csv(os.path.join(split_dir, fn))
            sequences.append(seq)
        splits[name] = sequences
    return DatasetBundle(
        splits=splits,
        stats=stats,
        plan=plan,
        source_splits=dict(manifest["source_splits"]),
        technique_counts=dict(manifest["technique_counts"]),
    )
