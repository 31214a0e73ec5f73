"""Training loop, error metrics, and the evaluation protocols.

The loss is mean squared error over every position of every sequence in a
mini-batch, optimized with bias-corrected Adam.  Metrics are reported in
meters after undoing the target standardization, pooled across all
positions of a split rather than averaged per sequence.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, adam_step, backward, zero_grad
from .data.dataset import DatasetBundle, FeatureStats, stable_seed
from .data.preprocess import AlignedSequence, resample_to_length
from .errors import ConfigError, ContractError, DivergenceError, LeakageError
from .models import HybridModel, VARIANT_NAMES


def _paired(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.ndim == 2 and pred.shape[1] == 1:
        pred = pred[:, 0]
    if truth.ndim == 2 and truth.shape[1] == 1:
        truth = truth[:, 0]
    if pred.ndim != 1 or truth.ndim != 1:
        raise ContractError(
            "metrics expect vectors, got shapes %r and %r" % (pred.shape, truth.shape)
        )
    if pred.shape[0] != truth.shape[0]:
        raise ContractError(
            "metric inputs differ in length: %d vs %d" % (pred.shape[0], truth.shape[0])
        )
    if pred.shape[0] == 0:
        raise ContractError("metrics are undefined on empty vectors")
    return pred, truth


def rmse(pred, truth) -> float:
    """Root mean squared per-position error."""
    pred, truth = _paired(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mae(pred, truth) -> float:
    """Mean absolute per-position error."""
    pred, truth = _paired(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


@dataclass
class TrainConfig:
    """Optimizer and loop settings.

    Dropout stays off unless allow_dropout is set; the architecture keeps
    the slot but the default training recipe does not use it.
    """

    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 15
    seed: int = 0
    dropout_rate: float = 0.0
    allow_dropout: bool = False

    def validate(self):
        problems = []
        if self.learning_rate < 0:
            problems.append("learning_rate must be >= 0")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.max_epochs < 1:
            problems.append("max_epochs must be >= 1")
        if not (1 <= self.patience < self.max_epochs):
            problems.append("patience must satisfy 1 <= patience < max_epochs")
        if self.dropout_rate != 0.0 and not self.allow_dropout:
            problems.append(
                "dropout is disabled by default; set allow_dropout to experiment"
            )
        if self.allow_dropout and not (0.0 <= self.dropout_rate < 1.0):
            problems.append("dropout_rate must lie in [0, 1)")
        if problems:
            raise ConfigError("invalid training config: " + "; ".join(problems))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_rmse_m: float


@dataclass
class TrainingHistory:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_rmse_m\n")
            for rec in self.epochs:
                fh.write(
                    "%d,%.17g,%.17g\n" % (rec.epoch, rec.train_loss, rec.val_rmse_m)
                )


def _forward_many(model: HybridModel, xs: Sequence[np.ndarray],
                  threads: int = 1) -> List[np.ndarray]:
    # Frozen parameters are shared read-only, so fan-out is safe; results
    # come back in input order either way.
    if threads <= 1 or len(xs) <= 1:
        return [model.predict(x) for x in xs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(model.predict, xs))


def _pooled_metrics_m(preds_std, targets_std, stats: FeatureStats):
    """Pooled RMSE/MAE in meters over many standardized prediction pairs."""
    sq = 0.0
    ab = 0.0
    count = 0
    for pred, target in zip(preds_std, targets_std):
        err = stats.destandardize_target(pred.ravel()) - stats.destandardize_target(
            np.asarray(target).ravel()
        )
        sq += float((err ** 2).sum())
        ab += float(np.abs(err).sum())
        count += err.shape[0]
    if count == 0:
        raise ContractError("metrics are undefined on an empty split")
    return float(np.sqrt(sq / count)), ab / count


def split_metrics(model: HybridModel, sequences: Sequence[AlignedSequence],
                  stats: FeatureStats, threads: int = 1):
    """Pooled (rmse_m, mae_m) of a model over standardized sequences."""
    if not sequences:
        raise ContractError("metrics are undefined on an empty split")
    preds = _forward_many(model, [s.features for s in sequences], threads)
    return _pooled_metrics_m(preds, [s.target for s in sequences], stats)


def train(model: HybridModel, bundle: DatasetBundle, cfg: TrainConfig) -> TrainingHistory:
    """Optimize the model on the bundle's training split.

    Shuffles sequences each epoch with a generator seeded by cfg.seed,
    records pooled training MSE (standardized space) and validation RMSE
    (meters) per epoch, stops early after cfg.patience epochs without
    validation improvement, and restores the best-validation parameters
    before returning.  A non-finite batch loss aborts with the history
    recorded so far attached to the error.
    """
    cfg.validate()
    train_seqs = bundle.splits["train"]
    val_seqs = bundle.splits["validation"]
    if not train_seqs or not val_seqs:
        raise ContractError("training requires non-empty train and validation splits")
    if train_seqs[0].data.shape[1] - 1 != model.spec.input_channels:
        raise ContractError(
            "bundle provides %d feature channels, model expects %d"
            % (train_seqs[0].data.shape[1] - 1, model.spec.input_channels)
        )
    model.standardization = bundle.stats.to_dict()

    xs = [s.features for s in train_seqs]
    ys = [s.target.reshape(-1, 1) for s in train_seqs]
    tensors = [t for _, t in model.named_parameters()]
    params = [t.data for t in tensors]
    state = AdamState.for_params(params, learning_rate=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    dropout_rng = (
        np.random.default_rng(stable_seed(cfg.seed, "dropout"))
        if cfg.dropout_rate > 0.0
        else None
    )
    training_mode = cfg.dropout_rate > 0.0
    if training_mode:
        for enc in model.encoders:
            enc.dropout_rate = cfg.dropout_rate

    history = TrainingHistory()
    best_val = np.inf
    best_params = None
    since_best = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(xs))
        sq_sum = 0.0
        position_count = 0
        for batch_no, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = order[start:start + cfg.batch_size]
            zero_grad(tensors)
            total = None
            preds = []
            for idx in batch:
                pred = model.forward(
                    xs[idx], training=training_mode, dropout_rng=dropout_rng
                )
                diff = ad.sub(pred, Tensor(ys[idx]))
                seq_loss = ad.mean_all(ad.mul(diff, diff))
                total = seq_loss if total is None else ad.add(total, seq_loss)
                preds.append(pred.data)
            batch_loss = ad.scale(total, 1.0 / len(batch))
            if not np.isfinite(batch_loss.data):
                raise DivergenceError(epoch=epoch, batch=batch_no, history=history)
            backward(batch_loss)
            adam_step(params, [t.grad for t in tensors], state)
            for idx, pred in zip(batch, preds):
                sq_sum += float(((pred - ys[idx]) ** 2).sum())
                position_count += pred.shape[0]
        train_loss = sq_sum / position_count
        val_rmse, _ = split_metrics(model, val_seqs, bundle.stats)
        history.epochs.append(EpochRecord(epoch=epoch, train_loss=train_loss,
                                          val_rmse_m=val_rmse))
        if val_rmse < best_val:
            best_val = val_rmse
            best_params = [p.copy() for p in params]
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                history.stopped_early = True
                break
    if best_params is not None:
        for p, snap in zip(params, best_params):
            np.copyto(p, snap)
    return history


@dataclass(frozen=True)
class MetricsRow:
    model: str
    split: str
    rmse_m: float
    mae_m: float
    downsample_factor: Optional[int] = None


@dataclass
class MetricsReport:
    rows: List[MetricsRow] = field(default_factory=list)

    def to_split_csv(self, path):
        """One row per (model, split): model,split,rmse_m,mae_m."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("model,split,rmse_m,mae_m\n")
            for row in self.rows:
                fh.write(
                    "%s,%s,%.17g,%.17g\n" % (row.model, row.split, row.rmse_m, row.mae_m)
                )

    def to_downsample_csv(self, path):
        """Generalization layout: downsample_factor,model,rmse_m,mae_m.

        Factor 1 is written as "-", matching the report convention that the
        un-decimated row carries no factor.
        """
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("downsample_factor,model,rmse_m,mae_m\n")
            for row in self.rows:
                factor = row.downsample_factor
                label = "-" if factor in (None, 1) else str(factor)
                fh.write(
                    "%s,%s,%.17g,%.17g\n" % (label, row.model, row.rmse_m, row.mae_m)
                )

    def to_json(self, path):
        import json

        payload = {
            "rows": [
                {
                    "model": r.model,
                    "split": r.split,
                    "downsample_factor": r.downsample_factor,
                    "rmse_m": r.rmse_m,
                    "mae_m": r.mae_m,
                }
                for r in self.rows
            ]
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def evaluate(model: HybridModel, bundle: DatasetBundle, threads: int = 1) -> MetricsReport:
    """Pooled RMSE/MAE in meters for each bundle split."""
    name = VARIANT_NAMES[model.spec.variant]
    report = MetricsReport()
    for split in ("train", "validation", "test"):
        sequences = bundle.splits[split]
        if not sequences:
            raise ContractError("cannot evaluate empty split %r" % split)
        r, m = split_metrics(model, sequences, bundle.stats, threads)
        report.rows.append(MetricsRow(model=name, split=split, rmse_m=r, mae_m=m))
    return report


def _decimate(seq: AlignedSequence, factor: int) -> AlignedSequence:
    data = seq.data[::factor].copy()
    return AlignedSequence(
        source_id=seq.source_id,
        data=data,
        positions_m=seq.positions_m[::factor].copy(),
        peak_index=int(np.argmax(data[:, -1])),
        name=seq.name,
    )


def generalization_eval(
    model: HybridModel,
    heldout: Sequence[AlignedSequence],
    factors: Iterable[int] = (1, 2),
    seen_source_ids: Iterable[str] = (),
    threads: int = 1,
) -> MetricsReport:
    """Evaluate on never-seen crossings at one or more decimation factors.

    Heldout sequences are raw (meters, unstandardized).  For factor f,
    every f-th row is kept, the result is resampled to the model's
    sequence length, features are standardized with the model's stored
    statistics, and pooled metrics are computed in meters.  Any heldout
    source id that also appears in seen_source_ids is a leakage error.
    """
    if not heldout:
        raise ContractError("generalization evaluation needs at least one sequence")
    if model.standardization is None:
        raise ContractError("model carries no standardization statistics")
    stats = FeatureStats.from_dict(model.standardization)
    seen = set(seen_source_ids)
    for seq in heldout:
        if seq.source_id in seen:
            raise LeakageError(
                "heldout crossing %r appeared in the training bundle" % seq.source_id
            )
    if isinstance(factors, int):
        factors = (factors,)
    name = VARIANT_NAMES[model.spec.variant]
    report = MetricsReport()
    for factor in factors:
        if not isinstance(factor, (int, np.integer)) or factor < 1:
            raise ContractError("downsample factor must be an integer >= 1, got %r" % (factor,))
        preds = []
        targets_m = []
        for seq in heldout:
            prepared = resample_to_length(
                _decimate(seq, int(factor)), model.spec.sequence_length
            )
            features = stats.standardize_features(prepared.features)
            preds.append(stats.destandardize_target(model.predict(features).ravel()))
            targets_m.append(prepared.target)
        sq = sum(float(((p - t) ** 2).sum()) for p, t in zip(preds, targets_m))
        ab = sum(float(np.abs(p - t).sum()) for p, t in zip(preds, targets_m))
        count = sum(p.shape[0] for p in preds)
        report.rows.append(
            MetricsRow(
                model=name,
                split="heldout",
                rmse_m=float(np.sqrt(sq / count)),
                mae_m=ab / count,
                downsample_factor=int(factor),
            )
        )
    return report
