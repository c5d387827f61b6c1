"""Dataset-level training: label weights, epoch loop, early stopping,
checkpoint round-trips."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import Manifest
from .features import (
    ContextMask,
    FULL_MASK,
    FeatureBatch,
    NormalizerStats,
    assemble_features,
    block_widths,
    stack_labels,
)
from .metrics import build_report, decide
from .nn import ActivityPredictor, AdamState, FocalLossConfig, focal_loss
from .serialize import BlobError, load_blob, save_blob

CHECKPOINT_SCHEMA_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-4
    gamma: float = 2.0
    max_epochs: int = 200
    patience: int = 10
    min_delta: float = 1e-5
    seed: int = 0
    mask: ContextMask = FULL_MASK
    hidden: tuple[int, ...] = (256, 128)
    embed_dim: int = 16
    k: int = 5

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_weighted_f1: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_weighted_f1": self.val_weighted_f1,
            "best_epoch": self.best_epoch,
        }


def compute_label_weights(train_labels: np.ndarray) -> np.ndarray:
    """alpha_i = 1 - (fraction of samples with label i), clamped to
    [0.01, 0.99] so no label ever has zero weight."""
    if train_labels.size == 0:
        raise ValueError("cannot compute label weights without samples")
    frac = train_labels.astype(bool).mean(axis=0)
    return np.clip(1.0 - frac, 0.01, 0.99)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Seeded permutation sliced into batches; a final batch of fewer than
    two samples is dropped (batch norm needs at least two rows)."""
    order = rng.permutation(n)
    return [
        order[start : start + batch_size]
        for start in range(0, n, batch_size)
        if len(order[start : start + batch_size]) >= 2
    ]


def build_model(manifest: Manifest, cfg: TrainConfig) -> ActivityPredictor:
    widths = block_widths(manifest, cfg.mask, cfg.embed_dim, cfg.k)
    return ActivityPredictor(
        pre_width=widths["pre"],
        post_width=widths["post"],
        n_labels=manifest.catalog.n,
        hidden=cfg.hidden,
        embed_dim=cfg.embed_dim,
        use_embedding=cfg.mask.use_last_k,
        k=cfg.k,
        seed=cfg.seed,
    )


def _forward_eval(model: ActivityPredictor, batch: FeatureBatch) -> np.ndarray:
    mode = model.mode
    model.eval_mode()
    probs = model.forward(batch)
    model.mode = mode
    return probs


def train_model(
    train_samples,
    val_samples,
    manifest: Manifest,
    cfg: TrainConfig,
    log_path=None,
) -> tuple[ActivityPredictor, TrainHistory]:
    """Train with seeded shuffling and early stopping on validation loss.

    Stops after `patience` epochs without an improvement > min_delta and
    restores the parameters of the best validation epoch. The final partial
    batch of an epoch is dropped only when it has fewer than 2 samples.
    """
    if not train_samples or not val_samples:
        raise ValueError("train and validation sets must be non-empty")
    model = build_model(manifest, cfg)
    history = TrainHistory()
    if cfg.max_epochs == 0:
        return model.eval_mode(), history

    x_train = assemble_features(train_samples, cfg.mask)
    y_train = stack_labels(train_samples)
    x_val = assemble_features(val_samples, cfg.mask)
    y_val = stack_labels(val_samples)

    alpha = compute_label_weights(y_train)
    loss_cfg = FocalLossConfig(alpha=alpha, gamma=cfg.gamma)
    optim = AdamState(learning_rate=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    half_thresholds = np.full(manifest.catalog.n, 0.5)

    best_loss = np.inf
    best_state = None
    stale = 0
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(cfg.max_epochs):
            t0 = time.monotonic()
            model.train_mode()
            epoch_loss = 0.0
            seen = 0
            for sel in epoch_batches(x_train.size, cfg.batch_size, rng):
                batch = FeatureBatch(
                    pre=x_train.pre[sel],
                    ids=None if x_train.ids is None else x_train.ids[sel],
                    post=x_train.post[sel],
                )
                probs = model.forward(batch)
                loss, d_logits = focal_loss(probs, y_train[sel], loss_cfg)
                if not np.isfinite(loss):
                    raise TrainingDiverged(f"non-finite training loss at epoch {epoch}")
                grads = model.backward(d_logits)
                optim.update(model.params, grads)
                epoch_loss += loss * len(sel)
                seen += len(sel)
            train_loss = epoch_loss / max(seen, 1)

            val_probs = _forward_eval(model, x_val)
            val_loss, _ = focal_loss(val_probs, y_val, loss_cfg)
            if not np.isfinite(val_loss):
                raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
            val_report = build_report(
                decide(val_probs, half_thresholds), y_val, manifest.catalog.labels
            )
            history.train_loss.append(train_loss)
            history.val_loss.append(float(val_loss))
            history.val_weighted_f1.append(val_report.weighted_f1)
            if log_fh:
                log_fh.write(
                    json.dumps(
                        {
                            "epoch": epoch,
                            "train_loss": train_loss,
                            "val_loss": float(val_loss),
                            "val_weighted_f1": val_report.weighted_f1,
                            "seconds": round(time.monotonic() - t0, 3),
                        }
                    )
                    + "\n"
                )
                log_fh.flush()

            if val_loss < best_loss - cfg.min_delta:
                best_loss = float(val_loss)
                history.best_epoch = epoch
                best_state = (
                    {k: v.copy() for k, v in model.params.items()},
                    {k: v.copy() for k, v in model.buffers.items()},
                )
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    finally:
        if log_fh:
            log_fh.close()
    if best_state is not None:
        model.params, model.buffers = best_state
    return model.eval_mode(), history


@dataclass
class CheckpointBundle:
    """Everything needed to run the model elsewhere: the eval-mode model plus
    the preprocessing contract it was trained under."""

    model: ActivityPredictor
    mask: ContextMask
    stats: NormalizerStats
    catalog_hash: str
    k: int
    preproc_seed: int
    alpha: np.ndarray
    config: dict


def save_checkpoint(
    path,
    model: ActivityPredictor,
    cfg: TrainConfig,
    stats: NormalizerStats,
    catalog_hash: str,
    preproc_seed: int,
    alpha: np.ndarray,
) -> None:
    meta = {
        "kind": "checkpoint",
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "arch": {
            "pre_width": model.pre_width,
            "post_width": model.post_width,
            "n_labels": model.n_labels,
            "hidden": list(model.hidden),
            "embed_dim": model.embed_dim,
            "use_embedding": model.use_embedding,
        },
        "mask": model_mask_dict(cfg.mask),
        "k": cfg.k,
        "preproc_seed": preproc_seed,
        "optimizer": {
            "name": "adam",
            "learning_rate": cfg.learning_rate,
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
        },
        "focal_gamma": cfg.gamma,
        "train_seed": cfg.seed,
        "batch_size": cfg.batch_size,
        "stats": stats.to_dict(),
        "catalog_hash": catalog_hash,
    }
    arrays = model.state_arrays()
    arrays["alpha"] = np.asarray(alpha, dtype=np.float64)
    save_blob(path, meta, arrays)


def load_checkpoint(path, expected_catalog_hash: str | None = None) -> CheckpointBundle:
    try:
        meta, arrays = load_blob(path)
    except BlobError as exc:
        raise CheckpointError(str(exc)) from exc
    if meta.get("kind") != "checkpoint":
        raise CheckpointError(f"{path} is not a checkpoint")
    if meta.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint schema_version {meta.get('schema_version')}"
        )
    if expected_catalog_hash and meta["catalog_hash"] != expected_catalog_hash:
        raise CheckpointError(
            "checkpoint was trained against a different activity catalog "
            f"(hash {meta['catalog_hash'][:12]}... != {expected_catalog_hash[:12]}...)"
        )
    arch = meta["arch"]
    mask = ContextMask(**meta["mask"])
    model = ActivityPredictor(
        pre_width=arch["pre_width"],
        post_width=arch["post_width"],
        n_labels=arch["n_labels"],
        hidden=tuple(arch["hidden"]),
        embed_dim=arch["embed_dim"],
        use_embedding=arch["use_embedding"],
        k=meta["k"],
    )
    model.load_state_arrays(arrays)
    model.eval_mode()
    return CheckpointBundle(
        model=model,
        mask=mask,
        stats=NormalizerStats.from_dict(meta["stats"]),
        catalog_hash=meta["catalog_hash"],
        k=meta["k"],
        preproc_seed=meta["preproc_seed"],
        alpha=arrays["alpha"],
        config=meta,
    )


def model_mask_dict(mask: ContextMask) -> dict:
    return {
        "use_last_k": mask.use_last_k,
        "use_all_occurred": mask.use_all_occurred,
        "use_dynamic": mask.use_dynamic,
        "use_static": mask.use_static,
        "use_timestamp": mask.use_timestamp,
    }
