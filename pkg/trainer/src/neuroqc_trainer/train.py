"""Fold-wise training with validation-holdout checkpoint selection.

Given a fixed seed, runs are deterministic on CPU for a given torch
build; determinism across library versions or device backends is not
guaranteed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.stats import rankdata
from torch import nn

from .data import (
    PatchDataset,
    TrainerDataError,
    epoch_batches,
    split_train_neurons,
)
from .networks import NETWORKS, build_network

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    net: str = "vgg11_3d"
    lr: float = 1e-5
    betas: tuple[float, float] = (0.9, 0.999)
    lr_decay: float = 0.1
    lr_step_epochs: int = 10
    class_weights: tuple[float, float] = (1.0, 2.0)  # (control, divergence point)
    pairs_per_batch: int = 5
    randoms_per_batch: int = 5  # 0 trains on pairs alone
    max_epochs: int = 50
    val_fraction: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.net not in NETWORKS:
            raise ValueError(f"unknown network {self.net!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.pairs_per_batch < 1 or self.randoms_per_batch < 0:
            raise ValueError("bad batch composition")
        if self.max_epochs < 1:
            raise ValueError("need at least one epoch")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("holdout fraction must be in [0, 1)")


def weighted_loss(
    logits: torch.Tensor, labels: torch.Tensor, class_weights=(1.0, 2.0)
) -> torch.Tensor:
    """Cross entropy with per-class weights, averaged over batch size.

    The divisor is the sample count, not the weight total, so a batch of
    only weight-2 samples costs exactly twice the same logits labeled
    with the weight-1 class.
    """
    w = torch.as_tensor(class_weights, dtype=logits.dtype, device=logits.device)
    total = nn.functional.cross_entropy(logits, labels, weight=w, reduction="sum")
    return total / labels.numel()


def rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability that a positive outranks a negative; ties count half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores, method="average")
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _recalibrate_norm_stats(model: nn.Module, data: PatchDataset, batches) -> None:
    """Re-estimate batch-norm running statistics over the given batches.

    With few iterations per epoch the exponential running estimates stay
    dominated by their initialization, which squashes eval-mode
    activations toward a constant. Replacing them with the exact
    cumulative mean/var over the training batches applies the same
    estimator, just without the lag.
    """
    norms = [m for m in model.modules() if isinstance(m, nn.BatchNorm3d)]
    if not norms:
        return
    saved = [m.momentum for m in norms]
    for m in norms:
        m.reset_running_stats()
        m.momentum = None  # cumulative average
    model.train()
    with torch.no_grad():
        for idxs in batches:
            model(torch.from_numpy(data.batch(idxs)))
    for m, momentum in zip(norms, saved):
        m.momentum = momentum


def _positive_scores(model: nn.Module, data: PatchDataset, indices, batch_size=15):
    """Softmax positive-class probability for each record, eval mode."""
    model.eval()
    out = np.empty(len(indices), dtype=np.float64)
    with torch.no_grad():
        for at in range(0, len(indices), batch_size):
            chunk = indices[at : at + batch_size]
            x = torch.from_numpy(data.batch(chunk))
            probs = torch.softmax(model(x), dim=1)
            out[at : at + len(chunk)] = probs[:, 1].numpy()
    return out


@dataclass
class TrainResult:
    model: nn.Module
    log: list[dict]
    best_epoch: int
    best_val_auc: float
    val_neurons: list[int] = field(default_factory=list)


def _neuron_mask(data: PatchDataset, neurons: set[int]) -> np.ndarray:
    return np.isin(data.neuron_ids, sorted(neurons))


def train(
    data: PatchDataset,
    folds: dict[int, int],
    test_fold: int,
    cfg: TrainConfig,
    out_dir=None,
) -> TrainResult:
    """Fit a classifier on every fold except `test_fold`.

    Aborts if the dataset names a neuron absent from the fold file or if
    any training record would come from a test-fold neuron. A fraction of
    the training neurons is held out; the returned model is the epoch
    snapshot with the best holdout AUC (the final epoch when the holdout
    is disabled). Writes `log.json` and `checkpoint.pt` under `out_dir`
    when given.
    """
    cfg.validate()
    folds = {int(n): int(f) for n, f in folds.items()}
    ds_neurons = {int(n) for n in np.unique(data.neuron_ids)}
    missing = sorted(ds_neurons - folds.keys())
    if missing:
        raise TrainerDataError(
            f"dataset neurons missing from the fold assignment: {missing[:10]}"
        )
    test_neurons = {n for n, f in folds.items() if f == test_fold}
    train_neurons = {n for n in ds_neurons if folds[n] != test_fold}
    if not train_neurons:
        raise TrainerDataError(f"no training neurons outside fold {test_fold}")
    fit_neurons, val_neurons = split_train_neurons(
        train_neurons, cfg.val_fraction, cfg.seed
    )

    pairs = data.pair_indices()
    randoms = data.random_indices()
    pair_neuron = data.neuron_ids[pairs[:, 0]]
    fit_pairs = pairs[np.isin(pair_neuron, fit_neurons)]
    val_pairs = pairs[np.isin(pair_neuron, val_neurons)]
    fit_randoms = randoms[_neuron_mask(data, set(fit_neurons))[randoms]]

    # hard guard: nothing drawn for fitting may touch a test neuron
    drawn = np.concatenate([fit_pairs.ravel(), fit_randoms])
    if np.isin(data.neuron_ids[drawn], sorted(test_neurons)).any():
        raise TrainerDataError(
            f"fold leakage: training selection touches test fold {test_fold}"
        )

    torch.manual_seed(cfg.seed)
    model = build_network(cfg.net)
    opt = torch.optim.Adam(
        model.parameters(), lr=cfg.lr, betas=cfg.betas, weight_decay=0.0
    )
    sched = torch.optim.lr_scheduler.StepLR(
        opt, step_size=cfg.lr_step_epochs, gamma=cfg.lr_decay
    )

    val_idx = val_pairs.ravel() if len(val_pairs) else np.empty(0, dtype=np.int64)
    log: list[dict] = []
    best_epoch, best_auc, best_state = 0, float("-inf"), None
    for epoch in range(1, cfg.max_epochs + 1):
        rng = np.random.default_rng([cfg.seed, epoch])
        batches = epoch_batches(
            fit_pairs, fit_randoms, rng, cfg.pairs_per_batch, cfg.randoms_per_batch
        )
        model.train()
        loss_total = 0.0
        hits = 0
        seen = 0
        for idxs in batches:
            x = torch.from_numpy(data.batch(idxs))
            y = torch.from_numpy(data.labels[idxs].astype(np.int64))
            logits = model(x)
            loss = weighted_loss(logits, y, cfg.class_weights)
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_total += float(loss.detach())
            hits += int((logits.detach().argmax(dim=1) == y).sum())
            seen += len(y)
        lr_now = opt.param_groups[0]["lr"]
        sched.step()
        entry = {
            "epoch": epoch,
            "loss": loss_total / len(batches),
            "lr": lr_now,
            "train_acc": hits / seen,
        }
        if len(val_idx) or epoch == cfg.max_epochs:
            _recalibrate_norm_stats(model, data, batches)
        if len(val_idx):
            scores = _positive_scores(model, data, val_idx)
            auc = rank_auc(scores, data.labels[val_idx])
            entry["val_auc"] = auc
            # ties go to the later epoch: holdout AUC is coarse on small
            # sets and the further-trained model has the lower loss
            if auc >= best_auc:
                best_epoch, best_auc = epoch, auc
                best_state = {
                    k: v.detach().clone() for k, v in model.state_dict().items()
                }
        logger.info(
            "fold %d epoch %d: loss %.4f lr %.2e train_acc %.3f%s",
            test_fold, epoch, entry["loss"], lr_now, entry["train_acc"],
            f" val_auc {entry['val_auc']:.3f}" if "val_auc" in entry else "",
        )
        log.append(entry)

    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        best_epoch, best_auc = cfg.max_epochs, float("nan")

    result = TrainResult(
        model=model,
        log=log,
        best_epoch=best_epoch,
        best_val_auc=best_auc,
        val_neurons=list(val_neurons),
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "log.json", "w", encoding="utf-8") as fh:
            json.dump(log, fh, indent=1)
            fh.write("\n")
        save_checkpoint(out_dir / "checkpoint.pt", result, cfg, test_fold)
    return result


def save_checkpoint(path, result: TrainResult, cfg: TrainConfig, test_fold: int):
    torch.save(
        {
            "net": cfg.net,
            "seed": cfg.seed,
            "val_fraction": cfg.val_fraction,
            "test_fold": test_fold,
            "epoch": result.best_epoch,
            "val_auc": result.best_val_auc,
            "val_neurons": result.val_neurons,
            "model_state": result.model.state_dict(),
        },
        path,
    )


def load_checkpoint(path) -> tuple[nn.Module, dict]:
    """Rebuild the checkpointed network; returns (model, metadata)."""
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model = build_network(blob["net"])
    model.load_state_dict(blob["model_state"])
    model.eval()
    meta = {k: v for k, v in blob.items() if k != "model_state"}
    return model, meta


def validation_auc(model: nn.Module, data: PatchDataset, val_neurons) -> float:
    """Holdout AUC of a model over the pair records of the given neurons."""
    pairs = data.pair_indices()
    mask = np.isin(data.neuron_ids[pairs[:, 0]], sorted(int(n) for n in val_neurons))
    idx = pairs[mask].ravel()
    if not len(idx):
        raise TrainerDataError("no pair records for the given holdout neurons")
    return rank_auc(_positive_scores(model, data, idx), data.labels[idx])
