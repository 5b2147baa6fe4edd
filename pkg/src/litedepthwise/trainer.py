"""Mini-batch training loop, optimizers, evaluation metrics, gamma sweep.

Everything here is deterministic for a fixed seed: epoch shuffles come from
one seeded generator, batches are visited in shuffle order, and evaluation
merges shard results in index order regardless of thread count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as hsi
from . import network as net
from .loss import LossConfig, alpha_from_frequency, loss_multiclass
from .ops import softmax
from .tensor import as_ndarray


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # adam | sgd-momentum
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    early_stop_patience: int = None
    deterministic: bool = True
    momentum: float = 0.9
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValueError("epochs and batch size must be positive, lr >= 0")
        if self.optimizer not in ("adam", "sgd-momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class SgdMomentum:
    """Classic momentum: v <- mu*v + g; theta <- theta - lr*v."""

    def __init__(self, lr, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity = {}

    def step(self, store, grads):
        for layer, pgrads in grads.items():
            for key, g in pgrads.items():
                slot = f"{layer}.{key}"
                v = self.velocity.get(slot)
                v = g if v is None else self.momentum * v + g
                self.velocity[slot] = v
                store.params[layer][key] -= (self.lr * v).astype(
                    store.params[layer][key].dtype
                )


class Adam:
    """Adam with bias correction, the textbook update."""

    def __init__(self, lr, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, store, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for layer, pgrads in grads.items():
            for key, g in pgrads.items():
                slot = f"{layer}.{key}"
                g64 = g.astype(np.float64)
                m = self.m.get(slot, 0.0) * b1 + (1 - b1) * g64
                v = self.v.get(slot, 0.0) * b2 + (1 - b2) * g64 * g64
                self.m[slot] = m
                self.v[slot] = v
                m_hat = m / (1 - b1**self.t)
                v_hat = v / (1 - b2**self.t)
                update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
                store.params[layer][key] -= update.astype(store.params[layer][key].dtype)


def make_optimizer(cfg):
    if cfg.optimizer == "adam":
        return Adam(cfg.learning_rate, cfg.betas, cfg.adam_eps)
    return SgdMomentum(cfg.learning_rate, cfg.momentum)


def resolve_alpha(loss_cfg, class_counts):
    """Fill in inverse-frequency alpha from training class counts."""
    if loss_cfg.kind != "CEL" and loss_cfg.alpha_mode == "inverseFrequency":
        return replace(loss_cfg, alpha=alpha_from_frequency(class_counts))
    if loss_cfg.alpha is not None and np.ndim(loss_cfg.alpha) == 0:
        return replace(loss_cfg, alpha=np.full(len(class_counts), float(loss_cfg.alpha)))
    return loss_cfg


@dataclass
class TrainResult:
    store: net.ParameterStore
    history: list  # of (epoch, train_loss, val_oa or None)
    best_epoch: int
    diverged: bool = False


def train(graph, store, scene, plan, cfg, patch_size):
    """Run the training loop; returns the selected parameters and history.

    Model selection: best validation OA when a val split exists, otherwise
    the last epoch. A non-finite batch loss aborts the run and returns the
    last end-of-epoch parameters that were finite.
    """
    rng = np.random.default_rng(cfg.seed)
    train_coords = list(plan.train)
    counts = plan.per_class_counts(scene.labels, "train")
    if (counts == 0).any():
        raise ValueError("every class needs at least one training pixel")
    loss_cfg = resolve_alpha(cfg.loss, counts)
    optimizer = make_optimizer(cfg)

    margin = patch_size // 2
    padded = hsi._mirror_pad_cube(scene.cube, margin)
    has_val = len(plan.val) > 0

    history = []
    best_oa = -1.0
    best_epoch = 0
    best_store = store.copy()
    snapshot = store.copy()

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_coords))
        epoch_losses = []
        diverged = False
        for start in range(0, len(order), cfg.batch_size):
            batch_coords = [train_coords[i] for i in order[start : start + cfg.batch_size]]
            batch = hsi.extract_batch(scene, batch_coords, patch_size, padded)
            logits, tape = net.forward(graph, store, batch.tensors, mode="train", return_tape=True)
            if not np.isfinite(as_ndarray(logits)).all():
                diverged = True
                break
            loss_value, grad = loss_multiclass(logits, batch.labels, loss_cfg)
            if not math.isfinite(loss_value):
                diverged = True
                break
            grads = net.backward_from_tape(graph, store, tape, grad)
            optimizer.step(store, grads)
            epoch_losses.append(loss_value)
        if diverged:
            return TrainResult(snapshot, history, best_epoch or len(history), diverged=True)

        train_loss = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        val_oa = None
        if has_val:
            report = evaluate(graph, store, scene, plan, "val", patch_size,
                              batch_size=cfg.batch_size)
            val_oa = report.oa
            if val_oa > best_oa:
                best_oa = val_oa
                best_epoch = epoch
                best_store = store.copy()
        history.append((epoch, train_loss, val_oa))
        snapshot = store.copy()

        if (
            cfg.early_stop_patience is not None
            and has_val
            and epoch - best_epoch >= cfg.early_stop_patience
        ):
            break

    if has_val:
        return TrainResult(best_store, history, best_epoch)
    return TrainResult(store, history, len(history))


@dataclass
class EvalReport:
    confusion: np.ndarray  # (K, K), rows = true class, cols = predicted
    per_class_accuracy: np.ndarray
    oa: float
    aa: float
    kappa: float


def confusion_matrix(true_labels, predicted, num_classes):
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for t, p in zip(true_labels, predicted):
        cm[t, p] += 1
    return cm


def metrics_from_confusion(cm):
    """OA, AA and Cohen's kappa from a confusion matrix."""
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    oa = np.trace(cm) / total
    row_sums = cm.sum(axis=1)
    present = row_sums > 0
    recalls = np.zeros(cm.shape[0])
    recalls[present] = np.diag(cm)[present] / row_sums[present]
    aa = recalls[present].mean()
    col_sums = cm.sum(axis=0)
    pe = float(row_sums @ col_sums) / (total * total)
    kappa = (oa - pe) / (1.0 - pe) if pe < 1.0 else 1.0
    return float(oa), float(aa), kappa, recalls


def predict_batches(graph, store, batches, threads=1):
    """Predicted class per sample; shards across threads, merges in order."""
    batches = list(batches)

    def run(batch):
        logits = net.forward(graph, store, batch.tensors, mode="infer")
        return np.argmax(as_ndarray(logits), axis=1), batch.labels

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, batches))
    else:
        results = [run(b) for b in batches]
    preds = np.concatenate([r[0] for r in results]) if results else np.empty(0, dtype=int)
    labels = np.concatenate([r[1] for r in results]) if results else np.empty(0, dtype=int)
    return preds, labels


def evaluate(graph, store, scene, plan, split, patch_size, batch_size=32, threads=1):
    coords = plan.coords(split)
    if not coords:
        raise ValueError(f"cannot evaluate on an empty {split!r} split")
    batches = hsi.extract_patches(scene, plan, split, patch_size, batch_size)
    preds, labels = predict_batches(graph, store, batches, threads)
    k = scene.num_classes
    cm = confusion_matrix(labels, preds, k)
    oa, aa, kappa, recalls = metrics_from_confusion(cm)
    return EvalReport(confusion=cm, per_class_accuracy=recalls, oa=oa, aa=aa, kappa=kappa)


def render_eval_text(report):
    """Text table: per-class accuracy, then OA/AA/Kappa, all x100."""
    lines = ["class,accuracy_x100"]
    for idx, acc in enumerate(report.per_class_accuracy, start=1):
        lines.append(f"{idx},{100 * acc:.2f}")
    lines.append(f"OA,{100 * report.oa:.2f}")
    lines.append(f"AA,{100 * report.aa:.2f}")
    lines.append(f"Kappa,{100 * report.kappa:.2f}")
    return "\n".join(lines) + "\n"


def history_csv(history):
    """The epoch,trainLoss,valOA history as byte-stable CSV text."""
    lines = ["epoch,trainLoss,valOA"]
    for epoch, train_loss, val_oa in history:
        val = "" if val_oa is None else repr(float(val_oa))
        lines.append(f"{epoch},{repr(float(train_loss))},{val}")
    return "\n".join(lines) + "\n"


def gamma_sweep(gammas, graph, scene, plan, base_cfg, patch_size, init_seed=0):
    """One full train+eval per gamma; everything else held fixed.

    Returns rows of (gamma, oa, aa, kappa). The loss kind is forced to FL
    so gamma=0 reproduces the balanced cross entropy result exactly.
    """
    if not gammas:
        raise ValueError("gamma grid must be non-empty")
    rows = []
    for gamma in gammas:
        cfg = replace(base_cfg, loss=replace(base_cfg.loss, kind="FL", gamma=float(gamma)))
        store = net.init_parameters(graph, seed=init_seed)
        result = train(graph, store, scene, plan, cfg, patch_size)
        report = evaluate(graph, result.store, scene, plan, "test", patch_size,
                          batch_size=cfg.batch_size)
        rows.append((float(gamma), report.oa, report.aa, report.kappa))
    return rows


def gamma_sweep_csv(rows):
    lines = ["gamma,oa,aa,kappa"]
    for gamma, oa, aa, kappa in rows:
        lines.append(f"{repr(float(gamma))},{repr(float(oa))},{repr(float(aa))},{repr(float(kappa))}")
    return "\n".join(lines) + "\n"
