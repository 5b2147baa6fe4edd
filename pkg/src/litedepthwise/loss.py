"""Training losses: cross entropy, balanced cross entropy, and focal loss.

The binary forms follow the piecewise convention F_y(t) = t when y = 1 and
1 - t otherwise, so a single expression covers both label values:

    CEL(p, y)           = -log(F_y(p))
    BCEL(p, a, y)       = -F_y(a) * log(F_y(p))
    FL(p, a, g, y)      = -F_y(a) * (1 - F_y(p))^g * log(F_y(p))

With g = 0 the focal loss reduces exactly to the balanced loss, and with
a = 1 the balanced loss reduces to plain cross entropy. The multi-class
form applies the same per-sample weighting to the softmax probability of
the true class and averages over the batch. Natural log throughout.
"""

from dataclasses import dataclass, field

import numpy as np

from .ops import softmax
from .tensor import as_ndarray

# Guard against log(0); chosen so clamping never moves a loss by more than
# ~1e-6 for probabilities inside [1e-6, 1 - 1e-6].
EPS = 1e-7


@dataclass
class LossConfig:
    kind: str = "FL"  # CEL | BCEL | FL
    alpha: np.ndarray = None  # per-class weights in [0, 1]; None = all ones
    alpha_mode: str = "fixed"  # fixed | inverseFrequency
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("CEL", "BCEL", "FL"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.alpha_mode not in ("fixed", "inverseFrequency"):
            raise ValueError(f"unknown alpha mode {self.alpha_mode!r}")
        if self.alpha is not None:
            a = np.asarray(self.alpha, dtype=np.float64)
            if a.min() < 0 or a.max() > 1:
                raise ValueError("alpha entries must lie in [0, 1]")
            self.alpha = a


def _f(t, y):
    """The piecewise selector: t for positive labels, 1 - t otherwise."""
    return t if y == 1 else 1.0 - t


def _clamp(p):
    return np.clip(p, EPS, 1.0 - EPS)


def cel_binary(p, y):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    return -np.log(_clamp(_f(p, y)))


def bcel_binary(p, alpha, y):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    return _f(alpha, y) * cel_binary(p, y)


def focal_binary(p, alpha, gamma, y):
    if gamma < 0:
        raise ValueError(f"gamma {gamma} must be >= 0")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    ft = _clamp(_f(p, y))
    return -_f(alpha, y) * (1.0 - ft) ** gamma * np.log(ft)


def alpha_from_frequency(class_counts):
    """Per-class weights inversely proportional to frequency, max scaled to 1."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.min() < 1:
        raise ValueError("every class count must be >= 1")
    inv = 1.0 / counts
    return inv / inv.max()


def loss_multiclass(logits, labels, cfg):
    """Batch-mean loss and its analytic gradient w.r.t. the logits.

    logits: (n, K); labels: (n,) ints in [0, K). For the true class c with
    softmax probability u: CEL contributes -log u, BCEL -alpha_c log u and
    FL -alpha_c (1-u)^gamma log u. Returns (scalar, (n, K) gradient).
    """
    la = as_ndarray(logits)
    labels = np.asarray(labels)
    n, k = la.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")

    if cfg.kind == "CEL" or cfg.alpha is None:
        alpha = np.ones(k)
    elif np.ndim(cfg.alpha) == 0:
        alpha = np.full(k, float(cfg.alpha))
    else:
        if len(cfg.alpha) != k:
            raise ValueError(f"alpha has {len(cfg.alpha)} entries for {k} classes")
        alpha = cfg.alpha
    gamma = cfg.gamma if cfg.kind == "FL" else 0.0

    p = softmax(la)
    rows = np.arange(n)
    u = _clamp(p[rows, labels])
    a = alpha[labels]
    log_u = np.log(u)
    one_minus = 1.0 - u

    if cfg.kind == "CEL":
        per_sample = -log_u
        dl_du = -1.0 / u
    elif cfg.kind == "BCEL" or gamma == 0.0:
        per_sample = -a * log_u
        dl_du = -a / u
    else:
        mod = one_minus**gamma
        per_sample = -a * mod * log_u
        # d/du of -(1-u)^g log u, guarded where the modulating factor kills it
        dl_du = -a * (mod / u - gamma * one_minus ** (gamma - 1.0) * log_u)

    loss = float(per_sample.mean())
    # du/dz_j = u (delta_cj - p_j), applied per sample, then the batch mean
    grad = -p * (dl_du * u)[:, None]
    grad[rows, labels] += dl_du * u
    grad /= n
    return loss, grad.astype(la.dtype, copy=False)
