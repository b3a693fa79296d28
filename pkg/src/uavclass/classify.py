"""Physics-based classification, metrics, PCA projection, noise sweep.

A trajectory is scored against each class hypothesis by conditioning the
trained network on that class's one-hot vector and measuring how well the
predicted derivatives match the observed ones; softmax over the negated
per-class losses turns the fit quality into confidences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import NormStats, add_noise, signal_std
from .network import NetworkParams, class_onehot
from .training import predict_rows
from .vehicles import CLASS_NAMES, UavClass

N_CLASSES = 3


@dataclass(frozen=True)
class SoftmaxConfig:
    """Sharpness of the loss-to-confidence softmax."""

    gamma: float = 10.0

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be > 0")


@dataclass
class ClassificationResult:
    per_class_loss: np.ndarray   # (3,)
    confidence: np.ndarray       # (3,), sums to 1
    predicted: int
    true_label: int | None = None
    tie: bool = False            # exact loss tie, broken toward lowest id


def class_conditioned_loss(params: NetworkParams, stats: NormStats,
                           traj, class_id: int, batch_eval: int = 1000) -> float:
    """Mean squared residual norm under the hypothesis "this is class_id".

    The trajectory is normalized with the model's stored stats; the residual
    is measured in normalized derivative space.
    """
    if traj.states.shape[0] == 0:
        raise ValueError("empty trajectory")
    x = stats.normalize_states(traj.states)
    onehot = np.broadcast_to(class_onehot(class_id), (x.shape[0], N_CLASSES))
    yhat = predict_rows(params, np.hstack([x, onehot]), batch_eval)
    y = stats.normalize_derivs(traj.derivs)
    return float(np.mean(np.sum((yhat - y) ** 2, axis=-1)))


def confidences(losses, cfg: SoftmaxConfig = SoftmaxConfig()) -> np.ndarray:
    """Softmax over negated, gamma-scaled losses (max-subtracted for safety)."""
    losses = np.asarray(losses, dtype=float)
    if not np.all(np.isfinite(losses)):
        raise ValueError("non-finite class loss")
    logits = -cfg.gamma * losses
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


def classify(params: NetworkParams, stats: NormStats, traj,
             cfg: SoftmaxConfig = SoftmaxConfig(),
             batch_eval: int = 1000) -> ClassificationResult:
    """Score a trajectory against all class hypotheses and pick the best.

    The prediction is the argmin of the per-class losses, which equals the
    argmax of the confidences; exact ties break toward the lowest class id
    and are flagged.
    """
    losses = np.array([
        class_conditioned_loss(params, stats, traj, c, batch_eval)
        for c in range(N_CLASSES)
    ])
    conf = confidences(losses, cfg)
    predicted = int(np.argmin(losses))
    tie = bool(np.sum(losses == losses[predicted]) > 1)
    true_label = getattr(traj, "class_id", None)
    return ClassificationResult(losses, conf, predicted, true_label, tie)


def classify_all(params: NetworkParams, stats: NormStats, trajectories,
                 cfg: SoftmaxConfig = SoftmaxConfig()) -> list[ClassificationResult]:
    return [classify(params, stats, t, cfg) for t in trajectories]


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass
class Report:
    """One-vs-rest precision/recall/F1 per class, plus the confusion matrix.

    confusion[i, j] counts true class i predicted as class j. Zero-division
    cases yield 0.0 and set the class's flag.
    """

    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    confusion: np.ndarray
    zero_division: np.ndarray   # (3,) bool

    def to_text(self) -> str:
        lines = [f"{'':14s}{'precision':>10s}{'recall':>8s}{'f1-score':>10s}{'support':>9s}"]
        for c in range(N_CLASSES):
            name = CLASS_NAMES[UavClass(c)]
            lines.append(
                f"{name:14s}{self.precision[c]:10.2f}{self.recall[c]:8.2f}"
                f"{self.f1[c]:10.2f}{self.support[c]:9d}"
            )
        lines.append("")
        lines.append(
            f"{'accuracy':14s}{'':10s}{'':8s}{self.accuracy:10.2f}"
            f"{int(self.support.sum()):9d}"
        )
        return "\n".join(lines)


def report(results) -> Report:
    """Aggregate classification results into a per-class metrics report."""
    results = list(results)
    if not results:
        raise ValueError("no classification results")
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    for r in results:
        if r.true_label is None:
            raise ValueError("result without a true label")
        confusion[r.true_label, r.predicted] += 1

    support = confusion.sum(axis=1)
    predicted_counts = confusion.sum(axis=0)
    diag = np.diag(confusion).astype(float)

    zero_division = np.zeros(N_CLASSES, dtype=bool)
    precision = np.zeros(N_CLASSES)
    recall = np.zeros(N_CLASSES)
    f1 = np.zeros(N_CLASSES)
    for c in range(N_CLASSES):
        if predicted_counts[c] > 0:
            precision[c] = diag[c] / predicted_counts[c]
        else:
            zero_division[c] = True
        if support[c] > 0:
            recall[c] = diag[c] / support[c]
        else:
            zero_division[c] = True
        if precision[c] + recall[c] > 0:
            f1[c] = 2 * precision[c] * recall[c] / (precision[c] + recall[c])
        else:
            zero_division[c] = True

    accuracy = float(diag.sum() / confusion.sum())
    return Report(precision, recall, f1, support, accuracy, confusion, zero_division)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

def pca_project(samples: np.ndarray, k: int = 2):
    """Project samples onto the top-k covariance eigenvectors.

    Returns (projections (N, k), explained_variance_ratio (k,)). Components
    are ordered by decreasing eigenvalue; each eigenvector's first nonzero
    loading is made positive so the projection is sign-deterministic.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("need a 2-D sample matrix with at least 2 rows")
    dim = samples.shape[1]
    if not 1 <= k <= dim:
        raise ValueError(f"k must be in [1, {dim}]")
    centered = samples - samples.mean(axis=0)
    cov = centered.T @ centered / samples.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]
    for j in range(dim):
        nonzero = np.nonzero(np.abs(eigvecs[:, j]) > 1e-12)[0]
        if nonzero.size and eigvecs[nonzero[0], j] < 0.0:
            eigvecs[:, j] = -eigvecs[:, j]
    total = eigvals.sum()
    ratio = eigvals[:k] / total if total > 0.0 else np.zeros(k)
    return centered @ eigvecs[:, :k], ratio


# ---------------------------------------------------------------------------
# Noise robustness
# ---------------------------------------------------------------------------

# (state %, derivative %) noise levels of the robustness study.
NOISE_LEVELS = ((3.0, 5.0), (5.0, 10.0), (10.0, 15.0), (15.0, 20.0))


def noise_sweep(params: NetworkParams, stats: NormStats, test_trajectories,
                levels=NOISE_LEVELS, seed: int = 0,
                cfg: SoftmaxConfig = SoftmaxConfig()) -> list[Report]:
    """Classify the identically-membered test set under each noise level.

    Noise std per dimension is the given percentage of the clean test set's
    per-dimension signal std; noise draws are seeded per (level, trajectory).
    """
    test_trajectories = list(test_trajectories)
    ref_std_x, ref_std_y = signal_std(test_trajectories)
    reports = []
    for li, (sx, sxd) in enumerate(levels):
        results = []
        for ti, traj in enumerate(test_trajectories):
            noisy = add_noise(traj, sx, sxd, [seed, li, ti], ref_std_x, ref_std_y)
            results.append(classify(params, stats, noisy, cfg))
        reports.append(report(results))
    return reports
