"""Clustering and classification evaluation of learned embeddings.

Clustering runs k-means (Lloyd with k-means++ seeding, best inertia over
restarts) on the fused embedding and scores the partition against ground
truth with Hungarian-matched accuracy, normalized mutual information
(arithmetic-mean normalization) and the adjusted Rand index.  Classification
quality is measured by a linear probe: a single softmax layer trained
full-batch on frozen embeddings, reported as accuracy plus macro-averaged
precision and F-score.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError

_NMI_EPS = 1e-15


def hungarian(cost) -> np.ndarray:
    """Minimum-cost perfect matching on a square cost matrix.

    Returns ``assign`` with ``assign[i]`` the column matched to row i.
    Potential-based shortest augmenting path, O(n^3).
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ContractError(f"hungarian: cost matrix must be square, "
                            f"got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ContractError("hungarian: cost matrix must be finite")
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=int)   # match[j]: row held by column j (1-based)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    assign = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        if match[j]:
            assign[match[j] - 1] = j - 1
    return assign


def _kmeanspp_centers(z: np.ndarray, k: int, rng) -> np.ndarray:
    n = z.shape[0]
    centers = np.empty((k, z.shape[1]))
    centers[0] = z[rng.integers(n)]
    d2 = ((z - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[i] = z[idx]
        d2 = np.minimum(d2, ((z - centers[i]) ** 2).sum(axis=1))
    return centers


def _lloyd(z: np.ndarray, centers: np.ndarray, max_iter: int):
    k = centers.shape[0]
    labels = None
    for _ in range(max_iter):
        d2 = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            mask = labels == c
            if mask.any():
                centers[c] = z[mask].mean(axis=0)
            else:
                # revive an empty cluster at the point worst served so far
                worst = d2[np.arange(len(z)), labels].argmax()
                centers[c] = z[worst]
                labels[worst] = c
    d2 = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(z)), labels].sum())
    return labels, inertia


def kmeans(z, k: int, seed: int = 0, restarts: int = 10,
           max_iter: int = 300) -> np.ndarray:
    """Cluster rows of ``z`` into k groups; deterministic per seed."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < k:
        raise ContractError(
            f"kmeans: need at least k={k} samples, got shape {z.shape}")
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, np.inf
    for _ in range(max(1, restarts)):
        centers = _kmeanspp_centers(z, k, rng)
        labels, inertia = _lloyd(z, centers.copy(), max_iter)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels


def inertia_of(z, labels) -> float:
    """Within-cluster sum of squared distances for a labeling."""
    z = np.asarray(z, dtype=np.float64)
    total = 0.0
    for c in np.unique(labels):
        pts = z[labels == c]
        total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total


@dataclass
class ClusteringReport:
    acc: float
    nmi: float
    ari: float
    labels: np.ndarray
    inertia: float = float("nan")


@dataclass
class ClassificationReport:
    acc: float
    precision: float   # macro average
    f_score: float     # macro average
    per_class: dict = field(default_factory=dict)


def _contingency(pred, true):
    pred_ids, pred_inv = np.unique(pred, return_inverse=True)
    true_ids, true_inv = np.unique(true, return_inverse=True)
    table = np.zeros((len(pred_ids), len(true_ids)), dtype=np.int64)
    np.add.at(table, (pred_inv, true_inv), 1)
    return table


def clustering_accuracy(pred, true) -> float:
    """Accuracy under the best cluster-to-class mapping (Hungarian)."""
    table = _contingency(pred, true)
    size = max(table.shape)
    padded = np.zeros((size, size))
    padded[:table.shape[0], :table.shape[1]] = table
    assign = hungarian(-padded)
    matched = padded[np.arange(size), assign].sum()
    return float(matched / len(np.asarray(pred)))


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def normalized_mutual_info(a, b) -> float:
    """NMI with arithmetic-mean normalization of the two entropies."""
    table = _contingency(a, b).astype(np.float64)
    n = table.sum()
    pa = table.sum(axis=1)
    pb = table.sum(axis=0)
    ha, hb = _entropy(pa), _entropy(pb)
    if ha < _NMI_EPS and hb < _NMI_EPS:
        return 1.0  # both labelings are a single block: identical partitions
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            nij = table[i, j]
            if nij > 0:
                mi += (nij / n) * np.log(n * nij / (pa[i] * pb[j]))
    return float(mi / ((ha + hb) / 2.0))


def adjusted_rand_index(a, b) -> float:
    """Pair-counting Rand index, adjusted for chance."""
    table = _contingency(a, b).astype(np.float64)
    n = table.sum()

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb2(n)
    max_index = (sum_a + sum_b) / 2.0
    if abs(max_index - expected) < 1e-15:
        return 1.0  # degenerate: no pair information to adjust
    return float((sum_ij - expected) / (max_index - expected))


def clustering_metrics(pred, true) -> ClusteringReport:
    """ACC (Hungarian-matched), NMI and ARI for a predicted labeling."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape or pred.ndim != 1 or pred.size == 0:
        raise ContractError(
            f"clustering_metrics: label vectors must match, got "
            f"{pred.shape} vs {true.shape}")
    return ClusteringReport(acc=clustering_accuracy(pred, true),
                            nmi=normalized_mutual_info(pred, true),
                            ari=adjusted_rand_index(pred, true),
                            labels=pred)


def cluster_embedding(z, k: int, true_labels, seed: int = 0,
                      restarts: int = 10) -> ClusteringReport:
    """k-means on an embedding plus metrics against ground truth."""
    labels = kmeans(z, k, seed=seed, restarts=restarts)
    report = clustering_metrics(labels, true_labels)
    report.inertia = inertia_of(z, labels)
    return report


def _softmax(x):
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def linear_probe(train, test, epochs: int = 200, lr: float = 1e-2
                 ) -> ClassificationReport:
    """Train a softmax layer on frozen embeddings; report test metrics.

    ``train`` and ``test`` are (Z, y) pairs.  Full-batch gradient descent
    from zero initialization (the objective is convex, so no seed is needed).
    Inputs are standardized per dimension with training statistics, so the
    embedding's scale does not dictate the step size; an affine map does not
    change what is linearly separable.  Classes never predicted get
    precision 0 under the macro average.
    """
    z_tr, y_tr = train
    z_te, y_te = test
    z_tr = np.asarray(z_tr, dtype=np.float64)
    z_te = np.asarray(z_te, dtype=np.float64)
    y_tr = np.asarray(y_tr, dtype=np.int64)
    y_te = np.asarray(y_te, dtype=np.int64)
    mu = z_tr.mean(axis=0, keepdims=True)
    sd = np.maximum(z_tr.std(axis=0, keepdims=True), 1e-12)
    z_tr = (z_tr - mu) / sd
    z_te = (z_te - mu) / sd
    classes = np.unique(y_tr)
    missing = np.setdiff1d(np.unique(y_te), classes)
    if missing.size:
        raise DataError(
            f"stratification error: classes {missing.tolist()} appear in the "
            "test split but not in training")
    k = len(classes)
    remap = {c: i for i, c in enumerate(classes)}
    onehot = np.zeros((len(y_tr), k))
    onehot[np.arange(len(y_tr)), [remap[c] for c in y_tr]] = 1.0
    w = np.zeros((z_tr.shape[1], k))
    b = np.zeros((1, k))
    n = len(y_tr)
    for _ in range(epochs):
        p = _softmax(z_tr @ w + b)
        delta = (p - onehot) / n
        w -= lr * (z_tr.T @ delta)
        b -= lr * delta.sum(axis=0, keepdims=True)
    pred = classes[(z_te @ w + b).argmax(axis=1)]

    per_class = {}
    precisions, f_scores = [], []
    for c in classes:
        tp = int(((pred == c) & (y_te == c)).sum())
        fp = int(((pred == c) & (y_te != c)).sum())
        fn = int(((pred != c) & (y_te == c)).sum())
        prec = tp / (tp + fp) if (tp + fp) else 0.0
        rec = tp / (tp + fn) if (tp + fn) else 0.0
        f1 = 2 * prec * rec / (prec + rec) if (prec + rec) else 0.0
        per_class[int(c)] = {"precision": prec, "recall": rec, "f1": f1,
                             "support": int((y_te == c).sum())}
        precisions.append(prec)
        f_scores.append(f1)
    return ClassificationReport(acc=float((pred == y_te).mean()),
                                precision=float(np.mean(precisions)),
                                f_score=float(np.mean(f_scores)),
                                per_class=per_class)


def _power_iterate(mat: np.ndarray, iters: int, tol: float) -> np.ndarray:
    rng = np.random.default_rng(0)
    vec = rng.standard_normal(mat.shape[0])
    vec /= np.linalg.norm(vec)
    for _ in range(iters):
        nxt = mat @ vec
        norm = np.linalg.norm(nxt)
        if norm < 1e-30:
            return vec  # matrix is (numerically) zero in this subspace
        nxt /= norm
        if np.linalg.norm(nxt - vec) < tol or np.linalg.norm(nxt + vec) < tol:
            return nxt
        vec = nxt
    return vec


def pca_top2(x, iters: int = 1000, tol: float = 1e-13) -> np.ndarray:
    """Project rows onto the top-2 principal directions via power iteration."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ContractError("pca_top2: need a 2-D input with >= 2 columns")
    centered = x - x.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / max(x.shape[0] - 1, 1)
    v1 = _power_iterate(cov, iters, tol)
    lam1 = float(v1 @ cov @ v1)
    deflated = cov - lam1 * np.outer(v1, v1)
    v2 = _power_iterate(deflated, iters, tol)
    # re-orthogonalize against v1 to kill residual leakage
    v2 = v2 - (v2 @ v1) * v1
    norm = np.linalg.norm(v2)
    if norm > 1e-30:
        v2 = v2 / norm
    return centered @ np.column_stack([v1, v2])


def active_dimension_fraction(z, threshold: float = 1e-3) -> float:
    """Fraction of embedding dimensions whose batch std exceeds a floor.

    A healthy (non-collapsed) embedding keeps nearly all dimensions active;
    a constant embedding scores 0.
    """
    z = np.asarray(z, dtype=np.float64)
    return float((z.std(axis=0) > threshold).mean())
