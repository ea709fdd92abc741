"""Multi-view dataset ingestion, synthetic generation, splits and batching.

On-disk interchange format (documented here and in the README):

* ``meta.json`` -- ``{"name": str, "n": int, "classes": int?,
  "labels_file": str?, "views": [{"name": str, "dim": int, "file": str}]}``
* each view file -- CSV, one row per sample, no header, decimal reals
* labels file -- one integer per line, values in ``[0, classes)``

Floats are serialized with Python's shortest round-trip ``repr`` so a
save/load cycle is bit-exact.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


def write_matrix(path: str, matrix: np.ndarray) -> None:
    """Write a 2-D array as header-less CSV with round-trip-exact floats."""
    with open(path, "w") as fh:
        fh.write(matrix_lines(matrix))


def matrix_lines(matrix: np.ndarray) -> str:
    rows = [",".join(repr(float(v)) for v in row) for row in np.atleast_2d(matrix)]
    return "".join(r + "\n" for r in rows)


def read_matrix(path: str, expect_cols: int | None = None) -> np.ndarray:
    if not os.path.isfile(path):
        raise DataError(f"missing file: {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed number") from None
            if expect_cols is not None and len(row) != expect_cols:
                raise DataError(
                    f"{path}:{lineno}: expected {expect_cols} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        return np.zeros((0, expect_cols or 0))
    arr = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite value in matrix")
    return arr


@dataclass
class MultiViewDataset:
    """Aligned sample matrices, one per view, plus optional ground truth.

    Row ``i`` of every view describes the same underlying sample.
    """

    views: list[np.ndarray]
    labels: np.ndarray | None = None
    name: str = "unnamed"
    n_classes: int | None = None

    def __post_init__(self):
        if not self.views:
            raise DataError("dataset needs at least one view")
        self.views = [np.asarray(v, dtype=np.float64) for v in self.views]
        n = self.views[0].shape[0]
        for i, v in enumerate(self.views):
            if v.ndim != 2:
                raise DataError(f"view {i} is not a matrix")
            if v.shape[0] != n:
                raise DataError(
                    f"row count mismatch across views: view 0 has {n} rows, "
                    f"view {i} has {v.shape[0]}")
            if not np.all(np.isfinite(v)):
                raise DataError(f"non-finite value in view {i}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise DataError(
                    f"labels length {self.labels.shape} does not match n={n}")
            if self.labels.size:
                if self.labels.min() < 0:
                    raise DataError("label out of range: negative label")
                if self.n_classes is None:
                    self.n_classes = int(self.labels.max()) + 1
                elif self.labels.max() >= self.n_classes:
                    raise DataError(
                        f"label out of range: {int(self.labels.max())} >= "
                        f"{self.n_classes} classes")

    @property
    def n(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def view_dims(self) -> tuple[int, ...]:
        return tuple(v.shape[1] for v in self.views)

    def subset(self, indices: np.ndarray, name_suffix: str = "") -> "MultiViewDataset":
        """New dataset holding the given rows, all views sliced identically."""
        indices = np.asarray(indices)
        return MultiViewDataset(
            views=[v[indices] for v in self.views],
            labels=None if self.labels is None else self.labels[indices],
            name=self.name + name_suffix,
            n_classes=self.n_classes)


def save_dataset(ds: MultiViewDataset, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    meta = {"name": ds.name, "n": ds.n, "views": []}
    if ds.n_classes is not None:
        meta["classes"] = ds.n_classes
    for i, v in enumerate(ds.views):
        fname = f"view{i}.csv"
        meta["views"].append({"name": f"view{i}", "dim": v.shape[1], "file": fname})
        write_matrix(os.path.join(path, fname), v)
    if ds.labels is not None:
        meta["labels_file"] = "labels.csv"
        with open(os.path.join(path, "labels.csv"), "w") as fh:
            for y in ds.labels:
                fh.write(f"{int(y)}\n")
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path: str) -> MultiViewDataset:
    meta_path = os.path.join(path, "meta.json")
    if not os.path.isfile(meta_path):
        raise DataError(f"missing file: {meta_path}")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{meta_path}: malformed JSON ({exc})") from None
    for key in ("n", "views"):
        if key not in meta:
            raise DataError(f"{meta_path}: missing key '{key}'")
    views = []
    for spec in meta["views"]:
        arr = read_matrix(os.path.join(path, spec["file"]), expect_cols=spec["dim"])
        if arr.shape[0] != meta["n"]:
            raise DataError(
                f"row count mismatch: meta says n={meta['n']}, "
                f"{spec['file']} has {arr.shape[0]} rows")
        views.append(arr)
    labels = None
    if meta.get("labels_file"):
        lpath = os.path.join(path, meta["labels_file"])
        if not os.path.isfile(lpath):
            raise DataError(f"missing file: {lpath}")
        raw = [ln.strip() for ln in open(lpath) if ln.strip()]
        try:
            labels = np.array([int(tok) for tok in raw], dtype=np.int64)
        except ValueError:
            raise DataError(f"{lpath}: malformed label") from None
    return MultiViewDataset(views=views, labels=labels,
                            name=meta.get("name", os.path.basename(path)),
                            n_classes=meta.get("classes"))


def synth_gaussian(classes: int, per_class: int, view_dims,
                   noise=0.25, corruption: float = 0.0, seed: int = 0,
                   name: str = "synthetic") -> MultiViewDataset:
    """Gaussian blobs shared across views, with optional one-view corruption.

    Per view, class centers sit on a simplex (scaled one-hot axes, randomly
    rotated) whose pairwise separation is ``max(1, 4 * sigma_v)``, so cluster
    recoverability is guaranteed by construction.  A fraction ``corruption``
    of the last view's samples receive extra noise of scale ``3 * sigma_v``,
    emulating one clean view paired with a degraded one.  Deterministic for a
    given seed.
    """
    view_dims = tuple(int(d) for d in view_dims)
    if classes < 2:
        raise ConfigError("synth_gaussian: need at least 2 classes")
    if per_class < 1:
        raise ConfigError("synth_gaussian: per_class must be >= 1")
    if not view_dims:
        raise ConfigError("synth_gaussian: need at least one view")
    if any(d < classes for d in view_dims):
        raise ConfigError(
            "synth_gaussian: every view dim must be >= classes "
            "(simplex construction)")
    sigmas = ([float(noise)] * len(view_dims) if np.isscalar(noise)
              else [float(s) for s in noise])
    if len(sigmas) != len(view_dims):
        raise ConfigError("synth_gaussian: one noise level per view required")
    if any(s < 0 for s in sigmas):
        raise ConfigError("synth_gaussian: noise must be >= 0")
    if not 0.0 <= corruption <= 1.0:
        raise ConfigError("synth_gaussian: corruption must be in [0, 1]")

    rng = np.random.default_rng(seed)
    n = classes * per_class
    labels = np.repeat(np.arange(classes), per_class)
    views = []
    for v, (d, sigma) in enumerate(zip(view_dims, sigmas)):
        separation = max(1.0, 4.0 * sigma)
        centers = np.zeros((classes, d))
        centers[np.arange(classes), np.arange(classes)] = separation / math.sqrt(2.0)
        # random rotation keeps pairwise distances, kills axis alignment
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        q *= np.sign(np.diag(r))
        centers = centers @ q.T
        x = centers[labels] + (rng.standard_normal((n, d)) * sigma if sigma > 0
                               else 0.0)
        views.append(np.asarray(x, dtype=np.float64))
    if corruption > 0:
        v_last = len(view_dims) - 1
        n_bad = int(round(corruption * n))
        bad = rng.choice(n, size=n_bad, replace=False)
        views[v_last][bad] += rng.standard_normal(
            (n_bad, view_dims[v_last])) * (3.0 * sigmas[v_last])
    return MultiViewDataset(views=views, labels=labels, name=name,
                            n_classes=classes)


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test ratios plus the shuffling seed."""

    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
            raise ConfigError("split ratios must be three positive numbers")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must sum to 1, got {sum(self.ratios)}")


def _allocate(count: int, ratios) -> list[int]:
    """Largest-remainder apportionment; exact, deterministic."""
    raw = [count * r for r in ratios]
    base = [int(math.floor(x)) for x in raw]
    short = count - sum(base)
    fracs = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in fracs[:short]:
        base[i] += 1
    return base


def split(ds: MultiViewDataset, spec: SplitSpec):
    """Partition into (train, val, test); stratified when labels exist."""
    rng = np.random.default_rng(spec.seed)
    parts: list[list[int]] = [[], [], []]
    if ds.labels is not None:
        for cls in np.unique(ds.labels):
            idx = np.flatnonzero(ds.labels == cls)
            if len(idx) < 3:
                raise DataError(
                    f"stratification error: class {int(cls)} has {len(idx)} "
                    "samples, fewer than the 3 split parts")
            idx = rng.permutation(idx)
            sizes = _allocate(len(idx), spec.ratios)
            stops = np.cumsum(sizes)
            parts[0].extend(idx[:stops[0]])
            parts[1].extend(idx[stops[0]:stops[1]])
            parts[2].extend(idx[stops[1]:stops[2]])
    else:
        idx = rng.permutation(ds.n)
        sizes = _allocate(ds.n, spec.ratios)
        stops = np.cumsum(sizes)
        parts = [list(idx[:stops[0]]), list(idx[stops[0]:stops[1]]),
                 list(idx[stops[1]:stops[2]])]
    suffixes = ("/train", "/val", "/test")
    return tuple(ds.subset(np.sort(np.array(p, dtype=np.int64)), suf)
                 for p, suf in zip(parts, suffixes))


@dataclass
class MultiViewBatch:
    """One mini-batch: every view sliced by the same row order."""

    views: list[np.ndarray]
    indices: np.ndarray
    labels: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.views[0].shape[0]


def batches(ds: MultiViewDataset, batch_size: int, shuffle: bool = False,
            seed=0) -> list[MultiViewBatch]:
    """Slice the dataset into full batches; a short final batch is dropped.

    The drop keeps the class-assignment loss's uniform column marginal exact
    (it assumes all batches share one size).  ``seed`` may be an int or a
    sequence of ints (handy for per-epoch derivation).
    """
    if batch_size < 2:
        raise ConfigError("batch_size must be >= 2 (batch statistics needed)")
    order = np.arange(ds.n)
    if shuffle:
        order = np.random.default_rng(seed).permutation(ds.n)
    out = []
    for start in range(0, ds.n - batch_size + 1, batch_size):
        idx = order[start:start + batch_size]
        out.append(MultiViewBatch(
            views=[v[idx] for v in ds.views],
            indices=idx,
            labels=None if ds.labels is None else ds.labels[idx]))
    return out
