"""The hybrid contrastive objective.

Two terms, combined with fixed trade-off weights:

* an instance-level redundancy-reduction loss -- the normalized
  cross-correlation between the projected fused embedding and each projected
  view embedding is driven toward the identity matrix (diagonal to 1,
  off-diagonal to 0).  Pairing is asymmetric by default: only
  (fused, view) pairs are correlated, never (view, view) pairs, which is
  what keeps the fusion map from collapsing to a constant.  A symmetric
  mode that adds all view-view pairs exists purely for ablations.

* a class-level soft-label consistency loss -- every head's prototype
  scores must predict every other head's balanced soft assignment, where
  assignments come from a few Sinkhorn-Knopp scaling rounds over the
  transportation polytope (uniform marginals: 1/k per prototype row, 1/b per
  sample column).  Targets are treated as constants during backpropagation
  (stop-gradient), matching swapped-prediction practice.

The per-pair class term averages the two swapped cross-entropy directions,
so identical uniform heads score exactly ``log k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Var, add, constant, scale
from .errors import ConfigError, ContractError, DimensionError
from .model import ArchConfig, ModelParams, projection_graph, prototype_graph

NORM_GUARD = 1e-12      # zero-norm columns correlate to 0, not NaN
LOG_GUARD = 1e-300      # keeps log of underflowed softmax entries finite


@dataclass(frozen=True)
class LossWeights:
    """Trade-off factors and solver settings for the combined objective."""

    instance_weight: float = 1.0      # on the instance-level term
    class_weight: float = 0.5        # on the class-level term
    redundancy_weight: float = 5e-3  # on off-diagonal correlation entries
    temperature: float = 0.07        # softmax temperature for predictions
    sinkhorn_eps: float = 0.05       # entropic regularization of assignments
    sinkhorn_iters: int = 3          # scaling rounds per assignment

    def __post_init__(self):
        for name in ("instance_weight", "class_weight", "redundancy_weight",
                     "temperature", "sinkhorn_eps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.sinkhorn_iters < 1:
            raise ConfigError("sinkhorn_iters must be >= 1")


@dataclass(frozen=True)
class LossToggles:
    """Ablation switches: which terms run, and whether pairing is anchored."""

    instance_level: bool = True
    class_level: bool = True
    asymmetric: bool = True


def instance_pairs(n_views: int, symmetric: bool = False):
    """Index pairs into [fused, view_1, ..., view_V] the instance loss uses.

    Asymmetric (default): exactly the V (fused, view) pairs.  Symmetric adds
    every (view, view) pair; it exists only to reproduce the ablation axis.
    """
    if n_views < 1:
        raise ContractError("instance loss needs at least one view")
    pairs = [(0, v) for v in range(1, n_views + 1)]
    if symmetric:
        pairs += [(u, v) for u in range(1, n_views + 1)
                  for v in range(u + 1, n_views + 1)]
    return pairs


def _corr_parts(a: np.ndarray, b: np.ndarray, center: bool):
    ac = a - a.mean(axis=0, keepdims=True) if center else a
    bc = b - b.mean(axis=0, keepdims=True) if center else b
    na = np.maximum(np.sqrt((ac * ac).sum(axis=0)), NORM_GUARD)
    nb = np.maximum(np.sqrt((bc * bc).sum(axis=0)), NORM_GUARD)
    corr = (ac.T @ bc) / np.outer(na, nb)
    return corr, ac, bc, na, nb


def cross_correlation(a, b, center: bool = True) -> np.ndarray:
    """Column-wise normalized cross-correlation matrix, entries in [-1, 1].

    ``C[i, j]`` correlates column i of ``a`` with column j of ``b`` over the
    batch.  With ``center`` on (default) the per-column batch mean is removed
    first.  Columns with zero norm yield zeros in their row/column.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(
            f"cross_correlation: shapes differ, {a.shape} vs {b.shape}")
    if center and a.shape[0] < 2:
        raise ContractError("cross_correlation: centering needs a batch of >= 2")
    return _corr_parts(a, b, center)[0]


def _pair_term(corr: np.ndarray, redundancy_weight: float) -> float:
    diag = np.diag(corr)
    off_sq = (corr * corr).sum() - (diag * diag).sum()
    return float(((1.0 - diag) ** 2).sum() + redundancy_weight * off_sq)


def instance_loss(z_proj, h_proj_list, weights: LossWeights,
                  center: bool = True, symmetric: bool = False) -> float:
    """Redundancy-reduction loss summed over the selected projection pairs."""
    reps = [np.asarray(z_proj, dtype=np.float64)]
    reps += [np.asarray(h, dtype=np.float64) for h in h_proj_list]
    total = 0.0
    for i, j in instance_pairs(len(reps) - 1, symmetric):
        corr = cross_correlation(reps[i], reps[j], center)
        total += _pair_term(corr, weights.redundancy_weight)
    return total


def sinkhorn(scores, eps: float = 0.05, iters: int = 3,
             rounded: bool = False) -> np.ndarray:
    """Balanced soft assignment of a batch of scores to prototypes.

    Returns the (k, b) transport plan with row marginals 1/k and column
    marginals 1/b.  Initialized from ``exp(scores.T / eps)`` after global max
    subtraction, then ``iters`` rounds of alternating row/column scaling;
    rounds end on a column scaling so column sums are exact.  ``rounded``
    replaces each column with a hard argmax assignment renormalized to 1/b.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.size == 0:
        raise ContractError(f"sinkhorn: need a non-empty 2-D score matrix, "
                            f"got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ContractError("sinkhorn: non-finite scores")
    if eps <= 0:
        raise ConfigError("sinkhorn: eps must be positive")
    if iters < 1:
        raise ConfigError("sinkhorn: iters must be >= 1")
    b, k = scores.shape
    plan = np.exp((scores - scores.max()).T / eps)
    plan = np.maximum(plan, LOG_GUARD)  # underflow protection for the scalings
    for _ in range(iters):
        plan *= (1.0 / k) / plan.sum(axis=1, keepdims=True)
        plan *= (1.0 / b) / plan.sum(axis=0, keepdims=True)
    if rounded:
        hard = np.zeros_like(plan)
        hard[plan.argmax(axis=0), np.arange(b)] = 1.0 / b
        plan = hard
    return plan


def _row_softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _class_core(score_arrays, weights: LossWeights, targets=None):
    """Loss plus per-set codes Q (row-stochastic) and predictions P."""
    m = len(score_arrays)
    if m < 2:
        raise ContractError("class loss needs at least two score sets")
    b, k = score_arrays[0].shape
    for s in score_arrays:
        if s.shape != (b, k):
            raise DimensionError(
                f"class loss: score shapes differ ({[a.shape for a in score_arrays]})")
    if targets is None:
        targets = [sinkhorn(s, weights.sinkhorn_eps, weights.sinkhorn_iters).T * b
                   for s in score_arrays]
    preds = [np.maximum(_row_softmax(s / weights.temperature), LOG_GUARD)
             for s in score_arrays]
    total = 0.0
    for a in range(m):
        for c in range(m):
            if a == c:
                continue
            total += -(targets[a] * np.log(preds[c])).sum() / b
    return total / (m * (m - 1)), targets, preds


def class_loss(score_sets, weights: LossWeights) -> float:
    """Swapped-prediction consistency over every pair of score sets.

    ``score_sets[0]`` comes from the fused embedding, the rest from each
    view.  For each ordered pair (a, c), set a's Sinkhorn codes are the
    cross-entropy targets for set c's tempered softmax; the result is the
    mean over all ordered pairs, so its floor is the mean code entropy.
    """
    arrays = [np.asarray(s, dtype=np.float64) for s in score_sets]
    return _class_core(arrays, weights)[0]


# ---------------------------------------------------------------------------
# Graph nodes.  Forwards reuse the exact array code above; backwards are
# hand-derived and validated against finite differences in the test suite.


def correlation_pair_node(a: Var, b: Var, redundancy_weight: float,
                          center: bool = True) -> Var:
    """Scalar node: redundancy-reduction term for one correlation pair."""
    if a.shape != b.shape:
        raise DimensionError(
            f"correlation pair: shapes differ, {a.shape} vs {b.shape}")
    if center and a.shape[0] < 2:
        raise ContractError("correlation pair: centering needs a batch of >= 2")
    lam = float(redundancy_weight)
    corr, ac, bc, na, nb = _corr_parts(a.value, b.value, center)
    loss = _pair_term(corr, lam)
    diag = np.diag(corr)

    def grad_wrt_corr() -> np.ndarray:
        g = 2.0 * lam * corr
        np.fill_diagonal(g, -2.0 * (1.0 - diag))
        return g

    def push_a(g):
        gc = grad_wrt_corr() * g[0, 0]
        gs = gc / np.outer(na, nb)
        coef = -(gc * corr).sum(axis=1) / (na * na)
        da = bc @ gs.T + ac * coef[None, :]
        return da - da.mean(axis=0, keepdims=True) if center else da

    def push_b(g):
        gc = grad_wrt_corr() * g[0, 0]
        gs = gc / np.outer(na, nb)
        coef = -(gc * corr).sum(axis=0) / (nb * nb)
        db = ac @ gs + bc * coef[None, :]
        return db - db.mean(axis=0, keepdims=True) if center else db

    return Var([[loss]], op="instance_pair_loss", parents=(a, b),
               pushes=(push_a, push_b))


def instance_loss_graph(z_proj: Var, h_projs, weights: LossWeights,
                        center: bool = True, symmetric: bool = False) -> Var:
    """Sum of correlation pair nodes over the selected pairing."""
    reps = [z_proj, *h_projs]
    pairs = instance_pairs(len(reps) - 1, symmetric)
    nodes = [correlation_pair_node(reps[i], reps[j], weights.redundancy_weight,
                                   center) for i, j in pairs]
    acc = nodes[0]
    for node in nodes[1:]:
        acc = add(acc, node)
    return acc


def class_loss_graph(score_vars, weights: LossWeights, targets=None) -> Var:
    """Scalar node for the class-level term.

    ``targets`` (per-set row-stochastic codes) can be supplied to hold the
    assignments fixed, which is also the semantics of backpropagation here:
    codes never receive gradients, only the predictions do.
    """
    score_vars = list(score_vars)
    arrays = [v.value for v in score_vars]
    for i, s in enumerate(arrays):
        if not np.all(np.isfinite(s)):
            raise ContractError(f"class loss: non-finite scores in set {i}")
    loss, codes, preds = _class_core(arrays, weights, targets)
    m = len(arrays)
    b = arrays[0].shape[0]
    n_ordered = m * (m - 1)
    code_sum = np.sum(codes, axis=0)

    def make_push(c):
        coeff = 1.0 / (n_ordered * b * weights.temperature)
        return lambda g: (g[0, 0] * coeff) * ((m - 1) * preds[c]
                                              - (code_sum - codes[c]))

    return Var([[loss]], op="class_loss", parents=tuple(score_vars),
               pushes=tuple(make_push(c) for c in range(m)))


def total_loss_graph(pvars, z: Var, h_list, weights: LossWeights,
                     toggles: LossToggles, arch: ArchConfig):
    """Combined objective as a graph: weighted sum of the enabled terms.

    The projection head feeds the instance term and the prototype head feeds
    the class term, each applied to the fused embedding and to every view
    embedding.  Returns (root, breakdown); disabled terms report 0.0.
    """
    if not (toggles.instance_level or toggles.class_level):
        raise ConfigError("at least one loss term must be enabled")
    h_list = list(h_list)
    breakdown = {"instance": 0.0, "class": 0.0,
                 "instance_weight": weights.instance_weight,
                 "class_weight": weights.class_weight}
    terms = []
    if toggles.instance_level:
        z_p = projection_graph(pvars, z, arch)
        h_ps = [projection_graph(pvars, h, arch) for h in h_list]
        ins = instance_loss_graph(z_p, h_ps, weights,
                                  symmetric=not toggles.asymmetric)
        breakdown["instance"] = float(ins.value[0, 0])
        terms.append(scale(ins, weights.instance_weight))
    if toggles.class_level:
        scores = [prototype_graph(pvars, z, arch)]
        scores += [prototype_graph(pvars, h, arch) for h in h_list]
        cls = class_loss_graph(scores, weights)
        breakdown["class"] = float(cls.value[0, 0])
        terms.append(scale(cls, weights.class_weight))
    root = terms[0] if len(terms) == 1 else add(terms[0], terms[1])
    breakdown["total"] = float(root.value[0, 0])
    return root, breakdown


def total_loss(z, h_list, params: ModelParams, weights: LossWeights,
               toggles: LossToggles = LossToggles()):
    """Array-in, number-out form of the combined objective.

    Returns (total, breakdown) where the breakdown echoes the per-term
    values and the trade-off weights actually applied.
    """
    pvars = {k: constant(v, name=k) for k, v in params.arrays.items()}
    z_var = constant(np.asarray(z, dtype=np.float64))
    h_vars = [constant(np.asarray(h, dtype=np.float64)) for h in h_list]
    root, breakdown = total_loss_graph(pvars, z_var, h_vars, weights, toggles,
                                       params.arch)
    return breakdown["total"], breakdown
