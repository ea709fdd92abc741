"""Training loop: Adam on the combined loss, multi-seed runs, best-run
selection by lowest final loss.

Each mini-batch builds a fresh graph (encode every view, fuse, attach the
enabled loss terms), backpropagates, and applies one Adam step over every
learnable array.  Runs are fully deterministic given (config, dataset,
seed); seeds may execute concurrently since nothing is shared.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .autodiff import backward, constant
from .data import MultiViewDataset, batches
from .errors import ConfigError, DimensionError, NumericError
from .losses import LossToggles, LossWeights, total_loss_graph
from .model import ArchConfig, ModelParams, init_params, network_graph, param_vars


@dataclass(frozen=True)
class TrainConfig:
    arch: ArchConfig
    weights: LossWeights = LossWeights()
    toggles: LossToggles = LossToggles()
    learning_rate: float = 1e-4
    epochs: int = 100
    batch_size: int = 256
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    shuffle: bool = True
    grad_clip: float | None = None  # optional global max-norm; off by default

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive when set")


@dataclass
class AdamState:
    """First/second moment estimates plus the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, arrays: dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(a) for k, a in arrays.items()},
                   v={k: np.zeros_like(a) for k, a in arrays.items()})


def adam_step(arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float):
    """One bias-corrected Adam update; returns (new_arrays, new_state).

    Parameters without a gradient entry are treated as zero-gradient: their
    moments decay and the parameter is left effectively unchanged.
    """
    new_arrays: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, value in arrays.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(value)
        elif not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter '{name}'")
        elif g.shape != value.shape:
            raise DimensionError(
                f"gradient shape {g.shape} does not match parameter "
                f"'{name}' {value.shape}")
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_arrays[name] = value - update
        new_m[name] = m
        new_v[name] = v
    return new_arrays, AdamState(m=new_m, v=new_v, t=t, beta1=state.beta1,
                                 beta2=state.beta2, eps=state.eps)


@dataclass
class RunResult:
    """Outcome of one seeded run: final params, loss curves, timing."""

    params: ModelParams
    history: np.ndarray  # (epochs, 3): total, instance term, class term
    seed: int
    wall_time: float

    @property
    def final_loss(self) -> float:
        return float(self.history[-1, 0])


def _clip_grads(grads: dict[str, np.ndarray], max_norm: float):
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        factor = max_norm / total
        return {k: g * factor for k, g in grads.items()}
    return grads


def train_run(cfg: TrainConfig, ds: MultiViewDataset, seed: int) -> RunResult:
    """One full training run; bit-reproducible for identical inputs."""
    if ds.view_dims != cfg.arch.view_dims:
        raise DimensionError(
            f"dataset views {ds.view_dims} do not match architecture "
            f"{cfg.arch.view_dims}")
    if ds.n < cfg.batch_size:
        raise ConfigError(
            f"batch_size {cfg.batch_size} exceeds dataset size {ds.n}")
    start = time.perf_counter()
    params = init_params(cfg.arch, seed)
    state = AdamState.zeros_like(params.arrays)
    history = np.zeros((cfg.epochs, 3))
    for epoch in range(cfg.epochs):
        epoch_batches = batches(ds, cfg.batch_size, shuffle=cfg.shuffle,
                                seed=(seed, epoch))
        sums = np.zeros(3)
        for batch in epoch_batches:
            pvars = param_vars(params)
            x_vars = [constant(x) for x in batch.views]
            z, hs = network_graph(pvars, x_vars, cfg.arch)
            root, parts = total_loss_graph(pvars, z, hs, cfg.weights,
                                           cfg.toggles, cfg.arch)
            backward(root)
            grads = {k: p.grad for k, p in pvars.items() if p.grad is not None}
            if cfg.grad_clip is not None:
                grads = _clip_grads(grads, cfg.grad_clip)
            new_arrays, state = adam_step(params.arrays, grads, state,
                                          cfg.learning_rate)
            params = ModelParams(cfg.arch, new_arrays)
            sums += (parts["total"], parts["instance"], parts["class"])
        history[epoch] = sums / len(epoch_batches)
    return RunResult(params=params, history=history, seed=seed,
                     wall_time=time.perf_counter() - start)


def best_run(runs) -> RunResult:
    """Lowest final total loss wins; exact ties go to the lower seed."""
    return min(runs, key=lambda r: (r.final_loss, r.seed))


def multi_seed(cfg: TrainConfig, ds: MultiViewDataset, workers: int = 1):
    """Train once per seed; pick the run with the lowest final total loss.

    Returns (best, all_runs) with runs ordered as in ``cfg.seeds``.  Runs
    share nothing, so ``workers > 1`` executes them on a thread pool without
    affecting results.
    """
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda s: train_run(cfg, ds, s), cfg.seeds))
    else:
        runs = [train_run(cfg, ds, s) for s in cfg.seeds]
    return best_run(runs), runs


def loss_history_lines(run: RunResult) -> str:
    """Loss curves as CSV: epoch, total, instance term, class term."""
    out = ["epoch,total,instance,class\n"]
    for epoch, row in enumerate(run.history):
        out.append(f"{epoch}," + ",".join(repr(float(x)) for x in row) + "\n")
    return "".join(out)


def write_loss_history(run: RunResult, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(loss_history_lines(run))
