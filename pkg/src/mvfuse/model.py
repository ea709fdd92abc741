"""The fusion network: per-view encoders, a residual fusion block, a
projection head and a prototype-score head.

Every forward pass is a pure function of (params, input) and exists in two
forms: a graph builder over autodiff variables (used when gradients are
needed) and a plain-array wrapper that just returns numbers.  The fusion
block first maps the concatenated view embeddings through a learned linear
adapter down to the embedding width, then adds a two-layer ReLU MLP on top
of a skip connection: ``z = s + mlp(s)`` with ``s = concat(h) @ A``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import data as dataio
from .autodiff import Var, add, concat_cols, constant, matmul, parameter, relu
from .errors import ConfigError, ContractError, DataError, DimensionError


@dataclass(frozen=True)
class ArchConfig:
    """Network dimensions.

    ``fusion_hidden`` and ``projection_hidden`` default (when 0) to
    ``embed_dim // 2`` and ``4 * embed_dim``, the standard head shapes.
    """

    view_dims: tuple[int, ...]
    embed_dim: int
    n_prototypes: int
    encoder_hidden: tuple[int, ...] = (1024, 1024, 1024)
    fusion_hidden: int = 0
    projection_hidden: int = 0

    def __post_init__(self):
        object.__setattr__(self, "view_dims", tuple(int(d) for d in self.view_dims))
        object.__setattr__(self, "encoder_hidden",
                           tuple(int(d) for d in self.encoder_hidden))
        if not self.view_dims or any(d < 1 for d in self.view_dims):
            raise ConfigError("view_dims must be >= 1 each, at least one view")
        if self.embed_dim < 2 or self.embed_dim % 2 != 0:
            raise ConfigError("embed_dim must be even and >= 2")
        if self.n_prototypes < 2:
            raise ConfigError("n_prototypes must be >= 2")
        if any(d < 1 for d in self.encoder_hidden):
            raise ConfigError("encoder hidden widths must be >= 1")
        if self.fusion_hidden == 0:
            object.__setattr__(self, "fusion_hidden", self.embed_dim // 2)
        if self.projection_hidden == 0:
            object.__setattr__(self, "projection_hidden", 4 * self.embed_dim)
        if self.fusion_hidden < 1 or self.projection_hidden < 1:
            raise ConfigError("head widths must be >= 1")

    @property
    def n_views(self) -> int:
        return len(self.view_dims)


@dataclass
class ModelParams:
    """All learnable arrays, keyed by a stable naming scheme.

    Weights are ``(fan_in, fan_out)`` (inputs hit them from the left),
    biases are ``(1, fan_out)``.  Treat instances as immutable during
    evaluation; a training step produces a fresh copy.
    """

    arch: ArchConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, {k: v.copy() for k, v in self.arrays.items()})


def init_params(arch: ArchConfig, seed: int) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}

    def linear(prefix, fan_in, fan_out, bias=True):
        bound = 1.0 / math.sqrt(fan_in)
        arrays[prefix + ".w"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        if bias:
            arrays[prefix + ".b"] = np.zeros((1, fan_out))

    for v, d in enumerate(arch.view_dims):
        dims = (d, *arch.encoder_hidden, arch.embed_dim)
        for i in range(len(dims) - 1):
            linear(f"enc{v}.l{i}", dims[i], dims[i + 1])
    linear("fuse.adapter", arch.n_views * arch.embed_dim, arch.embed_dim, bias=False)
    linear("fuse.mlp0", arch.embed_dim, arch.fusion_hidden)
    linear("fuse.mlp1", arch.fusion_hidden, arch.embed_dim)
    linear("proj0", arch.embed_dim, arch.projection_hidden)
    linear("proj1", arch.projection_hidden, arch.embed_dim)
    linear("proto0", arch.embed_dim, arch.embed_dim)
    linear("proto1", arch.embed_dim, arch.n_prototypes)
    return ModelParams(arch=arch, arrays=arrays)


def param_vars(params: ModelParams) -> dict[str, Var]:
    """Learnable leaves for one graph build."""
    return {k: parameter(v, name=k) for k, v in params.arrays.items()}


def _affine(pvars, prefix, x: Var) -> Var:
    out = matmul(x, pvars[prefix + ".w"])
    if prefix + ".b" in pvars:
        out = add(out, pvars[prefix + ".b"])
    return out


def encoder_graph(pvars: dict[str, Var], x: Var, view: int,
                  arch: ArchConfig) -> Var:
    """ReLU after each hidden layer, linear output at the embedding width."""
    if not 0 <= view < arch.n_views:
        raise ContractError(f"view index {view} out of range (V={arch.n_views})")
    if x.shape[1] != arch.view_dims[view]:
        raise DimensionError(
            f"view {view} expects width {arch.view_dims[view]}, got {x.shape[1]}")
    h = x
    n_layers = len(arch.encoder_hidden) + 1
    for i in range(n_layers):
        h = _affine(pvars, f"enc{view}.l{i}", h)
        if i < n_layers - 1:
            h = relu(h)
    return h


def fusion_graph(pvars: dict[str, Var], h_list: list[Var],
                 arch: ArchConfig) -> Var:
    if len(h_list) != arch.n_views:
        raise DimensionError(
            f"fusion expects {arch.n_views} views, got {len(h_list)}")
    for h in h_list:
        if h.shape[1] != arch.embed_dim:
            raise DimensionError(
                f"fusion inputs must have width {arch.embed_dim}, got {h.shape[1]}")
    s = matmul(concat_cols(h_list), pvars["fuse.adapter.w"])
    m = _affine(pvars, "fuse.mlp1", relu(_affine(pvars, "fuse.mlp0", s)))
    return add(s, m)


def projection_graph(pvars: dict[str, Var], r: Var, arch: ArchConfig) -> Var:
    if r.shape[1] != arch.embed_dim:
        raise DimensionError(
            f"projection expects width {arch.embed_dim}, got {r.shape[1]}")
    return _affine(pvars, "proj1", relu(_affine(pvars, "proj0", r)))


def prototype_graph(pvars: dict[str, Var], r: Var, arch: ArchConfig) -> Var:
    if r.shape[1] != arch.embed_dim:
        raise DimensionError(
            f"prototype head expects width {arch.embed_dim}, got {r.shape[1]}")
    return _affine(pvars, "proto1", relu(_affine(pvars, "proto0", r)))


def network_graph(pvars: dict[str, Var], x_list: list[Var], arch: ArchConfig):
    """All encoders plus fusion; returns (z, [h_v])."""
    hs = [encoder_graph(pvars, x, v, arch) for v, x in enumerate(x_list)]
    return fusion_graph(pvars, hs, arch), hs


# ---------------------------------------------------------------------------
# Plain-array wrappers


def _as_const_vars(params: ModelParams) -> dict[str, Var]:
    return {k: constant(v, name=k) for k, v in params.arrays.items()}


def encode(params: ModelParams, x: np.ndarray, view: int) -> np.ndarray:
    """View-specific embedding, shape (b, embed_dim)."""
    return encoder_graph(_as_const_vars(params), constant(np.asarray(x, float)),
                         view, params.arch).value


def fuse(params: ModelParams, h_list) -> np.ndarray:
    """Fused common embedding from the per-view embeddings."""
    hs = [constant(np.asarray(h, float)) for h in h_list]
    return fusion_graph(_as_const_vars(params), hs, params.arch).value


def project(params: ModelParams, r: np.ndarray) -> np.ndarray:
    return projection_graph(_as_const_vars(params),
                            constant(np.asarray(r, float)), params.arch).value


def prototype_scores(params: ModelParams, r: np.ndarray) -> np.ndarray:
    """Unnormalized prototype scores, shape (b, n_prototypes)."""
    return prototype_graph(_as_const_vars(params),
                           constant(np.asarray(r, float)), params.arch).value


def embed_dataset(params: ModelParams, views) -> tuple[np.ndarray, list[np.ndarray]]:
    """Fused and per-view embeddings for full view matrices."""
    hs = [encode(params, x, v) for v, x in enumerate(views)]
    return fuse(params, hs), hs


# ---------------------------------------------------------------------------
# Checkpoint format: one text file, JSON header line (arch echo plus an array
# manifest), followed by each array in manifest order serialized with the
# dataset CSV writer.  Round-trips bit-exactly.


def save_checkpoint(params: ModelParams, path: str) -> None:
    arch = params.arch
    header = {
        "arch": {
            "view_dims": list(arch.view_dims),
            "embed_dim": arch.embed_dim,
            "n_prototypes": arch.n_prototypes,
            "encoder_hidden": list(arch.encoder_hidden),
            "fusion_hidden": arch.fusion_hidden,
            "projection_hidden": arch.projection_hidden,
        },
        "arrays": [[k, int(v.shape[0]), int(v.shape[1])]
                   for k, v in params.arrays.items()],
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for v in params.arrays.values():
            fh.write(dataio.matrix_lines(v))


def load_checkpoint(path: str) -> ModelParams:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty checkpoint")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed checkpoint header ({exc})") from None
    arch = ArchConfig(
        view_dims=tuple(header["arch"]["view_dims"]),
        embed_dim=header["arch"]["embed_dim"],
        n_prototypes=header["arch"]["n_prototypes"],
        encoder_hidden=tuple(header["arch"]["encoder_hidden"]),
        fusion_hidden=header["arch"]["fusion_hidden"],
        projection_hidden=header["arch"]["projection_hidden"])
    arrays: dict[str, np.ndarray] = {}
    cursor = 1
    for name, rows, cols in header["arrays"]:
        chunk = lines[cursor:cursor + rows]
        if len(chunk) != rows:
            raise DataError(f"{path}: truncated checkpoint at array '{name}'")
        arr = np.array([[float(tok) for tok in ln.split(",")] for ln in chunk])
        if arr.shape != (rows, cols):
            raise DataError(f"{path}: array '{name}' has shape {arr.shape}, "
                            f"expected {(rows, cols)}")
        arrays[name] = arr
        cursor += rows
    return ModelParams(arch=arch, arrays=arrays)
