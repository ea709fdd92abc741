import numpy as np
import pytest

from mvfuse import ArchConfig, init_params
from mvfuse.autodiff import backward, constant, parameter
from mvfuse.model import network_graph

FD_MARGIN = 1.5e-3  # min |ReLU pre-activation|; >> the 1e-4 probe step
FD_SEED = 76        # chosen so live-direction truncation stays ~5e-6


def small_arch():
    """Two views at desk scale; hidden widths kept tiny so finite-difference
    sweeps stay fast."""
    return ArchConfig(view_dims=(6, 9), embed_dim=4, n_prototypes=3,
                      encoder_hidden=(10, 7))


def _preactivations(params, xs, arch):
    """Plain-numpy forward collecting every ReLU input, grouped by layer."""
    arrays = params.arrays
    sites: dict[str, list[np.ndarray]] = {}

    def affine(prefix, x):
        return x @ arrays[prefix + ".w"] + arrays[prefix + ".b"]

    hs = []
    for v, x in enumerate(xs):
        h = x
        for i in range(len(arch.encoder_hidden)):
            pre = affine(f"enc{v}.l{i}", h)
            sites.setdefault(f"enc{v}.l{i}", []).append(pre)
            h = np.maximum(pre, 0.0)
        h = affine(f"enc{v}.l{len(arch.encoder_hidden)}", h)
        hs.append(h)
    s = np.concatenate(hs, axis=1) @ arrays["fuse.adapter.w"]
    pre = affine("fuse.mlp0", s)
    sites.setdefault("fuse.mlp0", []).append(pre)
    z = s + np.maximum(pre, 0.0) @ arrays["fuse.mlp1.w"] + arrays["fuse.mlp1.b"]
    for r in [z] + hs:
        for head in ("proj0", "proto0"):
            pre = affine(head, r)
            sites.setdefault(head, []).append(pre)
    return sites


def fd_instance(seed=FD_SEED, batch=8, margin=FD_MARGIN):
    """A fixed (arch, params, inputs) point suitable for gradient checking.

    Central differences are only meaningful where the objective is smooth, so
    layer biases are shifted (deterministically, smallest shift first) until
    every ReLU pre-activation clears ``margin``; a 1e-4 probe step then
    cannot cross any kink.  The resulting point is asserted safe.
    """
    arch = small_arch()
    params = init_params(arch, seed=seed)
    rng = np.random.default_rng(seed + 100)
    xs = [rng.normal(size=(batch, d)) for d in arch.view_dims]

    clear = 1.06 * margin
    layer_order = list(_preactivations(params, xs, arch))
    for prefix in layer_order:  # forward order: fixes only affect downstream
        stacked = np.vstack(_preactivations(params, xs, arch)[prefix])
        bias = params.arrays[prefix + ".b"]
        for j in range(stacked.shape[1]):
            col = stacked[:, j]
            if np.all(np.abs(col) >= margin):
                continue
            shifts = [s for c in col for s in (clear - c, -clear - c)]
            shifts.append(clear - col.min())  # always-valid fallback
            ok = [s for s in shifts if np.all(np.abs(col + s) >= margin)]
            bias[0, j] += min(ok, key=lambda s: (abs(s), s))
    final = min(np.abs(np.vstack(m)).min()
                for m in _preactivations(params, xs, arch).values())
    assert final >= margin, f"fd fixture could not clear ReLU margins ({final})"
    return arch, params, xs


def centering_dead_directions(params, xs, arch):
    """Parameter entries with exactly-zero gradient under column centering.

    Centering removes any constant column shift of the projections, so the
    projection output bias is inert, and so is any projection hidden unit
    whose ReLU mask is uniform (all-on or all-off) within every head input:
    its bias only ever produces constant column shifts.
    """
    pv = {k: constant(v) for k, v in params.arrays.items()}
    z, hs = network_graph(pv, [constant(x) for x in xs], arch)
    uniform = np.ones(params.arrays["proj0.b"].shape[1], dtype=bool)
    for r in [z] + hs:
        pre = r.value @ params.arrays["proj0.w"] + params.arrays["proj0.b"]
        uniform &= np.all(pre > 0, axis=0) | np.all(pre < 0, axis=0)
    dead = {("proj1.b", (0, j))
            for j in range(params.arrays["proj1.b"].shape[1])}
    dead |= {("proj0.b", (0, j)) for j in np.flatnonzero(uniform)}
    return dead


def fd_sweep(build, params_arrays, dead=(), step=1e-4):
    """Central-difference sweep over every parameter entry.

    Returns (worst_live_rel, worst_dead_analytic, worst_dead_numeric): live
    entries are held to the relative-error formula, entries listed in
    ``dead`` are expected to vanish on both sides and their magnitudes are
    reported instead (the relative formula degenerates at exact zeros).
    """
    dead = set(dead)
    leaves = {k: parameter(v, name=k) for k, v in params_arrays.items()}
    root = build(leaves)
    backward(root)
    analytic = {k: (leaves[k].grad if leaves[k].grad is not None
                    else np.zeros_like(v))
                for k, v in params_arrays.items()}

    def value_with(probe, idx, delta):
        vs = {}
        for k, v in params_arrays.items():
            if k == probe:
                shifted = v.copy()
                shifted[idx] += delta
                vs[k] = parameter(shifted, name=k)
            else:
                vs[k] = parameter(v, name=k)
        return float(build(vs).value[0, 0])

    worst_live = 0.0
    worst_dead_a = 0.0
    worst_dead_n = 0.0
    for name, base in params_arrays.items():
        for idx in np.ndindex(base.shape):
            numeric = (value_with(name, idx, +step)
                       - value_with(name, idx, -step)) / (2.0 * step)
            a = analytic[name][idx]
            if (name, idx) in dead:
                worst_dead_a = max(worst_dead_a, abs(a))
                worst_dead_n = max(worst_dead_n, abs(numeric))
            else:
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
                worst_live = max(worst_live, rel)
    return worst_live, worst_dead_a, worst_dead_n


@pytest.fixture
def fd_point():
    return fd_instance()
