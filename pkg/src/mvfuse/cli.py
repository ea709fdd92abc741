"""Command-line pipeline driver.

Subcommands: ``synth`` (generate a dataset on disk), ``train`` (multi-seed
training from a config file), ``eval`` (clustering and optional linear-probe
reports for a checkpoint), ``embed`` (embedding CSV export, optionally a 2-D
PCA projection), ``grid`` (emit one config per ablation row).

Configs are flat ``key = value`` text files ('#' starts a comment); every
published default is baked in, so an empty config trains the reference
configuration on the chosen dataset.  ``train`` writes a ``manifest.json``
recording every resolved value, and a manifest is itself accepted wherever a
config is (re-running from a manifest reproduces the run byte for byte).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import data as dataio
from .errors import (ConfigError, ContractError, DataError, DimensionError,
                     NumericError)
from .evaluate import cluster_embedding, linear_probe, pca_top2
from .losses import LossToggles, LossWeights
from .model import ArchConfig, embed_dataset, load_checkpoint, save_checkpoint
from .train import TrainConfig, loss_history_lines, multi_seed

CONFIG_DEFAULTS = {
    "data": "",
    "synth.classes": "0",
    "synth.per_class": "0",
    "synth.views": "",
    "synth.noise": "0.25",
    "synth.corruption": "0.0",
    "synth.seed": "0",
    "synth.name": "synthetic",
    "embed_dim": "128",
    "encoder_hidden": "1024,1024,1024",
    "prototypes": "0",
    "fusion_hidden": "0",
    "projection_hidden": "0",
    "learning_rate": "0.0001",
    "epochs": "100",
    "batch_size": "256",
    "seeds": "0,1,2,3,4",
    "shuffle": "true",
    "grad_clip": "",
    "instance_weight": "1.0",
    "class_weight": "0.5",
    "redundancy_weight": "0.005",
    "temperature": "0.07",
    "sinkhorn_eps": "0.05",
    "sinkhorn_iters": "3",
    "instance_level": "true",
    "class_level": "true",
    "asymmetric": "true",
    "workers": "1",
    "out": "run",
}

ABLATION_ROWS = [
    ("ins+cls+asym", True, True, True),
    ("ins", True, False, False),
    ("ins+asym", True, False, True),
    ("cls", False, True, False),
    ("cls+asym", False, True, True),
    ("ins+cls", True, True, False),
]


def parse_config_text(text: str) -> dict[str, str]:
    """Flat key = value lines; errors carry the offending line number."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise ConfigError(f"config line {lineno}: unknown key '{key}'")
        values[key] = value
    return values


def read_config(path: str) -> dict[str, str]:
    """Read a flat config file or the 'resolved' block of a manifest."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    text = open(path).read()
    if text.lstrip().startswith("{"):
        try:
            resolved = json.loads(text)["resolved"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"{path}: not a valid manifest ({exc})") from None
        return {k: str(v) for k, v in resolved.items()}
    merged = dict(CONFIG_DEFAULTS)
    merged.update(parse_config_text(text))
    return merged


def _as_bool(key, value):
    low = value.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _as_ints(key, value):
    try:
        return tuple(int(tok) for tok in value.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, "
                          f"got {value!r}") from None


def _as_floats(key, value):
    try:
        return tuple(float(tok) for tok in value.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, "
                          f"got {value!r}") from None


def resolve_dataset(cfg: dict[str, str]) -> dataio.MultiViewDataset:
    """Exactly one data source: a dataset directory or a synth spec."""
    has_path = bool(cfg["data"])
    has_synth = cfg["synth.views"].strip() != ""
    if has_path == has_synth:
        raise ConfigError("exactly one data source required: set 'data' or "
                          "the 'synth.*' keys")
    if has_path:
        return dataio.load_dataset(cfg["data"])
    dims = _as_ints("synth.views", cfg["synth.views"])
    noise = _as_floats("synth.noise", cfg["synth.noise"])
    return dataio.synth_gaussian(
        classes=int(cfg["synth.classes"]),
        per_class=int(cfg["synth.per_class"]),
        view_dims=dims,
        noise=noise[0] if len(noise) == 1 else noise,
        corruption=float(cfg["synth.corruption"]),
        seed=int(cfg["synth.seed"]),
        name=cfg["synth.name"])


def resolve_train_config(cfg: dict[str, str],
                         ds: dataio.MultiViewDataset) -> TrainConfig:
    prototypes = int(cfg["prototypes"])
    if prototypes == 0:
        if ds.n_classes is None:
            raise ConfigError("'prototypes' not set and the dataset carries "
                              "no class count")
        prototypes = ds.n_classes
    arch = ArchConfig(
        view_dims=ds.view_dims,
        embed_dim=int(cfg["embed_dim"]),
        n_prototypes=prototypes,
        encoder_hidden=_as_ints("encoder_hidden", cfg["encoder_hidden"]),
        fusion_hidden=int(cfg["fusion_hidden"]),
        projection_hidden=int(cfg["projection_hidden"]))
    weights = LossWeights(
        instance_weight=float(cfg["instance_weight"]),
        class_weight=float(cfg["class_weight"]),
        redundancy_weight=float(cfg["redundancy_weight"]),
        temperature=float(cfg["temperature"]),
        sinkhorn_eps=float(cfg["sinkhorn_eps"]),
        sinkhorn_iters=int(cfg["sinkhorn_iters"]))
    toggles = LossToggles(
        instance_level=_as_bool("instance_level", cfg["instance_level"]),
        class_level=_as_bool("class_level", cfg["class_level"]),
        asymmetric=_as_bool("asymmetric", cfg["asymmetric"]))
    if not (toggles.instance_level or toggles.class_level):
        raise ConfigError("at least one loss term must be enabled")
    return TrainConfig(
        arch=arch, weights=weights, toggles=toggles,
        learning_rate=float(cfg["learning_rate"]),
        epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch_size"]),
        seeds=_as_ints("seeds", cfg["seeds"]),
        shuffle=_as_bool("shuffle", cfg["shuffle"]),
        grad_clip=float(cfg["grad_clip"]) if cfg["grad_clip"] else None)


def resolved_echo(cfg: dict[str, str], tc: TrainConfig,
                  ds: dataio.MultiViewDataset) -> dict:
    """Every value actually used, for the audit manifest."""
    echo = dict(cfg)
    echo.update({
        "embed_dim": str(tc.arch.embed_dim),
        "prototypes": str(tc.arch.n_prototypes),
        "fusion_hidden": str(tc.arch.fusion_hidden),
        "projection_hidden": str(tc.arch.projection_hidden),
        "encoder_hidden": ",".join(map(str, tc.arch.encoder_hidden)),
        "seeds": ",".join(map(str, tc.seeds)),
    })
    return echo


def _write(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def cmd_synth(args) -> int:
    dims = _as_ints("--views", args.views)
    noise = _as_floats("--noise", args.noise)
    ds = dataio.synth_gaussian(
        classes=args.classes, per_class=args.per_class, view_dims=dims,
        noise=noise[0] if len(noise) == 1 else noise,
        corruption=args.corruption, seed=args.seed, name=args.name)
    dataio.save_dataset(ds, args.out)
    print(f"wrote dataset '{ds.name}': n={ds.n}, views={ds.view_dims}, "
          f"classes={ds.n_classes} -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = read_config(args.config)
    if args.out:
        cfg["out"] = args.out
    for toggle in args.toggle or []:
        key = {"no-instance": "instance_level", "no-class": "class_level",
               "no-asym": "asymmetric"}.get(toggle)
        if key is None:
            raise ConfigError(f"unknown --toggle value '{toggle}'")
        cfg[key] = "false"
    ds = resolve_dataset(cfg)
    tc = resolve_train_config(cfg, ds)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)

    best, runs = multi_seed(tc, ds, workers=int(cfg["workers"]))

    ckpt_path = os.path.join(out, "checkpoint.txt")
    save_checkpoint(best.params, ckpt_path)
    loss_files = {}
    for run in runs:
        fname = f"loss_seed{run.seed}.csv"
        _write(os.path.join(out, fname), loss_history_lines(run))
        loss_files[str(run.seed)] = fname
    manifest = {
        "resolved": resolved_echo(cfg, tc, ds),
        "dataset": {"name": ds.name, "n": ds.n,
                    "view_dims": list(ds.view_dims),
                    "classes": ds.n_classes},
        "results": {
            "best_seed": best.seed,
            "final_losses": {str(r.seed): r.final_loss for r in runs},
        },
        "artifacts": {"checkpoint": "checkpoint.txt",
                      "loss_histories": loss_files},
    }
    _write(os.path.join(out, "manifest.json"),
           json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for run in runs:
        print(f"seed {run.seed}: final loss {run.final_loss:.6f} "
              f"({run.wall_time:.1f}s)")
    print(f"best seed {best.seed} -> {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint)
    ds = dataio.load_dataset(args.data)
    if ds.view_dims != params.arch.view_dims:
        raise DimensionError(
            f"dataset views {ds.view_dims} do not match checkpoint "
            f"{params.arch.view_dims}")
    if ds.labels is None:
        raise DataError("no ground truth labels: clustering evaluation "
                        "needs a labeled dataset")
    os.makedirs(args.out, exist_ok=True)
    z, _ = embed_dataset(params, ds.views)
    k = args.k or ds.n_classes
    report = cluster_embedding(z, k, ds.labels, seed=args.kmeans_seed,
                               restarts=args.restarts)
    _write(os.path.join(args.out, "clustering_report.csv"),
           "acc,nmi,ari,inertia\n"
           f"{report.acc!r},{report.nmi!r},{report.ari!r},{report.inertia!r}\n")
    print("clustering:   ACC     NMI     ARI")
    print(f"            {report.acc:6.4f}  {report.nmi:6.4f}  {report.ari:6.4f}")

    if args.probe:
        spec = dataio.SplitSpec(seed=args.split_seed)
        train_part, _, test_part = dataio.split(ds, spec)
        z_tr, _ = embed_dataset(params, train_part.views)
        z_te, _ = embed_dataset(params, test_part.views)
        probe = linear_probe((z_tr, train_part.labels),
                             (z_te, test_part.labels))
        _write(os.path.join(args.out, "classification_report.csv"),
               "acc,precision,f_score\n"
               f"{probe.acc!r},{probe.precision!r},{probe.f_score!r}\n")
        lines = ["class,precision,recall,f1,support\n"]
        for cls in sorted(probe.per_class):
            row = probe.per_class[cls]
            lines.append(f"{cls},{row['precision']!r},{row['recall']!r},"
                         f"{row['f1']!r},{row['support']}\n")
        _write(os.path.join(args.out, "classification_per_class.csv"),
               "".join(lines))
        print("probe:        ACC     P       F-score")
        print(f"            {probe.acc:6.4f}  {probe.precision:6.4f}  "
              f"{probe.f_score:6.4f}")
    return 0


def cmd_embed(args) -> int:
    params = load_checkpoint(args.checkpoint)
    ds = dataio.load_dataset(args.data)
    if ds.view_dims != params.arch.view_dims:
        raise DimensionError(
            f"dataset views {ds.view_dims} do not match checkpoint "
            f"{params.arch.view_dims}")
    os.makedirs(args.out, exist_ok=True)
    z, hs = embed_dataset(params, ds.views)
    dataio.write_matrix(os.path.join(args.out, "embedding_z.csv"), z)
    written = ["embedding_z.csv"]
    if args.pca2d:
        dataio.write_matrix(os.path.join(args.out, "embedding_z_pca2.csv"),
                            pca_top2(z))
        written.append("embedding_z_pca2.csv")
    if args.views:
        for v, h in enumerate(hs):
            fname = f"embedding_h{v}.csv"
            dataio.write_matrix(os.path.join(args.out, fname), h)
            written.append(fname)
    print(f"wrote {', '.join(written)} -> {args.out}")
    return 0


def cmd_grid(args) -> int:
    cfg = read_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    for i, (tag, ins, cls, asym) in enumerate(ABLATION_ROWS, start=1):
        row = dict(cfg)
        row["instance_level"] = "true" if ins else "false"
        row["class_level"] = "true" if cls else "false"
        row["asymmetric"] = "true" if asym else "false"
        row["out"] = os.path.join(args.out, f"row{i}_{tag}")
        fname = os.path.join(args.out, f"row{i}_{tag}.cfg")
        lines = [f"{k} = {v}\n" for k, v in row.items()]
        _write(fname, "".join(lines))
        print(f"wrote {fname}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvfuse",
        description="Multi-view hybrid contrastive fusion pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset on disk")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--views", required=True,
                   help="comma-separated view dims, e.g. 16,24")
    p.add_argument("--noise", default="0.25",
                   help="noise sigma, scalar or one per view")
    p.add_argument("--corruption", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="synthetic")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="multi-seed training from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config's output directory")
    p.add_argument("--toggle", action="append",
                   choices=["no-instance", "no-class", "no-asym"],
                   help="disable a loss term or the asymmetric pairing")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="clustering / probe reports")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=0,
                   help="clusters (default: dataset class count)")
    p.add_argument("--kmeans-seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--probe", action="store_true",
                   help="train/test linear probe over an 8:1:1 split")
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="export embeddings as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pca2d", action="store_true",
                   help="add a 2-D PCA projection of the fused embedding")
    p.add_argument("--views", action="store_true",
                   help="add one file per view embedding")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("grid", help="emit one config per ablation row")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError, DimensionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
