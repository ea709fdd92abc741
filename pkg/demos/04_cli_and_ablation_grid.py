"""Drive the whole pipeline through the command-line interface: synthesize a
dataset, emit the six-row ablation grid, train one row, evaluate and export
embeddings.  Everything lands under ./demo_out.
"""
import json
import pathlib

from mvfuse.cli import main

out = pathlib.Path("demo_out")
out.mkdir(exist_ok=True)
ds_dir = out / "dataset"

print("== synth ==")
main(["synth", "--classes", "3", "--per-class", "40", "--views", "8,6",
      "--noise", "0.2", "--corruption", "0.2", "--seed", "1",
      "--out", str(ds_dir)])

base_cfg = out / "base.cfg"
base_cfg.write_text(f"""\
data = {ds_dir}
embed_dim = 8
encoder_hidden = 32
epochs = 8
batch_size = 40
seeds = 0,1
learning_rate = 0.001
out = {out / 'full_run'}
""")

print("\n== grid (one config per ablation row) ==")
main(["grid", "--config", str(base_cfg), "--out", str(out / "grid")])

print("\n== train the full row ==")
main(["train", "--config", str(out / "grid" / "row1_ins+cls+asym.cfg")])

run_dir = out / "grid" / "row1_ins+cls+asym"
manifest = json.loads((run_dir / "manifest.json").read_text())
print("\nmanifest says best seed:", manifest["results"]["best_seed"])

print("\n== eval ==")
main(["eval", "--checkpoint", str(run_dir / "checkpoint.txt"),
      "--data", str(ds_dir), "--out", str(out / "eval"), "--probe"])

print("\n== embed (with 2-D PCA export) ==")
main(["embed", "--checkpoint", str(run_dir / "checkpoint.txt"),
      "--data", str(ds_dir), "--out", str(out / "embeddings"),
      "--pca2d", "--views"])
