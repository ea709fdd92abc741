"""End-to-end command-line behavior: artifacts, determinism, exit codes."""
import json
import os

import numpy as np
import pytest

from mvfuse import load_dataset
from mvfuse.cli import main
from mvfuse.data import read_matrix
from mvfuse.evaluate import pca_top2


def read_bytes_tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


TINY_TRAIN = """
# tiny but real training setup
synth.classes = 3
synth.per_class = 8
synth.views = 5,4
synth.noise = 0.2
synth.seed = 1
embed_dim = 4
encoder_hidden = 6
epochs = 2
batch_size = 8
seeds = 0
"""


def run_train(tmp_path, config_text=TINY_TRAIN, out_name="run", extra=()):
    cfg = tmp_path / "train.cfg"
    cfg.write_text(config_text + f"\nout = {tmp_path / out_name}\n")
    code = main(["train", "--config", str(cfg), *extra])
    assert code == 0
    return tmp_path / out_name


class TestSynthCommand:
    def test_generates_dataset_with_requested_shape(self, tmp_path):
        out = str(tmp_path / "ds")
        code = main(["synth", "--classes", "3", "--per-class", "400",
                     "--views", "16,24", "--seed", "7", "--out", out])
        assert code == 0
        ds = load_dataset(out)
        assert ds.n == 1200 and ds.n_views == 2
        assert ds.view_dims == (16, 24)

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        argv = ["synth", "--classes", "2", "--per-class", "5",
                "--views", "3,4", "--seed", "3"]
        assert main(argv + ["--out", a]) == 0
        assert main(argv + ["--out", b]) == 0
        assert read_bytes_tree(a) == read_bytes_tree(b)

    def test_invalid_views_is_config_error(self, tmp_path, capsys):
        code = main(["synth", "--classes", "3", "--per-class", "5",
                     "--views", "0", "--out", str(tmp_path / "x")])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestTrainCommand:
    def test_writes_three_artifact_kinds(self, tmp_path):
        out = run_train(tmp_path)
        assert (out / "checkpoint.txt").is_file()
        assert (out / "loss_seed0.csv").is_file()
        assert (out / "manifest.json").is_file()

    def test_manifest_echoes_every_resolved_default(self, tmp_path):
        out = run_train(tmp_path)
        manifest = json.loads((out / "manifest.json").read_text())
        resolved = manifest["resolved"]
        assert resolved["redundancy_weight"] == "0.005"
        assert resolved["instance_weight"] == "1.0"
        assert resolved["class_weight"] == "0.5"
        assert resolved["temperature"] == "0.07"
        assert resolved["learning_rate"] == "0.0001"
        assert resolved["prototypes"] == "3"  # resolved from dataset classes
        assert manifest["results"]["best_seed"] == 0

    def test_idempotent_byte_identical_outputs(self, tmp_path):
        out1 = run_train(tmp_path, out_name="r1")
        out2 = run_train(tmp_path, out_name="r2")
        t1, t2 = read_bytes_tree(out1), read_bytes_tree(out2)
        assert t1.keys() == t2.keys()
        for k in t1:
            if k == "manifest.json":  # differs only in the output path itself
                m1 = json.loads(t1[k]); m2 = json.loads(t2[k])
                m1["resolved"].pop("out"); m2["resolved"].pop("out")
                assert m1 == m2
            else:
                assert t1[k] == t2[k], k

    def test_rerun_from_manifest_reproduces_run(self, tmp_path):
        out = run_train(tmp_path)
        manifest = str(out / "manifest.json")
        redo = tmp_path / "redo"
        code = main(["train", "--config", manifest, "--out", str(redo)])
        assert code == 0
        a, b = read_bytes_tree(out), read_bytes_tree(redo)
        for k in ("checkpoint.txt", "loss_seed0.csv"):
            assert a[k] == b[k]

    def test_toggle_flag_disables_class_term(self, tmp_path):
        out = run_train(tmp_path, extra=("--toggle", "no-class"))
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["resolved"]["class_level"] == "false"
        assert manifest["resolved"]["asymmetric"] == "true"
        hist = (out / "loss_seed0.csv").read_text().splitlines()
        assert all(line.rsplit(",", 1)[1] == "0.0" for line in hist[1:])

    def test_unknown_config_key_names_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("epochs = 2\nnот_a_key = 5\n")
        assert main(["train", "--config", str(cfg)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_two_data_sources_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(TINY_TRAIN + "\ndata = somewhere\n")
        assert main(["train", "--config", str(cfg)]) == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_blowup_exits_4(self, tmp_path, capsys):
        # a runaway learning rate through a deep stack overflows float64,
        # which must surface as a numeric failure naming the parameter
        cfg = tmp_path / "blow.cfg"
        cfg.write_text(
            "synth.classes = 3\nsynth.per_class = 8\nsynth.views = 5,4\n"
            "synth.seed = 1\nembed_dim = 4\nencoder_hidden = 6,6,6,6,6\n"
            "epochs = 3\nbatch_size = 8\nseeds = 0\nlearning_rate = 1e18\n"
            f"class_level = false\nout = {tmp_path / 'run'}\n")
        assert main(["train", "--config", str(cfg)]) == 4
        assert "non-finite gradient" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One tiny trained run plus its dataset, shared by eval/embed tests."""
    tmp_path = tmp_path_factory.mktemp("cli_eval")
    ds_dir = str(tmp_path / "ds")
    assert main(["synth", "--classes", "3", "--per-class", "20",
                 "--views", "5,4", "--noise", "0.15", "--seed", "2",
                 "--out", ds_dir]) == 0
    cfg = tmp_path / "train.cfg"
    cfg.write_text(f"data = {ds_dir}\nembed_dim = 4\nencoder_hidden = 8\n"
                   f"epochs = 10\nbatch_size = 20\nseeds = 0\n"
                   f"learning_rate = 0.001\nout = {tmp_path / 'run'}\n")
    assert main(["train", "--config", str(cfg)]) == 0
    return tmp_path, ds_dir, str(tmp_path / "run" / "checkpoint.txt")


class TestEvalCommand:
    def test_reports_written_and_deterministic(self, trained, tmp_path):
        base, ds_dir, ckpt = trained
        out1, out2 = str(tmp_path / "e1"), str(tmp_path / "e2")
        for out in (out1, out2):
            code = main(["eval", "--checkpoint", ckpt, "--data", ds_dir,
                         "--out", out, "--probe"])
            assert code == 0
        assert read_bytes_tree(out1) == read_bytes_tree(out2)
        header, row = (open(os.path.join(out1, "clustering_report.csv"))
                       .read().splitlines())
        assert header == "acc,nmi,ari,inertia"
        acc = float(row.split(",")[0])
        assert 0.0 <= acc <= 1.0
        probe_file = os.path.join(out1, "classification_report.csv")
        assert os.path.isfile(probe_file)
        assert os.path.isfile(os.path.join(out1,
                                           "classification_per_class.csv"))

    def test_missing_labels_is_explicit_data_error(self, trained, tmp_path,
                                                   capsys):
        base, ds_dir, ckpt = trained
        bare = tmp_path / "unlabeled"
        ds = load_dataset(ds_dir)
        ds.labels = None
        from mvfuse import save_dataset
        save_dataset(ds, str(bare))
        code = main(["eval", "--checkpoint", ckpt, "--data", str(bare),
                     "--out", str(tmp_path / "e")])
        assert code == 3
        assert "no ground truth" in capsys.readouterr().err

    def test_checkpoint_dataset_mismatch_rejected(self, trained, tmp_path):
        base, ds_dir, ckpt = trained
        other = str(tmp_path / "other")
        assert main(["synth", "--classes", "2", "--per-class", "5",
                     "--views", "6,4", "--out", other]) == 0
        code = main(["eval", "--checkpoint", ckpt, "--data", other,
                     "--out", str(tmp_path / "e")])
        assert code == 2


class TestEmbedCommand:
    def test_row_count_matches_dataset(self, trained, tmp_path):
        base, ds_dir, ckpt = trained
        out = str(tmp_path / "emb")
        code = main(["embed", "--checkpoint", ckpt, "--data", ds_dir,
                     "--out", out])
        assert code == 0
        z = read_matrix(os.path.join(out, "embedding_z.csv"))
        assert z.shape == (60, 4)

    def test_pca_projection_written_and_consistent(self, trained, tmp_path):
        base, ds_dir, ckpt = trained
        out = str(tmp_path / "emb2")
        code = main(["embed", "--checkpoint", ckpt, "--data", ds_dir,
                     "--out", out, "--pca2d"])
        assert code == 0
        z = read_matrix(os.path.join(out, "embedding_z.csv"))
        p2 = read_matrix(os.path.join(out, "embedding_z_pca2.csv"))
        assert p2.shape == (60, 2)
        np.testing.assert_allclose(p2, pca_top2(z), atol=1e-12)

    def test_views_flag_adds_one_file_per_view(self, trained, tmp_path):
        base, ds_dir, ckpt = trained
        out = str(tmp_path / "emb3")
        code = main(["embed", "--checkpoint", ckpt, "--data", ds_dir,
                     "--out", out, "--views"])
        assert code == 0
        assert os.path.isfile(os.path.join(out, "embedding_h0.csv"))
        assert os.path.isfile(os.path.join(out, "embedding_h1.csv"))


class TestGridCommand:
    def test_emits_six_runnable_rows(self, tmp_path):
        cfg = tmp_path / "base.cfg"
        cfg.write_text(TINY_TRAIN + f"out = {tmp_path / 'ignored'}\n")
        out = str(tmp_path / "grid")
        assert main(["grid", "--config", str(cfg), "--out", out]) == 0
        files = sorted(os.listdir(out))
        assert len(files) == 6
        combos = set()
        from mvfuse.cli import read_config
        for f in files:
            row = read_config(os.path.join(out, f))
            combos.add((row["instance_level"], row["class_level"],
                        row["asymmetric"]))
        assert len(combos) == 6
        # first row is the full configuration
        full = read_config(os.path.join(out, "row1_ins+cls+asym.cfg"))
        assert (full["instance_level"], full["class_level"],
                full["asymmetric"]) == ("true", "true", "true")
        # a grid row trains as-is
        assert main(["train", "--config",
                     os.path.join(out, "row3_ins+asym.cfg")]) == 0
        assert (tmp_path / "grid" / "row3_ins+asym" / "manifest.json").is_file()
