import hashlib
import struct

import numpy as np
import pytest
import yaml

from gradleak.cli import main
from gradleak.config import build_config, dump_config, load_config
from gradleak.data import (DatasetSpec, FolderSpec, load_dataset,
                           load_image_folder, stack_dataset, synth_dataset)
from gradleak.defenses import DefenseSpec
from gradleak.io import (load_image, load_tensor, save_image, save_tensor,
                         side_by_side)
from gradleak.transforms import Policy


# ---------------------------------------------------------------------------
# raw tensor files

def test_tensor_round_trip_identity(tmp_path):
    arr = np.random.default_rng(0).normal(size=(3, 4, 5)).astype(np.float32)
    p = tmp_path / "t.atsr"
    save_tensor(arr, p)
    back = load_tensor(p)
    assert back.dtype == np.float32
    assert np.array_equal(back, arr)


def test_tensor_file_layout():
    # header: 4 magic + 2 version + 2 rank + 4 per extent, then f32 payload
    import io as stdio
    import tempfile

    with tempfile.NamedTemporaryFile(suffix=".atsr") as fh:
        save_tensor(np.float32(1.5), fh.name)
        blob = open(fh.name, "rb").read()
    assert blob[:4] == b"ATSR"
    version, rank = struct.unpack_from("<HH", blob, 4)
    assert (version, rank) == (1, 0)
    assert len(blob) == 8 + 4
    assert struct.unpack_from("<f", blob, 8)[0] == 1.5


def test_tensor_extents_little_endian(tmp_path):
    p = tmp_path / "t.atsr"
    save_tensor(np.zeros((2, 259), dtype=np.float32), p)
    blob = p.read_bytes()
    assert struct.unpack_from("<II", blob, 8) == (2, 259)
    assert len(blob) == 8 + 8 + 4 * 2 * 259


def test_tensor_bad_magic(tmp_path):
    p = tmp_path / "t.atsr"
    save_tensor(np.zeros(3), p)
    blob = bytearray(p.read_bytes())
    blob[:4] = b"NOPE"
    p.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="bad magic"):
        load_tensor(p)


def test_tensor_truncated_payload(tmp_path):
    p = tmp_path / "t.atsr"
    save_tensor(np.zeros(8), p)
    blob = p.read_bytes()
    p.write_bytes(blob[:-5])
    with pytest.raises(ValueError, match="truncated payload"):
        load_tensor(p)


def test_tensor_extent_overflow(tmp_path):
    p = tmp_path / "t.atsr"
    p.write_bytes(b"ATSR" + struct.pack("<HH", 1, 2)
                  + struct.pack("<II", 70_000, 70_000))
    with pytest.raises(ValueError, match="overflow"):
        load_tensor(p)


def test_tensor_round_trip_is_f32_exact(tmp_path):
    # float64 inputs survive exactly after one f32 cast
    arr = np.random.default_rng(1).normal(size=100)
    p = tmp_path / "t.atsr"
    save_tensor(arr, p)
    assert np.array_equal(load_tensor(p), arr.astype(np.float32))


# ---------------------------------------------------------------------------
# PNG images

def test_png_round_trip_of_quantized_tensor(tmp_path):
    rng = np.random.default_rng(2)
    arr = np.round(rng.uniform(size=(3, 6, 7)) * 255) / 255.0
    p = tmp_path / "x.png"
    save_image(arr, p)
    back = load_image(p)
    assert back.shape == (3, 6, 7)
    assert np.allclose(back, arr, atol=1e-12)


def test_png_pure_black(tmp_path):
    p = tmp_path / "b.png"
    save_image(np.zeros((1, 4, 4)), p)
    assert not load_image(p).any()


def test_png_quantization_levels(tmp_path):
    arr = np.array([[[0.0, 85 / 255], [170 / 255, 1.0]]])
    p = tmp_path / "q.png"
    save_image(arr, p)
    back = load_image(p)
    expect = np.array([[[0.0, 1 / 3], [2 / 3, 1.0]]])
    assert np.abs(back - expect).max() <= 1 / 255


def test_png_save_clamps_out_of_range(tmp_path):
    p = tmp_path / "c.png"
    save_image(np.array([[[-0.4, 1.7]]]), p)
    assert np.array_equal(load_image(p), [[[0.0, 1.0]]])


def test_png_rejects_unsupported_mode(tmp_path):
    from PIL import Image

    p = tmp_path / "rgba.png"
    Image.new("RGBA", (2, 2)).save(p)
    with pytest.raises(ValueError, match="unsupported colour type"):
        load_image(p)


def test_png_golden_bytes(tmp_path):
    # the PNG encoder must stay byte-deterministic for report reproducibility
    grad = np.linspace(0, 1, 16).reshape(1, 4, 4)
    p = tmp_path / "g.png"
    save_image(grad, p)
    digest = hashlib.sha256(p.read_bytes()).hexdigest()
    save_image(grad, tmp_path / "g2.png")
    assert hashlib.sha256((tmp_path / "g2.png").read_bytes()).hexdigest() \
        == digest


def test_side_by_side_layout():
    a = np.zeros((1, 3, 2))
    b = np.ones((1, 3, 2))
    panel = side_by_side([a, b], gap=1)
    assert panel.shape == (1, 3, 5)
    assert np.array_equal(panel[:, :, 2], np.ones((1, 3)))
    with pytest.raises(ValueError, match="share one shape"):
        side_by_side([a, np.ones((1, 2, 2))])


# ---------------------------------------------------------------------------
# datasets

def test_synth_dataset_counts_and_determinism():
    spec = DatasetSpec(classes=3, per_class=5, shape=(1, 4, 4), seed=9)
    a = synth_dataset(spec)
    b = synth_dataset(spec)
    assert len(a) == 15
    for k in range(3):
        assert sum(1 for _, y in a if y == k) == 5
    for (xa, ya), (xb, yb) in zip(a, b):
        assert ya == yb and np.array_equal(xa, xb)
    assert all(0 <= x.min() and x.max() <= 1 for x, _ in a)


def test_synth_dataset_is_learnable():
    from gradleak import models as M
    from gradleak.federated import TrainConfig, run_training

    data = synth_dataset(DatasetSpec(classes=4, per_class=16,
                                     shape=(1, 8, 8), seed=0))
    cfg = M.ModelConfig(arch="mlp", input_shape=(1, 8, 8), classes=4,
                        hidden=(16,), seed=0)
    tc = TrainConfig(participants=2, epochs=6, batch_size=8, lr=0.3, seed=0)
    _, accs, _ = run_training(cfg, data, data, tc)
    assert accs[-1] >= 0.9


def test_image_folder_round_trip(tmp_path):
    data = synth_dataset(DatasetSpec(classes=2, per_class=3, shape=(1, 4, 4),
                                     seed=3))
    for i, (x, y) in enumerate(data):
        d = tmp_path / f"class{y}"
        d.mkdir(exist_ok=True)
        save_image(x, d / f"{i:03d}.png")
    back = load_image_folder(tmp_path)
    assert len(back) == 6
    assert [y for _, y in back] == [0, 0, 0, 1, 1, 1]
    assert all(x.shape == (1, 4, 4) for x, _ in back)
    assert load_dataset(FolderSpec(folder=str(tmp_path)))[0][1] == 0
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValueError, match="no class directories"):
        load_image_folder(tmp_path / "empty")
    (tmp_path / "empty" / "class0").mkdir()
    with pytest.raises(ValueError, match="no PNG files"):
        load_image_folder(tmp_path / "empty")


def test_stack_dataset():
    data = synth_dataset(DatasetSpec(classes=2, per_class=2, shape=(1, 4, 4)))
    xs, ys = stack_dataset(data)
    assert xs.shape == (4, 1, 4, 4)
    assert ys.tolist() == [0, 0, 1, 1]


# ---------------------------------------------------------------------------
# experiment config

BASE_DOC = {
    "seed": 7,
    "model": {"arch": "mlp", "input_shape": [1, 4, 4], "classes": 2,
              "hidden": [8]},
    "dataset": {"classes": 2, "per_class": 8, "shape": [1, 4, 4]},
    "attack": {"optimizer": "adam", "iterations": 30, "restarts": 1,
               "lr": 0.1},
    "search": {"c_max": 10, "n": 2, "k": 1, "t_acc": -1e9, "pri_samples": 2,
               "pri_k": 2, "acc_batch": 2, "acc_rounds": 1},
    "train": {"participants": 2, "epochs": 1, "batch_size": 4},
}


def test_config_builds_sections_with_root_seed():
    cfg = build_config(BASE_DOC)
    assert cfg.seed == 7
    assert cfg.model.input_shape == (1, 4, 4)
    assert cfg.model.seed == 7
    assert cfg.dataset.seed == 7
    assert cfg.attack.seed == 7 and cfg.attack.iterations == 30
    assert cfg.search.seed == 7
    assert cfg.train.seed == 7
    assert cfg.defense is None


def test_config_requires_root_seed():
    doc = {k: v for k, v in BASE_DOC.items() if k != "seed"}
    with pytest.raises(ValueError, match="root 'seed'"):
        build_config(doc)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="top-level key 'colour'"):
        build_config({**BASE_DOC, "colour": 1})
    bad = {**BASE_DOC, "attack": {**BASE_DOC["attack"], "steps": 5}}
    with pytest.raises(ValueError, match="unknown key 'steps'"):
        build_config(bad)
    bad = {**BASE_DOC, "defense": {"kind": "prune", "rate": 0.5}}
    with pytest.raises(ValueError, match="unknown key 'rate'"):
        build_config(bad)


def test_config_defense_variants():
    cfg = build_config({**BASE_DOC,
                        "defense": {"kind": "prune", "ratio": 0.9}})
    assert isinstance(cfg.defense, DefenseSpec)
    assert cfg.train.defense is cfg.defense

    cfg = build_config({**BASE_DOC, "defense": {"policy": "3-1-7"}})
    assert isinstance(cfg.defense, Policy)
    assert cfg.defense.indices == (3, 1, 7)

    cfg = build_config({**BASE_DOC,
                        "defense": {"policies": ["3-1-7", "43-18-18"]}})
    assert [p.indices for p in cfg.defense] == [(3, 1, 7), (43, 18, 18)]

    with pytest.raises(ValueError, match="'kind', 'policy'"):
        build_config({**BASE_DOC, "defense": {"mode": "prune"}})


def test_config_folder_dataset():
    cfg = build_config({**BASE_DOC, "dataset": {"folder": "imgs"}})
    assert cfg.dataset == FolderSpec(folder="imgs")
    with pytest.raises(ValueError, match="only 'folder'"):
        build_config({**BASE_DOC, "dataset": {"folder": "x", "classes": 2}})


def test_config_seed_override_rebuilds_sections():
    cfg = build_config(BASE_DOC).with_seed(11)
    assert cfg.seed == 11 and cfg.train.seed == 11
    explicit = {**BASE_DOC, "train": {**BASE_DOC["train"], "seed": 3}}
    cfg2 = build_config(explicit).with_seed(11)
    assert cfg2.train.seed == 3  # explicit section seeds survive overrides


def test_config_round_trip_through_yaml(tmp_path):
    p = tmp_path / "e.yaml"
    p.write_text(yaml.safe_dump(BASE_DOC))
    cfg = load_config(p)
    snap = tmp_path / "snap.yaml"
    snap.write_text(dump_config(cfg))
    again = load_config(snap)
    assert again == cfg


# ---------------------------------------------------------------------------
# the CLI itself

@pytest.fixture()
def cli_env(tmp_path, monkeypatch):
    monkeypatch.setenv("GRADLEAK_REPORT_ROOT", str(tmp_path / "reports"))
    cfg = tmp_path / "config.yaml"
    cfg.write_text(yaml.safe_dump(BASE_DOC))
    return cfg, tmp_path / "reports"


def test_cli_transform_echoes_resolved_ops(cli_env, capsys):
    cfg, reports = cli_env
    assert main(["transform", "--config", str(cfg), "--policy", "3-1-7"]) == 0
    msg = capsys.readouterr().out
    assert "[translateX/9, contrast/6, translateY/2]" in msg
    out = reports / "transform-seed7"
    for f in ("config.yaml", "original.png", "transformed.png",
              "side_by_side.png", "transform.csv"):
        assert (out / f).exists()
    rows = (out / "transform.csv").read_text().splitlines()
    assert rows[0] == "step,op,magnitude"
    assert rows[1] == "0,translateX,9"


def test_cli_attack_reports_psnr_cap_for_target_init(cli_env, capsys):
    cfg_path, reports = cli_env
    doc = {**BASE_DOC,
           "attack": {"optimizer": "sgd", "iterations": 2, "restarts": 1,
                      "lr": 0.0001, "init": "from_image"}}
    cfg_path.write_text(yaml.safe_dump(doc))
    assert main(["attack", "--config", str(cfg_path)]) == 0
    out = reports / "attack-seed7"
    head, first = (out / "attack.csv").read_text().splitlines()[:2]
    assert head == "iteration,objective,psnr"
    assert first.split(",")[0] == "0"
    assert float(first.split(",")[2]) == 100.0
    assert "iteration 0 psnr 100.0" in capsys.readouterr().out
    for f in ("original.png", "transformed.png", "reconstructed.png",
              "side_by_side.png", "summary.csv", "captured-gradient.atsr"):
        assert (out / f).exists()


def test_cli_csv_outputs_are_byte_deterministic(cli_env):
    cfg, reports = cli_env
    out = reports / "attack-seed7"

    def run():
        assert main(["attack", "--config", str(cfg), "--policy", "1"]) == 0
        return {f.name: f.read_bytes() for f in sorted(out.iterdir())}

    assert run() == run()


def test_cli_seed_override_changes_report_dir(cli_env):
    cfg, reports = cli_env
    assert main(["transform", "--config", str(cfg), "--policy", "0",
                 "--seed", "9"]) == 0
    out = reports / "transform-seed9"
    assert out.exists()
    assert yaml.safe_load((out / "config.yaml").read_text())["seed"] == 9


def test_cli_train_writes_logs(cli_env, capsys):
    cfg, reports = cli_env
    assert main(["train", "--config", str(cfg)]) == 0
    out = reports / "train-seed7"
    rows = (out / "train.csv").read_text().splitlines()
    assert rows[0] == "round,epoch,lr,train_loss,update_norm,eval_accuracy"
    assert len(rows) > 1
    assert (out / "accuracy.csv").exists()
    assert (out / "params.atsr").exists()
    assert "final eval accuracy" in capsys.readouterr().out


def test_cli_search_and_score_policy(cli_env, capsys):
    cfg, reports = cli_env
    assert main(["search", "--config", str(cfg)]) == 0
    out = reports / "search-seed7"
    ranked = (out / "ranked.csv").read_text().splitlines()
    assert ranked[0] == "rank,policy,s_pri,s_acc"
    assert len(ranked) == 3  # n = 2
    policies = (out / "policies.csv").read_text().splitlines()
    assert policies[0] == "draw,policy,s_acc,s_pri,accepted"
    assert (out / "hybrid.csv").exists()
    capsys.readouterr()

    notation = ranked[1].split(",")[1]
    assert main(["score-policy", "--config", str(cfg),
                 "--policy", notation]) == 0
    msg = capsys.readouterr().out
    assert "s_pri" in msg and "s_acc" in msg
    score = (reports / "score-policy-seed7" / "score.csv")
    assert score.read_text().splitlines()[0] == "policy,s_pri,s_acc"


def test_cli_baseline_grid(cli_env):
    cfg_path, reports = cli_env
    doc = {**BASE_DOC,
           "attack": {"optimizer": "adam", "iterations": 10, "restarts": 1,
                      "lr": 0.1}}
    cfg_path.write_text(yaml.safe_dump(doc))
    assert main(["baseline", "--config", str(cfg_path),
                 "--ratios", "0.9", "--scales", "0.01"]) == 0
    rows = (reports / "baseline-seed7" / "baseline.csv").read_text() \
        .splitlines()
    assert rows[0] == "defense,parameter,mse,psnr,final_distance"
    kinds = [r.split(",")[0] for r in rows[1:]]
    assert kinds == ["none", "prune", "gaussian", "laplacian"]


def test_cli_correlate_emits_rows_and_r(cli_env, capsys):
    cfg_path, reports = cli_env
    doc = {**BASE_DOC,
           "attack": {"optimizer": "adam", "iterations": 15, "restarts": 1,
                      "lr": 0.1}}
    cfg_path.write_text(yaml.safe_dump(doc))
    assert main(["correlate", "--config", str(cfg_path),
                 "--policies", "4"]) == 0
    out = reports / "correlate-seed7"
    rows = (out / "correlate.csv").read_text().splitlines()
    assert rows[0] == "policy,s_pri,psnr"
    assert len(rows) == 5
    pe = (out / "pearson.csv").read_text().splitlines()
    assert pe[0] == "n,pearson_r"
    assert pe[1].split(",")[0] == "4"
    assert "pearson r" in capsys.readouterr().out


def test_cli_errors_are_single_line(cli_env, capsys):
    cfg, _ = cli_env
    code = main(["transform", "--config", str(cfg), "--policy", "99-3"])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ")
    assert err.count("\n") == 1

    code = main(["attack", "--config", "/nonexistent.yaml"])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ") and err.count("\n") == 1


def test_cli_rejects_bad_config_keys(cli_env, capsys, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({**BASE_DOC, "extra_section": {}}))
    assert main(["train", "--config", str(bad)]) == 2
    assert "extra_section" in capsys.readouterr().err
