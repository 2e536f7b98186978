import json
import math

import pytest
import torch

from pun import constants, training, util
from pun.cli import main
from pun.container import Checkpoint, load_dataset, read_eval, read_report, sample_name
from pun.denoiser import DenoiserArch, init_params

from .constants import (
    TINY_ACCEL,
    TINY_ACS,
    TINY_CHANNELS,
    TINY_COILS,
    TINY_D,
    TINY_FLAGS,
    TINY_LAYERS,
    TINY_SAMPLES,
    TINY_SIZE,
)


__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


def simulate(out, *flags):
    argv = [
        "simulate", "--out", str(out), "--num", str(TINY_SAMPLES), "--size", str(TINY_SIZE),
        "--coils", str(TINY_COILS), "--accel", str(TINY_ACCEL), "--acs", str(TINY_ACS),
        "--seed", "11",
    ]
    return main(argv + list(flags))


@pytest.fixture
def data_dir(tmp_path):
    assert simulate(tmp_path / "data") == constants.EXIT_OK
    return tmp_path / "data"


def run_train(data, out, *flags):
    argv = ["train", "--data", str(data), "--out", str(out), "--batch-size", "2"]
    return main(argv + TINY_FLAGS + list(flags))


@pytest.fixture
def dense_ckpt(tmp_path, data_dir):
    out = tmp_path / "dense"
    assert run_train(data_dir, out, "--epochs", "1") == constants.EXIT_OK
    return out


def tree_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def test_simulate_writes_samples(data_dir):
    names = sorted(p.name for p in data_dir.iterdir())
    assert names == sorted([constants.MANIFEST_NAME] + [sample_name(i) for i in range(4)])
    cfg, records = load_dataset(data_dir)
    assert cfg.num_samples == len(records) == TINY_SAMPLES
    assert [r.seed for r in records] == [11, 12, 13, 14]


def test_simulate_is_byte_reproducible(tmp_path, data_dir):
    assert simulate(tmp_path / "again", "--serial") == constants.EXIT_OK
    assert tree_bytes(tmp_path / "again") == tree_bytes(data_dir)


def test_simulate_shifted_family_is_labelled(tmp_path):
    assert simulate(tmp_path / "shifted", "--family", "shifted") == constants.EXIT_OK
    manifest = json.loads((tmp_path / "shifted" / constants.MANIFEST_NAME).read_text())
    assert manifest["family"]["note"] == constants.SHIFTED_FAMILY_NOTE
    assert manifest["config"]["family"] == "shifted"


def test_train_zero_epochs_saves_initial_weights(tmp_path, data_dir):
    out = tmp_path / "init"
    assert run_train(data_dir, out, "--epochs", "0", "--seed", "4") == constants.EXIT_OK
    checkpoint = Checkpoint.load(out)
    arch = DenoiserArch(num_layers=TINY_LAYERS, hidden_channels=TINY_CHANNELS)
    expected = init_params(arch, util.derive_seed(4, "init"))
    assert torch.equal(checkpoint.params.flat, expected.flat)
    assert checkpoint.manifest["mode"] == "dense"
    assert checkpoint.manifest["d"] == TINY_D
    assert read_report(out / constants.REPORT_NAME) == []
    assert (out / constants.TIMING_NAME).is_file()


def test_train_report_has_a_row_per_epoch(dense_ckpt):
    rows = read_report(dense_ckpt / constants.REPORT_NAME)
    assert [row["epoch"] for row in rows] == ["0"]
    assert rows[0]["nonzero"] == str(TINY_D)


def test_train_pun_wt(tmp_path, data_dir):
    out = tmp_path / "wt"
    code = run_train(data_dir, out, "--mode", "pun-wt", "--sparsity", "0.05", "--epochs", "3")
    assert code == constants.EXIT_OK
    checkpoint = Checkpoint.load(out)
    budget = util.round_half_up(0.05 * TINY_D)
    assert checkpoint.mask.count() == budget
    assert checkpoint.manifest["nonzero"] == budget
    assert checkpoint.manifest["prune"]["sparsity"] == 0.05


def test_train_is_deterministic(tmp_path, data_dir):
    first, second = tmp_path / "one", tmp_path / "two"
    assert run_train(data_dir, first, "--epochs", "1", "--serial") == constants.EXIT_OK
    assert run_train(data_dir, second, "--epochs", "1", "--serial") == constants.EXIT_OK
    for name in (Checkpoint.PARAMS, constants.MANIFEST_NAME, constants.REPORT_NAME):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def run_prune_init(data, out, *flags):
    argv = ["prune-init", "--data", str(data), "--out", str(out), "--batch-size", "2"]
    return main(argv + TINY_FLAGS + ["--sparsity", "0.03"] + list(flags))


def test_prune_init(tmp_path, data_dir):
    out = tmp_path / "it"
    assert run_prune_init(data_dir, out, "--mask-epochs", "1", "--train-epochs", "1") == 0
    checkpoint = Checkpoint.load(out)
    budget = util.round_half_up(0.03 * TINY_D)
    assert checkpoint.mask.count() == budget
    probabilities = checkpoint.probabilities
    kept = probabilities[checkpoint.mask.to_tensor() != 0]
    dropped = probabilities[checkpoint.mask.to_tensor() == 0]
    assert float(kept.min()) >= float(dropped.max())
    assert len(checkpoint.manifest["history"]) == 1
    assert checkpoint.manifest["optimizer"]["epochs"] == 1
    timing = json.loads((out / constants.TIMING_NAME).read_text())
    assert {"mask_optimization", "training", "total"} <= set(timing)


def test_prune_init_without_mask_epochs(tmp_path, data_dir):
    out = tmp_path / "it0"
    assert run_prune_init(data_dir, out, "--mask-epochs", "0", "--epochs", "0") == 0
    budget = util.round_half_up(0.03 * TINY_D)
    assert Checkpoint.load(out).mask.indices().tolist() == list(range(budget))


def test_prune_after(tmp_path, data_dir, dense_ckpt):
    out = tmp_path / "at"
    argv = [
        "prune-after", "--ckpt", str(dense_ckpt), "--data", str(data_dir), "--out", str(out),
        "--sparsity", "0.05", "--rounds", "2", "--retrain-epochs", "1",
    ]
    assert main(argv) == constants.EXIT_OK
    checkpoint = Checkpoint.load(out)
    assert checkpoint.mask.count() == util.round_half_up(0.05 * TINY_D)
    assert checkpoint.manifest["mode"] == "pun-at"
    assert len(read_report(out / constants.REPORT_NAME)) == 2

    again = ["prune-after", "--ckpt", str(out), "--data", str(data_dir), "--out", str(tmp_path)]
    assert main(again) == constants.EXIT_FAILURE


def test_eval_checkpoint(tmp_path, data_dir, dense_ckpt):
    csv, images = tmp_path / "dense.csv", tmp_path / "images"
    argv = [
        "eval", "--ckpt", str(dense_ckpt), "--data", str(data_dir), "--csv", str(csv),
        "--dump-images", str(images),
    ]
    assert main(argv) == constants.EXIT_OK
    rows = read_eval(csv)
    assert [row.sample_id for row in rows] == list(range(TINY_SAMPLES))
    assert {row.method for row in rows} == {"dense"}
    assert all(row.accel == TINY_ACCEL for row in rows)
    assert (images / "dense_00000.pgm").read_bytes().startswith(b"P5\n8 8\n255\n")
    assert (images / "reference_00003.pgm").is_file()

    first = csv.read_bytes()
    assert main(argv) == constants.EXIT_OK
    assert csv.read_bytes() == first


def test_eval_zero_filled_under_shift(tmp_path, data_dir):
    csv = tmp_path / "zf.csv"
    argv = [
        "eval", "--method", "zero-filled", "--data", str(data_dir), "--csv", str(csv),
        "--accel", "4", "--noise-sigma", "0.05",
    ]
    assert main(argv) == constants.EXIT_OK
    rows = read_eval(csv)
    assert len(rows) == TINY_SAMPLES
    assert {(row.method, row.accel, row.sigma) for row in rows} == {("zero-filled", 4.0, 0.05)}


def test_eval_needs_checkpoint(tmp_path, data_dir):
    argv = ["eval", "--data", str(data_dir), "--csv", str(tmp_path / "x.csv")]
    assert main(argv) == constants.EXIT_FAILURE


def test_report(tmp_path, data_dir, dense_ckpt):
    dense_csv, zf_csv = tmp_path / "dense.csv", tmp_path / "zf.csv"
    common = ["--data", str(data_dir)]
    assert main(["eval", "--ckpt", str(dense_ckpt), "--csv", str(dense_csv)] + common) == 0
    assert main(["eval", "--method", "zero-filled", "--csv", str(zf_csv)] + common) == 0
    summary = tmp_path / "summary.csv"
    assert main(["report", "--csv", str(dense_csv), str(zf_csv), "--out", str(summary)]) == 0
    lines = summary.read_text().splitlines()
    assert lines[0].startswith("# psnr_convention=")
    assert [line.split(",")[0] for line in lines[2:]] == ["dense", "zero-filled"]
    assert all(line.split(",")[4] == str(TINY_SAMPLES) for line in lines[2:])


def test_missing_data_is_a_failure(tmp_path):
    assert run_train(tmp_path / "absent", tmp_path / "out") == constants.EXIT_FAILURE


def test_bad_flag_is_a_usage_error(capsys):
    assert main(["train", "--no-such-flag"]) == constants.EXIT_USAGE
    assert main([]) == constants.EXIT_USAGE
    capsys.readouterr()


def test_config_file_with_flags_winning(tmp_path, data_dir):
    config = tmp_path / "train.json"
    out = tmp_path / "configured"
    values = {"data": str(data_dir), "out": str(out), "epochs": 0, "batch_size": 2}
    config.write_text(json.dumps(values))
    assert main(["train", "--config", str(config), "--epochs", "1"] + TINY_FLAGS) == 0
    assert len(read_report(out / constants.REPORT_NAME)) == 1
    assert Checkpoint.load(out).manifest["optimizer"]["batch_size"] == 2


def test_config_file_rejects_unknown_keys(tmp_path, capsys):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"no_such_key": 1}))
    argv = ["simulate", "--config", str(config), "--out", str(tmp_path / "x")]
    assert main(argv) == constants.EXIT_USAGE
    capsys.readouterr()


def test_train_without_unrolls(tmp_path, data_dir):
    out = tmp_path / "adjoint"
    assert run_train(data_dir, out, "--epochs", "1", "--unrolls", "0") == constants.EXIT_OK
    checkpoint = Checkpoint.load(out)
    assert checkpoint.unroll.num_unrolls == 0
    # the loss does not depend on the weights, so Adam never moves them
    expected = init_params(checkpoint.arch, util.derive_seed(constants.BASE_SEED, "init"))
    assert torch.equal(checkpoint.params.flat, expected.flat)


@pytest.fixture
def saved_progress(monkeypatch):
    """The `progress` manifest entry of every checkpoint written, in order."""
    seen = []
    save = Checkpoint.save

    def recording(self, directory):
        seen.append(self.manifest.get("progress"))
        return save(self, directory)

    monkeypatch.setattr(Checkpoint, "save", recording)
    return seen


def test_train_writes_periodic_checkpoints(tmp_path, data_dir, saved_progress):
    out = tmp_path / "periodic"
    assert run_train(data_dir, out, "--epochs", "4", "--checkpoint-every", "2") == 0
    assert saved_progress == [
        {"epochs": 2, "state": "partial"},
        {"epochs": 4, "state": "partial"},
        None,
    ]
    assert "progress" not in Checkpoint.load(out).manifest


def test_prune_after_checkpoints_count_every_round(
    tmp_path, data_dir, dense_ckpt, saved_progress
):
    argv = [
        "prune-after", "--ckpt", str(dense_ckpt), "--data", str(data_dir),
        "--out", str(tmp_path / "at"), "--sparsity", "0.05", "--rounds", "2",
        "--retrain-epochs", "1", "--checkpoint-every", "1",
    ]
    assert main(argv) == constants.EXIT_OK
    assert [entry and entry["epochs"] for entry in saved_progress] == [1, 2, None]


def test_negative_checkpoint_interval_fails(tmp_path, data_dir):
    code = run_train(data_dir, tmp_path / "x", "--epochs", "1", "--checkpoint-every", "-1")
    assert code == constants.EXIT_FAILURE


def test_non_finite_loss_keeps_last_good_checkpoint(tmp_path, data_dir, monkeypatch):
    reference = tmp_path / "one-epoch"
    assert run_train(data_dir, reference, "--epochs", "1", "--serial") == constants.EXIT_OK

    real = training.loss_and_grad
    calls = []

    def poisoned(batch, params, mask, cfg):
        calls.append(len(batch))
        loss, grad = real(batch, params, mask, cfg)
        # two batches per epoch: the second epoch blows up
        return (math.nan if len(calls) > 2 else loss), grad

    monkeypatch.setattr(training, "loss_and_grad", poisoned)
    out = tmp_path / "aborted"
    assert run_train(data_dir, out, "--epochs", "3", "--serial") == constants.EXIT_FAILURE
    checkpoint = Checkpoint.load(out)
    assert checkpoint.manifest["progress"] == {"epochs": 1, "state": "aborted"}
    assert torch.equal(checkpoint.params.flat, Checkpoint.load(reference).params.flat)
    assert not (out / constants.REPORT_NAME).exists()
