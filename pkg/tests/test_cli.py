import json

import pytest

import numpy as np

import mstat.tensor._ops as ops

from mstat import __version__
from mstat.cli import main, build_parser, resolve_config, configure_logging
from mstat.client import Client

@pytest.fixture
def dirs(tmp_path):
    return ["--report-dir", str(tmp_path / "reports"), "--checkpoint-dir", str(tmp_path / "checkpoints")]

def test_version(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.strip() == __version__

def test_help_lists_commands(capsys):
    assert main([]) == 0
    out = capsys.readouterr().out

    for name in ("train", "eval", "bench-attn", "gradcheck", "augment-demo", "synth-data"):
        assert name in out

def test_unknown_command_is_a_usage_error():
    assert main(["fly"]) == 1

def test_bad_flag_is_a_usage_error():
    assert main(["train", "--epochs", "many"]) == 1

def test_bad_config_value_is_a_usage_error(dirs):
    assert main(["bench-attn", "--desk", "--set", "protocol=nearby"] + dirs) == 1

def test_missing_dataset_exits_with_data_error(tmp_path, dirs):
    assert main(["train", "--desk", "--manifest", str(tmp_path / "absent.jsonl")] + dirs) == 2

def test_config_layers(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"epochs": 3, "seed": 5, "protocol": "all"}))

    args = build_parser().parse_args(["train", "--desk", "--config", str(path), "--set", "seed=6", "--set", "lr0=0.5", "--epochs", "9"])
    config = resolve_config(args)

    assert (config.patch_px, config.epochs, config.seed, config.lr0, config.protocol) == (8, 9, 6, 0.5, "all")

def test_eval_flags(tmp_path):
    args = build_parser().parse_args(["eval", str(tmp_path), "--protocol", "self", "--stages", "I,II"])
    config = resolve_config(args)

    assert config.protocol == "self"
    assert config.masks() == ["I", "II"]

def test_augment_demo(capsys, dirs):
    assert main(["augment-demo", "--desk", "--probability", "0"] + dirs) == 0
    draw = json.loads(capsys.readouterr().out)

    assert draw["identity"]
    assert not draw["fired"]
    assert np.array(draw["index"]).shape == (4, 8)

def test_augment_demo_is_deterministic(capsys, dirs):
    outputs = []

    for _ in range(2):
        assert main(["augment-demo", "--desk", "--probability", "1", "--positions", "3", "--seed", "2"] + dirs) == 0
        outputs.append(capsys.readouterr().out)

    assert outputs[0] == outputs[1]
    assert len(json.loads(outputs[0])["positions"]) == 3

def test_bench_desk(capsys, tmp_path, dirs):
    assert main(["bench-attn", "--desk", "--no-measure"] + dirs) == 0

    lines = capsys.readouterr().out.splitlines()
    assert lines[1].split()[:7] == ["4", "8", "192", "16", str(2 * 32 ** 2 * 192), str(2 * 8 * 16 * 192 + 2 * 4 * 64 * 192), str(2 * 32 * 16 * 192)]
    assert (tmp_path / "reports" / "bench.json").exists()

def test_gradcheck_failure_exits_with_verification_code(monkeypatch, capsys, dirs):
    monkeypatch.setattr(ops, "_softmax_backward", lambda out, grad, axis: -out * (grad - np.sum(grad * out, axis = axis, keepdims = True)))

    assert main(["gradcheck", "--scope", "attention", "--samples", "2"] + dirs) == 3
    assert "FAIL attention/" in capsys.readouterr().out

def test_gradcheck_pass(capsys, dirs):
    assert main(["gradcheck", "--scope", "objectives", "--samples", "2"] + dirs) == 0
    assert "FAIL" not in capsys.readouterr().out

def test_synth_train_eval(tmp_path, capsys, dirs):
    data = tmp_path / "data"
    tiny = ["--set", "frame_height_px=4", "--set", "frame_width_px=4", "--set", "patch_px=2", "--set", "heads=2",
        "--set", "depth_stage1=1", "--set", "depth_stage2=1", "--set", "depth_stage3=1", "--set", "aap_proxies=2",
        "--set", "asta_proxies=2", "--set", "iap_prototypes=3", "--set", "tps_positions=1", "--set", "frames_train=2",
        "--set", "frames_test=2", "--set", "ids_per_batch=2", "--set", "crop_padding_px=1"]

    assert main(["synth-data", "--out", str(data), "--train-ids", "4", "--test-ids", "2", "--frames", "4"] + tiny + dirs) == 0
    manifest = str(data / "manifest.jsonl")

    assert main(["train", "--manifest", manifest, "--epochs", "1"] + tiny + dirs) == 0
    assert main(["eval", str(tmp_path / "checkpoints" / "final"), "--manifest", manifest, "--stages", "II,I+II+III"] + tiny + dirs) == 0

    out = capsys.readouterr().out.splitlines()

    assert out[-2].startswith("II ")
    assert out[-1].startswith("I+II+III")
    assert "mAP" in out[-1]

def test_custom_commands_are_dispatched(capsys):
    calls = []

    @Client(None).command(name = "ping")
    def ping(client, args):
        calls.append(args.command)

    try:
        parser = build_parser()
        args = parser.parse_args(["help"])
        args.command = "ping"

        Client().resolve_command(args)
        assert calls == ["ping"]
    finally:
        Client.commands.pop("ping")

def test_log_level_from_environment(monkeypatch):
    monkeypatch.setenv("MSTAT_LOG_LEVEL", "debug")
    assert configure_logging() == 10

    monkeypatch.setenv("MSTAT_LOG_LEVEL", "chatty")
    assert configure_logging() == 20
