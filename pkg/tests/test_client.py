import json

import pytest

import numpy as np

from mstat.client import (
    Client, RunConfig, Handler, load_config, parse_assignment, load_checkpoint, epoch_dir, model_from_checkpoint, extract_outputs
)
from mstat.tensor import load_tensors
from mstat.util.exceptions import ConfigError, DataContractError

# config

def test_defaults_are_full_scale():
    cfg = RunConfig().model_config()

    assert (cfg.tokens_per_frame, cfg.dim, cfg.head_count) == (98, 768, 12)
    assert cfg.iap_prototypes == 64

def test_desk_preset():
    config = RunConfig.desk()

    assert config.model_config().dim == 192
    assert config.ids_per_batch == 8
    assert RunConfig.desk(epochs = 3).epochs == 3

def test_override():
    config = RunConfig().override(epochs = 5, lr0 = 1)

    assert config.epochs == 5
    assert config.lr0 == 1.0
    assert isinstance(config.lr0, float)

def test_unknown_key():
    with pytest.raises(ConfigError, match = "unknown config keys: epoch"):
        RunConfig().override(epoch = 5)

@pytest.mark.parametrize("changes", [
    {"epochs": "many"},
    {"epochs": -1},
    {"aap_stage1": 1},
    {"protocol": "same"},
    {"stage_masks": "I,IV"},
    {"frame_sampling": "random"},
    {"smoothing_variant": "label"},
    {"lr0": 0.0},
    {"grad_clip_norm": -1.0},
    {"cache_tracklets": -1}
])
def test_invalid_values(changes):
    with pytest.raises(ConfigError):
        RunConfig().override(**changes)

def test_load_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"epochs": 7, "protocol": "self"}))

    config = load_config(path, RunConfig.desk())

    assert config.epochs == 7
    assert config.protocol == "self"
    assert config.patch_px == 8

@pytest.mark.parametrize("text", ["[1, 2]", "{not json"])
def test_load_config_rejects(text, tmp_path):
    path = tmp_path / "run.json"
    path.write_text(text)

    with pytest.raises(ConfigError):
        load_config(path)

def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match = "does not exist"):
        load_config(tmp_path / "absent.json")

@pytest.mark.parametrize("text, pair", [
    ("epochs=3", ("epochs", 3)),
    ("lr0=0.01", ("lr0", 0.01)),
    ("aap_stage1=false", ("aap_stage1", False)),
    ("protocol=self", ("protocol", "self")),
    ("stage_masks=I,I+II", ("stage_masks", "I,I+II"))
])
def test_parse_assignment(text, pair):
    assert parse_assignment(text) == pair

def test_parse_assignment_needs_equals():
    with pytest.raises(ConfigError):
        parse_assignment("epochs")

def test_masks_are_canonical():
    assert RunConfig(stage_masks = "III+I, ii").masks() == ["I+III", "II"]

def test_save_and_reload(tmp_path):
    config = RunConfig.desk(seed = 4)
    config.save(tmp_path / "config.json")

    assert load_config(tmp_path / "config.json") == config

def test_every_key_is_documented():
    assert all(doc for _, _, doc in RunConfig.describe())

# events

def test_event_decorator(make_config):
    client = Client(make_config())
    seen = []

    @client.event(name = "on_eval")
    def report(data):
        seen.append(data["mAP"])

    client.handler.resolve("eval", {"stages": "I", "rank1": 1.0, "mAP": 0.5})
    assert seen == [0.5]

def test_unknown_events_reach_the_default_hook(make_config):
    client = Client(make_config())
    seen = []

    @client.event()
    def on_default(args):
        seen.append(args)

    client.handler.resolve("custom", {"value": 1})
    assert seen == [({"value": 1},)]

def test_step_records_are_appended(make_config, tmp_path):
    handler = Handler(Client(make_config()))

    handler.resolve("step", {"step": 1, "total": 2.5})
    handler.resolve("step", {"step": 2, "total": np.float32(1.5)})

    lines = (tmp_path / "reports" / "train_log.jsonl").read_text().splitlines()
    assert [json.loads(line)["total"] for line in lines] == [2.5, 1.5]

def test_command_decorator(make_config):
    client = Client(make_config())

    @client.command(name = "noop")
    def noop(client, args):
        """
        Does nothing
        """
        return "done"

    try:
        assert "noop" in Client.commands
        assert Client.commands["noop"].help.strip() == "Does nothing"
    finally:
        Client.commands.pop("noop")

def test_missing_manifest_path(make_config):
    with pytest.raises(ConfigError, match = "manifest_path"):
        Client(make_config()).train()

# training and evaluation

def test_zero_epochs_writes_the_initial_checkpoint(make_config, tiny_dataset, tmp_path):
    result = Client(make_config(epochs = 0)).train(manifest = tiny_dataset.manifest, store = tiny_dataset.store())

    assert result.epochs == 0
    assert result.checkpoint == epoch_dir(tmp_path / "checkpoints", 0)
    assert sorted(path.name for path in result.checkpoint.iterdir()) == ["config.json", "optim.mstn", "params.mstn", "state.json"]

def _train(config, dataset):
    return Client(config).train(manifest = dataset.manifest, store = dataset.store())

def test_training_run(make_config, tiny_dataset, tmp_path):
    epochs = []
    client = Client(make_config(epochs = 2))

    @client.event()
    def on_epoch(data):
        epochs.append(data)

    result = client.train(manifest = tiny_dataset.manifest, store = tiny_dataset.store())

    assert (result.epochs, result.steps) == (2, 4)
    assert [data["epoch"] for data in epochs] == [1, 2]
    assert all(np.isfinite(data["mean_total"]) for data in epochs)

    root = tmp_path / "checkpoints"
    assert {path.name for path in root.iterdir()} == {"epoch_0001", "epoch_0002", "final"}

    log = (tmp_path / "reports" / "train_log.jsonl").read_text().splitlines()
    assert [json.loads(line)["step"] for line in log] == [1, 2, 3, 4]

    state = load_checkpoint(root / "final").state
    assert (state["epoch"], state["step"], state["num_classes"]) == (2, 4, 4)

    summary = json.loads((tmp_path / "reports" / "aap_similarity.json").read_text())
    assert summary["proxies"] == 2
    assert result.aap_summary == summary

def test_clipped_training_survives_a_large_learning_rate(make_config, tiny_dataset, tmp_path):
    _train(make_config(epochs = 3, lr0 = 0.3, grad_clip_norm = 1.0), tiny_dataset)

    log = [json.loads(line) for line in (tmp_path / "reports" / "train_log.jsonl").read_text().splitlines()]

    assert len(log) == 6

    for entry in log:
        assert all(np.isfinite(entry[key]) for key in ("total", "loss_attr", "loss_stage2", "loss_stage3", "grad_norm"))

def test_training_is_deterministic(make_config, tiny_dataset, tmp_path):
    first = _train(make_config(checkpoint_dir = str(tmp_path / "a")), tiny_dataset)
    second = _train(make_config(checkpoint_dir = str(tmp_path / "b")), tiny_dataset)

    for name, value in first.model.state_dict().items():
        np.testing.assert_array_equal(value, second.model.state_dict()[name])

def test_resume_matches_an_uninterrupted_run(make_config, tiny_dataset, tmp_path):
    straight = _train(make_config(epochs = 2, checkpoint_dir = str(tmp_path / "straight")), tiny_dataset)

    _train(make_config(epochs = 1, checkpoint_dir = str(tmp_path / "split")), tiny_dataset)
    resumed = Client(make_config(epochs = 2, checkpoint_dir = str(tmp_path / "split"))).train(
        resume = tmp_path / "split" / "epoch_0001", manifest = tiny_dataset.manifest, store = tiny_dataset.store()
    )

    assert resumed.steps == straight.steps

    for name, value in straight.model.state_dict().items():
        np.testing.assert_array_equal(value, resumed.model.state_dict()[name])

def test_resume_on_other_identities(make_config, tiny_dataset, tmp_path):
    _train(make_config(epochs = 0), tiny_dataset)

    state = json.loads((tmp_path / "checkpoints" / "epoch_0000" / "state.json").read_text())
    state["label_map"] = {"100": 0}
    (tmp_path / "checkpoints" / "epoch_0000" / "state.json").write_text(json.dumps(state))

    with pytest.raises(DataContractError, match = "different identities"):
        Client(make_config(epochs = 1)).train(resume = tmp_path / "checkpoints" / "epoch_0000",
            manifest = tiny_dataset.manifest, store = tiny_dataset.store())

def test_incomplete_checkpoint(tmp_path):
    (tmp_path / "ckpt").mkdir()

    with pytest.raises(DataContractError, match = "lacks"):
        load_checkpoint(tmp_path / "ckpt")

@pytest.fixture
def trained(make_config, tiny_dataset):
    config = make_config(stage_masks = "I,II,III,I+II+III")
    result = _train(config, tiny_dataset)

    return config, result.checkpoint

def test_model_from_checkpoint(trained):
    config, checkpoint = trained
    model, stored = model_from_checkpoint(checkpoint)

    assert stored == config
    assert model.num_classes == 4

def test_evaluation(trained, tiny_dataset, tmp_path):
    config, checkpoint = trained
    seen = []

    client = Client(config)
    client.event(name = "on_eval")(seen.append)

    reports = client.evaluate(checkpoint, tiny_dataset.manifest, tiny_dataset.store(), export_attention = 2, export_features = True)

    assert [report.stages for report in reports] == ["I", "II", "III", "I+II+III"]
    assert [data["stages"] for data in seen] == ["I", "II", "III", "I+II+III"]

    for report in reports:
        assert (report.num_query, report.num_gallery, report.num_answerable) == (4, 4, 4)
        assert 0.0 < report.mAP <= 1.0
        assert report.cmc[-1] == 1.0

    saved = json.loads((tmp_path / "reports" / "eval_report.json").read_text())
    assert [report["stages"] for report in saved["reports"]] == ["I", "II", "III", "I+II+III"]

    features = load_tensors(tmp_path / "reports" / "features.mstn")
    assert features["query"].shape == (4, 2 * 12 + 12 + 12)
    np.testing.assert_allclose(np.linalg.norm(features["query"], axis = 1), 1.0, rtol = 1e-6)

    sidecar = json.loads((tmp_path / "reports" / "attention" / "clip_001.json").read_text())
    maps = load_tensors(tmp_path / "reports" / "attention" / "clip_001.mstn")

    assert sidecar["clip_index"] == 1
    assert [item["module_id"] for item in sidecar["maps"]] == list(maps)
    assert {item["module_id"]: item["axes"][-1] for item in sidecar["maps"]}["stage2.iap"] == "prototype"

def test_evaluation_is_deterministic(trained, tiny_dataset):
    config, checkpoint = trained

    first = Client(config.override(eval_batch_clips = 1)).evaluate(checkpoint, tiny_dataset.manifest, tiny_dataset.store())
    second = Client(config.override(eval_workers = 2, eval_batch_clips = 1)).evaluate(checkpoint, tiny_dataset.manifest, tiny_dataset.store())

    assert [report.record() for report in first] == [report.record() for report in second]

def test_self_protocol(trained, tiny_dataset):
    config, checkpoint = trained
    reports = Client(config.override(protocol = "self", stage_masks = "II")).evaluate(checkpoint, tiny_dataset.manifest, tiny_dataset.store())

    assert (reports[0].num_query, reports[0].num_gallery) == (4, 4)
    assert reports[0].protocol == "self"

def test_extract_outputs_without_attribute_branch(make_config, tiny_dataset):
    result = _train(make_config(epochs = 0, aap_stage1 = False, stage_masks = "II+III"), tiny_dataset)
    store = tiny_dataset.store()
    records = tiny_dataset.manifest.require("query")

    outs = extract_outputs(result.model, store, records, [np.arange(2)] * len(records), batch_clips = 3)

    assert outs.attr_rep is None
    assert outs.c2.shape == (4, 12)

# auxiliary workflows

def test_augment_demo(make_config):
    client = Client(make_config(tps_probability = 1.0, tps_positions = 2))
    draw = client.augment_demo(seed = 9)

    assert draw.fired
    assert len(draw.positions) == 2
    assert draw.index.shape == (2, 4)
    assert client.augment_demo(seed = 9).index.tolist() == draw.index.tolist()
    assert client.augment_demo(probability = 0.0).is_identity()

def test_bench_writes_a_report(make_config, tmp_path):
    reports = Client(make_config()).bench()

    assert reports[0].tokens == 4
    assert json.loads((tmp_path / "reports" / "bench.json").read_text())[0]["macs_joint"] == reports[0].macs_joint

def test_synth_data_defaults_to_the_manifest_directory(make_config, tmp_path):
    client = Client(make_config(manifest_path = str(tmp_path / "data" / "manifest.jsonl")))
    path = client.synth_data()

    assert path == tmp_path / "data" / "manifest.jsonl"
    assert len(Client(client.config)._dataset(None, None)[0]) > 0
