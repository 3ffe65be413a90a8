import json, logging

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from mstat.model import MstatModel, StageOutputs, inference_representation
from mstat.retrieval import evaluate
from mstat.data import sample_test_clip
from mstat.tensor import AttentionRecorder, no_grad, save_tensors
from mstat.client._checkpoint import load_checkpoint
from mstat.client._config import RunConfig
from mstat.util.methods import make_rngs, chunked_generator
from mstat.util.exceptions import DataContractError

logger = logging.getLogger(__name__)

_axes = {
    "temporal"  : ["batch", "position", "head", "query_frame", "key_frame"],
    "spatial"   : ["batch", "frame", "head", "query_token", "key_token"],
    "pre_aap"   : ["batch", "frame", "head", "proxy", "token"],
    "post_aap"  : ["batch", "frame", "head", "proxy", "token"],
    "aap"       : ["batch", "head", "proxy", "token"],
    "iap"       : ["batch", "head", "token", "prototype"]
}

def model_from_checkpoint(directory):
    """
    Rebuild the network stored in a checkpoint directory, shaped by the config stored next to it

    :param directory: checkpoint directory

    :returns: model and the config it was built from
    :rtype: tuple<MstatModel, RunConfig>
    """
    checkpoint = load_checkpoint(directory)
    stored = RunConfig().override(**checkpoint.config)

    if "num_classes" not in checkpoint.state:
        raise DataContractError(f"checkpoint {directory} does not record its class count")

    model = MstatModel(stored.model_config(), checkpoint.state["num_classes"], np.random.default_rng(0))
    model.load_state_dict(checkpoint.params)

    return model, stored

def extract_outputs(model, store, records, plans, batch_clips = 8, workers = 1):
    """
    Eval-mode stage outputs of every record, no tape is built

    :param model: network
    :param store: frame source
    :param records: tracklets, in output order
    :param plans: frame indices per record
    :param batch_clips: clips per forward pass
    :param workers: threads running forward passes

    :returns: stacked per-stage arrays
    :rtype: StageOutputs
    """
    def run(chunk):
        with no_grad():
            outs = model.forward(np.stack([store.frames(record, indices) for record, indices in chunk]))

        attr = outs.attr_rep.data.copy() if outs.attr_rep is not None else None
        return attr, outs.c2.data.copy(), outs.c3.data.copy()

    chunks = list(chunked_generator(list(zip(records, plans)), batch_clips))

    if workers > 1:
        with ThreadPoolExecutor(max_workers = workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(chunk) for chunk in chunks]

    attr = np.concatenate([part[0] for part in parts]) if parts and parts[0][0] is not None else None

    return StageOutputs(attr, np.concatenate([part[1] for part in parts]), np.concatenate([part[2] for part in parts]))

class Evaluator:
    """
    Ranks the gallery split against the query split for each stage mask of the client config

    :param client: supplies the config and the event handler
    :param manifest: dataset
    :param store: frame source

    :type client: Client
    :type manifest: DatasetManifest
    :type store: TrackletStore
    """
    def __init__(self, client, manifest, store):
        self.client = client
        self.config = client.config
        self.manifest = manifest
        self.store = store

    def _export_attention(self, model, records, plans, count, report_dir):
        directory = report_dir / "attention"

        for index, (record, indices) in enumerate(zip(records[:count], plans[:count])):
            with no_grad(), AttentionRecorder() as recorder:
                model.forward(self.store.frames(record, indices)[None])

            maps = {module_id: weights for module_id, weights in recorder.maps}
            save_tensors(directory / f"clip_{index:03d}.mstn", maps)

            sidecar = {
                "clip_index"    : index,
                "path"          : record.path,
                "id"            : record.id,
                "camera"        : record.camera,
                "frames"        : [int(i) for i in indices],
                "maps"          : [
                    {"module_id": module_id, "shape": list(weights.shape), "axes": _axes.get(module_id.rsplit(".", 1)[-1])}
                    for module_id, weights in maps.items()
                ]
            }

            with open(directory / f"clip_{index:03d}.json", "w") as stream:
                json.dump(sidecar, stream, indent = 4, sort_keys = True)

        logger.info(f"exported attention maps of {min(count, len(records))} query clips to {directory}")

    def run(self, checkpoint, export_attention = 0, export_features = False):
        """
        :param checkpoint: checkpoint directory
        :param export_attention: dump the attention maps of this many query clips
        :param export_features: dump query and gallery representations with their labels

        :type checkpoint: str or Path
        :type export_attention: int
        :type export_features: bool

        :returns: one report per stage mask
        :rtype: list<EvalReport>
        """
        config = self.config
        model, stored = model_from_checkpoint(checkpoint)
        frames_test = stored.frames_test

        rng = make_rngs(config.seed)["eval"]
        queries = self.manifest.require("query")
        gallery = queries if config.protocol == "self" else self.manifest.require("gallery")

        query_plans = [sample_test_clip(record.frames, frames_test, rng) for record in queries]
        query_outs = extract_outputs(model, self.store, queries, query_plans, config.eval_batch_clips, config.eval_workers)

        if config.protocol == "self":
            gallery_outs = query_outs
        else:
            gallery_plans = [sample_test_clip(record.frames, frames_test, rng) for record in gallery]
            gallery_outs = extract_outputs(model, self.store, gallery, gallery_plans, config.eval_batch_clips, config.eval_workers)

        labels = {
            "query_ids"     : np.array([record.id for record in queries]),
            "query_cams"    : np.array([record.camera for record in queries]),
            "gallery_ids"   : np.array([record.id for record in gallery]),
            "gallery_cams"  : np.array([record.camera for record in gallery])
        }

        reports = []

        for mask in config.masks():
            report = evaluate(
                inference_representation(query_outs, mask), inference_representation(gallery_outs, mask),
                labels["query_ids"], labels["gallery_ids"], labels["query_cams"], labels["gallery_cams"],
                protocol = config.protocol, stages = mask
            )

            reports.append(report)
            self.client.handler.resolve("eval", report.record())

        report_dir = Path(config.report_dir)
        report_dir.mkdir(parents = True, exist_ok = True)

        with open(report_dir / "eval_report.json", "w") as stream:
            json.dump({
                "checkpoint"    : str(checkpoint),
                "config"        : config.to_dict(),
                "reports"       : [report.record(include_cmc = True) for report in reports]
            }, stream, indent = 4, sort_keys = True)

        if export_features:
            mask = config.masks()[-1]
            save_tensors(report_dir / "features.mstn", {
                "query"     : inference_representation(query_outs, mask),
                "gallery"   : inference_representation(gallery_outs, mask),
                **labels
            })

        if export_attention:
            self._export_attention(model, queries, query_plans, export_attention, report_dir)

        return reports
