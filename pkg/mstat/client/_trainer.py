import json, logging, time

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mstat.model import MstatModel
from mstat.objectives import multi_head_loss
from mstat.optim import Sgd
from mstat.data import TrainSampler, BatchLoader
from mstat.tensor import save_tensors
from mstat.client._checkpoint import save_checkpoint, load_checkpoint, epoch_dir
from mstat.util.methods import make_rngs, rng_state, set_rng_state
from mstat.util.exceptions import DataContractError

logger = logging.getLogger(__name__)

@dataclass
class TrainResult:
    model: MstatModel
    epochs: int
    steps: int
    checkpoint: Path
    aap_summary: dict

class Trainer:
    """
    Owns one training run: model, optimizer, random streams and the epoch loop

    :param client: supplies the config and the event handler
    :param manifest: dataset, its train split is used
    :param store: frame source

    :type client: Client
    :type manifest: DatasetManifest
    :type store: TrackletStore
    """
    def __init__(self, client, manifest, store):
        self.client = client
        self.config = config = client.config
        self.store = store

        self.rngs = make_rngs(config.seed)
        self.sampler = TrainSampler(manifest.require("train"), config.frames_train, config.ids_per_batch, config.frame_sampling)

        self.model = MstatModel(config.model_config(), len(self.sampler.ids), self.rngs["init"])
        self.optimizer = Sgd(self.model.parameters(), lr = config.lr0, momentum = config.momentum,
            weight_decay = config.weight_decay, nesterov = config.nesterov, max_grad_norm = config.grad_clip_norm)

        self.schedule = config.schedule()
        self.loss_config = config.loss_config()
        self.augment = config.pixel_augment()

        self.epoch = 0
        self.step = 0

    # private methods

    def _state(self):
        return {
            "epoch"         : self.epoch,
            "step"          : self.step,
            "num_classes"   : self.model.num_classes,
            "label_map"     : {str(identity): label for identity, label in self.sampler.label_map.items()},
            "rng"           : rng_state(self.rngs)
        }

    def _save(self, directory):
        path = save_checkpoint(directory, self.model, self.optimizer, self._state(), self.config)
        self.client.handler.resolve("checkpoint", {"epoch": self.epoch, "path": str(path)})

        return path

    def _export_aap(self):
        if self.model.aap is None:
            return {}

        similarity = self.model.aap_similarity()
        off = similarity[~np.eye(len(similarity), dtype = bool)]

        summary = {
            "proxies"           : int(len(similarity)),
            "max_offdiagonal"   : float(off.max()) if off.size else 0.0,
            "mean_offdiagonal"  : float(np.abs(off).mean()) if off.size else 0.0
        }

        report_dir = Path(self.config.report_dir)
        save_tensors(report_dir / "aap_similarity.mstn", {"cosine": similarity})

        with open(report_dir / "aap_similarity.json", "w") as stream:
            json.dump(summary, stream, indent = 4, sort_keys = True)

        return summary

    # public methods

    def restore(self, directory):
        """
        Continue from a checkpoint, every stream picks up where it stopped
        """
        checkpoint = load_checkpoint(directory)
        labels = {str(identity): label for identity, label in self.sampler.label_map.items()}

        if checkpoint.state["label_map"] != labels:
            raise DataContractError(f"checkpoint {directory} was trained on different identities")

        self.model.load_state_dict(checkpoint.params)
        self.optimizer.load_state_dict(checkpoint.optim)
        set_rng_state(self.rngs, checkpoint.state["rng"])

        self.epoch = checkpoint.state["epoch"]
        self.step = checkpoint.state["step"]

        logger.info(f"resumed from {directory} at epoch {self.epoch}, step {self.step}")
        return self

    def train_epoch(self):
        self.epoch += 1
        self.optimizer.lr = lr = self.schedule(self.epoch)

        loader = BatchLoader(self.sampler, self.store, self.rngs["sampler"], self.rngs["pixels"],
            augment = self.augment, queue_size = self.config.loader_queue_size)

        started = time.monotonic()
        totals = []

        for clips, labels in loader.epoch():
            outs = self.model.forward(clips, train = True, rng = self.rngs["shuffle"])
            report = multi_head_loss(outs, labels, self.loss_config)

            self.optimizer.zero_grad()
            report.total.backward()
            grad_norm = self.optimizer.step()

            self.step += 1
            totals.append(report.total.item())

            self.client.handler.resolve("step", {"step": self.step, "epoch": self.epoch, "lr": lr, "grad_norm": grad_norm, **report.record()})

        self.client.handler.resolve("epoch", {
            "epoch"         : self.epoch,
            "lr"            : lr,
            "steps"         : len(totals),
            "mean_total"    : float(np.mean(totals)) if totals else 0.0,
            "wall_seconds"  : time.monotonic() - started
        })

    def run(self, resume = None):
        """
        Train up to ``config.epochs``, checkpointing after every epoch and once more as ``final``.
        With zero epochs only the initial checkpoint is written

        :param resume: checkpoint directory to continue from
        :type resume: str or Path

        :rtype: TrainResult
        """
        root = Path(self.config.checkpoint_dir)

        if resume:
            self.restore(resume)
        else:
            (Path(self.config.report_dir) / "train_log.jsonl").unlink(missing_ok = True)

        if self.config.epochs == 0:
            path = self._save(epoch_dir(root, 0))
            return TrainResult(self.model, 0, 0, path, {})

        while self.epoch < self.config.epochs:
            self.train_epoch()
            self._save(epoch_dir(root, self.epoch))

        path = self._save(root / "final")
        summary = self._export_aap()

        return TrainResult(self.model, self.epoch, self.step, path, summary)
