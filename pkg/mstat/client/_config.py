import json, threading

from dataclasses import dataclass, field, fields, asdict, replace
from pathlib import Path

from mstat.model import ModelConfig, parse_stages
from mstat.objectives import LossConfig
from mstat.optim import StepSchedule
from mstat.augment import PixelAugment
from mstat.data import frame_samplings
from mstat.retrieval import protocols
from mstat.util.methods import invalid_type, invalid_value
from mstat.util.exceptions import ConfigError

def _key(default, doc):
    return field(default = default, metadata = {"doc": doc})

@dataclass(frozen = True)
class RunConfig:
    """
    Every setting of a run, flat, with units in the key names.
    Defaults are the full-scale setting, ``RunConfig.desk()`` the small CPU one
    """
    # model
    frame_height_px: int = _key(224, "frame height in pixels")
    frame_width_px: int = _key(112, "frame width in pixels")
    patch_px: int = _key(16, "patch side P in pixels, d = 3 P^2")
    frames_train: int = _key(8, "frames per training clip (L)")
    frames_test: int = _key(32, "frames per test clip")
    heads: int = _key(0, "attention heads, 0 for max(1, d // 64)")
    depth_stage1: int = _key(8, "STA blocks in stage I")
    depth_stage2: int = _key(3, "STA blocks in stage II")
    depth_stage3: int = _key(3, "A-STA blocks in stage III")
    aap_stage1: bool = _key(True, "stage I attribute pooling branch")
    aap_proxies: int = _key(24, "stage I attribute proxies")
    asta_proxies: int = _key(16, "attribute proxies inside A-STA blocks")
    iap_prototypes: int = _key(64, "identity prototypes M")
    iap_stage2: bool = _key(True, "re-code the stage II class token through identity prototypes")
    iap_stage3: bool = _key(True, "re-code the stage III class token through identity prototypes")
    iap_length_scale: bool = _key(True, "scale token-normalized prototype logits by the token count")
    double_norm: str = _key("tokens-then-prototypes", "tokens-then-prototypes, prototypes-then-tokens or none")
    stage3_block: str = _key("a-sta", "a-sta or sta")
    block_mlp: bool = _key(False, "feed-forward sublayer inside every block")
    tps_probability: float = _key(0.2, "chance a training clip is patch shuffled")
    tps_positions: int = _key(5, "spatial positions shuffled per clip")

    # loss
    smoothing: float = _key(0.1, "label smoothing mass")
    smoothing_variant: str = _key("others", "others (spread over C - 1) or uniform (over C)")
    triplet_margin: float = _key(0.3, "batch-hard triplet margin")
    ce_weight: float = _key(1.0, "cross-entropy weight within a head")
    triplet_weight: float = _key(1.0, "triplet weight within a head")
    weight_attr: float = _key(1.0, "stage I attribute head weight")
    weight_stage2: float = _key(1.0, "stage II head weight")
    weight_stage3: float = _key(1.0, "stage III head weight")

    # optimizer
    lr0: float = _key(1e-3, "initial learning rate")
    decay_factor: float = _key(0.75, "learning rate multiplier per decay period")
    decay_period_epochs: int = _key(25, "epochs between learning rate decays")
    weight_decay: float = _key(5e-5, "L2 weight decay")
    momentum: float = _key(0.9, "momentum")
    nesterov: bool = _key(True, "Nesterov momentum")
    grad_clip_norm: float = _key(0.0, "global gradient norm bound, 0 disables clipping")

    # training
    epochs: int = _key(200, "training epochs")
    ids_per_batch: int = _key(12, "identities per batch, two clips each")
    frame_sampling: str = _key("chunked", "chunked or uniform training frame sampling")
    flip_probability: float = _key(0.5, "horizontal flip probability")
    crop_probability: float = _key(0.5, "padded random crop probability")
    crop_padding_px: int = _key(4, "random crop padding in pixels")
    erase_probability: float = _key(0.5, "random erasing probability")
    loader_queue_size: int = _key(2, "batches prepared ahead by the loader thread")
    cache_tracklets: int = _key(256, "tracklets loaded from disk kept in memory, 0 keeps every one")
    seed: int = _key(0, "root seed of every random stream")

    # evaluation
    protocol: str = _key("cross-camera", "cross-camera, self or all")
    stage_masks: str = _key("I+II+III", "comma separated stage masks, e.g. I,II,III,I+II+III")
    eval_batch_clips: int = _key(8, "clips per eval forward pass")
    eval_workers: int = _key(1, "threads extracting eval features")

    # paths
    manifest_path: str = _key("", "dataset manifest")
    checkpoint_dir: str = _key("checkpoints", "checkpoint directory")
    report_dir: str = _key("reports", "report and log directory")

    def __post_init__(self):
        for item in fields(self):
            value = getattr(self, item.name)
            expected = item.type

            if expected is float and isinstance(value, int) and not isinstance(value, bool):
                object.__setattr__(self, item.name, float(value))
                continue

            if not isinstance(value, expected) or (expected is int and isinstance(value, bool)):
                raise invalid_type(item.name, type(value).__name__, [expected.__name__])

        if self.lr0 <= 0:
            raise invalid_value("lr0", self.lr0, "must be > 0")

        if self.grad_clip_norm < 0:
            raise invalid_value("grad_clip_norm", self.grad_clip_norm, "must be >= 0")

        if self.cache_tracklets < 0:
            raise invalid_value("cache_tracklets", self.cache_tracklets, "must be >= 0")

        for name in ("epochs", "eval_batch_clips", "eval_workers", "loader_queue_size"):
            if getattr(self, name) < (0 if name == "epochs" else 1):
                raise invalid_value(name, getattr(self, name), "out of range")

        if self.protocol not in protocols:
            raise invalid_value("protocol", self.protocol, f"must be one of {', '.join(protocols)}")

        if self.frame_sampling not in frame_samplings:
            raise invalid_value("frame_sampling", self.frame_sampling, f"must be one of {', '.join(frame_samplings)}")

        # every derived config validates its own keys
        self.model_config()
        self.loss_config()
        self.schedule()
        self.pixel_augment()
        self.masks()

    # presets

    @classmethod
    def desk(cls, **overrides):
        """
        The desk model shape of ``ModelConfig.desk()`` with a larger learning rate, gradient clipping and smaller batches
        """
        settings = ModelConfig.desk().to_dict()
        settings["heads"] = settings["heads"] or 0

        settings.update({
            "lr0"               : 5e-3,
            "grad_clip_norm"    : 5.0,
            "ids_per_batch"     : 8,
            "crop_padding_px"   : 2
        })

        settings.update(overrides)
        return cls(**settings)

    # derived configs

    def model_config(self):
        return ModelConfig(
            frame_height_px = self.frame_height_px,
            frame_width_px = self.frame_width_px,
            patch_px = self.patch_px,
            frames_train = self.frames_train,
            frames_test = self.frames_test,
            heads = self.heads or None,
            depth_stage1 = self.depth_stage1,
            depth_stage2 = self.depth_stage2,
            depth_stage3 = self.depth_stage3,
            aap_stage1 = self.aap_stage1,
            aap_proxies = self.aap_proxies,
            asta_proxies = self.asta_proxies,
            iap_prototypes = self.iap_prototypes,
            iap_stage2 = self.iap_stage2,
            iap_stage3 = self.iap_stage3,
            iap_length_scale = self.iap_length_scale,
            double_norm = self.double_norm,
            stage3_block = self.stage3_block,
            block_mlp = self.block_mlp,
            tps_probability = self.tps_probability,
            tps_positions = self.tps_positions
        )

    def loss_config(self):
        return LossConfig(
            smoothing = self.smoothing,
            margin = self.triplet_margin,
            smoothing_variant = self.smoothing_variant,
            ce_weight = self.ce_weight,
            triplet_weight = self.triplet_weight,
            head_weights = {"attr": self.weight_attr, "stage2": self.weight_stage2, "stage3": self.weight_stage3}
        )

    def schedule(self):
        return StepSchedule(self.lr0, self.decay_factor, self.decay_period_epochs)

    def pixel_augment(self):
        return PixelAugment(
            flip_probability = self.flip_probability,
            crop_probability = self.crop_probability,
            crop_padding_px = self.crop_padding_px,
            erase_probability = self.erase_probability
        )

    def masks(self):
        masks = [mask.strip() for mask in self.stage_masks.split(",") if mask.strip()]

        if not masks:
            raise invalid_value("stage_masks", self.stage_masks, "names no stage mask")

        return ["+".join(parse_stages(mask)) for mask in masks]

    # serialization

    def to_dict(self):
        return asdict(self)

    def override(self, **changes):
        unknown = sorted(set(changes) - {item.name for item in fields(self)})

        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

        return replace(self, **changes)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents = True, exist_ok = True)

        _lock.acquire()

        try:
            with open(path, "w") as stream:
                json.dump(self.to_dict(), stream, indent = 4, sort_keys = True)
        finally:
            _lock.release()

    @classmethod
    def describe(cls):
        """
        :returns: (key, default, doc) of every setting
        :rtype: list<tuple>
        """
        return [(item.name, item.default, item.metadata.get("doc", "")) for item in fields(cls)]

_lock = threading.Lock()

def load_config(path, base = None):
    """
    Apply a json config file on top of ``base``

    :param path: flat json object
    :param base: starting point, full-scale defaults if None

    :type path: str or Path
    :type base: RunConfig

    :rtype: RunConfig
    """
    base = base if base is not None else RunConfig()

    try:
        with open(path) as stream:
            data = json.load(stream)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist")
    except json.JSONDecodeError as error:
        raise ConfigError(f"config file {path} is not valid json: {error.msg} (line {error.lineno})")

    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a flat json object")

    return base.override(**data)

def parse_assignment(text):
    """
    "key=value" -> (key, value). Values are read as json, bare words stay strings
    """
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")

    key, raw = text.split("=", 1)

    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw

    return key.strip(), value
