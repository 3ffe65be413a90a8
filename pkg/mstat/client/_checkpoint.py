import json, logging

from dataclasses import dataclass
from pathlib import Path

from mstat.tensor import save_tensors, load_tensors
from mstat.util.exceptions import DataContractError

logger = logging.getLogger(__name__)

files = ("params.mstn", "optim.mstn", "state.json", "config.json")

@dataclass
class Checkpoint:
    """
    ``state`` holds epoch, step, num_classes, label_map (identity -> class index) and rng states
    """
    path: Path
    params: dict
    optim: dict
    state: dict
    config: dict

def epoch_dir(root, epoch):
    return Path(root) / f"epoch_{epoch:04d}"

def save_checkpoint(directory, model, optimizer, state, config):
    """
    Write one checkpoint directory

    :param directory: destination, created if missing
    :param model: parameters to store
    :param optimizer: momentum buffers to store
    :param state: json-serializable run state
    :param config: effective run config

    :type directory: str or Path
    :type model: MstatModel
    :type optimizer: Sgd
    :type state: dict
    :type config: RunConfig

    :rtype: Path
    """
    directory = Path(directory)
    directory.mkdir(parents = True, exist_ok = True)

    save_tensors(directory / "params.mstn", model.state_dict())
    save_tensors(directory / "optim.mstn", optimizer.state_dict())

    with open(directory / "state.json", "w") as stream:
        json.dump(state, stream, indent = 4, sort_keys = True)

    config.save(directory / "config.json")

    return directory

def load_checkpoint(directory):
    """
    :type directory: str or Path
    :rtype: Checkpoint
    """
    directory = Path(directory)
    missing = [name for name in files if not (directory / name).exists()]

    if missing:
        raise DataContractError(f"checkpoint {directory} lacks {', '.join(missing)}")

    with open(directory / "state.json") as stream:
        state = json.load(stream)

    with open(directory / "config.json") as stream:
        config = json.load(stream)

    return Checkpoint(directory, load_tensors(directory / "params.mstn"), load_tensors(directory / "optim.mstn"), state, config)
