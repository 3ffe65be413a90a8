from mstat.client._client import Client
from mstat.client._config import RunConfig, load_config, parse_assignment
from mstat.client._handler import Handler, Event
from mstat.client._checkpoint import Checkpoint, save_checkpoint, load_checkpoint, epoch_dir
from mstat.client._trainer import Trainer, TrainResult
from mstat.client._evaluator import Evaluator, model_from_checkpoint, extract_outputs
from mstat.client._gradcheck import GradcheckResult, run_gradcheck, suites, tiny_model_config
