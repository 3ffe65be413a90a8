import logging, threading

from pathlib import Path

from mstat.util.methods import json_record

logger = logging.getLogger(__name__)

class Handler:
    """
    Dispatches run progress to the default hooks and to the events a user registered.
    Default hooks write machine-readable json lines into the client's report directory

    :param client: owning client
    :type client: Client
    """
    def __init__(self, client):
        self.client = client
        self.events = {}

        self.__log_lock = threading.Lock()

        self.matches = {
            "step"          : self._on_step,
            "epoch"         : self._on_epoch,
            "checkpoint"    : self._on_checkpoint,
            "eval"          : self._on_eval
        }

    def resolve(self, key, data):
        self.matches.get(key, self._default_match)(key, data)

    def get_ev(self, key):
        return self.events.get(key, self._default_event)

    def append_record(self, name, data):
        """
        Append one json line to ``name`` inside the report directory in a thread safe way
        """
        path = Path(self.client.config.report_dir) / name
        path.parent.mkdir(parents = True, exist_ok = True)

        self.__log_lock.acquire()

        try:
            with open(path, "a") as stream:
                stream.write(json_record(data) + "\n")
        finally:
            self.__log_lock.release()

    # hook defaults

    def _default_match(self, key, data):
        self.get_ev(f"on_{key}")(data)

    def _default_event(self, *args):
        exec = self.events.get("on_default")

        if exec:
            exec(args)

    # private hooks

    def _on_step(self, key, data):
        self.append_record("train_log.jsonl", data)
        self.get_ev("on_step")(data)

    def _on_epoch(self, key, data):
        logger.info(f"epoch {data['epoch']}: lr {data['lr']:.3g}, mean loss {data['mean_total']:.4f} over {data['steps']} steps")
        self.get_ev("on_epoch")(data)

    def _on_checkpoint(self, key, data):
        logger.info(f"checkpoint written to {data['path']}")
        self.get_ev("on_checkpoint")(data)

    def _on_eval(self, key, data):
        logger.info(f"eval {data['stages']}: rank-1 {data['rank1']:.4f}, mAP {data['mAP']:.4f}")
        self.get_ev("on_eval")(data)

    # public decorators

    def add(self, name = None):
        def _inner(method):
            _name = name if name else method.__name__
            self.events[_name] = Event(method, _name)

            return method

        return _inner

class Event:
    def __init__(self, method, name):
        self.method = method
        self.name = name
        self.help = self.method.__doc__

    def __call__(self, *data):
        self.method(*data)
        return self

"""
events allowed:
    on_step         -> (dict):  one optimizer step finished, the record written to train_log.jsonl
    on_epoch        -> (dict):  an epoch finished (epoch, lr, steps, mean_total, wall_seconds)
    on_checkpoint   -> (dict):  a checkpoint directory was written (epoch, path)
    on_eval         -> (dict):  an evaluation report for one stage mask is ready
    on_default      -> (tuple): an event fired that has no registered hook
"""
