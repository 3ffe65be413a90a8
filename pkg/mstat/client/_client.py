import json, logging

from pathlib import Path

import numpy as np

from mstat.client._config import RunConfig
from mstat.client._handler import Handler, Event
from mstat.client._trainer import Trainer
from mstat.client._evaluator import Evaluator
from mstat.client._gradcheck import run_gradcheck
from mstat.ext.commands import Command, Defaults
from mstat.augment import TpsConfig, tps_index_map
from mstat.bench import run_cost_report, cost_grid
from mstat.data import SynthSpec, TrackletStore, load_manifest, generate_synthetic_tracklets
from mstat.util.exceptions import ConfigError, VerificationFailure

logger = logging.getLogger(__name__)

class Client:
    """
    Runs every mstat workflow from one effective config.

    :param config: run settings, the full-scale defaults if None
    :type config: RunConfig
    """
    commands = {
        "help" : Defaults.help
    }

    def __init__(self, config = None):
        self.config = config if config is not None else RunConfig()
        self.handler = Handler(self)

    def __repr__(self):
        return f"Client(manifest = {self.config.manifest_path!r}, report_dir = {self.config.report_dir!r})"

    # private methods

    def _dataset(self, manifest, store):
        """
        Fall back to the configured manifest for whichever of ``manifest`` and ``store`` is missing
        """
        if manifest is None:
            if not self.config.manifest_path:
                raise ConfigError("no dataset given and manifest_path is not set")

            manifest = load_manifest(self.config.manifest_path)

        if store is None:
            store = TrackletStore(manifest, (self.config.frame_height_px, self.config.frame_width_px), self.config.cache_tracklets)

        return manifest, store

    def _write_report(self, name, data):
        path = Path(self.config.report_dir) / name
        path.parent.mkdir(parents = True, exist_ok = True)

        with open(path, "w") as stream:
            json.dump(data, stream, indent = 4, sort_keys = True)

        return path

    # public methods

    def train(self, resume = None, manifest = None, store = None):
        """
        Train on the train split, checkpointing every epoch

        :param resume: checkpoint directory to continue from
        :param manifest: dataset, loaded from ``config.manifest_path`` if None
        :param store: frame source, e.g. ``SynthDataset.store()`` for in-memory frames

        :type resume: str or Path
        :type manifest: DatasetManifest
        :type store: TrackletStore

        :rtype: TrainResult
        """
        manifest, store = self._dataset(manifest, store)
        return Trainer(self, manifest, store).run(resume)

    def evaluate(self, checkpoint, manifest = None, store = None, export_attention = 0, export_features = False):
        """
        Rank the gallery against the query split once per configured stage mask

        :param checkpoint: checkpoint directory
        :param manifest: dataset, loaded from ``config.manifest_path`` if None
        :param store: frame source
        :param export_attention: dump attention maps of this many query clips
        :param export_features: dump the representations with their labels

        :rtype: list<EvalReport>
        """
        manifest, store = self._dataset(manifest, store)
        return Evaluator(self, manifest, store).run(checkpoint, export_attention, export_features)

    def gradcheck(self, scopes = None, seeds = (0, 1, 2, 3, 4), samples = 8, strict = True):
        """
        Finite-difference suites of the differentiable modules, in 64-bit precision

        :param scopes: any of tensor, attention, sta, proxy, objectives, model; all if None
        :param strict: raise when any case fails

        :raises VerificationFailure: a case exceeded the tolerance and ``strict`` is set

        :rtype: list<GradcheckResult>
        """
        results = run_gradcheck(scopes, seeds = seeds, samples = samples)
        failed = [result for result in results if not result.passed]

        self._write_report("gradcheck.json", [result.record() for result in results])

        if failed and strict:
            names = ", ".join(sorted({f"{result.scope}/{result.case}" for result in failed}))
            raise VerificationFailure(f"{len(failed)} gradient checks failed: {names}")

        return results

    def bench(self, grid = False, include_projections = False, measure = True):
        """
        Attention cost of the configured model shape, or of the whole T x N x d grid

        :raises VerificationFailure: an instrumented count differs from its closed form

        :rtype: list<CostReport>
        """
        if grid:
            reports = cost_grid(prototypes = self.config.iap_prototypes, include_projections = include_projections, measure = measure)
        else:
            reports = [run_cost_report(self.config.model_config(), include_projections = include_projections, measure = measure)]

        self._write_report("bench.json", [report.record() for report in reports])
        return reports

    def augment_demo(self, probability = None, positions = None, seed = None):
        """
        One temporal patch shuffle draw over a training clip of the configured shape

        :param probability: chance the clip is shuffled, the config value if None
        :param positions: shuffled spatial positions, the config value if None
        :param seed: stream seed, the config seed if None

        :rtype: TpsDraw
        """
        cfg = self.config
        seed = cfg.seed if seed is None else seed

        tps = TpsConfig(
            probability = cfg.tps_probability if probability is None else probability,
            positions = cfg.tps_positions if positions is None else positions,
            seed = seed
        )

        return tps_index_map(cfg.frames_train, cfg.model_config().tokens_per_frame, tps, np.random.default_rng(seed))

    def synth_data(self, spec = None, directory = None):
        """
        Render a synthetic dataset and write it with its manifest

        :param spec: generator settings, sized to the configured frame shape if None
        :param directory: destination, the parent of ``manifest_path`` if None

        :returns: manifest path
        :rtype: Path
        """
        if spec is None:
            spec = SynthSpec(frame_height_px = self.config.frame_height_px, frame_width_px = self.config.frame_width_px, seed = self.config.seed)

        if directory is None:
            if not self.config.manifest_path:
                raise ConfigError("no destination given and manifest_path is not set")

            directory = Path(self.config.manifest_path).parent

        return generate_synthetic_tracklets(spec).write(directory)

    def resolve_command(self, args):
        """
        Run the command named by ``args.command``

        :param args: parsed command line
        :type args: argparse.Namespace
        """
        return self.commands.get(args.command, Defaults.default)(self, args)

    # decorators

    def command(self, name = None):
        """
        Decorator to add a command line subcommand. Commands take the client and the parsed arguments::

            import mstat
            client = mstat.Client()

            @client.command(name = "noop")
            def noop(client, args):
                pass

        :param name: subcommand name, the function name if None
        :type name: str
        """
        def _inner(method):
            _name = name if name else method.__name__
            self.commands[_name] = Command(method, _name)

            return method

        return _inner

    def event(self, name = None):
        """
        Decorator to add an event hook, called with one dict when a run reaches that point::

            import mstat
            client = mstat.Client()

            @client.event(name = "on_eval")
            def report(data):
                print(data["stages"], data["mAP"])

        :param name: event name, the function name if None. See ``Handler`` for valid events
        :type name: str
        """
        def _inner(method):
            _name = name if name else method.__name__
            self.handler.events[_name] = Event(method, _name)

            return method

        return _inner
