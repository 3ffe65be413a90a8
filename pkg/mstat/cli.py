import argparse, json, logging, os, sys

from mstat.client import Client, RunConfig, load_config, parse_assignment
from mstat.ext.commands import Command
from mstat.bench import format_table
from mstat.data import SynthSpec
from mstat import __version__
from mstat.util.exceptions import MstatError, UsageError, VerificationFailure

logger = logging.getLogger("mstat")

levels = ("DEBUG", "INFO", "WARNING", "ERROR")

# explicit flag -> config key, applied after the config file and --set
_flag_keys = {
    "manifest"          : "manifest_path",
    "checkpoint_dir"    : "checkpoint_dir",
    "report_dir"        : "report_dir",
    "seed"              : "seed",
    "epochs"            : "epochs",
    "protocol"          : "protocol",
    "stages"            : "stage_masks"
}

class Parser(argparse.ArgumentParser):
    """
    Raises ``UsageError`` instead of exiting, so bad arguments share the exit code of bad config
    """
    def error(self, message):
        raise UsageError(message)

def command(name = None):
    """
    Register a subcommand on ``Client.commands``
    """
    def _inner(method):
        _name = name if name else method.__name__
        Client.commands[_name] = Command(method, _name)

        return method

    return _inner

def configure_logging(level = None):
    level = (level or os.environ.get("MSTAT_LOG_LEVEL") or "INFO").upper()

    if level not in levels:
        logging.basicConfig(level = logging.INFO, force = True)
        logger.warning(f"MSTAT_LOG_LEVEL={level} is not one of {', '.join(levels)}, using INFO")
        return logging.INFO

    logging.basicConfig(
        level = getattr(logging, level),
        format = "%(asctime)s %(levelname)-7s %(name)s: %(message)s",
        stream = sys.stderr,
        force = True
    )

    return getattr(logging, level)

def resolve_config(args):
    """
    Defaults, then ``--desk``, then ``--config``, then every ``--set``, then explicit flags

    :type args: argparse.Namespace
    :rtype: RunConfig
    """
    config = RunConfig.desk() if getattr(args, "desk", False) else RunConfig()

    if getattr(args, "config", None):
        config = load_config(args.config, config)

    changes = dict(parse_assignment(text) for text in getattr(args, "set", None) or [])

    for dest, key in _flag_keys.items():
        if getattr(args, dest, None) is not None:
            changes[key] = getattr(args, dest)

    return config.override(**changes) if changes else config

def build_parser():
    common = Parser(add_help = False)
    common.add_argument("--desk", action = "store_true", help = "start from the small CPU preset")
    common.add_argument("--config", metavar = "PATH", help = "flat json config applied over the defaults")
    common.add_argument("--set", metavar = "KEY=VALUE", action = "append", help = "override one config key, repeatable")
    common.add_argument("--manifest", metavar = "PATH", help = "dataset manifest")
    common.add_argument("--checkpoint-dir", metavar = "DIR")
    common.add_argument("--report-dir", metavar = "DIR")
    common.add_argument("--seed", type = int)

    parser = Parser(prog = "mstat", description = "multi-stage spatio-temporal video re-identification")
    parser.add_argument("--version", action = "store_true", help = "print the version and exit")
    subparsers = parser.add_subparsers(dest = "command", parser_class = Parser)

    subparsers.add_parser("help", parents = [common], help = "list commands")

    train = subparsers.add_parser("train", parents = [common], help = "train on the train split")
    train.add_argument("--resume", metavar = "DIR", help = "checkpoint directory to continue from")
    train.add_argument("--epochs", type = int)

    evaluate = subparsers.add_parser("eval", parents = [common], help = "rank gallery against query")
    evaluate.add_argument("checkpoint", help = "checkpoint directory")
    evaluate.add_argument("--protocol", help = "cross-camera, self or all")
    evaluate.add_argument("--stages", help = "comma separated stage masks, e.g. I,I+II+III")
    evaluate.add_argument("--export-attention", metavar = "K", type = int, default = 0, help = "dump attention maps of K query clips")
    evaluate.add_argument("--export-features", action = "store_true", help = "dump representations and labels")

    bench = subparsers.add_parser("bench-attn", parents = [common], help = "exact attention MAC counts")
    bench.add_argument("--grid", action = "store_true", help = "evaluate the whole T x N x d grid")
    bench.add_argument("--include-projections", action = "store_true")
    bench.add_argument("--no-measure", action = "store_true", help = "closed forms only, skip the instrumented pass")

    gradcheck = subparsers.add_parser("gradcheck", parents = [common], help = "finite-difference gradient suites")
    gradcheck.add_argument("--scope", action = "append", help = "suite to run, repeatable, all if omitted")
    gradcheck.add_argument("--samples", type = int, default = 8, help = "coordinates checked per tensor")

    demo = subparsers.add_parser("augment-demo", parents = [common], help = "print one temporal patch shuffle map")
    demo.add_argument("--probability", type = float)
    demo.add_argument("--positions", type = int)

    synth = subparsers.add_parser("synth-data", parents = [common], help = "write a synthetic dataset and manifest")
    synth.add_argument("--out", metavar = "DIR", help = "destination, the manifest directory if omitted")
    synth.add_argument("--train-ids", type = int, default = 16)
    synth.add_argument("--test-ids", type = int, default = 8)
    synth.add_argument("--cameras", type = int, default = 2)
    synth.add_argument("--tracklets-per-camera", type = int, default = 2)
    synth.add_argument("--frames", type = int, default = 16)
    synth.add_argument("--attributes", type = int, default = 4)
    synth.add_argument("--occlusion-probability", type = float, default = 0.1)

    return parser

# commands

@command("train")
def _train(client, args):
    """
    Train on the train split, one checkpoint per epoch plus final
    """
    result = client.train(resume = args.resume)
    print(f"trained {result.epochs} epochs ({result.steps} steps), checkpoint {result.checkpoint}")

@command("eval")
def _eval(client, args):
    """
    Rank the gallery against the query split for every stage mask
    """
    reports = client.evaluate(args.checkpoint, export_attention = args.export_attention, export_features = args.export_features)

    for report in reports:
        print(report.row())

@command("bench-attn")
def _bench(client, args):
    """
    Exact MAC counts of joint, divided and prototype attention
    """
    reports = client.bench(grid = args.grid, include_projections = args.include_projections, measure = not args.no_measure)
    print(format_table(reports))

@command("gradcheck")
def _gradcheck(client, args):
    """
    Compare analytic gradients with finite differences
    """
    results = client.gradcheck(scopes = args.scope, samples = args.samples, strict = False)

    for result in results:
        print(f"{'ok  ' if result.passed else 'FAIL'} {result.scope}/{result.case} seed {result.seed}: {result.max_error:.2e}")

    failed = [result for result in results if not result.passed]

    if failed:
        raise VerificationFailure(f"{len(failed)} of {len(results)} gradient checks failed")

@command("augment-demo")
def _augment_demo(client, args):
    """
    Print one temporal patch shuffle draw as json
    """
    draw = client.augment_demo(probability = args.probability, positions = args.positions)

    print(json.dumps({
        "fired"     : draw.fired,
        "positions" : list(draw.positions),
        "identity"  : draw.is_identity(),
        "index"     : draw.index.tolist()
    }))

@command("synth-data")
def _synth_data(client, args):
    """
    Write a synthetic dataset with its manifest
    """
    config = client.config

    spec = SynthSpec(
        train_identities = args.train_ids,
        test_identities = args.test_ids,
        cameras = args.cameras,
        tracklets_per_camera = args.tracklets_per_camera,
        frames = args.frames,
        frame_height_px = config.frame_height_px,
        frame_width_px = config.frame_width_px,
        attributes = args.attributes,
        occlusion_probability = args.occlusion_probability,
        seed = config.seed
    )

    print(client.synth_data(spec, args.out))

def main(argv = None):
    """
    :returns: exit code, 0 on success, otherwise the code of the ``MstatError`` that stopped the command
    :rtype: int
    """
    configure_logging()

    try:
        args = build_parser().parse_args(argv)

        if args.version:
            print(__version__)
            return 0

        if args.command is None:
            args.command = "help"

        Client(resolve_config(args)).resolve_command(args)

    except MstatError as error:
        logger.error(f"{type(error).__name__}: {error}")
        logger.debug("traceback", exc_info = True)

        return error.exit_code

    return 0
