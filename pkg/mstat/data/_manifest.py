import json, logging, threading

from collections import OrderedDict
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from mstat.tensor import load_tensors, save_tensors
from mstat.util.exceptions import ManifestError, DataContractError, ConfigError

logger = logging.getLogger(__name__)

splits = (
    "train",
    "query",
    "gallery"
)

manifest_keys = ("path", "id", "camera", "frames", "split")

@dataclass
class Tracklet:
    """
    A labeled clip. ``frames`` is (T, 3, H, W) in [0, 1]
    """
    id: int
    camera: int
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames)

        if self.frames.ndim != 4 or self.frames.shape[1] != 3:
            raise DataContractError(f"tracklet of id {self.id} has frames of shape {self.frames.shape}, expected (T, 3, H, W)")

        if self.frames.shape[0] < 1:
            raise DataContractError(f"tracklet of id {self.id} has no frames")

    def __len__(self):
        return self.frames.shape[0]

@dataclass(frozen = True)
class ManifestRecord:
    path: str
    id: int
    camera: int
    frames: int
    split: str

    def record(self):
        return asdict(self)

class DatasetManifest:
    """
    Tracklet records by split. Paths are resolved against ``root``, the manifest's directory

    :param records: records in file order
    :param root: base directory of relative paths

    :type records: list<ManifestRecord>
    :type root: Path
    """
    def __init__(self, records, root = "."):
        self.records = list(records)
        self.root = Path(root)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other):
        return isinstance(other, DatasetManifest) and self.records == other.records

    def split(self, name):
        if name not in splits:
            raise ConfigError(f"split must be one of {', '.join(splits)}, not {name}")

        return [record for record in self.records if record.split == name]

    def require(self, name):
        records = self.split(name)

        if not records:
            raise DataContractError(f"manifest has no {name} split")

        return records

    def ids(self, name):
        return sorted({record.id for record in self.split(name)})

    def resolve(self, record):
        path = Path(record.path)
        return path if path.is_absolute() else self.root / path

def _parse_line(text, path, number):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as error:
        raise ManifestError(f"{path}:{number}: not a json object ({error.msg})")

    if not isinstance(data, dict):
        raise ManifestError(f"{path}:{number}: not a json object")

    missing = [key for key in manifest_keys if key not in data]

    if missing:
        raise ManifestError(f"{path}:{number}: missing {', '.join(missing)}")

    for key in ("id", "camera", "frames"):
        if not isinstance(data[key], int) or isinstance(data[key], bool):
            raise ManifestError(f"{path}:{number}: {key} must be an integer, not {data[key]!r}")

    if data["frames"] < 1:
        raise ManifestError(f"{path}:{number}: frames must be >= 1")

    if data["split"] not in splits:
        raise ManifestError(f"{path}:{number}: split must be one of {', '.join(splits)}, not {data['split']!r}")

    return ManifestRecord(str(data["path"]), data["id"], data["camera"], data["frames"], data["split"])

def load_manifest(path):
    """
    Read a line-delimited manifest. Blank lines are skipped, frame files are only opened on first use

    :param path: manifest file
    :type path: str or Path

    :rtype: DatasetManifest
    """
    path = Path(path)

    if not path.exists():
        raise ManifestError(f"manifest {path} does not exist")

    records = []

    with open(path) as stream:
        for number, line in enumerate(stream, 1):
            if line.strip():
                records.append(_parse_line(line, path, number))

    if not records:
        logger.warning(f"manifest {path} is empty")

    return DatasetManifest(records, root = path.parent)

def write_manifest(manifest, path):
    path = Path(path)
    path.parent.mkdir(parents = True, exist_ok = True)

    with open(path, "w") as stream:
        for record in manifest:
            stream.write(json.dumps(record.record(), sort_keys = True) + "\n")

def save_tracklet_frames(path, frames):
    save_tensors(path, {"frames": np.asarray(frames)})

def _read_image_directory(path):
    try:
        from matplotlib import image
    except ImportError:
        raise ConfigError("reading frame directories needs matplotlib, install mstat[images]")

    files = sorted(file for file in path.iterdir() if file.suffix.lower() == ".png")
    frames = [np.asarray(image.imread(file), dtype = np.float64)[..., :3].transpose(2, 0, 1) for file in files]

    return np.stack(frames) if frames else np.zeros((0, 3, 0, 0))

class TrackletStore:
    """
    Lazily loads and caches tracklet frames, safe to share between the loader thread and the caller.
    Loaded tracklets are kept in least-recently-used order and evicted past ``max_cached``,
    tracklets registered with ``put`` have no file behind them and are never evicted

    :param manifest: dataset
    :param frame_shape: expected (H, W), checked on load when given
    :param max_cached: loaded tracklets kept in memory, 0 keeps every one

    :type manifest: DatasetManifest
    :type frame_shape: tuple<int, int>
    :type max_cached: int
    """
    def __init__(self, manifest, frame_shape = None, max_cached = 256):
        if max_cached < 0:
            raise ConfigError(f"max_cached must be >= 0, not {max_cached}")

        self.manifest = manifest
        self.frame_shape = tuple(frame_shape) if frame_shape else None
        self.max_cached = max_cached

        self.__pinned = {}
        self.__cache = OrderedDict()
        self.__lock = threading.Lock()

    def _load(self, record):
        path = self.manifest.resolve(record)

        if not path.exists():
            raise DataContractError(f"frames of {record.path} (id {record.id}) not found at {path}")

        if path.is_dir():
            frames = _read_image_directory(path)
        else:
            container = load_tensors(path)

            if "frames" not in container:
                raise DataContractError(f"{path} has no frames tensor")

            frames = container["frames"]

        if frames.shape[0] != record.frames:
            raise DataContractError(f"{record.path}: manifest says {record.frames} frames, found {frames.shape[0]}")

        if self.frame_shape and tuple(frames.shape[-2:]) != self.frame_shape:
            raise DataContractError(f"{record.path}: frames are {frames.shape[-2:]}, expected {self.frame_shape}")

        return Tracklet(record.id, record.camera, frames)

    def get(self, record):
        self.__lock.acquire()

        try:
            if record in self.__pinned:
                return self.__pinned[record]

            if record in self.__cache:
                self.__cache.move_to_end(record)
                return self.__cache[record]

            tracklet = self.__cache[record] = self._load(record)

            while self.max_cached and len(self.__cache) > self.max_cached:
                evicted, _ = self.__cache.popitem(last = False)
                logger.debug(f"evicted {evicted.path} from the tracklet cache")

            return tracklet
        finally:
            self.__lock.release()

    def put(self, record, tracklet):
        """
        Register frames that exist only in memory, e.g. freshly generated synthetic tracklets
        """
        self.__lock.acquire()
        self.__cache.pop(record, None)
        self.__pinned[record] = tracklet
        self.__lock.release()

    def cached(self):
        """
        :returns: number of tracklets held in memory, registered ones included
        :rtype: int
        """
        return len(self.__pinned) + len(self.__cache)

    def frames(self, record, indices = None):
        frames = self.get(record).frames
        return frames if indices is None else frames[np.asarray(indices)]
