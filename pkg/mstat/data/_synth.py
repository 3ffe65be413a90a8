import logging

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from mstat.data._manifest import Tracklet, ManifestRecord, DatasetManifest, TrackletStore, write_manifest, save_tracklet_frames
from mstat.util.exceptions import ConfigError, DegenerateInputError

logger = logging.getLogger(__name__)

# body regions as fractions of the frame height: head, torso, legs
_regions = ((0.0, 0.2), (0.2, 0.55), (0.55, 1.0))

@dataclass(frozen = True)
class SynthSpec:
    """
    Recipe for a synthetic re-id dataset.

    Identity fixes the colours of three body regions and which of ``attributes`` blobs are present.
    Camera fixes a global tint and a horizontal viewpoint shift. Within a tracklet the figure drifts,
    pixels jitter and a grey occluder may appear on any frame.
    The first ``train_identities`` identities form the train split, the following ``test_identities``
    are split into query (first tracklet per camera) and gallery (the rest)
    """
    train_identities: int = 16
    test_identities: int = 8
    cameras: int = 2
    tracklets_per_camera: int = 2
    frames: int = 16
    frame_height_px: int = 32
    frame_width_px: int = 16
    attributes: int = 4
    jitter: float = 0.03
    drift_px: float = 1.0
    occlusion_probability: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.train_identities + self.test_identities < 2:
            raise ConfigError("a synthetic dataset needs at least 2 identities")

        if self.cameras < 2:
            raise ConfigError("a synthetic dataset needs at least 2 cameras")

        for name in ("tracklets_per_camera", "frames", "frame_height_px", "frame_width_px"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, not {getattr(self, name)}")

        if not 0 <= self.occlusion_probability <= 1:
            raise ConfigError(f"occlusion_probability must lie in [0, 1], not {self.occlusion_probability}")

    @property
    def identities(self):
        return self.train_identities + self.test_identities

    def record(self):
        return asdict(self)

@dataclass
class SynthDataset:
    manifest: DatasetManifest
    tracklets: dict

    def store(self, frame_shape = None):
        """
        :returns: a store serving the in-memory frames
        :rtype: TrackletStore
        """
        store = TrackletStore(self.manifest, frame_shape)

        for record, tracklet in self.tracklets.items():
            store.put(record, tracklet)

        return store

    def write(self, directory):
        """
        Write one frames container per tracklet plus ``manifest.jsonl``

        :returns: manifest path
        :rtype: Path
        """
        directory = Path(directory)

        for record, tracklet in self.tracklets.items():
            save_tracklet_frames(directory / record.path, tracklet.frames)

        path = directory / "manifest.jsonl"
        write_manifest(self.manifest, path)

        logger.info(f"wrote {len(self.tracklets)} tracklets to {directory}")
        return path

def _identity_params(spec, rng):
    colours = rng.uniform(0.1, 0.9, size = (spec.identities, len(_regions), 3))
    blobs = rng.random((spec.identities, spec.attributes)) < 0.5
    blob_colours = rng.uniform(0, 1, size = (spec.attributes, 3))

    flat = np.concatenate([colours.reshape(spec.identities, -1), blobs], axis = 1)

    if len(np.unique(flat, axis = 0)) != spec.identities:
        raise DegenerateInputError("two synthetic identities drew the same appearance, change the seed")

    return colours, blobs, blob_colours

def _blob_anchors(spec):
    """
    Fixed attribute positions (row, column) spread over the torso and legs
    """
    anchors = []

    for index in range(spec.attributes):
        low, high = _regions[1 + index % 2]
        row = (low + (high - low) * (0.3 + 0.4 * ((index // 2) % 2))) * spec.frame_height_px
        column = spec.frame_width_px * (0.3 + 0.4 * ((index // 4) % 2))
        anchors.append((row, column))

    return anchors

def render_frame(spec, colours, blobs, blob_colours, tint, offset, rng):
    """
    Draw one person crop (3, H, W) in [0, 1]
    """
    height, width = spec.frame_height_px, spec.frame_width_px
    rows = np.arange(height)[:, None]
    columns = np.arange(width)[None, :]

    frame = np.full((3, height, width), 0.5)
    centre = width / 2 + offset[1]
    body = np.abs(columns - centre) <= width * 0.35

    for (low, high), colour in zip(_regions, colours):
        band = (rows + offset[0] >= low * height) & (rows + offset[0] < high * height) & body
        frame[:, band] = colour[:, None]

    radius = max(1.0, min(height, width) / 10)

    for present, colour, (row, column) in zip(blobs, blob_colours, _blob_anchors(spec)):
        if present:
            disc = (rows - row - offset[0]) ** 2 + (columns - column - offset[1]) ** 2 <= radius ** 2
            frame[:, disc] = colour[:, None]

    frame = frame * tint[:, None, None] + rng.normal(0, spec.jitter, size = frame.shape)

    if rng.random() < spec.occlusion_probability:
        top = int(rng.integers(0, height))
        size = max(1, height // 4)
        frame[:, top:top + size, :] = 0.5

    return np.clip(frame, 0, 1)

def generate_synthetic_tracklets(spec):
    """
    Render every tracklet of ``spec``. Deterministic in ``spec.seed``

    :type spec: SynthSpec

    :rtype: SynthDataset
    """
    rng = np.random.default_rng(spec.seed)

    colours, blobs, blob_colours = _identity_params(spec, rng)
    tints = rng.uniform(0.7, 1.3, size = (spec.cameras, 3))
    shifts = rng.uniform(-0.15, 0.15, size = spec.cameras) * spec.frame_width_px

    records, tracklets = [], {}

    for identity in range(spec.identities):
        test = identity >= spec.train_identities

        for camera in range(spec.cameras):
            for index in range(spec.tracklets_per_camera):
                start = rng.normal(0, spec.drift_px, size = 2)
                step = rng.normal(0, spec.drift_px / max(1, spec.frames), size = 2)

                frames = np.stack([
                    render_frame(spec, colours[identity], blobs[identity], blob_colours, tints[camera],
                        (start[0] + t * step[0], shifts[camera] + start[1] + t * step[1]), rng)
                    for t in range(spec.frames)
                ])

                split = ("query" if index == 0 else "gallery") if test else "train"
                record = ManifestRecord(f"tracklets/id{identity:04d}_cam{camera}_{index:02d}.mstn", identity, camera, spec.frames, split)

                records.append(record)
                tracklets[record] = Tracklet(identity, camera, frames)

    return SynthDataset(DatasetManifest(records), tracklets)
