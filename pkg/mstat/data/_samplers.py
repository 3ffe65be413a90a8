from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from mstat.util.methods import chunked_generator
from mstat.util.exceptions import ConfigError, SamplerContractError, EmptyInputError

frame_samplings = (
    "chunked",
    "uniform"
)

def chunked_frame_indices(length, count, rng):
    """
    Split the tracklet into ``count`` contiguous chunks and draw one frame from each, so indices
    are strictly increasing and cover the whole tracklet. Shorter tracklets loop from the start
    """
    if length < 1:
        raise EmptyInputError("cannot sample frames from an empty tracklet")

    if length < count:
        return np.arange(count) % length

    return np.array([int(rng.choice(chunk)) for chunk in np.array_split(np.arange(length), count)])

def uniform_frame_indices(length, count, rng):
    if length < 1:
        raise EmptyInputError("cannot sample frames from an empty tracklet")

    return np.sort(rng.choice(length, size = count, replace = length < count))

def sample_test_clip(length, count, rng):
    """
    Frame indices of a test clip: a sorted random subset when the tracklet is longer than ``count``,
    the whole tracklet when it is exactly as long, and a wraparound repetition when it is shorter

    :param length: tracklet length
    :param count: T_test
    :param rng: the eval stream

    :rtype: numpy.ndarray
    """
    if length < 1:
        raise EmptyInputError("cannot sample frames from an empty tracklet")

    if length <= count:
        return np.arange(count) % length

    return np.sort(rng.choice(length, size = count, replace = False))

@dataclass
class TrainingBatch:
    """
    ``records[2 i]`` and ``records[2 i + 1]`` are the two clips of the i-th identity, from different cameras
    """
    records: list
    indices: list
    labels: np.ndarray

class TrainSampler:
    """
    Draws identity-balanced batches: per identity two tracklets from two different cameras,
    ``clip_length`` frames from each

    :param records: train split
    :param clip_length: L
    :param ids_per_batch: identities per batch, the batch holds twice as many clips
    :param frame_sampling: ``chunked`` or ``uniform``

    :type records: list<ManifestRecord>
    :type clip_length: int
    :type ids_per_batch: int
    :type frame_sampling: str
    """
    def __init__(self, records, clip_length, ids_per_batch, frame_sampling = "chunked"):
        if frame_sampling not in frame_samplings:
            raise ConfigError(f"frame_sampling must be one of {', '.join(frame_samplings)}, not {frame_sampling}")

        if ids_per_batch < 2:
            raise ConfigError(f"batch-hard mining needs ids_per_batch >= 2, not {ids_per_batch}")

        self.clip_length = clip_length
        self.ids_per_batch = ids_per_batch
        self.frame_sampling = frame_sampling

        self.by_camera = defaultdict(lambda: defaultdict(list))

        for record in records:
            self.by_camera[record.id][record.camera].append(record)

        single = sorted(identity for identity, cameras in self.by_camera.items() if len(cameras) < 2)

        if single:
            raise SamplerContractError(f"identities {single[:5]} have tracklets from fewer than two cameras")

        self.ids = sorted(self.by_camera)
        self.label_map = {identity: label for label, identity in enumerate(self.ids)}

        if len(self.ids) < ids_per_batch:
            raise SamplerContractError(f"{len(self.ids)} identities cannot fill batches of {ids_per_batch}")

    @property
    def steps_per_epoch(self):
        return len(self.ids) // self.ids_per_batch

    def frame_indices(self, length, rng):
        if self.frame_sampling == "uniform":
            return uniform_frame_indices(length, self.clip_length, rng)

        return chunked_frame_indices(length, self.clip_length, rng)

    def batch(self, identities, rng):
        records, indices, labels = [], [], []

        for identity in identities:
            cameras = sorted(self.by_camera[identity])
            chosen = rng.choice(len(cameras), size = 2, replace = False)

            for camera in (cameras[i] for i in chosen):
                options = self.by_camera[identity][camera]
                record = options[int(rng.integers(0, len(options)))]

                records.append(record)
                indices.append(self.frame_indices(record.frames, rng))
                labels.append(self.label_map[identity])

        return TrainingBatch(records, indices, np.asarray(labels, dtype = np.int64))

    def epoch(self, rng):
        """
        Shuffle the identities and cut them into batches, an incomplete last group is dropped
        """
        order = [self.ids[i] for i in rng.permutation(len(self.ids))]

        for group in chunked_generator(order, self.ids_per_batch):
            if len(group) == self.ids_per_batch:
                yield self.batch(group, rng)

def sample_training_batch(records, clip_length, ids_per_batch, rng, frame_sampling = "chunked"):
    """
    One batch of ``ids_per_batch`` random identities, two clips each from different cameras

    :type records: list<ManifestRecord>
    :type clip_length: int
    :type ids_per_batch: int
    :type rng: numpy.random.Generator

    :rtype: TrainingBatch
    """
    sampler = TrainSampler(records, clip_length, ids_per_batch, frame_sampling)
    chosen = rng.choice(len(sampler.ids), size = ids_per_batch, replace = False)

    return sampler.batch([sampler.ids[i] for i in chosen], rng)
