from mstat.data._manifest import (
    Tracklet, ManifestRecord, DatasetManifest, TrackletStore, splits, manifest_keys,
    load_manifest, write_manifest, save_tracklet_frames
)
from mstat.data._synth import SynthSpec, SynthDataset, generate_synthetic_tracklets, render_frame
from mstat.data._samplers import (
    TrainSampler, TrainingBatch, frame_samplings,
    chunked_frame_indices, uniform_frame_indices, sample_test_clip, sample_training_batch
)
from mstat.data._loader import BatchLoader
