import logging, queue, threading

import numpy as np

logger = logging.getLogger(__name__)

_done = object()

class BatchLoader:
    """
    Prepares the batches of one epoch on a producer thread and hands them over through a bounded queue.
    The producer is the only user of the sampler and pixel streams, so batches come out in the
    same order with the same contents whatever the timing

    :param sampler: batch sampler
    :param store: frame source
    :param sampler_rng: stream for identity and frame choices
    :param pixel_rng: stream for pixel augmentation
    :param augment: per-clip transform ``(clip, rng) -> clip``, or None
    :param queue_size: batches prepared ahead
    :param threaded: False to build batches on the calling thread

    :type sampler: TrainSampler
    :type store: TrackletStore
    :type sampler_rng: numpy.random.Generator
    :type pixel_rng: numpy.random.Generator
    :type augment: callable
    :type queue_size: int
    :type threaded: bool
    """
    def __init__(self, sampler, store, sampler_rng, pixel_rng, augment = None, queue_size = 2, threaded = True):
        self.sampler = sampler
        self.store = store
        self.sampler_rng = sampler_rng
        self.pixel_rng = pixel_rng
        self.augment = augment
        self.queue_size = queue_size
        self.threaded = threaded

    def assemble(self, batch):
        """
        :returns: clips (B, L, 3, H, W) and labels (B,)
        :rtype: tuple<numpy.ndarray, numpy.ndarray>
        """
        clips = []

        for record, indices in zip(batch.records, batch.indices):
            clip = self.store.frames(record, indices)

            if self.augment is not None:
                clip = self.augment(clip, self.pixel_rng)

            clips.append(clip)

        return np.stack(clips), batch.labels

    def _put(self, channel, stop, item):
        while not stop.is_set():
            try:
                channel.put(item, timeout = 0.1)
                return True
            except queue.Full:
                continue

        return False

    def _produce(self, channel, stop):
        try:
            for batch in self.sampler.epoch(self.sampler_rng):
                if not self._put(channel, stop, self.assemble(batch)):
                    return

            self._put(channel, stop, _done)
        except Exception as error:
            self._put(channel, stop, error)

    def epoch(self):
        """
        Yield the batches of one epoch
        """
        if not self.threaded:
            for batch in self.sampler.epoch(self.sampler_rng):
                yield self.assemble(batch)

            return

        channel = queue.Queue(maxsize = self.queue_size)
        stop = threading.Event()
        producer = threading.Thread(target = self._produce, args = [channel, stop], daemon = True)
        producer.start()

        try:
            while True:
                item = channel.get()

                if item is _done:
                    break

                if isinstance(item, Exception):
                    raise item

                yield item
        finally:
            stop.set()
            producer.join()
