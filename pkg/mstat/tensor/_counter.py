import threading

from collections import Counter

_local = threading.local()

def _active(kind):
    if not hasattr(_local, kind):
        setattr(_local, kind, [])

    return getattr(_local, kind)

class MacCounter:
    """
    Accumulates multiply-accumulate counts of every matmul run on this thread while active.
    Counts are kept per tag: ``attn`` for attention scores and aggregation, ``proj`` for projections::

        with MacCounter() as counter:
            temporal_attention(tokens, params)

        counter["attn"]
    """
    def __init__(self):
        self.counts = Counter()

    def __enter__(self):
        _active("counters").append(self)
        return self

    def __exit__(self, *exc):
        _active("counters").remove(self)
        return False

    def __getitem__(self, tag):
        return self.counts[tag]

    def total(self):
        return sum(self.counts.values())

def count_macs(tag, macs):
    for counter in _active("counters"):
        counter.counts[tag] += int(macs)

class AttentionRecorder:
    """
    Captures attention maps produced on this thread while active, as ``(module_id, array)`` pairs
    """
    def __init__(self):
        self.maps = []

    def __enter__(self):
        _active("recorders").append(self)
        return self

    def __exit__(self, *exc):
        _active("recorders").remove(self)
        return False

def record_attention(module_id, weights):
    recorders = _active("recorders")

    if not recorders:
        return

    snapshot = weights.copy()

    for recorder in recorders:
        recorder.maps.append((module_id, snapshot))
