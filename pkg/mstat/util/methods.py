import json

import numpy as np

from mstat.util.exceptions import ConfigError

stream_names = (
    "init",
    "sampler",
    "shuffle",
    "pixels",
    "eval"
)

def invalid_type(name, type, valid):
    return ConfigError(f"{name} must be of type {', '.join(valid)}, not {type}")

def invalid_value(name, value, reason):
    return ConfigError(f"{name} = {value!r} is invalid: {reason}")

def make_rngs(seed, names = stream_names):
    """
    Derive one independent numpy Generator per name from a single seed.
    Streams are keyed by position in ``names``, so adding a name at the end never
    changes the existing streams

    :param seed: root seed
    :param names: stream names

    :type seed: int
    :type names: tuple<str>

    :returns: generators by name
    :rtype: dict<str, numpy.random.Generator>
    """
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}

def rng_state(rngs):
    return {name: rng.bit_generator.state for name, rng in rngs.items()}

def set_rng_state(rngs, state):
    for name, value in state.items():
        if name not in rngs:
            raise ConfigError(f"unknown rng stream {name} in saved state")

        rngs[name].bit_generator.state = value

    return rngs

def chunked_generator(items, size):
    buffer = []

    for item in items:
        buffer.append(item)

        if len(buffer) == size:
            yield buffer
            buffer = []

    if buffer:
        yield buffer

def json_record(data):
    """
    Serialize a flat record as one canonical json line.
    Keys are sorted and floats keep their repr, so equal records give equal bytes
    """
    return json.dumps(data, sort_keys = True, default = _json_default)

def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()

    if isinstance(value, np.ndarray):
        return value.tolist()

    raise TypeError(f"{type(value)} is not json serializable")
