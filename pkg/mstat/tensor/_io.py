import struct

from pathlib import Path

import numpy as np

from mstat.tensor._tensor import Tensor
from mstat.util.exceptions import DataContractError

MAGIC = b"MSTN"
VERSION = 1

# magic, version u16, rank u16, element width in bytes u8 (4 or 8)
_header = struct.Struct("<4sHHB")
_name_length = struct.Struct("<H")

_widths = {
    4   : np.dtype("<f4"),
    8   : np.dtype("<f8")
}

_native = {
    4   : np.float32,
    8   : np.float64
}

def _array(value):
    data = value.data if isinstance(value, Tensor) else np.asarray(value)

    if data.dtype not in (np.float32, np.float64):
        data = data.astype(np.float64)

    return data

def _read_exactly(stream, size):
    chunk = stream.read(size)

    if len(chunk) != size:
        raise DataContractError(f"truncated tensor stream: wanted {size} bytes, got {len(chunk)}")

    return chunk

def write_tensor(stream, value):
    """
    Write one tensor block: header, extents as u64, then the little-endian buffer

    :param stream: binary file-like object
    :param value: tensor or array, stored as 32 or 64 bit floats

    :type stream: io.BufferedIOBase
    :type value: Tensor or numpy.ndarray
    """
    data = _array(value)
    width = data.dtype.itemsize

    stream.write(_header.pack(MAGIC, VERSION, data.ndim, width))
    stream.write(struct.pack(f"<{data.ndim}Q", *data.shape))
    stream.write(np.ascontiguousarray(data, dtype = _widths[width]).tobytes())

def read_tensor(stream):
    """
    :returns: the next tensor block as an array in its stored precision
    :rtype: numpy.ndarray
    """
    magic, version, rank, width = _header.unpack(_read_exactly(stream, _header.size))

    if magic != MAGIC:
        raise DataContractError(f"not an MSTN stream (magic {magic!r})")

    if version != VERSION:
        raise DataContractError(f"unsupported MSTN version {version}")

    if width not in _widths:
        raise DataContractError(f"unsupported element width {width}")

    shape = struct.unpack(f"<{rank}Q", _read_exactly(stream, 8 * rank))
    count = int(np.prod(shape, dtype = np.int64))
    buffer = _read_exactly(stream, count * width)

    return np.frombuffer(buffer, dtype = _widths[width]).astype(_native[width]).reshape(shape)

def save_tensor(path, value):
    with open(path, "wb") as stream:
        write_tensor(stream, value)

def load_tensor(path):
    with open(path, "rb") as stream:
        return read_tensor(stream)

def save_tensors(path, values):
    """
    Write a named container, a sequence of (u16 name length, utf-8 name, tensor block) records

    :param path: destination file
    :param values: tensors by name, written in iteration order

    :type path: str or Path
    :type values: dict<str, Tensor or numpy.ndarray>
    """
    Path(path).parent.mkdir(parents = True, exist_ok = True)

    with open(path, "wb") as stream:
        for name, value in values.items():
            encoded = name.encode("utf-8")
            stream.write(_name_length.pack(len(encoded)))
            stream.write(encoded)
            write_tensor(stream, value)

def load_tensors(path):
    """
    :returns: arrays by name, in stored order
    :rtype: dict<str, numpy.ndarray>
    """
    values = {}

    with open(path, "rb") as stream:
        while True:
            prefix = stream.read(_name_length.size)

            if not prefix:
                break

            if len(prefix) != _name_length.size:
                raise DataContractError(f"truncated container {path}")

            (length,) = _name_length.unpack(prefix)
            name = _read_exactly(stream, length).decode("utf-8")
            values[name] = read_tensor(stream)

    return values
