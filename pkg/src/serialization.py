"""
Binary containers and atomic file output.

EMD1 model container
    b'EMD1' | u32 header length | UTF-8 JSON header | weight blocks
    The header holds the model kind, its hyperparameters and the name and
    shape of every block. Blocks follow in header order as little-endian
    float64, row-major.

EFM1 feature cache
    b'EFM1' | u32 rows | u32 cols | u32 config hash | rows*cols little-endian
    float32, row-major.
"""

import contextlib
import json
import os
import struct
import tempfile

import numpy as np

from src.errors import FormatError
from src.errors import MissingInputError

MODEL_MAGIC   = b'EMD1'
FEATURE_MAGIC = b'EFM1'


@contextlib.contextmanager
def atomic_write(path, mode='wb'):
    """Write to a temporary file next to `path` and rename it into place on success."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        encoding = None if 'b' in mode else 'utf-8'
        newline = None if 'b' in mode else ''
        with os.fdopen(fd, mode, encoding=encoding, newline=newline) as handle:
            yield handle
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def _read_bytes(path):
    if not os.path.isfile(path):
        raise MissingInputError('file not found: %s' % path)
    with open(path, 'rb') as handle:
        return handle.read()


def write_model_container(path, kind, hyperparams, blocks):
    """
    Write an EMD1 container.

    blocks ... ordered mapping name -> array; stored as float64
    """
    names = list(blocks.keys())
    arrays = [np.ascontiguousarray(np.asarray(blocks[n], dtype='<f8')) for n in names]
    header = {
        'kind': kind,
        'hyperparams': hyperparams,
        'blocks': [ {'name': n, 'shape': list(a.shape)} for n, a in zip(names, arrays) ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')
    with atomic_write(path, 'wb') as handle:
        handle.write(MODEL_MAGIC)
        handle.write(struct.pack('<I', len(header_bytes)))
        handle.write(header_bytes)
        for a in arrays:
            handle.write(a.tobytes(order='C'))


def read_model_container(path):
    """
    Read an EMD1 container. Returns (kind, hyperparams, blocks).
    The whole file is validated before any block is returned.
    """
    data = _read_bytes(path)
    if len(data) < 8 or data[:4] != MODEL_MAGIC:
        raise FormatError('%s is not an EMD1 model container' % path)
    (header_len,) = struct.unpack('<I', data[4:8])
    if len(data) < 8 + header_len:
        raise FormatError('%s: truncated header' % path)
    try:
        header = json.loads(data[8:8+header_len].decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as err:
        raise FormatError('%s: corrupt header (%s)' % (path, err))
    offset = 8 + header_len
    sizes = [ int(np.prod(b['shape'], dtype=np.int64)) for b in header['blocks'] ]
    expected = offset + 8*sum(sizes)
    if len(data) != expected:
        raise FormatError('%s: expected %d bytes, found %d (truncated or padded)' % (path, expected, len(data)))
    blocks = {}
    for spec, size in zip(header['blocks'], sizes):
        values = np.frombuffer(data, dtype='<f8', count=size, offset=offset)
        blocks[spec['name']] = values.reshape(spec['shape']).astype(np.float64)
        offset += 8*size
    return header['kind'], header['hyperparams'], blocks


def write_feature_cache(path, values, config_hash):
    values = np.ascontiguousarray(np.asarray(values, dtype='<f4'))
    if values.ndim != 2:
        raise FormatError('feature cache needs a 2-D matrix')
    rows, cols = values.shape
    with atomic_write(path, 'wb') as handle:
        handle.write(FEATURE_MAGIC)
        handle.write(struct.pack('<III', rows, cols, config_hash & 0xFFFFFFFF))
        handle.write(values.tobytes(order='C'))


def read_feature_cache(path):
    """Returns (values float32 (rows, cols), config_hash)."""
    data = _read_bytes(path)
    if len(data) < 16 or data[:4] != FEATURE_MAGIC:
        raise FormatError('%s is not an EFM1 feature cache' % path)
    rows, cols, config_hash = struct.unpack('<III', data[4:16])
    if len(data) != 16 + 4*rows*cols:
        raise FormatError('%s: expected %d values, file is truncated or padded' % (path, rows*cols))
    values = np.frombuffer(data, dtype='<f4', count=rows*cols, offset=16).reshape(rows, cols)
    return values.astype(np.float32), config_hash
