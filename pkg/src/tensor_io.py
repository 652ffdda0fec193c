"""Tensor file formats.

DTNS (little-endian throughout)::

    offset 0      4 bytes   magic b"DTNS"
    offset 4      u32       order N
    offset 8      N x u64   extents I_1 .. I_N
    offset 8+8N   f64 x ∏I  payload, first index fastest

CSV: one ``index_0,...,index_{N-1},value`` row per entry, 0-based indices,
optional header row. Missing entries are zero, duplicates are rejected.

IDX (image database byte format, big-endian)::

    offset 0      u32       magic 0x00000803
    offset 4      u32       image count K
    offset 8      u32       rows
    offset 12     u32       cols
    offset 16     u8 x K*rows*cols pixels, row-major per image

IDX images load as a rows x cols x K tensor scaled to [0, 1].
"""
import csv
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import TensorFormatError
from .tensor_core import as_tensor

logger = logging.getLogger(__name__)

DTNS_MAGIC = b"DTNS"
IDX_IMAGE_MAGIC = 0x00000803

PathLike = Union[str, Path]


def write_dtns(path: PathLike, t: np.ndarray) -> None:
    t = as_tensor(t)
    header = DTNS_MAGIC + np.array([t.ndim], dtype="<u4").tobytes() + np.array(t.shape, dtype="<u8").tobytes()
    payload = t.astype("<f8").ravel(order="F").tobytes()
    Path(path).write_bytes(header + payload)


def read_dtns(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise TensorFormatError("DTNS header truncated", offset=len(raw))
    if raw[:4] != DTNS_MAGIC:
        raise TensorFormatError(f"Bad DTNS magic {raw[:4]!r}", offset=0)
    order = int(np.frombuffer(raw, dtype="<u4", count=1, offset=4)[0])
    if order < 1:
        raise TensorFormatError(f"DTNS order must be positive, got {order}", offset=4)
    extents_end = 8 + 8 * order
    if len(raw) < extents_end:
        raise TensorFormatError(f"DTNS extents truncated, expected {order} extents", offset=len(raw))
    extents = tuple(int(e) for e in np.frombuffer(raw, dtype="<u8", count=order, offset=8))
    for i, extent in enumerate(extents):
        if extent < 1:
            raise TensorFormatError(f"DTNS extent {i} is zero", offset=8 + 8 * i)
    count = int(np.prod(extents))
    expected = extents_end + 8 * count
    if len(raw) != expected:
        raise TensorFormatError(f"DTNS payload holds {len(raw) - extents_end} bytes, expected {8 * count}",
                                offset=min(len(raw), expected))
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=extents_end)
    return data.astype(np.float64).reshape(extents, order="F")


def write_csv(path: PathLike, t: np.ndarray, include_zeros: bool = False) -> None:
    t = as_tensor(t)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"i{n}" for n in range(t.ndim)] + ["value"])
        for index in np.ndindex(*t.shape):
            value = t[index]
            if value != 0.0 or include_zeros:
                writer.writerow(list(index) + [repr(float(value))])


def read_csv(path: PathLike, shape: Optional[Sequence[int]] = None) -> np.ndarray:
    entries = {}
    order = None
    first_row = True
    with open(path, newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not "".join(row).strip() or row[0].strip().startswith("#"):
                continue
            header_allowed, first_row = first_row, False
            try:
                index = tuple(int(v) for v in row[:-1])
                value = float(row[-1])
            except ValueError:
                if header_allowed:
                    continue  # header
                raise TensorFormatError(f"Line {line_no}: cannot parse {row}")
            if order is None:
                order = len(index)
            if len(index) != order or order < 1:
                raise TensorFormatError(f"Line {line_no}: expected {order} indices, got {len(index)}")
            if any(i < 0 for i in index):
                raise TensorFormatError(f"Line {line_no}: negative index {index}")
            if index in entries:
                raise TensorFormatError(f"Line {line_no}: duplicate index {index}")
            entries[index] = value
    if order is None:
        raise TensorFormatError(f"{path} contains no entries")
    extents = tuple(max(idx[n] for idx in entries) + 1 for n in range(order))
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if len(shape) != order or any(e > s for e, s in zip(extents, shape)):
            raise TensorFormatError(f"Entries with extents {extents} do not fit shape {shape}")
        extents = shape
    t = np.zeros(extents, dtype=np.float64)
    for index, value in entries.items():
        t[index] = value
    return t


def write_idx_images(path: PathLike, images: np.ndarray) -> None:
    """Write a K x rows x cols uint8 stack"""
    images = np.asarray(images, dtype=np.uint8)
    header = np.array([IDX_IMAGE_MAGIC, *images.shape], dtype=">u4").tobytes()
    Path(path).write_bytes(header + images.tobytes(order="C"))


def read_idx_images(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise TensorFormatError("IDX header truncated", offset=len(raw))
    magic = int(np.frombuffer(raw, dtype=">u4", count=1, offset=0)[0])
    if magic != IDX_IMAGE_MAGIC:
        raise TensorFormatError(f"Bad IDX magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}", offset=0)
    count, rows, cols = (int(v) for v in np.frombuffer(raw, dtype=">u4", count=3, offset=4))
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise TensorFormatError(f"IDX pixel block holds {len(raw) - 16} bytes, expected {count * rows * cols}",
                                offset=min(len(raw), expected))
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows, cols)
    return np.moveaxis(pixels.astype(np.float64) / 255.0, 0, 2)


_READERS = {"dtns": read_dtns, "csv": read_csv, "idx": read_idx_images}
_SUFFIXES = {".dtns": "dtns", ".csv": "csv", ".idx": "idx", ".idx3-ubyte": "idx", ".ubyte": "idx"}


def load_tensor(path: PathLike, fmt: Optional[str] = None) -> np.ndarray:
    """Load a tensor, picking the format from ``fmt`` or the file suffix"""
    path = Path(path)
    if fmt is None:
        fmt = _SUFFIXES.get(path.suffix.lower())
        if fmt is None:
            raise TensorFormatError(f"Cannot infer tensor format from {path.name}")
    fmt = fmt.lower()
    if fmt not in _READERS:
        raise TensorFormatError(f"Unknown tensor format {fmt}")
    t = _READERS[fmt](path)
    logger.info(f"Loaded {fmt} tensor {t.shape} from {path}")
    return t
