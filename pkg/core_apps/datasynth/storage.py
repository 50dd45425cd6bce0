"""
Binary dataset container.

Layout, all little-endian::

    header   "BICA" | u32 version | u32 scene count
    scene    u32 seed | u32 n_points | u16 n_feats | u16 n_objects
             f32[n_points * 3] xyz | f32[n_points * n_feats] feats
    object   f32[6] center + size | u16 class id | u16 n_captions
    caption  u16 length | u16[length] token ids

Objects follow their scene, captions follow their object.
"""
import struct

import numpy as np

from core_apps.common.exceptions import FormatError, FormatVersionError, ValidationFailure
from core_apps.datasynth.scenes import SceneSample
from core_apps.geom.structures import Box3D

MAGIC = b"BICA"
FORMAT_VERSION = 1

HEADER = struct.Struct("<4sII")
SCENE = struct.Struct("<IIHH")
OBJECT = struct.Struct("<6fHH")
CAPTION_LENGTH = struct.Struct("<H")


def encode_dataset(scenes):
    chunks = [HEADER.pack(MAGIC, FORMAT_VERSION, len(scenes))]
    for scene in scenes:
        n_points, n_feats = scene.xyz.shape[0], scene.feats.shape[1]
        chunks.append(SCENE.pack(scene.seed, n_points, n_feats, len(scene.boxes)))
        chunks.append(np.ascontiguousarray(scene.xyz, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(scene.feats, dtype="<f4").tobytes())
        for box, refs in zip(scene.boxes, scene.captions):
            chunks.append(OBJECT.pack(*box.center, *box.size, box.class_id, len(refs)))
            for ids in refs:
                chunks.append(CAPTION_LENGTH.pack(len(ids)))
                chunks.append(np.asarray(ids, dtype="<u2").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def unpack(self, fmt):
        try:
            values = fmt.unpack_from(self.data, self.offset)
        except struct.error as exc:
            raise FormatError(f"Dataset truncated at byte {self.offset}.") from exc
        self.offset += fmt.size
        return values

    def floats(self, count):
        offset = self.offset
        out = self.array("<f4", count)
        if not np.isfinite(out).all():
            raise FormatError(f"Non-finite value in the float block at byte {offset}.")
        return out

    def array(self, dtype, count):
        nbytes = np.dtype(dtype).itemsize * count
        if self.offset + nbytes > len(self.data):
            raise FormatError(f"Dataset truncated at byte {self.offset}.")
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.offset).copy()
        self.offset += nbytes
        return out


def decode_dataset(data):
    """
    Raises:
        FormatError: bad magic, truncation, trailing bytes, non-finite
            coordinates or a box with a non-positive size.
        FormatVersionError: unsupported format version.
    """
    reader = _Reader(data)
    magic, version, count = reader.unpack(HEADER)
    if magic != MAGIC:
        raise FormatError(f"Not a dataset file (magic {magic!r}).")
    if version != FORMAT_VERSION:
        raise FormatVersionError(
            f"Dataset format version {version} is not supported (expected {FORMAT_VERSION})."
        )
    scenes = []
    for _ in range(count):
        seed, n_points, n_feats, n_objects = reader.unpack(SCENE)
        xyz = reader.floats(n_points * 3).astype(np.float32).reshape(n_points, 3)
        feats = reader.floats(n_points * n_feats).astype(np.float32).reshape(n_points, n_feats)
        boxes, captions = [], []
        for _ in range(n_objects):
            offset = reader.offset
            *values, class_id, n_captions = reader.unpack(OBJECT)
            try:
                boxes.append(Box3D(tuple(values[:3]), tuple(values[3:]), class_id))
            except ValidationFailure as exc:
                raise FormatError(f"Invalid box at byte {offset}: {exc}") from exc
            refs = []
            for _ in range(n_captions):
                (length,) = reader.unpack(CAPTION_LENGTH)
                refs.append(tuple(int(i) for i in reader.array("<u2", length)))
            captions.append(refs)
        scenes.append(SceneSample(seed, xyz, feats, boxes, captions))
    if reader.offset != len(data):
        raise FormatError(f"{len(data) - reader.offset} trailing bytes after the last scene.")
    return scenes


def save_dataset(scenes, path):
    try:
        with open(path, "wb") as fh:
            fh.write(encode_dataset(scenes))
    except OSError as exc:
        raise FormatError(f"Cannot write dataset {path}: {exc}") from exc


def load_dataset(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"Cannot read dataset {path}: {exc}") from exc
    return decode_dataset(data)
