"""On-disk formats: VPSD sample arrays and the manifest CSV.

VPSD layout (little-endian):
    magic   4 bytes  b"VPSD"
    version u16      currently 1
    rank    u8
    dims    rank x u32
    payload float32, C row-major order

Manifest: UTF-8 CSV, header ``sample_id,clip_path,pose_path,label,split``,
paths relative to the CSV's directory. Split-level provenance (class count,
config hash, seed) lives in a sidecar ``<manifest>.meta.json``.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataFormatError
from .topology import make_topology
from .types import DatasetManifest, PoseSequence, SampleRecord, VideoClip

MAGIC = b"VPSD"
VERSION = 1
MANIFEST_COLUMNS = ("sample_id", "clip_path", "pose_path", "label", "split")


def save_array(path: Path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = MAGIC + struct.pack("<HB", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def load_array(path: Path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 7 or blob[:4] != MAGIC:
        raise DataFormatError(f"malformed header in {path}: bad magic or truncated")
    version, rank = struct.unpack_from("<HB", blob, 4)
    if version != VERSION:
        raise DataFormatError(f"malformed header in {path}: unsupported version {version}")
    dims_end = 7 + 4 * rank
    if len(blob) < dims_end:
        raise DataFormatError(f"malformed header in {path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}I", blob, 7)
    expected = int(np.prod(dims)) * 4
    payload = blob[dims_end:]
    if len(payload) != expected:
        raise DataFormatError(
            f"shape mismatch in {path}: header claims {dims} "
            f"({expected} bytes) but payload has {len(payload)} bytes")
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
    if not np.all(np.isfinite(arr)):
        raise DataFormatError(f"non-finite payload in {path}")
    return arr.copy()


def load_sample(clip_path: Path, pose_path: Path) -> tuple[VideoClip, PoseSequence]:
    """Restore one (clip, pose) pair bit-exactly as written."""
    clip_arr = load_array(clip_path)
    pose_arr = load_array(pose_path)
    if clip_arr.ndim != 4:
        raise DataFormatError(f"clip {clip_path} has rank {clip_arr.ndim}, expected 4")
    if pose_arr.ndim != 3 or pose_arr.shape[0] != 3:
        raise DataFormatError(f"pose {pose_path} has shape {pose_arr.shape}, expected (3, J, t_p)")
    topology = make_topology(pose_arr.shape[1])
    return VideoClip(frames=clip_arr), PoseSequence(coords=pose_arr, topology=topology)


def save_manifest(manifest: DatasetManifest, path: Path) -> None:
    path = Path(path)
    root = path.parent
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for s in manifest.samples:
            writer.writerow([
                s.sample_id,
                s.clip_path.relative_to(root).as_posix(),
                s.pose_path.relative_to(root).as_posix(),
                s.label,
                manifest.split,
            ])
    meta = {
        "class_count": manifest.class_count,
        "split": manifest.split,
        "config_hash": manifest.config_hash,
        "seed": manifest.seed,
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")


def load_manifest(path: Path, check_paths: bool = True) -> DatasetManifest:
    path = Path(path)
    root = path.parent
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != MANIFEST_COLUMNS:
                raise DataFormatError(f"manifest {path}: unexpected header {header}")
            rows = list(reader)
    except OSError as exc:
        raise DataFormatError(f"cannot read manifest {path}: {exc}") from exc

    samples = []
    splits = set()
    for row in rows:
        if len(row) != 5:
            raise DataFormatError(f"manifest {path}: malformed row {row}")
        sample_id, clip_rel, pose_rel, label, split = row
        clip_path = root / clip_rel
        pose_path = root / pose_rel
        if check_paths and not (clip_path.is_file() and pose_path.is_file()):
            raise DataFormatError(f"manifest {path}: sample {sample_id} paths do not resolve")
        samples.append(SampleRecord(sample_id, clip_path, pose_path, int(label)))
        splits.add(split)
    if len(splits) > 1:
        raise DataFormatError(f"manifest {path}: mixed splits {splits}")

    meta_path = Path(str(path) + ".meta.json")
    if meta_path.is_file():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        class_count = int(meta["class_count"])
        config_hash = meta.get("config_hash", "")
        seed = int(meta.get("seed", 0))
    else:
        class_count = max((s.label for s in samples), default=-1) + 1
        config_hash = ""
        seed = 0
    return DatasetManifest(
        samples=samples,
        class_count=class_count,
        split=splits.pop() if splits else "train",
        config_hash=config_hash,
        seed=seed,
        root=root,
    )
