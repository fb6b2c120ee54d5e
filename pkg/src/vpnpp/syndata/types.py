"""Sample-level data types for the paired video-pose datasets."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .topology import SkeletonTopology


@dataclass
class PoseSequence:
    """3D joint tracks, shape (3, J, t_p), normalized coordinates in [-1, 1]."""

    coords: np.ndarray
    topology: SkeletonTopology

    def __post_init__(self):
        c = self.coords
        if c.ndim != 3 or c.shape[0] != 3 or c.shape[1] != self.topology.joint_count:
            raise ValueError(f"pose coords shape {c.shape} inconsistent with "
                             f"J={self.topology.joint_count}")
        if not np.all(np.isfinite(c)):
            raise ValueError("pose coords must be finite")

    @property
    def frame_count(self) -> int:
        return self.coords.shape[2]


@dataclass
class VideoClip:
    """Rendered frames, shape (ch, T, H, W), values in [0, 1]."""

    frames: np.ndarray

    def __post_init__(self):
        f = self.frames
        if f.ndim != 4:
            raise ValueError(f"clip frames must be 4D, got shape {f.shape}")
        if f.min() < 0.0 or f.max() > 1.0:
            raise ValueError("clip values must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.frames.shape


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    clip_path: Path
    pose_path: Path
    label: int


@dataclass
class DatasetManifest:
    """Index of one dataset split plus its provenance."""

    samples: list[SampleRecord]
    class_count: int
    split: str
    config_hash: str
    seed: int
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        ids = [s.sample_id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("sample_ids must be unique")
        for s in self.samples:
            if not (0 <= s.label < self.class_count):
                raise ValueError(f"label {s.label} outside [0, {self.class_count})")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)
