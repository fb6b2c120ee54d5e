"""Deterministic paired video-pose dataset generator.

Each class is a distinct joint-angle prototype trajectory on the skeleton
tree. Clips are rendered from the poses by splatting Gaussian blobs at the
2D-projected joint positions (amplitude scaled by ``pose_signal_strength``),
with a colored static patch as the appearance cue for appearance-pair
classes, plus i.i.d. pixel noise. Everything is a pure function of
(config, seed): a per-purpose seed stream keeps prototypes, samples and
corruption independent and reproducible.
"""

from __future__ import annotations

import hashlib
import zlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataFormatError
from .io import load_array, save_manifest
from .io import save_array
from .topology import make_topology
from .types import DatasetManifest, PoseSequence, SampleRecord, VideoClip

BLOB_SIGMA = 1.5          # px; Gaussian splat width
PATCH_SIZE = 6            # px; appearance cue square
MAX_OCCLUSION = 0.5       # fraction of joints zeroed at corruption level 1
JITTER_STD = 0.1          # coordinate jitter std at corruption level 1

# Rest pose (x, y, z) for the 13-joint tree, normalized units.
_REST13 = np.array([
    [0.00, 0.82, 0.00],    # head
    [0.00, 0.55, 0.00],    # neck
    [-0.30, 0.50, 0.05],   # l_shoulder
    [-0.45, 0.20, 0.10],   # l_elbow
    [-0.50, -0.05, 0.15],  # l_wrist
    [0.30, 0.50, -0.05],   # r_shoulder
    [0.45, 0.20, -0.10],   # r_elbow
    [0.50, -0.05, -0.15],  # r_wrist
    [0.00, -0.10, 0.00],   # pelvis
    [-0.18, -0.18, 0.05],  # l_hip
    [-0.22, -0.60, 0.10],  # l_knee
    [0.18, -0.18, -0.05],  # r_hip
    [0.22, -0.60, -0.10],  # r_knee
]).T  # (3, 13)

# How far each joint is allowed to swing in a prototype trajectory.
_MOBILITY13 = np.array([0.30, 0.15, 0.20, 0.70, 1.00, 0.20, 0.70, 1.00,
                        0.15, 0.30, 0.60, 0.30, 0.60])

# Render channel per joint: tree-adjacent joints and left/right mirror pairs
# (which can approach each other) land on different channels.
_CHANNEL13 = np.array([0, 1, 2, 1, 0, 0, 2, 1, 0, 1, 2, 2, 0])


@dataclass(frozen=True)
class GenConfig:
    class_count: int = 8
    samples_per_class: int = 40
    joint_count: int = 13
    pose_frames: int = 20
    clip_frames: int = 16
    height: int = 32
    width: int = 32
    pose_signal_strength: float = 1.0
    appearance_pair_fraction: float = 0.0
    pixel_noise_std: float = 0.05
    seed: int = 0

    def validate(self) -> "GenConfig":
        for name in ("class_count", "samples_per_class", "joint_count",
                     "pose_frames", "clip_frames", "height", "width"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("pose_signal_strength", "appearance_pair_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.pixel_noise_std < 0:
            raise ConfigError("pixel_noise_std must be nonnegative")
        return self

    @property
    def appearance_pair_count(self) -> int:
        return int(round(self.appearance_pair_fraction * self.class_count / 2))

    def config_hash(self) -> str:
        return hashlib.sha256(write_genconfig_text(self).encode()).hexdigest()[:8]


def write_genconfig_text(cfg: GenConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(GenConfig)]
    return "\n".join(lines) + "\n"


def parse_genconfig(path: Path) -> GenConfig:
    """Read the flat ``key = value`` config file."""
    known = {f.name: f.type for f in fields(GenConfig)}
    values: dict[str, object] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        caster = float if "float" in str(known[key]) else int
        try:
            values[key] = caster(value.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value.strip()!r}") from exc
    return GenConfig(**values).validate()


# -- seed streams ----------------------------------------------------------

def _stream(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


def _split_code(split: str) -> int:
    return zlib.crc32(split.encode())


def _sample_seed(base: int, sample_id: str) -> int:
    digest = hashlib.blake2s(sample_id.encode(), digest_size=8).digest()
    return (int.from_bytes(digest, "little") ^ base) & 0x7FFFFFFFFFFFFFFF


# -- prototypes ------------------------------------------------------------

def _rest_pose(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.joint_count == 13:
        return _REST13.copy()
    return rng.uniform(-0.7, 0.7, size=(3, cfg.joint_count))


def _mobility(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.joint_count == 13:
        return _MOBILITY13.copy()
    return rng.uniform(0.2, 1.0, size=cfg.joint_count)


@dataclass(frozen=True)
class _Prototype:
    amps: np.ndarray     # (2, 3, J) harmonic amplitudes
    freqs: np.ndarray    # (2, 3, J) integer cycles over the sequence
    phases: np.ndarray   # (2, 3, J)


def class_prototypes(cfg: GenConfig) -> list[_Prototype]:
    """One trajectory prototype per class; appearance pairs share theirs.

    Derived from a stream independent of the split tag so train and test
    calls with one seed agree on what each class looks like.
    """
    rng = _stream(cfg.seed, 0xA11)
    rest_rng = _stream(cfg.seed, 0xB22)
    mobility = _mobility(cfg, rest_rng)
    protos: list[_Prototype] = []
    for k in range(cfg.class_count):
        amps = rng.uniform(0.3, 1.0, size=(2, 3, cfg.joint_count)) * 0.16 * mobility
        freqs = rng.integers(1, 4, size=(2, 3, cfg.joint_count)).astype(float)
        phases = rng.uniform(0, 2 * np.pi, size=(2, 3, cfg.joint_count))
        protos.append(_Prototype(amps, freqs, phases))
    paired = 2 * cfg.appearance_pair_count
    for k in range(0, paired, 2):
        protos[k + 1] = protos[k]  # pair mates share the pose prototype exactly
    return protos


def pose_only_classes(cfg: GenConfig) -> list[int]:
    return list(range(2 * cfg.appearance_pair_count, cfg.class_count))


def _patch_spec(cfg: GenConfig, label: int) -> tuple[tuple[int, int], np.ndarray] | None:
    """(top-left corner, RGB color) of the appearance cue, or None."""
    paired = 2 * cfg.appearance_pair_count
    if label >= paired:
        return None
    pair = label // 2
    corners = [
        (2, 2),
        (2, cfg.width - PATCH_SIZE - 2),
        (cfg.height - PATCH_SIZE - 2, 2),
        (cfg.height - PATCH_SIZE - 2, cfg.width - PATCH_SIZE - 2),
    ]
    corner = corners[pair % len(corners)]
    base = _stream(cfg.seed, 0xC33, pair).uniform(0.15, 0.85, size=3)
    color = base if label % 2 == 0 else 1.0 - base
    return corner, color


# -- pose synthesis and rendering -------------------------------------------

def _synthesize_pose(cfg: GenConfig, proto: _Prototype,
                     rng: np.random.Generator) -> np.ndarray:
    rest = _rest_pose(cfg, _stream(cfg.seed, 0xB22))
    t = np.arange(cfg.pose_frames) / cfg.pose_frames
    shift = rng.uniform(0.0, 1.0)
    scale = rng.uniform(0.85, 1.15)
    offset = np.concatenate([rng.uniform(-0.06, 0.06, size=2), [0.0]])
    phase = 2 * np.pi * proto.freqs[..., None] * (t - shift) + proto.phases[..., None]
    motion = (proto.amps[..., None] * np.sin(phase)).sum(axis=0)  # (3, J, t_p)
    coords = rest[:, :, None] + scale * motion + offset[:, None, None]
    coords += rng.normal(0.0, 0.015, size=coords.shape)
    return np.clip(coords, -1.0, 1.0).astype(np.float32)


def _resample_time(coords: np.ndarray, frames: int) -> np.ndarray:
    """Linear resample of (3, J, t_p) tracks onto `frames` time points."""
    t_p = coords.shape[2]
    pos = np.linspace(0.0, t_p - 1.0, frames)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, t_p - 1)
    frac = pos - i0
    return coords[:, :, i0] * (1 - frac) + coords[:, :, i1] * frac


def joint_pixels(coords_frame: np.ndarray, height: int, width: int) -> np.ndarray:
    """Project one pose frame (3, J) to pixel coordinates (J, 2) as (row, col)."""
    x, y = coords_frame[0], coords_frame[1]
    col = (x + 1.0) / 2.0 * (width - 1)
    row = (1.0 - y) / 2.0 * (height - 1)
    return np.stack([row, col], axis=1)


def joint_channels(joint_count: int) -> np.ndarray:
    if joint_count == 13:
        return _CHANNEL13.copy()
    return np.arange(joint_count) % 3


def splat_blobs(px: np.ndarray, height: int, width: int,
                amplitude: float) -> np.ndarray:
    """Per-joint Gaussian blob fields (J, H, W) for pixel centers px (J, 2)."""
    rows = np.arange(height)
    cols = np.arange(width)
    gr = np.exp(-((rows[None, :] - px[:, 0:1]) ** 2) / (2 * BLOB_SIGMA ** 2))
    gc = np.exp(-((cols[None, :] - px[:, 1:2]) ** 2) / (2 * BLOB_SIGMA ** 2))
    return amplitude * gr[:, :, None] * gc[:, None, :]


def render_clip(cfg: GenConfig, pose: np.ndarray, label: int,
                rng: np.random.Generator) -> np.ndarray:
    """Render (3, T, H, W) frames from (3, J, t_p) pose tracks."""
    T, H, W = cfg.clip_frames, cfg.height, cfg.width
    frames = np.zeros((3, T, H, W), dtype=np.float64)

    patch = _patch_spec(cfg, label)
    if patch is not None:
        (r, c), color = patch
        frames[:, :, r:r + PATCH_SIZE, c:c + PATCH_SIZE] = color[:, None, None, None]

    if cfg.pose_signal_strength > 0:
        resampled = _resample_time(pose, T)  # (3, J, T)
        channels = joint_channels(cfg.joint_count)
        for t in range(T):
            px = joint_pixels(resampled[:, :, t], H, W)  # (J, 2)
            blobs = splat_blobs(px, H, W, cfg.pose_signal_strength)
            for ch in range(3):
                sel = channels == ch
                if np.any(sel):
                    frames[ch, t] += blobs[sel].sum(axis=0)

    if cfg.pixel_noise_std > 0:
        frames += rng.normal(0.0, cfg.pixel_noise_std, size=frames.shape)
    return np.clip(frames, 0.0, 1.0).astype(np.float32)


# -- dataset-level operations ------------------------------------------------

def gen_dataset(cfg: GenConfig, out_dir: Path, split: str = "train") -> DatasetManifest:
    """Write one split of paired samples; pure function of (cfg, seed, split)."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    protos = class_prototypes(cfg)
    topology = make_topology(cfg.joint_count)
    split_code = _split_code(split)

    records: list[SampleRecord] = []
    for label in range(cfg.class_count):
        for idx in range(cfg.samples_per_class):
            sample_id = f"{split}-{label:02d}-{idx:03d}"
            rng = _stream(cfg.seed, split_code, label, idx)
            pose = _synthesize_pose(cfg, protos[label], rng)
            clip = render_clip(cfg, pose, label, rng)
            clip_path = out_dir / f"{sample_id}.clip.vpsd"
            pose_path = out_dir / f"{sample_id}.pose.vpsd"
            save_array(clip_path, clip)
            save_array(pose_path, pose)
            records.append(SampleRecord(sample_id, clip_path, pose_path, label))

    manifest = DatasetManifest(
        samples=records,
        class_count=cfg.class_count,
        split=split,
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
        root=out_dir,
    )
    save_manifest(manifest, out_dir / f"{split}_manifest.csv")
    return manifest


def corrupt_poses(pose: PoseSequence, level: float, seed: int) -> PoseSequence:
    """Occlude random joint tracks and jitter coordinates, both scaling with level."""
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"corruption level must lie in [0, 1], got {level}")
    if level == 0.0:
        return PoseSequence(coords=pose.coords.copy(), topology=pose.topology)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xCC]))
    occluded = rng.random(pose.topology.joint_count) < MAX_OCCLUSION * level
    jitter = rng.normal(0.0, JITTER_STD * level, size=pose.coords.shape)
    coords = np.clip(pose.coords + jitter, -1.0, 1.0)
    coords[:, occluded, :] = 0.0
    return PoseSequence(coords=coords.astype(pose.coords.dtype), topology=pose.topology)


def load_split(manifest: DatasetManifest, corruption_level: float = 0.0,
               corruption_seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Load a whole split into memory: (clips, poses, labels)."""
    clips, poses = [], []
    topology = None
    for record in manifest.samples:
        clip = load_array(record.clip_path)
        pose_arr = load_array(record.pose_path)
        if topology is None:
            topology = make_topology(pose_arr.shape[1])
        if corruption_level > 0.0:
            pose = corrupt_poses(PoseSequence(pose_arr, topology),
                                 corruption_level,
                                 _sample_seed(corruption_seed, record.sample_id))
            pose_arr = pose.coords
        clips.append(clip)
        poses.append(pose_arr)
    if not clips:
        raise DataFormatError("manifest has no samples")
    return (np.stack(clips).astype(np.float32),
            np.stack(poses).astype(np.float32),
            manifest.labels)


def eval_split_config(cfg: GenConfig) -> GenConfig:
    """Config for the companion test split: half the samples, same prototypes."""
    return replace(cfg, samples_per_class=max(1, cfg.samples_per_class // 2))
