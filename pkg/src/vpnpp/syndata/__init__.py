from .generate import (
    GenConfig,
    class_prototypes,
    corrupt_poses,
    gen_dataset,
    joint_pixels,
    load_split,
    parse_genconfig,
    pose_only_classes,
    render_clip,
    eval_split_config,
    write_genconfig_text,
)
from .io import load_array, load_manifest, load_sample, save_array, save_manifest
from .topology import SkeletonTopology, make_topology
from .types import DatasetManifest, PoseSequence, SampleRecord, VideoClip

__all__ = [
    "DatasetManifest",
    "GenConfig",
    "PoseSequence",
    "SampleRecord",
    "SkeletonTopology",
    "VideoClip",
    "class_prototypes",
    "corrupt_poses",
    "gen_dataset",
    "joint_pixels",
    "load_array",
    "load_manifest",
    "load_sample",
    "load_split",
    "make_topology",
    "parse_genconfig",
    "pose_only_classes",
    "render_clip",
    "save_array",
    "save_manifest",
    "eval_split_config",
    "write_genconfig_text",
]
