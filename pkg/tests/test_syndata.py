"""Dataset generator, formats and corruption."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from vpnpp.errors import ConfigError, DataFormatError
from vpnpp.syndata import (
    GenConfig,
    PoseSequence,
    corrupt_poses,
    gen_dataset,
    joint_pixels,
    load_array,
    load_manifest,
    load_sample,
    load_split,
    make_topology,
    parse_genconfig,
    pose_only_classes,
    save_array,
    eval_split_config,
    write_genconfig_text,
)


@pytest.fixture(scope="module")
def small_cfg():
    return GenConfig(class_count=4, samples_per_class=6, clip_frames=8,
                     appearance_pair_fraction=0.5, pixel_noise_std=0.05, seed=7)


@pytest.fixture(scope="module")
def small_dataset(small_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    manifest = gen_dataset(small_cfg, out)
    return small_cfg, out, manifest


class TestTopology:
    def test_default_skeleton(self):
        topo = make_topology(13)
        assert topo.joint_count == 13
        assert len(topo.edges) == 12
        a = topo.adjacency
        np.testing.assert_allclose(a, a.T)
        assert np.all(a >= 0)
        np.testing.assert_allclose(topo.row_normalized().sum(axis=1), 1.0)

    def test_generic_tree_connected(self):
        topo = make_topology(5)
        assert len(topo.edges) == 4
        np.testing.assert_allclose(topo.row_normalized().sum(axis=1), 1.0)


class TestVpsdFormat:
    def test_round_trip_bitwise(self, tmp_path):
        arr = np.random.default_rng(0).random((3, 5, 4)).astype(np.float32)
        path = tmp_path / "a.vpsd"
        save_array(path, arr)
        back = load_array(path)
        assert back.dtype == np.float32
        assert back.tobytes() == arr.tobytes()

    def test_truncated_file_is_malformed_header(self, tmp_path):
        path = tmp_path / "t.vpsd"
        save_array(path, np.zeros((2, 2), dtype=np.float32))
        blob = path.read_bytes()
        path.write_bytes(blob[:5])
        with pytest.raises(DataFormatError, match="malformed header"):
            load_array(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.vpsd"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(DataFormatError, match="malformed header"):
            load_array(path)

    def test_header_payload_shape_mismatch(self, tmp_path):
        # header claims 3x13x20 but payload carries 3x13x19 frames
        path = tmp_path / "s.vpsd"
        save_array(path, np.zeros((3, 13, 20), dtype=np.float32))
        blob = path.read_bytes()
        path.write_bytes(blob[:-4 * 3 * 13])
        with pytest.raises(DataFormatError, match="shape mismatch"):
            load_array(path)

    def test_non_finite_payload(self, tmp_path):
        path = tmp_path / "n.vpsd"
        arr = np.zeros((2, 2), dtype=np.float32)
        arr[0, 0] = np.nan
        header_only = np.zeros((2, 2), dtype=np.float32)
        save_array(path, header_only)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16] + arr.tobytes())
        with pytest.raises(DataFormatError, match="non-finite"):
            load_array(path)


class TestGeneration:
    def test_sample_count(self, small_dataset):
        cfg, _, manifest = small_dataset
        assert len(manifest) == cfg.class_count * cfg.samples_per_class

    def test_default_cfg_sample_count_arithmetic(self):
        cfg = GenConfig(class_count=8, samples_per_class=40)
        assert cfg.class_count * cfg.samples_per_class == 320

    def test_determinism_byte_identical(self, small_cfg, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        gen_dataset(small_cfg, a)
        gen_dataset(small_cfg, b)
        files_a = sorted(p.name for p in a.iterdir())
        assert files_a == sorted(p.name for p in b.iterdir())
        for name in files_a:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_distinct_seeds_distinct_payloads(self, small_cfg, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        gen_dataset(small_cfg, a)
        gen_dataset(dataclasses.replace(small_cfg, seed=small_cfg.seed + 1), b)
        clip = "train-00-000.clip.vpsd"
        assert (a / clip).read_bytes() != (b / clip).read_bytes()

    def test_sample_round_trip(self, small_dataset):
        _, _, manifest = small_dataset
        rec = manifest.samples[0]
        clip, pose = load_sample(rec.clip_path, rec.pose_path)
        clip2, pose2 = load_sample(rec.clip_path, rec.pose_path)
        assert clip.frames.tobytes() == clip2.frames.tobytes()
        assert pose.coords.tobytes() == pose2.coords.tobytes()
        assert clip.frames.shape == (3, 8, 32, 32)
        assert pose.coords.shape == (3, 13, 20)

    def test_manifest_round_trip(self, small_dataset):
        cfg, out, manifest = small_dataset
        loaded = load_manifest(out / "train_manifest.csv")
        assert loaded.class_count == cfg.class_count
        assert loaded.split == "train"
        assert loaded.config_hash == cfg.config_hash()
        assert [s.sample_id for s in loaded.samples] == [s.sample_id for s in manifest.samples]

    def test_splits_share_prototypes(self, small_cfg, tmp_path):
        # same seed, both splits: class prototypes agree; the per-class motion
        # signature (std over time, phase-invariant) matches across splits
        from vpnpp.syndata import class_prototypes

        protos_train = class_prototypes(small_cfg)
        protos_eval = class_prototypes(eval_split_config(small_cfg))
        for a, b in zip(protos_train, protos_eval):
            np.testing.assert_array_equal(a.amps, b.amps)
            np.testing.assert_array_equal(a.freqs, b.freqs)
            np.testing.assert_array_equal(a.phases, b.phases)
        # appearance pair mates share the pose prototype exactly
        assert small_cfg.appearance_pair_count == 1
        np.testing.assert_array_equal(protos_train[0].amps, protos_train[1].amps)

        out = tmp_path / "d"
        train = gen_dataset(small_cfg, out, split="train")
        test = gen_dataset(eval_split_config(small_cfg), out, split="test")
        _, poses_tr, labels_tr = load_split(train)
        _, poses_te, labels_te = load_split(test)
        k, other = pose_only_classes(small_cfg)[:2]

        def signature(poses, labels, cls):
            return poses[labels == cls].std(axis=3).mean(axis=0)  # (3, J)

        same = np.abs(signature(poses_tr, labels_tr, k) - signature(poses_te, labels_te, k)).mean()
        cross = np.abs(signature(poses_tr, labels_tr, k) - signature(poses_tr, labels_tr, other)).mean()
        assert same < 0.5 * cross

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            GenConfig(class_count=0).validate()
        with pytest.raises(ConfigError):
            GenConfig(appearance_pair_fraction=1.5).validate()

    def test_genconfig_file_round_trip(self, small_cfg, tmp_path):
        path = tmp_path / "gen.cfg"
        path.write_text(write_genconfig_text(small_cfg), encoding="utf-8")
        assert parse_genconfig(path) == small_cfg

    def test_genconfig_unknown_key(self, tmp_path):
        path = tmp_path / "gen.cfg"
        path.write_text("bogus = 3\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="unknown key"):
            parse_genconfig(path)


class TestSignalControl:
    def test_blob_argmax_within_one_pixel(self):
        # every rendered blob peaks within 1 px of its projected joint,
        # across random subpixel centers (checks projection + splatting)
        from vpnpp.syndata.generate import splat_blobs

        rng = np.random.default_rng(0)
        px = rng.uniform(2.0, 29.0, size=(200, 2))
        blobs = splat_blobs(px, 32, 32, amplitude=1.0)
        for j in range(200):
            r, c = np.unravel_index(blobs[j].argmax(), blobs[j].shape)
            assert abs(r - px[j, 0]) <= 1.0
            assert abs(c - px[j, 1]) <= 1.0

    def test_joints_recoverable_from_frames_when_separated(self, tmp_path):
        # strength 1, zero noise: frame-level per-joint argmax within 1 px on
        # the joint's render channel whenever the nearest same-channel joint
        # is at least 4 px away (merged blobs are not point-recoverable)
        cfg = GenConfig(class_count=2, samples_per_class=2, clip_frames=8,
                        pose_signal_strength=1.0, pixel_noise_std=0.0, seed=3)
        manifest = gen_dataset(cfg, tmp_path)
        from vpnpp.syndata.generate import _resample_time, joint_channels

        channels = joint_channels(13)
        checked = 0
        for rec in manifest.samples:
            clip, pose = load_sample(rec.clip_path, rec.pose_path)
            resampled = _resample_time(pose.coords, cfg.clip_frames)
            for t in range(cfg.clip_frames):
                px = joint_pixels(resampled[:, :, t], cfg.height, cfg.width)
                for j in range(13):
                    mates = np.where(channels == channels[j])[0]
                    mates = mates[mates != j]
                    if np.hypot(*(px[mates] - px[j]).T).min() < 4.0:
                        continue
                    frame = clip.frames[channels[j], t]
                    r0, c0 = px[j]
                    rr = slice(max(0, int(round(r0)) - 2), int(round(r0)) + 3)
                    cc = slice(max(0, int(round(c0)) - 2), int(round(c0)) + 3)
                    window = frame[rr, cc]
                    am = np.unravel_index(window.argmax(), window.shape)
                    assert abs(rr.start + am[0] - r0) <= 1.0 + 1e-9
                    assert abs(cc.start + am[1] - c0) <= 1.0 + 1e-9
                    checked += 1
        assert checked > 300  # the separated case must dominate

    def test_zero_strength_pose_classes_indistinguishable(self, tmp_path):
        # linear (ridge) probe on mean-pixel features as an independent oracle
        cfg = GenConfig(class_count=4, samples_per_class=60, clip_frames=8,
                        appearance_pair_fraction=0.5, pose_signal_strength=0.0,
                        pixel_noise_std=0.08, seed=11)
        train = gen_dataset(cfg, tmp_path, split="train")
        test = gen_dataset(eval_split_config(cfg), tmp_path, split="test")
        clips_tr, _, y_tr = load_split(train)
        clips_te, _, y_te = load_split(test)

        keep = np.isin(y_tr, pose_only_classes(cfg))
        keep_te = np.isin(y_te, pose_only_classes(cfg))
        classes = sorted(pose_only_classes(cfg))

        def features(clips):
            return clips.mean(axis=(2, 3, 4))  # per-channel mean pixel

        x_tr = features(clips_tr[keep])
        x_te = features(clips_te[keep_te])
        t_tr = np.searchsorted(classes, y_tr[keep])
        t_te = np.searchsorted(classes, y_te[keep_te])

        onehot = np.eye(len(classes))[t_tr]
        xa = np.hstack([x_tr, np.ones((len(x_tr), 1))])
        w, *_ = np.linalg.lstsq(xa.T @ xa + 1e-3 * np.eye(xa.shape[1]), xa.T @ onehot)
        pred = (np.hstack([x_te, np.ones((len(x_te), 1))]) @ w).argmax(axis=1)
        acc = (pred == t_te).mean()
        chance = 1.0 / len(classes)
        assert acc <= chance + 0.05

    def test_appearance_classes_stay_distinguishable_at_zero_strength(self, tmp_path):
        cfg = GenConfig(class_count=2, samples_per_class=10, clip_frames=8,
                        appearance_pair_fraction=1.0, pose_signal_strength=0.0,
                        pixel_noise_std=0.05, seed=5)
        manifest = gen_dataset(cfg, tmp_path)
        clips, _, labels = load_split(manifest)
        m0 = clips[labels == 0].mean(axis=(0, 2))
        m1 = clips[labels == 1].mean(axis=(0, 2))
        assert np.abs(m0 - m1).max() > 0.1


class TestCorruption:
    def _pose(self, seed=0):
        rng = np.random.default_rng(seed)
        topo = make_topology(13)
        coords = rng.uniform(-0.9, 0.9, size=(3, 13, 20)).astype(np.float32)
        return PoseSequence(coords, topo)

    def test_level_zero_identity(self):
        pose = self._pose()
        out = corrupt_poses(pose, 0.0, seed=4)
        np.testing.assert_array_equal(out.coords, pose.coords)
        assert out.coords is not pose.coords

    def test_determinism(self):
        pose = self._pose()
        a = corrupt_poses(pose, 0.5, seed=9)
        b = corrupt_poses(pose, 0.5, seed=9)
        np.testing.assert_array_equal(a.coords, b.coords)

    def test_level_out_of_range(self):
        with pytest.raises(ValueError):
            corrupt_poses(self._pose(), 1.5, seed=0)

    def test_occlusion_fraction_monte_carlo(self):
        # expected zeroed-joint fraction at level 1 is 0.5 +- 0.1 over 1000 seeds
        pose = self._pose()
        fractions = []
        for seed in range(1000):
            out = corrupt_poses(pose, 1.0, seed=seed)
            zeroed = np.all(out.coords == 0.0, axis=(0, 2))
            fractions.append(zeroed.mean())
        assert abs(np.mean(fractions) - 0.5) < 0.1

    def test_shape_and_scaling(self):
        pose = self._pose()
        lo = corrupt_poses(pose, 0.2, seed=13)
        hi = corrupt_poses(pose, 1.0, seed=13)
        assert lo.coords.shape == pose.coords.shape
        zer_lo = np.all(lo.coords == 0.0, axis=(0, 2)).sum()
        zer_hi = np.all(hi.coords == 0.0, axis=(0, 2)).sum()
        assert zer_lo <= zer_hi
