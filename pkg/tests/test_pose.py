"""Tests for pose models, normalization, pose files and the synthetic corpus."""

import struct

import numpy as np
import pytest
from conftest import make_pose

from sign_latent_tools.errors import ConfigError, DegenerateFrameError, PoseFormatError
from sign_latent_tools.pose import (
    DEFAULT_PARTITION,
    NUM_JOINTS,
    Articulator,
    ArticulatorPartition,
    PoseSequence,
    concat_articulators,
    crossfade_concat,
    export_corpus,
    generate_synthetic_corpus,
    load_corpus,
    load_pose,
    normalize_pose,
    pose_from_bytes,
    pose_to_bytes,
    rest_pose,
    save_pose,
    shoulder_widths,
    split_articulators,
    token_primitives,
)


class TestArticulatorPartition:
    """Joint ranges of the articulator regions."""

    def test_canonical_ranges(self):
        """Test the default layout of the 178 joints."""
        assert DEFAULT_PARTITION.range_of(Articulator.BODY) == (0, 8)
        assert DEFAULT_PARTITION.range_of(Articulator.LEFT_HAND) == (8, 29)
        assert DEFAULT_PARTITION.range_of(Articulator.RIGHT_HAND) == (29, 50)
        assert DEFAULT_PARTITION.range_of(Articulator.FACE) == (50, 178)
        assert DEFAULT_PARTITION.flat_width(Articulator.FACE) == 384

    def test_gap_rejected(self):
        """Test ranges must tile the joints without gaps."""
        with pytest.raises(PoseFormatError):
            ArticulatorPartition(left_hand=(9, 29))

    def test_short_partition_rejected(self):
        """Test ranges must cover exactly 178 joints."""
        with pytest.raises(PoseFormatError):
            ArticulatorPartition(face=(50, 170))


class TestPoseSequence:
    """Construction-time validation."""

    def test_wrong_joint_count(self):
        """Test frames with 177 joints are rejected."""
        with pytest.raises(PoseFormatError):
            PoseSequence(np.zeros((2, 177, 3)))

    def test_empty_sequence(self):
        """Test zero frames are rejected."""
        with pytest.raises(PoseFormatError):
            PoseSequence(np.zeros((0, NUM_JOINTS, 3)))

    def test_non_finite(self):
        """Test NaN coordinates are rejected."""
        frames = np.zeros((1, NUM_JOINTS, 3))
        frames[0, 5, 1] = np.nan
        with pytest.raises(PoseFormatError):
            PoseSequence(frames)


class TestNormalize:
    """Neck-centred, shoulder-scaled normalization."""

    def test_neck_at_origin_and_unit_shoulders(self, rng):
        """Test every normalized frame has the neck at 0 and shoulder width 1."""
        pose = PoseSequence(make_pose(rng, 5).frames * 3.0 + 7.0)
        normalized = normalize_pose(pose)
        np.testing.assert_allclose(normalized.frames[:, 0, :], 0.0, atol=1e-12)
        np.testing.assert_allclose(shoulder_widths(normalized.frames), 1.0, atol=1e-12)

    def test_translation_and_scale_invariant(self, rng):
        """Test shifting and uniformly scaling the input leaves the output unchanged."""
        pose = make_pose(rng, 4)
        moved = PoseSequence(pose.frames * 2.5 + np.array([0.3, -1.0, 4.0]))
        np.testing.assert_allclose(normalize_pose(moved).frames, normalize_pose(pose).frames, atol=1e-9)

    def test_idempotent(self, rng):
        """Test normalizing twice changes nothing beyond rounding."""
        once = normalize_pose(make_pose(rng, 4))
        twice = normalize_pose(once)
        np.testing.assert_allclose(once.frames, twice.frames, atol=1e-12)

    def test_degenerate_frame(self):
        """Test coincident shoulders raise DegenerateFrameError naming the frame."""
        frames = np.repeat(rest_pose()[None], 3, axis=0)
        frames[2, 2] = frames[2, 1]
        with pytest.raises(DegenerateFrameError) as info:
            normalize_pose(PoseSequence(frames))
        assert info.value.frame_index == 2

    def test_split_concat_round_trip(self, rng):
        """Test splitting into articulators and concatenating restores the frames."""
        pose = make_pose(rng, 3)
        regions = split_articulators(pose)
        assert regions[Articulator.RIGHT_HAND].shape == (3, 21, 3)
        np.testing.assert_array_equal(concat_articulators(regions).frames, pose.frames)

    def test_concat_missing_region(self, rng):
        """Test a missing articulator block is a format error."""
        regions = split_articulators(make_pose(rng, 2))
        del regions[Articulator.FACE]
        with pytest.raises(PoseFormatError):
            concat_articulators(regions)


class TestPoseFiles:
    """The binary pose file format."""

    def test_round_trip(self, tmp_path, rng):
        """Test float64 frames survive a save/load cycle exactly."""
        pose = make_pose(rng, 6)
        save_pose(tmp_path / "a.a2vp", pose)
        np.testing.assert_array_equal(load_pose(tmp_path / "a.a2vp").frames, pose.frames)

    def test_float32_preserved(self, rng):
        """Test 32-bit frames are stored as 32-bit."""
        pose = PoseSequence(make_pose(rng, 2).frames.astype(np.float32))
        loaded = pose_from_bytes(pose_to_bytes(pose))
        assert loaded.frames.dtype == np.float32
        assert len(pose_to_bytes(pose)) == struct.calcsize("<4sHIIB") + 2 * NUM_JOINTS * 3 * 4

    @pytest.mark.parametrize(
        ("mutate", "message"),
        [
            (lambda blob: blob[:10], "truncated header"),
            (lambda blob: b"XXXX" + blob[4:], "bad magic"),
            (lambda blob: blob[:4] + struct.pack("<H", 9) + blob[6:], "unsupported version"),
            (lambda blob: blob[:10] + struct.pack("<I", 100) + blob[14:], "joint count"),
            (lambda blob: blob[:-1], "truncated payload"),
            (lambda blob: blob + b"\x00" * 8, "trailing bytes"),
        ],
    )
    def test_malformed_files(self, mutate, message, rng):
        """Test every malformation raises PoseFormatError with a specific message."""
        blob = pose_to_bytes(make_pose(rng, 2))
        with pytest.raises(PoseFormatError, match=message):
            pose_from_bytes(mutate(blob))


class TestSyntheticCorpus:
    """The procedural token-primitive corpus."""

    def test_crossfade_length(self):
        """Test n segments of lengths L_i give sum(L_i) - 4(n - 1) frames."""
        segments = [np.zeros((8, 2)), np.ones((12, 2)), np.zeros((10, 2))]
        assert len(crossfade_concat(segments)) == 8 + 12 + 10 - 4 * 2

    def test_crossfade_blends_monotonically(self):
        """Test the ramp moves from the first segment to the second."""
        out = crossfade_concat([np.zeros((6, 1)), np.ones((6, 1))])
        ramp = out[2:6, 0]
        assert np.all(np.diff(ramp) > 0)
        assert 0.0 < ramp[0] and ramp[-1] < 1.0

    def test_crossfade_single_segment(self):
        """Test a single segment passes through unchanged."""
        segment = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(crossfade_concat([segment]), segment)

    def test_vocab_too_small(self):
        """Test a one-token vocabulary is rejected."""
        with pytest.raises(ConfigError):
            generate_synthetic_corpus(vocab_size=1, n_samples=3, max_tokens=2, seed=0)

    def test_deterministic(self):
        """Test the same arguments produce identical corpora."""
        first = generate_synthetic_corpus(vocab_size=3, n_samples=4, max_tokens=3, seed=11)
        second = generate_synthetic_corpus(vocab_size=3, n_samples=4, max_tokens=3, seed=11)
        for a, b in zip(first.samples, second.samples, strict=True):
            assert a.tokens == b.tokens
            np.testing.assert_array_equal(a.pose.frames, b.pose.frames)
        np.testing.assert_array_equal(first.embeddings, second.embeddings)

    def test_sample_lengths_follow_primitives(self, small_corpus):
        """Test each sentence's length is its primitives' total minus the crossfades."""
        for sample in small_corpus.samples:
            expected = sum(small_corpus.primitive_lengths[t] for t in sample.tokens) - 4 * (len(sample.tokens) - 1)
            assert sample.pose.length == expected
            assert 1 <= len(sample.tokens) <= 2

    def test_poses_are_normalized(self, small_corpus):
        """Test corpus poses have the neck at the origin and unit shoulder width."""
        for sample in small_corpus.samples:
            np.testing.assert_allclose(sample.pose.frames[:, 0, :], 0.0, atol=1e-12)
            np.testing.assert_allclose(shoulder_widths(sample.pose.frames), 1.0, atol=1e-12)

    def test_embeddings_unit_norm(self, small_corpus):
        """Test pseudo text embeddings are unit vectors of width 768."""
        assert small_corpus.embeddings.shape == (4, 768)
        np.testing.assert_allclose(np.linalg.norm(small_corpus.embeddings, axis=1), 1.0)

    def test_primitive_lengths_in_range(self):
        """Test primitives last between 8 and 16 frames."""
        assert all(8 <= len(p) <= 16 for p in token_primitives(5, seed=2))


class TestCorpusDirectory:
    """Exported corpus directories."""

    def test_round_trip(self, corpus_dir, small_corpus):
        """Test a loaded corpus matches the exported one."""
        loaded = load_corpus(corpus_dir)
        assert loaded.vocab_size == small_corpus.vocab_size
        assert [s.tokens for s in loaded.samples] == [s.tokens for s in small_corpus.samples]
        np.testing.assert_array_equal(loaded.samples[0].pose.frames, small_corpus.samples[0].pose.frames)
        np.testing.assert_array_equal(loaded.embeddings, small_corpus.embeddings)

    def test_identical_bytes(self, tmp_path, small_corpus):
        """Test exporting the same corpus twice writes identical files."""
        export_corpus(small_corpus, tmp_path / "a")
        export_corpus(small_corpus, tmp_path / "b")
        for path in sorted((tmp_path / "a").rglob("*")):
            if path.is_file():
                assert path.read_bytes() == (tmp_path / "b" / path.relative_to(tmp_path / "a")).read_bytes()

    def test_reexport_drops_old_pose_files(self, tmp_path, small_corpus):
        """Test exporting a smaller corpus over a larger one leaves only the indexed pose files."""
        out = tmp_path / "corpus"
        export_corpus(small_corpus, out)
        smaller = generate_synthetic_corpus(vocab_size=4, n_samples=2, max_tokens=2, seed=3)
        export_corpus(smaller, out)
        assert sorted(p.name for p in (out / "poses").iterdir()) == ["s0000.a2vp", "s0001.a2vp"]
        assert len(load_corpus(out).samples) == 2

    def test_missing_index(self, tmp_path):
        """Test a directory without index.json is rejected."""
        with pytest.raises(PoseFormatError, match="index not found"):
            load_corpus(tmp_path)
