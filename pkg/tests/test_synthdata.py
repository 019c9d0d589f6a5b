import numpy as np
import pytest

from motionforge import synthdata as sd
from motionforge.synthdata import analyze, render


def nominal_factors(**overrides):
    base = dict(yaw=0.0, pitch=0.0, roll=0.0, x_pos=0.5, scale=1.0, aperture=0.5)
    base.update(overrides)
    return tuple(base[name] for name in sd.FACTOR_NAMES)


class TestRenderFactors:
    def test_closed_mouth_has_no_mouth_pixels(self):
        ident = sd.identity_for_index(7, 1)
        frame = sd.render_factors(ident, nominal_factors(aperture=0.0), 64)
        a = sd.analyze_frame(frame, ident)
        assert a.mouth_area == 0.0

    def test_deterministic(self):
        ident = sd.identity_for_index(7, 2)
        f1 = sd.render_factors(ident, nominal_factors(yaw=0.2), 64)
        f2 = sd.render_factors(ident, nominal_factors(yaw=0.2), 64)
        assert np.array_equal(f1, f2)

    def test_centroid_tracks_x_pos(self):
        # Pixel-moment oracle: centroids of two renders placed half a frame apart.
        ident = sd.identity_for_index(7, 0)
        left = sd.render_factors(ident, nominal_factors(x_pos=0.25), 64)
        right = sd.render_factors(ident, nominal_factors(x_pos=0.75), 64)
        dx = sd.analyze_frame(right).centroid_x - sd.analyze_frame(left).centroid_x
        assert dx == pytest.approx(32.0, abs=1.0)

    def test_out_of_range_factor_names_field(self):
        ident = sd.identity_for_index(7, 0)
        with pytest.raises(ValueError, match="yaw"):
            sd.render_factors(ident, nominal_factors(yaw=0.9), 64)
        with pytest.raises(ValueError, match="aperture"):
            sd.render_factors(ident, nominal_factors(aperture=1.5), 64)

    def test_bad_resolution_rejected(self):
        ident = sd.identity_for_index(7, 0)
        with pytest.raises(ValueError, match="resolution"):
            sd.render_factors(ident, nominal_factors(), 48)

    def test_mouth_height_proportional_to_aperture(self):
        ident = sd.identity_for_index(7, 0)
        areas = []
        for ap in (0.25, 0.5, 1.0):
            frame = sd.render_factors(ident, nominal_factors(aperture=ap), 64)
            areas.append(sd.analyze_frame(frame).mouth_area)
        assert areas[1] == pytest.approx(2.0 * areas[0], rel=0.08)
        assert areas[2] == pytest.approx(4.0 * areas[0], rel=0.08)


class TestGenClip:
    def test_deterministic(self):
        c1 = sd.gen_clip(3, 1, 8)
        c2 = sd.gen_clip(3, 1, 8)
        assert c1.identity == c2.identity
        assert np.array_equal(c1.control, c2.control)
        for f1, f2 in zip(c1.frames, c2.frames):
            assert np.array_equal(f1, f2)

    def test_length_contract(self):
        clip = sd.gen_clip(3, 0, 2)
        assert len(clip.frames) == 2
        assert len(clip.control) == 4

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            sd.gen_clip(3, 0, 1)

    def test_aperture_follows_control(self):
        clip = sd.gen_clip(9, 2, 500)
        paired = clip.control.reshape(-1, 2).mean(axis=1)
        r = np.corrcoef(clip.factors.aperture, paired)[0, 1]
        assert r > 0.99

    def test_control_in_unit_interval(self):
        clip = sd.gen_clip(5, 0, 200)
        assert clip.control.min() >= 0.0
        assert clip.control.max() <= 1.0

    def test_distinct_clip_indices_differ(self):
        c0 = sd.gen_clip(3, 1, 8, clip_index=0)
        c1 = sd.gen_clip(3, 1, 8, clip_index=1)
        assert not np.array_equal(c0.factors.yaw, c1.factors.yaw)


class TestExtractAttributes:
    def test_pose_is_identity_map(self):
        clip = sd.gen_clip(4, 0, 25)
        attrs = sd.extract_attributes(clip.factors)
        assert np.array_equal(attrs.pose[:, 0], clip.factors.yaw)
        assert np.array_equal(attrs.pose[:, 1], clip.factors.pitch)
        assert np.array_equal(attrs.pose[:, 2], clip.factors.roll)
        assert np.array_equal(attrs.camera[:, 0], clip.factors.x_pos)
        assert np.array_equal(attrs.camera[:, 1], clip.factors.scale)

    def test_constant_track(self):
        T = 10
        factors = sd.FactorTrack(
            yaw=np.full(T, 0.1),
            pitch=np.full(T, -0.2),
            roll=np.zeros(T),
            x_pos=np.full(T, 0.5),
            scale=np.full(T, 1.0),
            aperture=np.full(T, 0.3),
        )
        attrs = sd.extract_attributes(factors)
        assert np.ptp(attrs.pose, axis=0).max() == 0.0
        assert np.ptp(attrs.camera, axis=0).max() == 0.0

    def test_yaw_ramp_preserved(self):
        T = 25
        ramp = np.linspace(0.0, 0.6, T)
        factors = sd.FactorTrack(
            yaw=ramp,
            pitch=np.zeros(T),
            roll=np.zeros(T),
            x_pos=np.full(T, 0.5),
            scale=np.full(T, 1.0),
            aperture=np.zeros(T),
        )
        attrs = sd.extract_attributes(factors)
        assert np.array_equal(attrs.pose[:, 0], ramp)


class TestFactorRecovery:
    def test_recovery_on_corpus_frames(self):
        for id_index in (0, 3, 5):
            clip = sd.gen_clip(11, id_index, 30)
            for t in range(0, 30, 3):
                a = sd.analyze_frame(clip.frames[t], clip.identity)
                if a.clipped:
                    continue
                assert abs(a.x_pos_est - clip.factors.x_pos[t]) * 64 < 1.0
                assert abs(a.scale_est - clip.factors.scale[t]) / clip.factors.scale[t] < 0.03
                assert abs(a.aperture_est - clip.factors.aperture[t]) < 0.05

    def test_recovery_on_random_factors(self):
        rng = np.random.default_rng(1)
        clipped = 0
        total = 120
        for _ in range(total):
            ident = sd.identity_for_index(2, int(rng.integers(0, 14)))
            factors = tuple(
                rng.uniform(*sd.FACTOR_RANGES[name]) for name in sd.FACTOR_NAMES
            )
            frame = sd.render_factors(ident, factors, 64)
            a = sd.analyze_frame(frame, ident)
            if a.clipped:
                clipped += 1
                continue
            yaw, pitch, roll, x_pos, scale, aperture = factors
            assert abs(a.x_pos_est - x_pos) * 64 < 1.0
            assert abs(a.scale_est - scale) / scale < 0.03
            assert abs(a.aperture_est - aperture) < 0.05
        assert clipped / total < 0.10

    def test_yaw_estimate_monotone(self):
        ident = sd.identity_for_index(3, 4)
        ests = []
        for yaw in np.linspace(-0.6, 0.6, 9):
            frame = sd.render_factors(ident, nominal_factors(yaw=yaw, aperture=0.3), 64)
            ests.append(sd.analyze_frame(frame, ident).yaw_est)
        assert np.all(np.diff(ests) > 0)


class TestIdentitySeparability:
    @staticmethod
    def _descriptor(frames):
        body_color = np.mean([analyze.body_mean_color(f) for f in frames], axis=0)
        sizes = [analyze.analyze_frame(f).scale_proxy for f in frames]
        return np.concatenate([body_color * 10.0, [np.mean(sizes) / 5.0]])

    def test_nearest_centroid_identity_accuracy(self):
        n_ids, n_clips = 10, 4
        descs = {}
        for id_index in range(n_ids):
            descs[id_index] = [
                self._descriptor(sd.gen_clip(21, id_index, 6, clip_index=c).frames)
                for c in range(n_clips)
            ]
        correct = 0
        total = 0
        for id_index in range(n_ids):
            for held_out in range(n_clips):
                centroids = {}
                for other_id in range(n_ids):
                    pool = [
                        d
                        for c, d in enumerate(descs[other_id])
                        if not (other_id == id_index and c == held_out)
                    ]
                    centroids[other_id] = np.mean(pool, axis=0)
                query = descs[id_index][held_out]
                pred = min(centroids, key=lambda k: np.linalg.norm(query - centroids[k]))
                correct += pred == id_index
                total += 1
        assert correct == total

    def test_distinct_identity_specs(self):
        specs = [sd.identity_for_index(5, i) for i in range(50)]
        triples = {(s.shape_family, s.hue, s.base_size) for s in specs}
        assert len(triples) == 50


class TestStore:
    def test_clip_roundtrip(self, tmp_path):
        clip = sd.gen_clip(6, 1, 5)
        sd.save_clip(clip, tmp_path / "clip")
        loaded = sd.load_clip(tmp_path / "clip")
        assert loaded.identity == clip.identity
        assert np.allclose(loaded.control, clip.control)
        assert np.allclose(loaded.factors.yaw, clip.factors.yaw)
        assert len(loaded.frames) == len(clip.frames)
        # PNG quantization bounds the error at half a level.
        assert np.max(np.abs(loaded.frames[0] - clip.frames[0])) <= 0.5 / 255.0 + 1e-6

    def test_corpus_build_and_split(self, tmp_path):
        corpus = sd.build_corpus(tmp_path / "c", 17, n_ids=4, clips_per_id=5, frames_per_clip=4)
        assert len(corpus.entries) == 20
        assert len(corpus.clips("test")) == 2
        assert len(corpus.clips("train")) == 18
        assert corpus.n_identities == 4

    def test_corpus_determinism_byte_identical(self, tmp_path):
        kwargs = dict(corpus_seed=23, n_ids=2, clips_per_id=2, frames_per_clip=3)
        sd.build_corpus(tmp_path / "a", **kwargs)
        sd.build_corpus(tmp_path / "b", **kwargs)
        files_a = sorted((tmp_path / "a").rglob("*"))
        files_b = sorted((tmp_path / "b").rglob("*"))
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            if fa.is_file():
                assert fa.read_bytes() == fb.read_bytes(), fa.name

    def test_frames_reproducible_from_meta(self, tmp_path):
        clip = sd.gen_clip(8, 2, 3)
        sd.save_clip(clip, tmp_path / "clip")
        identity, factors, _ = sd.store.load_meta(tmp_path / "clip")
        re_rendered = sd.render_factors(identity, factors.at(1), 64)
        assert np.array_equal(re_rendered, clip.frames[1])
