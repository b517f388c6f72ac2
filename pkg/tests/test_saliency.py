import numpy as np
import pytest

from avdiar import (BoundingBox, FaceTrack, FeatureStack, GradientStack,
                    SaliencyMap, SpeechSegment, grad_cam, load_tensor_bundle,
                    roi_pool_vas, save_tensor_bundle)
from avdiar.saliency import box_to_cells, load_segment_cams


def grad_cam_oracle(features: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Scalar re-derivation: channel weights by explicit triple loops."""
    m, frames, height, width = features.shape
    z = frames * height * width
    out = np.zeros((frames, height, width))
    for t in range(frames):
        for i in range(height):
            for j in range(width):
                value = 0.0
                for c in range(m):
                    alpha = 0.0
                    for tt in range(frames):
                        for ii in range(height):
                            for jj in range(width):
                                alpha += grads[c, tt, ii, jj]
                    value += (alpha / z) * features[c, t, i, j]
                out[t, i, j] = max(0.0, value)
    return out


def _stack(grid, times=None):
    grid = np.asarray(grid, dtype=float)
    times = np.arange(grid.shape[1]) if times is None else times
    return FeatureStack(grid, times)


class TestGradCam:
    def test_identity_weights(self):
        features = _stack([[[[1.0, 0.0], [0.0, 1.0]]]])
        grads = GradientStack(np.ones((1, 1, 2, 2)))
        cam = grad_cam(features, grads)
        assert np.array_equal(cam.grid[0], [[1.0, 0.0], [0.0, 1.0]])

    def test_relu_clamps_negative_weights(self):
        features = _stack(np.ones((1, 1, 2, 2)))
        grads = GradientStack(-np.ones((1, 1, 2, 2)))
        cam = grad_cam(features, grads)
        assert np.array_equal(cam.grid, np.zeros((1, 2, 2)))

    def test_two_channel_hand_value(self):
        # alpha = (1, 0.5); pre-ReLU = 1*1 + 0.5*2 = 2 everywhere
        features = _stack(np.stack([np.ones((1, 2, 2)), 2.0 * np.ones((1, 2, 2))]))
        grads = GradientStack(np.stack([np.ones((1, 2, 2)), 0.5 * np.ones((1, 2, 2))]))
        cam = grad_cam(features, grads)
        assert np.allclose(cam.grid, 2.0)

    def test_matches_scalar_oracle(self, rng):
        features = rng.normal(size=(3, 2, 3, 4))
        grads = rng.normal(size=(3, 2, 3, 4))
        cam = grad_cam(_stack(features), GradientStack(grads))
        assert np.allclose(cam.grid, grad_cam_oracle(features, grads))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            grad_cam(_stack(np.ones((1, 1, 2, 2))), GradientStack(np.ones((1, 1, 2, 3))))

    def test_gradient_scaling_scales_map(self, rng):
        features = _stack(rng.normal(size=(2, 2, 3, 3)))
        grads = rng.normal(size=(2, 2, 3, 3))
        base = grad_cam(features, GradientStack(grads))
        scaled = grad_cam(features, GradientStack(2.5 * grads))
        assert np.allclose(scaled.grid, 2.5 * base.grid)

    def test_non_negative_output(self, rng):
        for _ in range(20):
            cam = grad_cam(_stack(rng.normal(size=(2, 1, 4, 4))),
                           GradientStack(rng.normal(size=(2, 1, 4, 4))))
            assert (cam.grid >= 0).all()


def _track(box, times=(0.0, 1.0), track_id="t1"):
    return FaceTrack(track_id, "ep", tuple((t, box) for t in times))


def _segment(start=0.0, duration=1.0):
    return SpeechSegment("ep_0", "ep", start, duration)


class TestBoxToCells:
    def test_half_box_covers_half_grid(self):
        rows, cols = box_to_cells(BoundingBox(0.0, 0.0, 0.5, 0.5), 2, 2)
        assert (rows, cols) == (slice(0, 1), slice(0, 1))

    def test_tiny_box_falls_back_to_center_cell(self):
        rows, cols = box_to_cells(BoundingBox(0.6, 0.6, 0.62, 0.62), 2, 2)
        assert (rows, cols) == (slice(1, 2), slice(1, 2))

    def test_full_box_covers_everything(self):
        rows, cols = box_to_cells(BoundingBox(0.0, 0.0, 1.0, 1.0), 3, 5)
        assert (rows, cols) == (slice(0, 3), slice(0, 5))


class TestRoiPoolVas:
    def test_constant_map_pools_to_constant(self):
        cams = SaliencyMap(np.full((3, 4, 4), 0.5), np.array([0.0, 0.4, 0.8]))
        vas = roi_pool_vas(cams, _track(BoundingBox(0.2, 0.3, 0.7, 0.9)), _segment())
        assert vas == pytest.approx(0.5)

    def test_mean_of_frame_means(self):
        grid = np.zeros((2, 2, 2))
        grid[0] = 0.2
        grid[1] = 0.4
        cams = SaliencyMap(grid, np.array([0.2, 0.8]))
        vas = roi_pool_vas(cams, _track(BoundingBox(0.0, 0.0, 1.0, 1.0)), _segment())
        assert vas == pytest.approx(0.3)

    def test_single_cell_roi_by_direct_indexing(self):
        grid = np.array([[[0.9, 0.1], [0.1, 0.1]]])
        cams = SaliencyMap(grid, np.array([0.5]))
        vas = roi_pool_vas(cams, _track(BoundingBox(0.0, 0.0, 0.5, 0.5)), _segment())
        assert vas == pytest.approx(grid[0, 0, 0])

    def test_no_overlapping_frames_rejected(self):
        cams = SaliencyMap(np.ones((1, 2, 2)), np.array([5.0]))
        with pytest.raises(ValueError, match="empty ROI support"):
            roi_pool_vas(cams, _track(BoundingBox(0.1, 0.1, 0.5, 0.5)), _segment())

    def test_nearest_track_frame_selected(self):
        # Frame at t=0 uses the left box, frame at t=1 the right box.
        grid = np.zeros((2, 1, 2))
        grid[0, 0] = [1.0, 0.0]
        grid[1, 0] = [0.0, 1.0]
        cams = SaliencyMap(grid, np.array([0.0, 1.0]))
        track = FaceTrack("t1", "ep", (
            (0.0, BoundingBox(0.0, 0.0, 0.5, 1.0)),
            (1.0, BoundingBox(0.5, 0.0, 1.0, 1.0)),
        ))
        vas = roi_pool_vas(cams, track, _segment(duration=1.5))
        assert vas == pytest.approx(1.0)

    def test_enlarging_box_keeps_bounds(self, rng):
        grid = np.abs(rng.normal(size=(2, 4, 4)))
        cams = SaliencyMap(grid, np.array([0.0, 0.5]))
        seg = _segment()
        small = roi_pool_vas(cams, _track(BoundingBox(0.3, 0.3, 0.5, 0.5)), seg)
        big = roi_pool_vas(cams, _track(BoundingBox(0.05, 0.05, 0.95, 0.95)), seg)
        bound = grid.max()
        assert 0.0 <= small <= bound
        assert 0.0 <= big <= bound


class TestTensorBundles:
    def test_cams_round_trip(self, tmp_path, rng):
        grid = np.abs(rng.normal(size=(2, 3, 4)))
        times = np.array([0.0, 0.5])
        save_tensor_bundle(str(tmp_path / "b"), "cams", grid, times)
        loaded = load_tensor_bundle(str(tmp_path / "b"))
        assert isinstance(loaded, SaliencyMap)
        assert np.array_equal(loaded.grid, grid)
        assert np.array_equal(loaded.frame_times, times)

    def test_features_round_trip(self, tmp_path, rng):
        grid = rng.normal(size=(2, 2, 3, 3))
        times = np.array([0.1, 0.6])
        save_tensor_bundle(str(tmp_path / "f"), "features", grid, times)
        loaded = load_tensor_bundle(str(tmp_path / "f"))
        assert isinstance(loaded, FeatureStack)
        assert np.array_equal(loaded.grid, grid)

    def test_segment_cams_from_features_and_gradients(self, tmp_path, rng):
        features = rng.normal(size=(2, 1, 2, 2))
        grads = rng.normal(size=(2, 1, 2, 2))
        times = np.array([0.0])
        save_tensor_bundle(str(tmp_path / "s" / "features"), "features", features, times)
        save_tensor_bundle(str(tmp_path / "s" / "gradients"), "gradients", grads, times)
        cams = load_segment_cams(str(tmp_path / "s"))
        expected = grad_cam(FeatureStack(features, times), GradientStack(grads))
        assert np.allclose(cams.grid, expected.grid)
