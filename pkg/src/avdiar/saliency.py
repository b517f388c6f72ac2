"""Class activation maps and ROI-pooled visual active-speaker scores.

These are pure array operations: the network that produces the feature
maps and the gradients of its speech-presence score is outside this
package. Saliency is computed by weighting feature channels with the
spatio-temporal mean of their gradients and clamping at zero; a face
track's visual active-speaker score (VAS) is the mean saliency inside its
boxes over the frames that overlap a speech segment.

Tensors can be exchanged on disk as CSV-per-frame bundles described by a
JSON shape manifest, or bypassed entirely by supplying precomputed VAS
scores as an associations CSV.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .corpus import FaceTrack, SpeechSegment, TIME_EPS


def _check_frame_times(times: np.ndarray, frames: int):
    if times.shape != (frames,):
        raise ValueError(f"expected {frames} frame times, got {times.shape}")
    if np.any(np.diff(times) <= 0):
        raise ValueError("frame times must be strictly increasing")


@dataclass(frozen=True)
class FeatureStack:
    """Spatio-temporal feature maps: ``grid`` has shape (channels, T, H, W)."""

    grid: np.ndarray
    frame_times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=np.float64))
        object.__setattr__(self, "frame_times", np.asarray(self.frame_times, dtype=np.float64))
        if self.grid.ndim != 4 or min(self.grid.shape) < 1:
            raise ValueError(f"expected non-empty (m,T,H,W) grid, got {self.grid.shape}")
        _check_frame_times(self.frame_times, self.grid.shape[1])


@dataclass(frozen=True)
class GradientStack:
    """Gradients of the speech-presence score w.r.t. a paired FeatureStack."""

    grid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=np.float64))
        if self.grid.ndim != 4:
            raise ValueError(f"expected (m,T,H,W) grid, got {self.grid.shape}")


@dataclass(frozen=True)
class SaliencyMap:
    """Per-frame non-negative saliency: ``grid`` has shape (T, H, W)."""

    grid: np.ndarray
    frame_times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=np.float64))
        object.__setattr__(self, "frame_times", np.asarray(self.frame_times, dtype=np.float64))
        if self.grid.ndim != 3 or min(self.grid.shape) < 1:
            raise ValueError(f"expected non-empty (T,H,W) grid, got {self.grid.shape}")
        _check_frame_times(self.frame_times, self.grid.shape[0])
        if np.any(self.grid < 0):
            raise ValueError("saliency values must be non-negative")


def grad_cam(features: FeatureStack, grads: GradientStack) -> SaliencyMap:
    """Combine feature channels into a saliency map.

    Each channel weight is the mean of its gradients over the full
    (T, H, W) volume; the map is the ReLU of the weighted channel sum.
    Scaling all gradients by c >= 0 scales the pre-ReLU map, and hence the
    result, by exactly c.
    """
    if grads.grid.shape != features.grid.shape:
        raise ValueError(
            f"gradient shape {grads.grid.shape} != feature shape {features.grid.shape}"
        )
    alpha = grads.grid.mean(axis=(1, 2, 3))
    pre_relu = np.tensordot(alpha, features.grid, axes=(0, 0))
    return SaliencyMap(np.maximum(pre_relu, 0.0), features.frame_times)


def box_to_cells(box, height: int, width: int) -> tuple[slice, slice]:
    """Grid cells covered by a normalized box, as (row, column) slices.

    A cell is included when its center lies inside the box; a box too
    small to cover any center still scores via the single cell containing
    its own center.
    """
    col_centers = (np.arange(width) + 0.5) / width
    row_centers = (np.arange(height) + 0.5) / height
    cols = np.flatnonzero((col_centers >= box.x1) & (col_centers <= box.x2))
    rows = np.flatnonzero((row_centers >= box.y1) & (row_centers <= box.y2))
    if len(cols) == 0 or len(rows) == 0:
        cx, cy = box.center
        col = min(int(cx * width), width - 1)
        row = min(int(cy * height), height - 1)
        return slice(row, row + 1), slice(col, col + 1)
    return slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1)


def roi_pool_vas(cams: SaliencyMap, track: FaceTrack, segment: SpeechSegment) -> float:
    """Visual active-speaker score for a (track, segment) pair.

    For each saliency frame inside the track/segment overlap the mean
    value inside the track's box is taken (box from the track frame
    nearest in time, earlier frame on ties); the score is the mean over
    those frames. Constant maps therefore pool to the constant itself.
    """
    lo = max(segment.start, track.start)
    hi = min(segment.end, track.end)
    frame_idx = np.flatnonzero(
        (cams.frame_times >= lo - TIME_EPS) & (cams.frame_times <= hi + TIME_EPS)
    )
    if len(frame_idx) == 0:
        raise ValueError(
            f"empty ROI support: no saliency frames in [{lo}, {hi}] "
            f"for track {track.id} and segment {segment.id}"
        )
    _, height, width = cams.grid.shape
    per_frame = []
    for fi in frame_idx:
        box = track.box_at(float(cams.frame_times[fi]))
        rows, cols = box_to_cells(box, height, width)
        per_frame.append(float(cams.grid[fi, rows, cols].mean()))
    return float(np.mean(per_frame))


# ---------------------------------------------------------------------------
# CSV-per-frame bundles
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"


def save_tensor_bundle(directory: str, kind: str, grid: np.ndarray,
                       frame_times: np.ndarray) -> None:
    """Write a tensor as one CSV per frame plus a JSON shape manifest.

    ``kind`` is "cams" for (T,H,W) grids and "features" or "gradients"
    for (m,T,H,W) grids. File names are derived from the manifest, so a
    bundle is fully described by its directory.
    """
    grid = np.asarray(grid, dtype=np.float64)
    os.makedirs(directory, exist_ok=True)
    if kind == "cams":
        if grid.ndim != 3:
            raise ValueError("cams bundle needs a (T,H,W) grid")
        frames, height, width = grid.shape
        manifest = {"kind": kind, "frames": frames, "height": height, "width": width,
                    "frame_times": [float(t) for t in frame_times]}
        for fi in range(frames):
            _write_frame_csv(os.path.join(directory, f"f{fi:04d}.csv"), grid[fi])
    elif kind in ("features", "gradients"):
        if grid.ndim != 4:
            raise ValueError(f"{kind} bundle needs an (m,T,H,W) grid")
        channels, frames, height, width = grid.shape
        manifest = {"kind": kind, "channels": channels, "frames": frames,
                    "height": height, "width": width,
                    "frame_times": [float(t) for t in frame_times]}
        for ci in range(channels):
            for fi in range(frames):
                _write_frame_csv(
                    os.path.join(directory, f"c{ci:03d}_f{fi:04d}.csv"), grid[ci, fi])
    else:
        raise ValueError(f"unknown bundle kind {kind!r}")
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True)
        fh.write("\n")


def _write_frame_csv(path: str, frame: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in frame:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _read_frame_csv(path: str, height: int, width: int) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        rows = [[float(c) for c in line.split(",")] for line in fh if line.strip()]
    frame = np.array(rows, dtype=np.float64)
    if frame.shape != (height, width):
        raise ValueError(f"{path}: expected {height}x{width}, got {frame.shape}")
    return frame


def _load_manifest(directory: str) -> dict:
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_tensor_bundle(directory: str):
    """Load a bundle written by :func:`save_tensor_bundle`.

    Returns a FeatureStack, GradientStack, or SaliencyMap depending on the
    manifest kind (gradients come back as (stack, frame_times)).
    """
    manifest = _load_manifest(directory)
    kind = manifest["kind"]
    frames, height, width = manifest["frames"], manifest["height"], manifest["width"]
    times = np.asarray(manifest["frame_times"], dtype=np.float64)
    if kind == "cams":
        grid = np.stack([
            _read_frame_csv(os.path.join(directory, f"f{fi:04d}.csv"), height, width)
            for fi in range(frames)
        ])
        return SaliencyMap(grid, times)
    if kind in ("features", "gradients"):
        channels = manifest["channels"]
        grid = np.stack([
            np.stack([
                _read_frame_csv(
                    os.path.join(directory, f"c{ci:03d}_f{fi:04d}.csv"), height, width)
                for fi in range(frames)
            ])
            for ci in range(channels)
        ])
        if kind == "features":
            return FeatureStack(grid, times)
        return GradientStack(grid), times
    raise ValueError(f"unknown bundle kind {kind!r}")


def load_segment_cams(directory: str) -> SaliencyMap:
    """Saliency for one segment from its bundle directory.

    Accepts either a direct "cams" bundle or sibling "features"/
    "gradients" sub-bundles, which are combined via :func:`grad_cam`.
    """
    if os.path.exists(os.path.join(directory, MANIFEST_NAME)):
        loaded = load_tensor_bundle(directory)
        if not isinstance(loaded, SaliencyMap):
            raise ValueError(f"{directory}: expected a cams bundle")
        return loaded
    feat_dir = os.path.join(directory, "features")
    grad_dir = os.path.join(directory, "gradients")
    if os.path.isdir(feat_dir) and os.path.isdir(grad_dir):
        features = load_tensor_bundle(feat_dir)
        grads, _ = load_tensor_bundle(grad_dir)
        return grad_cam(features, grads)
    raise ValueError(f"{directory}: no cams manifest and no features/gradients pair")
