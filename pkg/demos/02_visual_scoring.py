"""From feature maps to visual active-speaker scores.

A saliency map is built from a (channels, T, H, W) feature stack and the
gradients of a speech-presence score: each channel is weighted by the
mean of its gradients and the weighted sum is clamped at zero. A face
track is then scored by averaging the map inside its boxes over the
frames that overlap a speech segment (ROI pooling).

Here we fake a tiny episode where the speaking face sits in the bright
half of the map and a distractor face in the dark half.
"""

import numpy as np

from avdiar import (BoundingBox, FaceTrack, FeatureStack, GradientStack,
                    SpeechSegment, grad_cam, roi_pool_vas)

rng = np.random.default_rng(0)

# Two feature channels over 4 frames of an 8x8 grid. Channel 0 lights up
# the left half (where the speaker is), channel 1 is noise.
frames, height, width = 4, 8, 8
speaker_pattern = np.zeros((frames, height, width))
speaker_pattern[:, :, : width // 2] = 1.0
features = FeatureStack(
    np.stack([speaker_pattern, rng.uniform(size=(frames, height, width))]),
    frame_times=np.array([0.0, 0.4, 0.8, 1.2]),
)

# The speech-presence score reacts strongly to channel 0, barely to 1.
grads = GradientStack(np.stack([
    np.full((frames, height, width), 1.0),
    np.full((frames, height, width), 0.05),
]))

cams = grad_cam(features, grads)
print(f"saliency grid: {cams.grid.shape}, values in "
      f"[{cams.grid.min():.3f}, {cams.grid.max():.3f}]")

segment = SpeechSegment("ep_0", "ep", start=0.0, duration=1.5)
left_box = BoundingBox(0.05, 0.2, 0.45, 0.8)    # inside the bright half
right_box = BoundingBox(0.55, 0.2, 0.95, 0.8)   # inside the dark half
speaker = FaceTrack("spk_face", "ep", ((0.0, left_box), (1.2, left_box)))
distractor = FaceTrack("other_face", "ep", ((0.0, right_box), (1.2, right_box)))

vas_speaker = roi_pool_vas(cams, speaker, segment)
vas_distractor = roi_pool_vas(cams, distractor, segment)
print(f"VAS speaking face:   {vas_speaker:.3f}")
print(f"VAS distractor face: {vas_distractor:.3f}")
assert vas_speaker > vas_distractor
print("argmax over candidates picks the speaking face, as it should.")
