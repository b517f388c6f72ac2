"""Face pipeline vs the audio-only baseline when voices get messy.

The baseline clusters speech embeddings directly: refined cosine
affinity (row thresholding, symmetrization, diffusion, row-max
normalization), eigengap speaker-count estimate, then spectral
clustering. With clean voices that is perfectly adequate; the interesting
case is noisy voices and clean faces, where active-speaker face
clustering keeps working while the audio-only route falls apart.
"""

from avdiar import (SpectralParams, SynthSpec, compute_der, generate_corpus,
                    run_audio_baseline, run_pipeline)

for speech_noise in (0.05, 0.2, 0.4):
    spec = SynthSpec(characters=4, segments_per_character=30,
                     intra_spread=0.05, speech_intra_spread=speech_noise,
                     background_fraction=0.1, vas_noise=0.0, rng_seed=5)
    dataset, _, gt_vas = generate_corpus(spec)
    reference = list(dataset.segments)

    audio_hyp = run_audio_baseline(dataset, SpectralParams(rng_seed=0))
    audio_der = compute_der(reference, audio_hyp).der

    face_hyp = run_pipeline(dataset, vas_scores=gt_vas)
    face_der = compute_der(reference, face_hyp).der

    print(f"speech spread {speech_noise:.2f}: "
          f"audio-only DER={audio_der:.3f} (C={audio_hyp.num_clusters}), "
          f"face pipeline DER={face_der:.3f} (C={face_hyp.num_clusters})")
