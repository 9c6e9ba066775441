"""Feature files, clip averaging, and transition pairs.

Walks the data layer end to end: write a feature matrix to the binary
.trnf format, read it back, average frame-level rows into clips, and move
between per-clip labels and per-phase (begin, end) pairs.
"""

import tempfile
from pathlib import Path

import numpy as np

from phaseseek import (
    FeatureSequence,
    PhaseLabels,
    average_clips,
    labels_to_transitions,
    load_features,
    save_features,
    transitions_to_labels,
)

work = Path(tempfile.mkdtemp(prefix="phaseseek_demo_"))

# %% A video is a T x D matrix of clip feature vectors.  Fake one: 40
# "frames" of 8-dim features that drift over time.
rng = np.random.default_rng(0)
frames = rng.normal(size=(40, 8)) * 0.05 + np.linspace(0, 1, 40)[:, None]
frame_seq = FeatureSequence(frames, clip_len_frames=1, fps=2.4)

# %% Round-trip through the .trnf binary format (header + float32 payload).
path = work / "video.trnf"
save_features(frame_seq, path)
loaded = load_features(path)
print(f"wrote {path.stat().st_size} bytes; round-trip equal:",
      np.array_equal(loaded.features, frame_seq.features.astype(np.float32)))

# %% Collapse every 16 frames into one clip vector by averaging.  A
# trailing remainder shorter than 16 frames becomes one final clip.
clips = average_clips(frame_seq, 16)
print("frames", frame_seq.num_clips, "-> clips", clips.num_clips,
      "(two full clips of 16 plus one remainder clip of 8)")

# %% Per-clip labels convert to per-phase (begin, end) pairs and back.
labels = PhaseLabels(np.array([0, 0, 0, 1, 1, 2, 2, 2]), num_phases=3)
transitions = labels_to_transitions(labels)
print("transition pairs:", transitions.pairs)

recovered = transitions_to_labels(transitions, labels.num_clips)
print("round trip restores labels:",
      np.array_equal(recovered.labels, labels.labels))

# %% Pairs may overlap or leave gaps (as raw retrievals do); painting back
# resolves overlaps to the lowest phase id and marks gaps with the
# sentinel id (= number of phases).
from phaseseek import TransitionSet

ragged = TransitionSet(3, {0: (0, 3), 1: (2, 4)})
painted = transitions_to_labels(ragged, 8)
print("overlap + gap handling:", painted.labels.tolist(),
      "(sentinel id is", painted.sentinel, ")")
