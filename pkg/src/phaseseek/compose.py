"""Merge per-phase transition pairs into one total clip labeling.

Each retrieved pair (begin, end) induces a normal density over clip indices
centered mid-phase with standard deviation a quarter of the phase span
(floored at ``sigma_min`` so zero-length phases stay well defined).  Every
clip takes the phase whose density is largest, so overlaps and gaps between
raw pairs resolve to a single total labeling.  Densities are normalized
(the 1/sigma factor matters across phases) and compared in log space; ties
break to the lowest phase id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PhaseseekError
from .features import PhaseLabels, TransitionSet

SIGMA_MIN = 0.5


@dataclass
class PhaseGaussian:
    """Clip-index normal density induced by one phase's transition pair."""

    phase: int
    center: float
    std: float

    @classmethod
    def from_pair(cls, phase: int, begin: int, end: int, sigma_min: float = SIGMA_MIN) -> "PhaseGaussian":
        if sigma_min <= 0:
            raise ValueError("sigma_min must be positive")
        return cls(
            phase=phase,
            center=(begin + end) / 2.0,
            std=max(abs(end - begin) / 4.0, sigma_min),
        )

    def log_density(self, clip_indices: np.ndarray) -> np.ndarray:
        z = (np.asarray(clip_indices, dtype=np.float64) - self.center) / self.std
        return -0.5 * z * z - np.log(self.std) - 0.5 * np.log(2.0 * np.pi)


def gaussian_compose(
    ts: TransitionSet, num_clips: int, sigma_min: float = SIGMA_MIN
) -> PhaseLabels:
    """Label every clip with the phase of maximal density.

    Absent phases never win; present phases must lie within the video.
    """
    if not ts.pairs:
        raise PhaseseekError("cannot compose an empty transition set")
    if num_clips < 1:
        raise PhaseseekError("num_clips must be >= 1")
    phases = ts.present_phases
    for phase in phases:
        begin, end = ts.pairs[phase]
        if end >= num_clips:
            raise PhaseseekError(f"phase {phase} pair ({begin}, {end}) exceeds video length {num_clips}")
    idx = np.arange(num_clips)
    scores = np.stack([
        PhaseGaussian.from_pair(phase, *ts.pairs[phase], sigma_min=sigma_min).log_density(idx)
        for phase in phases
    ])
    winners = np.argmax(scores, axis=0)  # first maximum wins: lowest phase id on ties
    labels = np.asarray(phases, dtype=np.int64)[winners]
    return PhaseLabels(labels, num_phases=ts.num_phases)
