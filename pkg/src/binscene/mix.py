"""Timeline assembly: place rendered clips at their start times and sum.

Summation order is ascending start sample with insertion order breaking
ties, start times quantize to the nearest sample, gaps stay zero, and a
single gain of 0.99/peak is applied (and reported) only when the mixed
peak exceeds 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MixerError, SampleRateMismatchError
from .render import BinauralClip


@dataclass(eq=False)
class Placement:
    clip: BinauralClip
    start_time: float

    def __post_init__(self):
        if self.start_time < 0:
            raise MixerError(f"start time must be >= 0, got {self.start_time}")

    def start_sample(self, sample_rate):
        return int(round(self.start_time * sample_rate))


@dataclass(eq=False)
class Timeline:
    sample_rate: int
    placements: list = field(default_factory=list)

    def add(self, clip, start_time):
        if clip.sample_rate != self.sample_rate:
            raise SampleRateMismatchError(
                f"clip rate {clip.sample_rate} != timeline rate {self.sample_rate}"
            )
        self.placements.append(Placement(clip, start_time))

    @property
    def total_samples(self):
        return max(
            (p.start_sample(self.sample_rate) + len(p.clip) for p in self.placements),
            default=0,
        )


@dataclass(eq=False)
class MixResult:
    """The mixed clip plus what the mixer did to it."""

    clip: BinauralClip
    peak: float
    applied_gain: float
    event_peaks: list


def mix(timeline):
    """Sum all placements into one BinauralClip, normalizing only on clip risk."""
    if not timeline.placements:
        raise MixerError("timeline holds no placements")
    total = timeline.total_samples
    out = np.zeros((2, total))
    order = sorted(
        range(len(timeline.placements)),
        key=lambda i: (
            timeline.placements[i].start_sample(timeline.sample_rate), i,
        ),
    )
    event_peaks = [0.0] * len(timeline.placements)
    for i in order:
        p = timeline.placements[i]
        start = p.start_sample(timeline.sample_rate)
        n = len(p.clip)
        out[0, start : start + n] += p.clip.left
        out[1, start : start + n] += p.clip.right
        event_peaks[i] = float(
            max(np.max(np.abs(p.clip.left), initial=0.0),
                np.max(np.abs(p.clip.right), initial=0.0))
        )
    peak = float(np.max(np.abs(out), initial=0.0))
    gain = 1.0
    if peak > 1.0:
        gain = 0.99 / peak
        out = out * gain
    return MixResult(
        BinauralClip(out[0], out[1], timeline.sample_rate),
        peak=peak,
        applied_gain=gain,
        event_peaks=event_peaks,
    )
