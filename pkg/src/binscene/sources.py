"""Mono source material for scene events.

Three interchangeable backends produce a MonoClip for an event label:

* corpus  - a directory of WAV files keyed by normalized label
* synth   - deterministic test signals (sine, noise, chirp, click)
* service - an HTTP text-to-audio endpoint returning WAV bytes

Every clip is fitted to the event duration before spatialization.
"""

from __future__ import annotations

import math
import os
import re
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.signal import resample_poly

import httpx

from . import audio_io
from .errors import (
    BadAudioPayloadError,
    LabelNotFoundError,
    ServiceUnreachableError,
    SourceError,
)

_PEAK = 0.5
_FADE_SECONDS = 0.005


@dataclass(eq=False)
class MonoClip:
    """A single-channel sample buffer at a fixed rate, amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise SourceError("MonoClip samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise SourceError("sample rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise SourceError("MonoClip samples must be finite")
        if self.samples.size and np.max(np.abs(self.samples)) > 1.0 + 1e-9:
            raise SourceError("MonoClip amplitude exceeds [-1, 1]")

    def __len__(self):
        return len(self.samples)

    @property
    def duration_seconds(self):
        return len(self.samples) / self.sample_rate


def normalize_label(label):
    """Lowercase, collapse non-alphanumerics to single underscores."""
    slug = re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_")
    return slug


def fit_duration(clip, duration):
    """Truncate or zero-pad a clip to round(duration * rate) samples.

    A truncation cut gets a 5 ms linear fade-out so edits never click.
    Exact-length clips pass through untouched, which makes the operation
    idempotent.
    """
    if duration <= 0:
        raise SourceError(f"target duration must be positive, got {duration}")
    target = int(round(duration * clip.sample_rate))
    n = len(clip.samples)
    if target == n:
        return clip
    if target < n:
        out = clip.samples[:target].copy()
        n_fade = min(int(round(_FADE_SECONDS * clip.sample_rate)), target)
        if n_fade > 0:
            out[-n_fade:] *= np.linspace(1.0, 0.0, n_fade)
        return MonoClip(out, clip.sample_rate)
    out = np.zeros(target)
    out[:n] = clip.samples
    return MonoClip(out, clip.sample_rate)


def synth_test_signal(kind, duration, sample_rate, seed=0, freq=440.0):
    """Deterministic test material with peak amplitude 0.5.

    kind is one of sine | noise | chirp | click.
    """
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    if kind == "sine":
        x = np.sin(2.0 * math.pi * freq * t)
    elif kind == "noise":
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(n)
    elif kind == "chirp":
        f0, f1 = 200.0, min(6000.0, 0.45 * sample_rate)
        # linear sweep, phase integrated analytically
        x = np.sin(2.0 * math.pi * (f0 * t + 0.5 * (f1 - f0) / duration * t * t))
    elif kind == "click":
        x = np.zeros(n)
        if n:
            x[0] = 1.0
    else:
        raise SourceError(f"unknown synth kind {kind!r}")
    peak = np.max(np.abs(x)) if n else 0.0
    if peak > 0:
        x = x * (_PEAK / peak)
    return MonoClip(x, sample_rate)


def resample_clip(clip, sample_rate):
    """Rational-factor resampling with a windowed-sinc polyphase filter."""
    if clip.sample_rate == sample_rate:
        return clip
    g = math.gcd(int(sample_rate), int(clip.sample_rate))
    up, down = sample_rate // g, clip.sample_rate // g
    out = resample_poly(clip.samples, up, down)
    out = np.clip(out, -1.0, 1.0)  # filter overshoot can graze the rails
    return MonoClip(out, sample_rate)


class CorpusBackend:
    """Looks up <normalized_label>.wav inside a directory."""

    def __init__(self, directory):
        self.directory = directory
        if not os.path.isdir(directory):
            raise SourceError(f"corpus directory not found: {directory}")

    def fetch(self, label, duration, sample_rate, seed=0):
        slug = normalize_label(label)
        path = os.path.join(self.directory, slug + ".wav")
        if not os.path.isfile(path):
            raise LabelNotFoundError(
                f"no corpus file for label {label!r}", label=label, path=path
            )
        samples, rate = audio_io.read_wav(path)
        if samples.ndim == 2:
            samples = samples.mean(axis=1)
        peak = np.max(np.abs(samples)) if samples.size else 0.0
        if peak > 1.0:
            samples = samples * (0.99 / peak)
        clip = MonoClip(samples, rate)
        clip = resample_clip(clip, sample_rate)
        return fit_duration(clip, duration)


class SynthBackend:
    """Maps labels to test signals; unknown labels get label-seeded noise.

    "tone 440" or "sine 440" select a sine at that frequency; "noise",
    "chirp" and "click" select those kinds. Anything else is noise seeded
    from crc32(label) so runs stay reproducible across platforms.
    """

    def __init__(self, seed=0):
        self.seed = seed

    def fetch(self, label, duration, sample_rate, seed=None):
        base = self.seed if seed is None else seed
        words = normalize_label(label).split("_")
        kind = words[0] if words else ""
        freq = 440.0
        if len(words) > 1:
            try:
                freq = float(words[1])
            except ValueError:
                pass
        if kind in ("tone", "sine"):
            return synth_test_signal("sine", duration, sample_rate, freq=freq)
        if kind in ("noise", "chirp", "click"):
            return synth_test_signal(kind, duration, sample_rate, seed=base)
        label_seed = (base ^ zlib.crc32(normalize_label(label).encode())) & 0xFFFFFFFF
        return synth_test_signal("noise", duration, sample_rate, seed=label_seed)


class ServiceBackend:
    """POSTs {text, duration_s, sample_rate} and expects WAV bytes back."""

    def __init__(self, url, timeout=60.0, api_key=None, transport=None):
        self.url = url
        self.timeout = timeout
        self.api_key = api_key or os.environ.get("BINSCENE_API_KEY")
        self._transport = transport

    def fetch(self, label, duration, sample_rate, seed=0):
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"text": label, "duration_s": duration, "sample_rate": sample_rate}
        try:
            with httpx.Client(timeout=self.timeout, transport=self._transport) as client:
                resp = client.post(self.url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise ServiceUnreachableError(
                f"audio service request failed: {exc}",
                stage="source-provider",
                url=self.url,
            )
        if resp.status_code != 200:
            raise ServiceUnreachableError(
                f"audio service returned HTTP {resp.status_code}",
                stage="source-provider",
                url=self.url,
            )
        try:
            samples, rate = audio_io.decode_wav(resp.content)
        except Exception:
            raise BadAudioPayloadError(
                "audio service reply is not decodable WAV", url=self.url
            )
        if samples.ndim == 2:
            samples = samples.mean(axis=1)
        peak = np.max(np.abs(samples)) if samples.size else 0.0
        if peak > 1.0:
            samples = samples * (0.99 / peak)
        clip = MonoClip(samples, rate)
        clip = resample_clip(clip, sample_rate)
        return fit_duration(clip, duration)


def make_backend(spec, seed=0, timeout=60.0, transport=None):
    """Build a backend from its CLI spelling.

    "synth", "corpus:<dir>" or "service:<url>".
    """
    if spec == "synth":
        return SynthBackend(seed=seed)
    if spec.startswith("corpus:"):
        return CorpusBackend(spec.split(":", 1)[1])
    if spec.startswith("service:"):
        url = spec.split(":", 1)[1] or os.environ.get("BINSCENE_TTA_URL", "")
        if not url:
            raise SourceError("service backend needs a URL (service:<url>)")
        return ServiceBackend(url, timeout=timeout, transport=transport)
    raise SourceError(
        f"unknown source backend {spec!r}; expected synth, corpus:<dir> or service:<url>"
    )


def fetch_mono(event, backend, sample_rate, seed=0):
    """One event's source material, already fitted to the event duration."""
    clip = backend.fetch(event.label, event.duration, sample_rate, seed=seed)
    if clip.sample_rate != sample_rate:
        clip = resample_clip(clip, sample_rate)
    return fit_duration(clip, event.duration)
