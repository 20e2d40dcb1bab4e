"""Evaluation metrics, localization cues and the reference render path.

The pair metric combines four weighted terms (sample-domain error, phase
error, interaural intensity error, multi-resolution spectral error) plus a
separately reported magnitude error. The direction oracle reads the
interaural time difference off a phase-transform cross-correlation, breaks
ties with the intensity difference, and classifies front/rear and
above/below by matching band spectra against an HRIR template grid.
reference_render deliberately shares no mechanism with the frame-wise
renderer: direct convolution plus a windowed-sinc delay line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    LengthMismatchError,
    MetricsError,
    RateMismatchError,
    TooShortError,
)
from .render import BinauralClip
from .spatial import DISTANCE_FLOOR, HEAD_RADIUS, SPEED_OF_SOUND, woodworth_itd

_EPS = 1e-12
MIN_DIRECTION_SECONDS = 0.25


@dataclass(frozen=True)
class MetricConfig:
    """Weights and analysis geometry for eval_pair."""

    w_l2: float = 1000.0
    w_phase: float = 1.0
    w_iid: float = 10.0
    w_stft: float = 1.0
    stft_resolutions: tuple = ((512, 128), (1024, 256), (2048, 512))
    phase_fft: int = 1024
    phase_hop: int = 256
    phase_gate_db: float = -60.0
    iid_frame: int = 1024
    iid_hop: int = 512

    def __post_init__(self):
        for name in ("w_l2", "w_phase", "w_iid", "w_stft"):
            if getattr(self, name) < 0:
                raise MetricsError(f"{name} must be >= 0")
        if not self.stft_resolutions:
            raise MetricsError("stft_resolutions must not be empty")
        for nfft, hop in self.stft_resolutions:
            if nfft < 8 or not 0 < hop <= nfft:
                raise MetricsError(f"bad STFT resolution ({nfft}, {hop})")


@dataclass(frozen=True)
class MetricReport:
    """All metric terms for one prediction/reference pair."""

    l2: float
    phase_l1: float
    iid_l2: float
    stft: float
    mag_l1: float
    total: float

    def to_dict(self):
        return {
            "l2": self.l2,
            "phase_l1": self.phase_l1,
            "iid_l2": self.iid_l2,
            "stft": self.stft,
            "mag_l1": self.mag_l1,
            "total": self.total,
        }


def _hann(n):
    return 0.5 * (1.0 - np.cos(2.0 * math.pi * np.arange(n) / n))


def _stft(x, nfft, hop):
    """Magnitude-normalized STFT: a full-scale sine peaks near 1 per bin."""
    n = len(x)
    frames = max(1, 1 + math.ceil(max(0, n - nfft) / hop))
    padded = np.zeros((frames - 1) * hop + nfft)
    padded[:n] = x
    idx = np.arange(nfft)[None, :] + hop * np.arange(frames)[:, None]
    w = _hann(nfft)
    spec = np.fft.rfft(padded[idx] * w, axis=1)
    return spec / (w.sum() / 2.0)


def _frame_energies(x, frame, hop):
    n = len(x)
    frames = max(1, 1 + math.ceil(max(0, n - frame) / hop))
    padded = np.zeros((frames - 1) * hop + frame)
    padded[:n] = x
    idx = np.arange(frame)[None, :] + hop * np.arange(frames)[:, None]
    return np.sum(padded[idx] ** 2, axis=1)


def _wrap_phase(p):
    return np.mod(p + math.pi, 2.0 * math.pi) - math.pi


def eval_pair(pred, ref, config=None):
    """Score a predicted BinauralClip against a reference of equal shape.

    total = w_l2 * l2 + w_phase * phase_l1 + w_iid * iid_l2 + w_stft * stft;
    mag_l1 is reported alongside but not folded into the total. Evaluating
    a clip against itself yields exact zeros everywhere.
    """
    config = config or MetricConfig()
    if pred.sample_rate != ref.sample_rate:
        raise RateMismatchError(
            f"sample rates differ: {pred.sample_rate} vs {ref.sample_rate}"
        )
    if len(pred) != len(ref):
        raise LengthMismatchError(
            f"lengths differ: {len(pred)} vs {len(ref)} samples"
        )
    if len(pred) == 0:
        raise TooShortError("cannot evaluate empty clips")

    pred_ch = (pred.left, pred.right)
    ref_ch = (ref.left, ref.right)

    l2 = float(
        np.mean([math.sqrt(np.mean((p - r) ** 2)) for p, r in zip(pred_ch, ref_ch)])
    )

    gate = 10.0 ** (config.phase_gate_db / 20.0)
    phase_terms = []
    mag_terms = []
    for p, r in zip(pred_ch, ref_ch):
        sp = _stft(p, config.phase_fft, config.phase_hop)
        sr_ = _stft(r, config.phase_fft, config.phase_hop)
        mask = (np.abs(sp) >= gate) & (np.abs(sr_) >= gate)
        if np.any(mask):
            diff = _wrap_phase(np.angle(sp[mask]) - np.angle(sr_[mask]))
            phase_terms.append(float(np.mean(np.abs(diff))))
        else:
            phase_terms.append(0.0)
        mag_terms.append(float(np.mean(np.abs(np.abs(sp) - np.abs(sr_)))))
    phase_l1 = float(np.mean(phase_terms))
    mag_l1 = float(np.mean(mag_terms))

    def iid_track(left, right):
        el = _frame_energies(left, config.iid_frame, config.iid_hop)
        er = _frame_energies(right, config.iid_frame, config.iid_hop)
        return 10.0 * np.log10((el + _EPS) / (er + _EPS))

    iid_diff = iid_track(pred.left, pred.right) - iid_track(ref.left, ref.right)
    iid_l2 = float(math.sqrt(np.mean(iid_diff**2)))

    stft_total = 0.0
    for nfft, hop in config.stft_resolutions:
        per_channel = []
        for p, r in zip(pred_ch, ref_ch):
            mp = np.abs(_stft(p, nfft, hop))
            mr = np.abs(_stft(r, nfft, hop))
            sc = float(np.linalg.norm(mr - mp) / max(np.linalg.norm(mr), _EPS))
            logmag = float(np.mean(np.abs(np.log(mr + _EPS) - np.log(mp + _EPS))))
            per_channel.append(sc + logmag)
        stft_total += float(np.mean(per_channel))

    total = (
        config.w_l2 * l2
        + config.w_phase * phase_l1
        + config.w_iid * iid_l2
        + config.w_stft * stft_total
    )
    return MetricReport(l2, phase_l1, iid_l2, stft_total, mag_l1, total)


def gcc_phat(left, right, max_lag_samples):
    """Phase-transform cross-correlation lag between two channels.

    Returns (lag, peak_value). A positive lag means the right channel lags
    the left one, i.e. the source sits on the left. Sub-sample resolution
    comes from parabolic interpolation around the peak.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    n = len(left) + len(right)
    X = np.fft.rfft(left, n=n)
    Y = np.fft.rfft(right, n=n)
    cross = X * np.conj(Y)
    cross /= np.maximum(np.abs(cross), _EPS)
    cc = np.fft.irfft(cross, n=n)
    m = int(max_lag_samples)
    # cc index (-tau) mod n peaks when the right channel lags by tau
    taus = np.arange(-m, m + 1)
    values = cc[(-taus) % n]
    i = int(np.argmax(values))
    tau = float(taus[i])
    if 0 < i < len(values) - 1:
        a, b, c = values[i - 1], values[i], values[i + 1]
        denom = a - 2.0 * b + c
        if abs(denom) > _EPS:
            tau += 0.5 * (a - c) / denom
    return tau, float(values[i])


@dataclass(frozen=True)
class DirectionEstimate:
    """Where a binaural clip appears to come from."""

    left_right: str           # "left" | "right"
    front_rear: str           # "front" | "rear" | "unknown"
    above_below: str          # "above" | "below" | "unknown"
    confidence: float
    itd_seconds: float        # positive when the right channel lags
    ild_db: float             # 10*log10(E_right / E_left)
    matched_azimuth: float | None = None
    matched_elevation: float | None = None

    def to_dict(self):
        return {
            "left_right": self.left_right,
            "front_rear": self.front_rear,
            "above_below": self.above_below,
            "confidence": self.confidence,
            "itd_seconds": self.itd_seconds,
            "ild_db": self.ild_db,
            "matched_azimuth": self.matched_azimuth,
            "matched_elevation": self.matched_elevation,
        }


def _band_centers(sample_rate, n_bands=20):
    top = min(7200.0, 0.45 * sample_rate)
    return np.geomspace(400.0, top, n_bands)


def _band_levels(power, freqs, centers):
    """Mean power near each band center, in dB."""
    levels = np.empty(len(centers))
    for i, c in enumerate(centers):
        sel = np.abs(freqs - c) <= c / 6.0
        if not np.any(sel):
            sel = np.argmin(np.abs(freqs - c))
        levels[i] = 10.0 * np.log10(np.mean(power[sel]) + _EPS)
    return levels


def _clip_band_features(clip, centers):
    nfft = 512
    feats = []
    for x in (clip.left, clip.right):
        spec = _stft(x, nfft, nfft // 2)
        power = np.mean(np.abs(spec) ** 2, axis=0)
        freqs = np.fft.rfftfreq(nfft, 1.0 / clip.sample_rate)
        feats.append(_band_levels(power, freqs, centers))
    return np.array(feats)


def _template_features(hrir_set, centers):
    nfft = 512
    freqs = np.fft.rfftfreq(nfft, 1.0 / hrir_set.sample_rate)
    n_az, n_el = len(hrir_set.azimuths), len(hrir_set.elevations)
    feats = np.empty((n_az, n_el, 2, len(centers)))
    for i in range(n_az):
        for j in range(n_el):
            for ear in range(2):
                power = np.abs(np.fft.rfft(hrir_set.responses[i, j, ear], nfft)) ** 2
                feats[i, j, ear] = _band_levels(power, freqs, centers)
    return feats


def estimate_direction(clip, hrir_set=None, head_radius=HEAD_RADIUS,
                       c_sound=SPEED_OF_SOUND):
    """Coarse direction labels for a binaural clip.

    Left/right comes from the GCC-PHAT lag sign (intensity difference as
    tie-break). Front/rear and above/below need spectral templates: with no
    HrirSet they are reported as "unknown". Clips shorter than 0.25 s raise
    TooShortError. The spectral match assumes broadband source material.
    """
    sr = clip.sample_rate
    if len(clip) < MIN_DIRECTION_SECONDS * sr:
        raise TooShortError(
            f"direction estimation needs at least {MIN_DIRECTION_SECONDS} s, "
            f"got {len(clip) / sr:.3f} s"
        )
    max_lag = max(2.0, 1e-3 * sr)
    itd_samples, _peak = gcc_phat(clip.left, clip.right, max_lag)
    itd_seconds = itd_samples / sr

    energy_l = float(np.mean(clip.left**2))
    energy_r = float(np.mean(clip.right**2))
    ild_db = 10.0 * math.log10((energy_r + _EPS) / (energy_l + _EPS))

    if abs(itd_samples) >= 0.5:
        left_right = "left" if itd_samples > 0 else "right"
    elif abs(ild_db) >= 0.5:
        left_right = "right" if ild_db > 0 else "left"
    else:
        left_right = "left" if itd_samples > 0 else "right"

    itd_full, _ = woodworth_itd(np.array([0.0, 1.0, 0.0]), head_radius, c_sound)
    itd_conf = min(1.0, abs(itd_seconds) / itd_full)
    ild_conf = min(1.0, abs(ild_db) / 10.0)
    confidence = max(itd_conf, ild_conf)

    front_rear = "unknown"
    above_below = "unknown"
    matched_az = matched_el = None
    if hrir_set is not None:
        centers = _band_centers(sr)
        clip_feats = _clip_band_features(clip, centers)
        templates = _template_features(hrir_set, centers)
        clip_diff = clip_feats[0] - clip_feats[1]
        clip_mono = np.mean(clip_feats, axis=0)
        clip_mono = clip_mono - clip_mono.mean()
        tmpl_diff = templates[:, :, 0] - templates[:, :, 1]
        tmpl_mono = np.mean(templates, axis=2)
        tmpl_mono = tmpl_mono - tmpl_mono.mean(axis=-1, keepdims=True)
        dist = np.mean((tmpl_diff - clip_diff) ** 2, axis=-1) + np.mean(
            (tmpl_mono - clip_mono) ** 2, axis=-1
        )
        i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
        matched_az = float(hrir_set.azimuths[i])
        matched_el = float(hrir_set.elevations[j])
        front_rear = "front" if abs(matched_az) <= 90.0 else "rear"
        if matched_el > 0:
            above_below = "above"
        elif matched_el < 0:
            above_below = "below"

    return DirectionEstimate(
        left_right=left_right,
        front_rear=front_rear,
        above_below=above_below,
        confidence=confidence,
        itd_seconds=itd_seconds,
        ild_db=ild_db,
        matched_azimuth=matched_az,
        matched_elevation=matched_el,
    )


def sinc_delay(x, delay_samples, taps=81, beta=12.0):
    """Delay a signal by a (possibly fractional) number of samples.

    Whole samples become leading zeros; the fractional remainder goes
    through a Kaiser-windowed sinc interpolator with unity DC gain.
    """
    if delay_samples < 0:
        raise MetricsError("delay must be non-negative")
    d_int = int(math.floor(delay_samples))
    frac = delay_samples - d_int
    x = np.asarray(x, dtype=float)
    if frac == 0.0:
        return np.concatenate([np.zeros(d_int), x])
    center = (taps - 1) // 2
    j = np.arange(taps)
    kernel = np.sinc(j - center - frac) * np.kaiser(taps, beta)
    kernel /= kernel.sum()
    y = np.convolve(x, kernel)[center:]
    return np.concatenate([np.zeros(d_int), y])


def reference_render(clip, pose, hrir_set, c_sound=SPEED_OF_SOUND,
                     distance_floor=DISTANCE_FLOOR):
    """Benchmark binaural render: direct HRIR convolution + distance delay.

    Amplitude scales with 1 m / max(distance, floor) to match the
    renderer's distance convention. Kept free of FFT-domain machinery so
    it can serve as an independent comparison path.
    """
    d = pose.distance
    u = pose.position / max(d, _EPS)
    az = math.degrees(math.atan2(u[1], u[0]))
    el = math.degrees(math.asin(max(-1.0, min(1.0, float(u[2])))))
    pair = hrir_set.interpolate(az, el)
    delay = d * clip.sample_rate / c_sound
    gain = 1.0 / max(d, distance_floor)
    channels = []
    for ear in range(2):
        y = np.convolve(clip.samples, pair[ear])
        channels.append(sinc_delay(y, delay) * gain)
    n = max(len(c) for c in channels)
    padded = [np.concatenate([c, np.zeros(n - len(c))]) for c in channels]
    return BinauralClip(padded[0], padded[1], clip.sample_rate)
