"""Spatialization: per-ear transfer fields from source geometry.

A TransferField holds, for every frame, ear, channel and FFT bin, a raw
scale, a raw shift in samples and a geometric delay in samples. The derived
quantities are

    shift = raw_shift + geometric_delay        (total delay per bin)
    scale = raw_scale / shift**2 where shift > 0, else raw_scale

Both backends choose raw_scale so that the derived scale equals the
physical target spectral_shape * (1 m / distance): doubling the distance
halves the amplitude, i.e. quarters the energy. The geometric delay is the
head-center propagation delay for both ears; interaural time structure
lives entirely in raw_shift, which keeps rendered ITDs on the Woodworth
value instead of double counting the ear-offset path difference.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass

import numpy as np

from . import audio_io
from .errors import (
    DegenerateDistanceError,
    GridTooSparseError,
    ResponseTooLongError,
    SpatializerError,
)
from .scene import normalize_azimuth

SPEED_OF_SOUND = 343.0      # m/s
HEAD_RADIUS = 0.0875        # m, spherical-head model
DISTANCE_FLOOR = 0.1        # m, bounds the distance gain
MIN_SOURCE_DISTANCE = 0.01  # m, closer than this is degenerate
MAX_AZ_GAP_DEG = 15.0       # densest grid the loader accepts

_EAR_SIGN = {"left": -1.0, "right": 1.0}


def _unit_direction(position):
    d = float(np.linalg.norm(position))
    if d < MIN_SOURCE_DISTANCE:
        raise DegenerateDistanceError(
            f"source sits {d:.4f} m from the head center, under the "
            f"{MIN_SOURCE_DISTANCE} m minimum",
            distance=d,
        )
    return np.asarray(position, dtype=float) / d, d


@dataclass(eq=False)
class TransferField:
    """Per-frame, per-ear, per-channel, per-bin transfer description."""

    raw_scale: np.ndarray       # (frames, 2, channels, fft_size), > 0
    raw_shift: np.ndarray       # samples, same shape, in [0, fft_size/2)
    geometric_delay: np.ndarray  # samples, (frames, 2)
    fft_size: int

    def __post_init__(self):
        self.raw_scale = np.asarray(self.raw_scale, dtype=float)
        self.raw_shift = np.asarray(self.raw_shift, dtype=float)
        self.geometric_delay = np.asarray(self.geometric_delay, dtype=float)
        if self.raw_scale.ndim != 4 or self.raw_scale.shape[1] != 2:
            raise SpatializerError(
                f"raw_scale must be (frames, 2, channels, fft_size), "
                f"got {self.raw_scale.shape}"
            )
        if self.raw_shift.shape != self.raw_scale.shape:
            raise SpatializerError("raw_scale and raw_shift shapes differ")
        if self.raw_scale.shape[3] != self.fft_size:
            raise SpatializerError(
                f"last axis {self.raw_scale.shape[3]} != fft_size {self.fft_size}"
            )
        if self.geometric_delay.shape != self.raw_scale.shape[:2]:
            raise SpatializerError("geometric_delay must be (frames, 2)")
        if not np.all(np.isfinite(self.raw_scale)) or np.any(self.raw_scale < 0):
            raise SpatializerError("raw_scale must be finite and non-negative")
        if np.any(self.raw_shift < 0) or np.any(self.raw_shift >= self.fft_size / 2):
            raise SpatializerError(
                "raw_shift must lie in [0, fft_size/2) samples"
            )
        if np.any(self.geometric_delay < 0):
            raise SpatializerError("geometric_delay must be non-negative")
        g = self.geometric_delay[:, :, None, None]
        self.shift = self.raw_shift + g
        # Zero total shift leaves the gain untouched; the substitute
        # denominator only dodges the 0/0, its branch is discarded.
        denom = np.where(self.shift > 0, self.shift, 1.0)
        self.scale = np.where(
            self.shift > 0, self.raw_scale / denom**2, self.raw_scale
        )

    @property
    def frames(self):
        return self.raw_scale.shape[0]

    @property
    def channels(self):
        return self.raw_scale.shape[2]

    @property
    def max_shift(self):
        return float(self.shift.max()) if self.shift.size else 0.0


def _field_from_target(target_scale, raw_shift, geom, fft_size):
    # Store raw_scale = target * shift^2 so scale == target while the
    # raw/derived identity holds to machine precision.
    shift = raw_shift + geom[:, :, None, None]
    return TransferField(target_scale * shift**2, raw_shift, geom, fft_size)


def identity_field(frames, fft_size, channels=1):
    """Unit scale, zero delay; the renderer's pass-through case."""
    shape = (frames, 2, channels, fft_size)
    return TransferField(
        np.ones(shape), np.zeros(shape), np.zeros((frames, 2)), fft_size
    )


def geometric_delay(pose, ear, sample_rate, head_radius=HEAD_RADIUS,
                    c_sound=SPEED_OF_SOUND):
    """Direct-path delay from the source to one ear, in samples.

    The ear sits at (0, +-head_radius, 0). Raises DegenerateDistanceError
    when the source is closer than 1 cm to the ear.
    """
    if ear not in _EAR_SIGN:
        raise SpatializerError(f"ear must be 'left' or 'right', got {ear!r}")
    offset = np.array([0.0, _EAR_SIGN[ear] * head_radius, 0.0])
    dist = float(np.linalg.norm(np.asarray(pose.position, dtype=float) - offset))
    if dist < MIN_SOURCE_DISTANCE:
        raise DegenerateDistanceError(
            f"source sits {dist:.4f} m from the {ear} ear, under the "
            f"{MIN_SOURCE_DISTANCE} m minimum",
            distance=dist,
            ear=ear,
        )
    return dist * sample_rate / c_sound


def woodworth_itd(position, head_radius=HEAD_RADIUS, c_sound=SPEED_OF_SOUND):
    """Spherical-head interaural delay a*(theta + sin theta)/c in seconds.

    theta is the lateral angle away from the median plane. Returns
    (itd_seconds, far_ear) where far_ear is 'left', 'right' or None on the
    median plane.
    """
    u, _ = _unit_direction(position)
    lateral = math.asin(min(1.0, abs(float(u[1]))))
    itd = head_radius * (lateral + math.sin(lateral)) / c_sound
    if u[1] > 0:
        return itd, "left"    # source to the right, left ear is far
    if u[1] < 0:
        return itd, "right"
    return 0.0, None


def head_shadow_magnitude(frequencies, cos_incidence, head_radius=HEAD_RADIUS,
                          c_sound=SPEED_OF_SOUND):
    """|H(f)| of the one-pole/one-zero spherical head shadow.

    H(f) = (1 + i*(f/f0)*alpha) / (1 + i*f/f0) with alpha = 1 + cos of the
    angle between the source direction and the ear axis, f0 = c/(2*pi*a).
    alpha goes to 0 on the far side (low-pass) and 2 toward the source.
    """
    f0 = c_sound / (2.0 * math.pi * head_radius)
    alpha = 1.0 + cos_incidence
    ratio = np.asarray(frequencies, dtype=float) / f0
    return np.sqrt(1.0 + (alpha * ratio) ** 2) / np.sqrt(1.0 + ratio**2)


def _mirror_half(half):
    """Extend values on bins 0..K/2 to all K bins of a real spectrum."""
    return np.concatenate([half, half[..., -2:0:-1]], axis=-1)


def parametric_field(pose, frames, fft_size, sample_rate,
                     head_radius=HEAD_RADIUS, c_sound=SPEED_OF_SOUND,
                     distance_floor=DISTANCE_FLOOR):
    """Spherical-head transfer field (single channel per ear).

    Near ear: flat magnitude, zero raw shift. Far ear: head-shadow low-pass
    and the Woodworth ITD. Both ears share the head-center geometric delay,
    and the derived scale is spectral_shape/max(distance, floor) so distance
    doubling quarters the energy. Front/back symmetric by construction.
    """
    u, d = _unit_direction(pose.position)
    g = d * sample_rate / c_sound
    itd_s, far = woodworth_itd(pose.position, head_radius, c_sound)
    itd_samples = itd_s * sample_rate

    half_bins = fft_size // 2 + 1
    freqs = np.arange(half_bins) * (sample_rate / fft_size)

    shape = np.ones((2, fft_size))
    raw_shift_ear = np.zeros(2)
    if far is not None:
        ear_idx = 0 if far == "left" else 1
        ear_axis_y = -1.0 if far == "left" else 1.0
        cos_inc = ear_axis_y * float(u[1])
        shape[ear_idx] = _mirror_half(
            head_shadow_magnitude(freqs, cos_inc, head_radius, c_sound)
        )
        raw_shift_ear[ear_idx] = itd_samples
    if np.any(raw_shift_ear >= fft_size / 2):
        raise SpatializerError("interaural shift exceeds the half-frame cap")

    d_eff = max(d, distance_floor)
    target = np.broadcast_to(
        (shape / d_eff)[None, :, None, :], (frames, 2, 1, fft_size)
    ).copy()
    raw_shift = np.broadcast_to(
        raw_shift_ear[None, :, None, None], (frames, 2, 1, fft_size)
    ).copy()
    geom = np.full((frames, 2), g)
    return _field_from_target(target, raw_shift, geom, fft_size)


# HRIR-backed fields


@dataclass(eq=False)
class HrirSet:
    """A direction grid of measured (or generated) head-related responses."""

    azimuths: np.ndarray        # degrees, sorted, in [-180, 180)
    elevations: np.ndarray      # degrees, sorted
    responses: np.ndarray       # (n_az, n_el, 2, taps)
    sample_rate: int

    def __post_init__(self):
        self.azimuths = np.asarray(self.azimuths, dtype=float)
        self.elevations = np.asarray(self.elevations, dtype=float)
        self.responses = np.asarray(self.responses, dtype=float)
        if self.responses.shape[:3] != (
            len(self.azimuths), len(self.elevations), 2,
        ):
            raise SpatializerError(
                f"responses shape {self.responses.shape} does not match the "
                f"{len(self.azimuths)} x {len(self.elevations)} x 2 grid"
            )
        if not np.all(np.isfinite(self.responses)):
            raise SpatializerError("HRIR responses must be finite")
        if np.any(np.diff(self.azimuths) <= 0) or np.any(np.diff(self.elevations) <= 0):
            raise SpatializerError("grid angles must be strictly increasing")
        gaps = np.diff(np.concatenate([self.azimuths, [self.azimuths[0] + 360.0]]))
        if len(self.azimuths) < 3 or np.max(gaps) > MAX_AZ_GAP_DEG + 1e-9:
            raise GridTooSparseError(
                f"azimuth grid must cover the full circle at <= "
                f"{MAX_AZ_GAP_DEG} deg spacing; widest gap is "
                f"{float(np.max(gaps)):.1f} deg",
                max_gap_deg=float(np.max(gaps)),
            )

    @property
    def taps(self):
        return self.responses.shape[3]

    def _az_bracket(self, az):
        az = normalize_azimuth(az)
        azs = self.azimuths
        idx = int(np.searchsorted(azs, az))
        lo = (idx - 1) % len(azs)
        hi = idx % len(azs)
        az_lo = azs[lo]
        span = (azs[hi] - az_lo) % 360.0
        t = 0.0 if span == 0 else ((az - az_lo) % 360.0) / span
        return lo, hi, t

    def _el_bracket(self, el):
        els = self.elevations
        if el <= els[0]:
            return 0, 0, 0.0
        if el >= els[-1]:
            return len(els) - 1, len(els) - 1, 0.0
        idx = int(np.searchsorted(els, el, side="right"))
        lo, hi = idx - 1, idx
        t = (el - els[lo]) / (els[hi] - els[lo])
        return lo, hi, t

    def interpolate(self, azimuth, elevation):
        """Bilinear blend of the four surrounding grid responses, (2, taps).

        On-grid queries return the stored pair exactly.
        """
        ai, aj, ta = self._az_bracket(azimuth)
        ei, ej, te = self._el_bracket(elevation)
        r = self.responses
        return (
            (1 - ta) * (1 - te) * r[ai, ei]
            + ta * (1 - te) * r[aj, ei]
            + (1 - ta) * te * r[ai, ej]
            + ta * te * r[aj, ej]
        )


def _fmt_angle(value):
    if float(value) == int(value):
        return str(int(value))
    return np.format_float_positional(float(value), unique=True, trim="-")


def save_hrir_dir(hrir_set, directory):
    """Write the on-disk layout: az<A>_el<E>.wav pairs plus index.txt."""
    os.makedirs(directory, exist_ok=True)
    lines = [f"sample_rate={hrir_set.sample_rate}"]
    for i, az in enumerate(hrir_set.azimuths):
        for j, el in enumerate(hrir_set.elevations):
            name = f"az{_fmt_angle(az)}_el{_fmt_angle(el)}.wav"
            audio_io.write_wav(
                os.path.join(directory, name),
                hrir_set.responses[i, j].T,  # (taps, 2)
                hrir_set.sample_rate,
                fmt="float32",
            )
            lines.append(f"{_fmt_angle(az)} {_fmt_angle(el)} {name}")
    with open(os.path.join(directory, "index.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_hrir_dir(directory):
    """Load a response grid saved by save_hrir_dir (or laid out like it)."""
    index_path = os.path.join(directory, "index.txt")
    if not os.path.isfile(index_path):
        raise SpatializerError(f"no index.txt in HRIR directory {directory}")
    entries = {}
    declared_rate = None
    with open(index_path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            m = re.match(r"^sample_rate\s*=\s*(\d+)$", line)
            if m:
                declared_rate = int(m.group(1))
                continue
            parts = line.split()
            if len(parts) != 3:
                raise SpatializerError(
                    f"index line must be '<az> <el> <file>', got {line!r}"
                )
            entries[(float(parts[0]), float(parts[1]))] = parts[2]
    if not entries:
        raise SpatializerError(f"index.txt in {directory} lists no responses")

    azimuths = np.array(sorted({normalize_azimuth(a) for a, _ in entries}))
    elevations = np.array(sorted({e for _, e in entries}))
    taps = None
    rate = declared_rate
    responses = np.zeros((len(azimuths), len(elevations), 2, 1))
    for (az, el), name in entries.items():
        samples, file_rate = audio_io.read_wav(os.path.join(directory, name))
        if samples.ndim != 2 or samples.shape[1] != 2:
            raise SpatializerError(f"{name} is not a stereo response")
        if taps is None:
            taps = samples.shape[0]
            responses = np.zeros((len(azimuths), len(elevations), 2, taps))
        elif samples.shape[0] != taps:
            raise SpatializerError("all responses must share one length")
        if rate is None:
            rate = file_rate
        elif file_rate != rate:
            raise SpatializerError("all responses must share one sample rate")
        i = int(np.searchsorted(azimuths, normalize_azimuth(az)))
        j = int(np.searchsorted(elevations, el))
        responses[i, j] = samples.T
    return HrirSet(azimuths, elevations, responses, rate)


def synthetic_hrir_set(sample_rate=16000, taps=64, az_step_deg=15.0,
                       elevations=None, head_radius=HEAD_RADIUS,
                       c_sound=SPEED_OF_SOUND):
    """A deterministic stand-in response grid for tests and templates.

    Each direction combines a Woodworth interaural delay, the spherical
    head-shadow magnitude per ear, an elevation-tracking spectral notch and
    a rear high-shelf cut, rendered as short linear-phase responses.
    """
    azimuths = np.arange(-180.0, 180.0, az_step_deg)
    if elevations is None:
        elevations = np.arange(-45.0, 91.0, 15.0)
    elevations = np.asarray(elevations, dtype=float)

    nfft = 4 * taps
    freqs = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    responses = np.zeros((len(azimuths), len(elevations), 2, taps))
    base_delay = 3.0  # samples, keeps responses causal after truncation

    for i, az in enumerate(azimuths):
        for j, el in enumerate(elevations):
            az_r, el_r = math.radians(az), math.radians(el)
            u = np.array(
                [
                    math.cos(el_r) * math.cos(az_r),
                    math.cos(el_r) * math.sin(az_r),
                    math.sin(el_r),
                ]
            )
            itd_s, far = woodworth_itd(u * 10.0, head_radius, c_sound)
            notch_center = 4000.0 + 2500.0 * (el / 90.0)
            notch = 1.0 - 0.6 * np.exp(-((freqs - notch_center) ** 2) / (2 * 700.0**2))
            rear = 1.0
            if abs(az) > 90.0:
                rear = 1.0 - 0.4 / (1.0 + np.exp(-(freqs - 3000.0) / 400.0))
            for ear_idx, ear in enumerate(("left", "right")):
                cos_inc = _EAR_SIGN[ear] * float(u[1])
                mag = head_shadow_magnitude(freqs, cos_inc, head_radius, c_sound)
                mag = mag * notch * rear
                delay = base_delay
                if far == ear:
                    delay += itd_s * sample_rate
                h = mag * np.exp(-2j * math.pi * freqs * delay / sample_rate)
                ir = np.fft.irfft(h, nfft)[:taps]
                ir[-16:] *= 0.5 * (1.0 + np.cos(np.linspace(0, math.pi, 16)))
                responses[i, j, ear_idx] = ir

    peak = np.max(np.abs(responses))
    responses *= 0.5 / peak
    return HrirSet(azimuths, elevations, responses, sample_rate)


def _group_delay(phase_half, fft_size):
    # tau(k) = -d(theta)/d(omega), omega = 2*pi*k/K, via the unwrapped phase
    dtheta = np.gradient(phase_half, axis=-1)
    return -dtheta * fft_size / (2.0 * math.pi)


def hrir_field(pose, frames, fft_size, hrir_set, sample_rate,
               c_sound=SPEED_OF_SOUND, distance_floor=DISTANCE_FLOOR):
    """Transfer field from an interpolated HRIR pair (one channel per ear).

    raw_scale carries the response magnitude, raw_shift its per-bin group
    delay (clipped into [0, fft_size/2)), and the geometric delay is the
    head-center propagation delay. Low-energy bins inherit the
    energy-weighted mean delay so unwrap noise never leaks into the field.
    """
    if hrir_set.sample_rate != sample_rate:
        raise SpatializerError(
            f"HRIR set rate {hrir_set.sample_rate} != render rate {sample_rate}"
        )
    if fft_size < 2 * hrir_set.taps:
        raise ResponseTooLongError(
            f"fft_size {fft_size} must be at least twice the response "
            f"length {hrir_set.taps}",
            taps=hrir_set.taps,
            fft_size=fft_size,
        )
    u, d = _unit_direction(pose.position)
    az = math.degrees(math.atan2(u[1], u[0]))
    el = math.degrees(math.asin(max(-1.0, min(1.0, float(u[2])))))
    pair = hrir_set.interpolate(az, el)

    spectra = np.fft.rfft(pair, n=fft_size)
    mag = np.abs(spectra)
    phase = np.unwrap(np.angle(spectra), axis=-1)
    tau = _group_delay(phase, fft_size)
    for ear in range(2):
        w = mag[ear] ** 2
        mean_tau = float(np.sum(w * tau[ear]) / np.sum(w)) if np.any(w) else 0.0
        weak = mag[ear] < 1e-4 * (mag[ear].max() if mag[ear].size else 0.0)
        tau[ear, weak] = mean_tau
    tau = np.clip(tau, 0.0, fft_size / 2 - 1e-6)

    g = d * sample_rate / c_sound
    d_eff = max(d, distance_floor)
    target = np.broadcast_to(
        _mirror_half(mag / d_eff)[None, :, None, :], (frames, 2, 1, fft_size)
    ).copy()
    raw_shift = np.broadcast_to(
        _mirror_half(tau)[None, :, None, :], (frames, 2, 1, fft_size)
    ).copy()
    geom = np.full((frames, 2), g)
    return _field_from_target(target, raw_shift, geom, fft_size)
