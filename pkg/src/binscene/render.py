"""Frame-wise binaural rendering.

Each frame of the mono input is Hann-windowed, transformed with a
zero-padded FFT, multiplied per ear and channel by
scale(c, k) * exp(-i * 2*pi*k/K * shift(c, k)), summed over channels,
inverse-transformed and overlap-added with a synthesis window.

The phase ramp is applied on the positive-frequency half and mirrored
(Nyquist forced real), so the inverse transform is real even for
fractional shifts. Per ear, the whole-sample part of the smallest total
shift is folded into the output placement; windows then travel with the
content, which keeps integer delays sample-exact and leaves only a
sub-sample residual (plus any per-bin spread) inside the frame. The
synthesis window and the overlap normalizer are evaluated at the
residual-shifted positions, so constant fractional delays reconstruct
exactly as well.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import PlanMismatchError, RendererError, ShapeMismatchError
from .sources import MonoClip
from .spatial import identity_field

_DEN_EPS = 1e-8


@dataclass(frozen=True)
class FramePlan:
    """Analysis/synthesis frame geometry shared by field and renderer."""

    frame_length: int = 1024
    hop: int = 512
    fft_size: int = 2048

    def __post_init__(self):
        if self.frame_length < 4 or self.frame_length % 2:
            raise RendererError("frame_length must be an even integer >= 4")
        if self.hop * 2 != self.frame_length:
            raise RendererError(
                "hop must be frame_length/2 (the Hann constant-overlap step)"
            )
        if self.fft_size < self.frame_length:
            raise RendererError("fft_size must be >= frame_length")
        if self.fft_size & (self.fft_size - 1):
            raise RendererError("fft_size must be a power of two")

    @property
    def window(self):
        # periodic Hann: w[n] = 0.5 * (1 - cos(2*pi*n/N)), exact COLA at hop N/2
        n = np.arange(self.frame_length)
        return 0.5 * (1.0 - np.cos(2.0 * math.pi * n / self.frame_length))

    def shifted_window(self, shift):
        """The Hann formula evaluated at (t - shift), t = 0..N inclusive."""
        t = np.arange(self.frame_length + 1) - shift
        w = 0.5 * (1.0 - np.cos(2.0 * math.pi * t / self.frame_length))
        w[(t < 0) | (t > self.frame_length)] = 0.0
        return w

    def frame_count(self, n_samples):
        """Frames covering n_samples, including one leading edge frame."""
        if n_samples < 1:
            raise RendererError("cannot frame an empty clip")
        return int(math.ceil(n_samples / self.hop)) + 1

    def frame_start(self, index):
        return (index - 1) * self.hop


@dataclass(eq=False)
class BinauralClip:
    """Left/right sample pair at one rate."""

    left: np.ndarray
    right: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=np.float64)
        self.right = np.asarray(self.right, dtype=np.float64)
        if self.left.shape != self.right.shape or self.left.ndim != 1:
            raise ValueError("left/right must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(self.left)) and np.all(np.isfinite(self.right))):
            raise ValueError("binaural samples must be finite")

    def __len__(self):
        return len(self.left)

    @property
    def channels(self):
        """(n, 2) view, left first."""
        return np.stack([self.left, self.right], axis=1)


def _apply_half(half_spectrum, scale_half, shift_half, fft_size):
    """Sum over channels of scale * exp(-i omega_k shift) * X on bins 0..K/2."""
    k = np.arange(half_spectrum.shape[-1])
    ramp = np.exp(-2j * math.pi * k * shift_half / fft_size)
    out = np.sum(scale_half * ramp * half_spectrum, axis=0)
    out[-1] = out[-1].real  # Nyquist must stay real
    return out


def apply_transfer(frame_spectrum, field, frame_index=0):
    """Apply one frame's transfer to a conjugate-symmetric K-point spectrum.

    Returns (2, K) complex spectra, conjugate symmetry re-imposed so their
    inverse transforms are real.
    """
    frame_spectrum = np.asarray(frame_spectrum)
    K = field.fft_size
    if frame_spectrum.shape != (K,):
        raise ShapeMismatchError(
            f"frame spectrum must have shape ({K},), got {frame_spectrum.shape}"
        )
    if not 0 <= frame_index < field.frames:
        raise ShapeMismatchError(
            f"frame index {frame_index} outside field with {field.frames} frames"
        )
    kh = K // 2 + 1
    half = frame_spectrum[:kh]
    out = np.empty((2, K), dtype=complex)
    for ear in range(2):
        y = _apply_half(
            half,
            field.scale[frame_index, ear, :, :kh],
            field.shift[frame_index, ear, :, :kh],
            K,
        )
        out[ear, :kh] = y
        out[ear, kh:] = np.conj(y[-2:0:-1])
    return out


def render_event(clip, field, plan, debug_dir=None):
    """Render one mono clip through a transfer field into a BinauralClip.

    Output length is len(clip) + ceil(max total shift), so delayed energy
    is never cut. With an identity field the output equals the input to
    machine precision (the WOLA identity).
    """
    if field.fft_size != plan.fft_size:
        raise PlanMismatchError(
            f"field fft_size {field.fft_size} != plan fft_size {plan.fft_size}"
        )
    x = clip.samples
    L = len(x)
    F = plan.frame_count(L)
    if field.frames != F:
        raise PlanMismatchError(
            f"field holds {field.frames} frames but the clip needs {F}"
        )
    N, H, K = plan.frame_length, plan.hop, plan.fft_size
    kh = K // 2 + 1
    w_analysis = plan.window
    max_shift = field.max_shift
    pad = int(math.ceil(max_shift))
    out_len = L + pad

    offset = H  # buffer index of sample 0; frame 0 starts at -H
    buf_len = offset + (F - 2) * H + pad + N + 2
    num = np.zeros((2, buf_len))
    den = np.zeros((2, buf_len))
    debug_mags = [[], []] if debug_dir else None

    for f in range(F):
        start = plan.frame_start(f)
        lo, hi = max(start, 0), min(start + N, L)
        seg = np.zeros(N)
        if hi > lo:
            seg[lo - start : hi - start] = x[lo:hi]
        X = np.fft.rfft(seg * w_analysis, n=K)
        for ear in range(2):
            phi = field.shift[f, ear, :, :kh]
            bulk = float(phi.min())
            d_int = int(math.floor(bulk))
            residual = phi - d_int
            y_half = _apply_half(X, field.scale[f, ear, :, :kh], residual, K)
            if debug_mags is not None:
                debug_mags[ear].append(np.abs(y_half))
            y = np.fft.irfft(y_half, n=K)
            if K == N:
                # no padding headroom: tap N is the circular wrap sample
                y_head = np.concatenate([y, y[:1]])
            else:
                y_head = y[: N + 1]
            w_shift = plan.shifted_window(bulk - d_int)
            pos = offset + start + d_int
            num[ear, pos : pos + N + 1] += y_head * w_shift
            den[ear, pos : pos + N + 1] += w_shift * w_shift

    den_safe = np.where(den > _DEN_EPS, den, 1.0)
    out = np.where(den > _DEN_EPS, num / den_safe, 0.0)
    out = out[:, offset : offset + out_len]
    if not np.all(np.isfinite(out)):
        raise RendererError("renderer produced non-finite samples")

    if debug_dir:
        os.makedirs(debug_dir, exist_ok=True)
        for ear, name in enumerate(("left", "right")):
            np.savetxt(
                os.path.join(debug_dir, f"frames_{name}.csv"),
                np.array(debug_mags[ear]),
                delimiter=",",
            )
    return BinauralClip(out[0], out[1], clip.sample_rate)


def wola_roundtrip(clip, plan):
    """Analysis + synthesis with an identity transfer; output == input."""
    field = identity_field(plan.frame_count(len(clip)), plan.fft_size)
    rendered = render_event(clip, field, plan)
    return MonoClip(rendered.left, clip.sample_rate)
