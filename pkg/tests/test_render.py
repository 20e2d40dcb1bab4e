"""Frame plans, transfer application and WOLA synthesis."""

import math

import numpy as np
import pytest
from scipy.signal import firwin

from binscene.errors import PlanMismatchError, RendererError, ShapeMismatchError
from binscene.render import (
    BinauralClip,
    FramePlan,
    apply_transfer,
    render_event,
    wola_roundtrip,
)
from binscene.sources import MonoClip
from binscene.spatial import TransferField, identity_field

SR = 16000


def _band_noise(n, seed=11, lo=200.0, hi=6000.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    h = firwin(255, [lo, hi], pass_zero=False, fs=SR)
    xb = np.convolve(x, h, mode="same")
    return 0.5 * xb / np.abs(xb).max()


def _delay_field(frames, fft_size, shift, channels=1):
    """Unit-gain pure delay: raw_scale = shift^2 cancels the built-in 1/phi^2."""
    shape = (frames, 2, channels, fft_size)
    rshift = np.full(shape, float(shift))
    scale = rshift**2 if shift > 0 else np.ones(shape)
    return TransferField(scale, rshift, np.zeros((frames, 2)), fft_size)


def _oracle_delay(x, delay, taps=257):
    """Hann-windowed-sinc fractional delay, written independently here."""
    d_int = int(math.floor(delay))
    frac = delay - d_int
    half = taps // 2
    j = np.arange(taps) - half
    kernel = np.sinc(j - frac) * np.hanning(taps)
    kernel /= kernel.sum()
    y = np.convolve(x, kernel)
    out = np.zeros(d_int + len(x) + half + 1)
    hi = min(len(out), d_int + len(y) - half)
    out[d_int : hi] = y[half : half + hi - d_int]
    return out


def test_frame_plan_validation():
    FramePlan(1024, 512, 2048)
    with pytest.raises(RendererError):
        FramePlan(1024, 256, 2048)     # hop must be half the frame
    with pytest.raises(RendererError):
        FramePlan(1023, 511, 2048)     # odd frame
    with pytest.raises(RendererError):
        FramePlan(1024, 512, 1000)     # fft not a power of two
    with pytest.raises(RendererError):
        FramePlan(1024, 512, 512)      # fft shorter than the frame


def test_frame_plan_window_is_periodic_hann():
    plan = FramePlan(8, 4, 16)
    n = np.arange(8)
    np.testing.assert_allclose(
        plan.window, 0.5 * (1 - np.cos(2 * np.pi * n / 8)), rtol=1e-15
    )
    # periodic Hann overlap-added at hop N/2 sums to a constant
    total = np.zeros(32)
    for start in range(0, 24, 4):
        total[start : start + 8] += plan.window
    np.testing.assert_allclose(total[8:24], 1.0, rtol=1e-12)


def test_shifted_window_matches_at_zero():
    plan = FramePlan(16, 8, 32)
    w = plan.shifted_window(0.0)
    np.testing.assert_allclose(w[:16], plan.window, atol=1e-15)
    assert w[16] == 0.0


def test_shifted_window_is_translated():
    plan = FramePlan(16, 8, 32)
    # shifting by 0.5 then sampling at integers equals the Hann formula
    w = plan.shifted_window(0.5)
    t = np.arange(17) - 0.5
    expected = 0.5 * (1 - np.cos(2 * np.pi * t / 16))
    expected[(t < 0) | (t > 16)] = 0.0
    np.testing.assert_allclose(w, expected, atol=1e-15)


def test_frame_count_and_starts():
    plan = FramePlan(1024, 512, 2048)
    assert plan.frame_count(1) == 2
    assert plan.frame_count(512) == 2
    assert plan.frame_count(513) == 3
    assert plan.frame_count(16000) == 33
    assert plan.frame_start(0) == -512
    assert plan.frame_start(1) == 0
    with pytest.raises(RendererError):
        plan.frame_count(0)


def test_binaural_clip_validation():
    with pytest.raises(ValueError):
        BinauralClip(np.zeros(4), np.zeros(5), SR)
    with pytest.raises(ValueError):
        BinauralClip(np.array([np.inf, 0.0]), np.zeros(2), SR)
    clip = BinauralClip(np.zeros(4), np.ones(4), SR)
    assert clip.channels.shape == (4, 2)
    assert len(clip) == 4


def test_apply_transfer_identity():
    K = 64
    field = identity_field(1, K)
    rng = np.random.default_rng(2)
    x = rng.standard_normal(K)
    X = np.fft.fft(x)
    out = apply_transfer(X, field)
    np.testing.assert_allclose(out[0], X, atol=1e-12)
    np.testing.assert_allclose(out[1], X, atol=1e-12)


def test_apply_transfer_integer_shift_is_circular_delay():
    K = 64
    D = 5
    shape = (1, 2, 1, K)
    field = TransferField(
        np.full(shape, float(D * D)), np.full(shape, float(D)),
        np.zeros((1, 2)), K,
    )
    rng = np.random.default_rng(3)
    x = rng.standard_normal(K)
    out = apply_transfer(np.fft.fft(x), field)
    for ear in range(2):
        y = np.fft.ifft(out[ear])
        np.testing.assert_allclose(np.abs(y.imag).max(), 0.0, atol=1e-12)
        np.testing.assert_allclose(y.real, np.roll(x, D), atol=1e-10)


def test_apply_transfer_output_is_conjugate_symmetric():
    K = 32
    shape = (1, 2, 1, K)
    field = TransferField(
        np.full(shape, 2.5**2), np.full(shape, 2.5), np.zeros((1, 2)), K
    )
    x = np.random.default_rng(4).standard_normal(K)
    out = apply_transfer(np.fft.fft(x), field)
    for ear in range(2):
        y = np.fft.ifft(out[ear])
        assert np.abs(y.imag).max() < 1e-12
        assert out[ear, K // 2].imag == 0.0


def test_apply_transfer_sums_channels():
    K = 32
    shape = (1, 2, 3, K)
    scale = np.zeros(shape)
    scale[:, :, 0] = 1.0
    scale[:, :, 1] = 2.0
    scale[:, :, 2] = 0.5
    field = TransferField(scale, np.zeros(shape), np.zeros((1, 2)), K)
    x = np.random.default_rng(5).standard_normal(K)
    out = apply_transfer(np.fft.fft(x), field)
    np.testing.assert_allclose(out[0], 3.5 * np.fft.fft(x), atol=1e-10)


def test_apply_transfer_shape_checks():
    field = identity_field(2, 64)
    with pytest.raises(ShapeMismatchError):
        apply_transfer(np.zeros(32, dtype=complex), field)
    with pytest.raises(ShapeMismatchError):
        apply_transfer(np.zeros(64, dtype=complex), field, frame_index=2)


def test_wola_identity_noise():
    x = np.random.default_rng(1).standard_normal(SR)
    x = 0.5 * x / np.abs(x).max()
    clip = MonoClip(x, SR)
    back = wola_roundtrip(clip, FramePlan(1024, 512, 2048))
    assert len(back) == len(clip)
    np.testing.assert_allclose(back.samples, x, atol=1e-9)


def test_wola_identity_other_plans():
    x = np.random.default_rng(2).standard_normal(3000)
    x = 0.5 * x / np.abs(x).max()
    for plan in (FramePlan(256, 128, 256), FramePlan(512, 256, 1024),
                 FramePlan(64, 32, 128)):
        back = wola_roundtrip(MonoClip(x, SR), plan)
        np.testing.assert_allclose(back.samples, x, atol=1e-9)


def test_wola_identity_short_clip():
    x = np.full(100, 0.25)
    back = wola_roundtrip(MonoClip(x, SR), FramePlan(1024, 512, 2048))
    np.testing.assert_allclose(back.samples, x, atol=1e-9)


def test_render_integer_delay_is_sample_exact():
    n = SR
    x = _band_noise(n)
    plan = FramePlan(1024, 512, 2048)
    D = 7
    field = _delay_field(plan.frame_count(n), plan.fft_size, D)
    out = render_event(MonoClip(x, SR), field, plan)
    assert len(out) == n + D
    ref = np.zeros(n + D)
    ref[D:] = x
    for samples in (out.left, out.right):
        np.testing.assert_allclose(samples, ref, atol=1e-12)


def test_render_impulse_train_integer_delay():
    n = 4096
    x = np.zeros(n)
    x[::512] = 0.5
    plan = FramePlan(1024, 512, 2048)
    D = 12
    field = _delay_field(plan.frame_count(n), plan.fft_size, D)
    out = render_event(MonoClip(x, SR), field, plan)
    ref = np.zeros(n + D)
    ref[D::512] = 0.5
    np.testing.assert_allclose(out.left, ref[: len(out)], atol=1e-12)


def test_render_fractional_delay_matches_sinc_oracle():
    n = SR
    x = _band_noise(n)
    plan = FramePlan(1024, 512, 2048)
    for D in (0.25, 2.5, 10.493):
        field = _delay_field(plan.frame_count(n), plan.fft_size, D)
        out = render_event(MonoClip(x, SR), field, plan)
        ref = _oracle_delay(x, D)
        m = min(len(ref), len(out))
        s, e = 300, m - 300
        err = out.left[s:e] - ref[s:e]
        snr = 10 * np.log10(np.sum(ref[s:e] ** 2) / np.sum(err**2))
        assert snr > 60.0, f"D={D}: SNR {snr:.1f} dB"


def test_render_per_ear_shifts_differ():
    n = 2048
    x = _band_noise(n)
    plan = FramePlan(1024, 512, 2048)
    F = plan.frame_count(n)
    shape = (F, 2, 1, plan.fft_size)
    rshift = np.zeros(shape)
    rshift[:, 1] = 4.0
    scale = np.ones(shape)
    scale[:, 1] = 16.0
    field = TransferField(scale, rshift, np.zeros((F, 2)), plan.fft_size)
    out = render_event(MonoClip(x, SR), field, plan)
    np.testing.assert_allclose(out.left[:n], x, atol=1e-12)
    np.testing.assert_allclose(out.right[4 : 4 + n], x, atol=1e-12)


def test_render_output_length_covers_max_shift():
    n = 1000
    x = _band_noise(n)
    plan = FramePlan(256, 128, 512)
    D = 33.7
    field = _delay_field(plan.frame_count(n), plan.fft_size, D)
    out = render_event(MonoClip(x, SR), field, plan)
    assert len(out) == n + 34
    # delayed energy shows up, nothing is cut
    assert np.abs(out.left[-200:]).max() > 0.01


def test_render_plan_mismatch_errors():
    x = _band_noise(1000)
    plan = FramePlan(256, 128, 512)
    with pytest.raises(PlanMismatchError):
        render_event(MonoClip(x, SR), identity_field(3, 1024), plan)
    with pytest.raises(PlanMismatchError):
        render_event(MonoClip(x, SR), identity_field(2, 512), plan)


def test_render_linearity():
    n = 3000
    plan = FramePlan(512, 256, 1024)
    a = _band_noise(n, seed=21)
    b = _band_noise(n, seed=22)
    field = _delay_field(plan.frame_count(n), plan.fft_size, 3.25)
    out_a = render_event(MonoClip(a, SR), field, plan)
    out_b = render_event(MonoClip(b, SR), field, plan)
    out_ab = render_event(MonoClip(0.5 * a + 0.5 * b, SR), field, plan)
    np.testing.assert_allclose(
        out_ab.left, 0.5 * out_a.left + 0.5 * out_b.left, atol=1e-10
    )


def test_render_writes_debug_spectra(tmp_path):
    x = _band_noise(1500)
    plan = FramePlan(256, 128, 512)
    field = _delay_field(plan.frame_count(1500), plan.fft_size, 1.5)
    render_event(MonoClip(x, SR), field, plan, debug_dir=tmp_path)
    left = tmp_path / "frames_left.csv"
    right = tmp_path / "frames_right.csv"
    assert left.is_file() and right.is_file()
    grid = np.loadtxt(left, delimiter=",")
    assert grid.shape == (plan.frame_count(1500), plan.fft_size // 2 + 1)
