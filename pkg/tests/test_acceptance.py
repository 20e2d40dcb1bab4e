"""Acceptance gate: one check per shipped guarantee, pinned tolerances.

Each test prints a single PASS/FAIL line. Oracles are computed inline and
independently of the code under test wherever the guarantee is numeric.
"""

import math
import time

import numpy as np
from scipy.signal import firwin

from binscene.errors import PipelineError, SceneFormatError
from binscene.metrics import (
    MetricConfig,
    estimate_direction,
    eval_pair,
    gcc_phat,
    reference_render,
)
from binscene.mix import Timeline, mix
from binscene.pipeline import RunConfig, run_render
from binscene.render import BinauralClip, FramePlan, render_event, wola_roundtrip
from binscene.scene import SceneEvent, event_pose, parse_scene_line, serialize_event
from binscene.sources import MonoClip, synth_test_signal
from binscene.spatial import (
    TransferField,
    hrir_field,
    parametric_field,
    synthetic_hrir_set,
)

SR = 16000
PLAN = FramePlan(1024, 512, 2048)


def _report(num, ok, text):
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {text}")
    return ok


def _band_noise(n, seed=11, lo=200.0, hi=6000.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    h = firwin(255, [lo, hi], pass_zero=False, fs=SR)
    xb = np.convolve(x, h, mode="same")
    return 0.5 * xb / np.abs(xb).max()


def _delay_field(frames, fft_size, shift):
    shape = (frames, 2, 1, fft_size)
    rshift = np.full(shape, float(shift))
    scale = rshift**2 if shift > 0 else np.ones(shape)
    return TransferField(scale, rshift, np.zeros((frames, 2)), fft_size)


def _oracle_delay(x, delay, taps=257):
    """Independent Hann-windowed-sinc fractional delay."""
    d_int = int(math.floor(delay))
    frac = delay - d_int
    half = taps // 2
    j = np.arange(taps) - half
    kernel = np.sinc(j - frac) * np.hanning(taps)
    kernel /= kernel.sum()
    y = np.convolve(x, kernel)
    out = np.zeros(d_int + len(x) + half + 1)
    hi = min(len(out), d_int + len(y) - half)
    out[d_int:hi] = y[half : half + hi - d_int]
    return out


def _pose(az, el, dist):
    return event_pose(SceneEvent("x", 1.0, az, el, dist, 0.0))


def _pad_pair(a, b):
    m = max(len(a), len(b))

    def pad(c):
        buf = np.zeros((m, 2))
        buf[: len(c)] = c.channels
        return BinauralClip(buf[:, 0], buf[:, 1], c.sample_rate)

    return pad(a), pad(b)


def test_criterion_1_wola_identity():
    x = np.random.default_rng(1).standard_normal(SR)
    x = 0.5 * x / np.abs(x).max()
    clip = MonoClip(x, SR)
    t0 = time.perf_counter()
    back = wola_roundtrip(clip, PLAN)
    elapsed = time.perf_counter() - t0
    err = float(np.abs(back.samples - x).max())
    ok = err < 1e-6 and elapsed < 0.1
    assert _report(
        1, ok,
        f"analysis/synthesis identity, max error {err:.2e} (< 1e-6), "
        f"{elapsed * 1e3:.1f} ms for 1 s audio (< 100 ms)",
    )


def test_criterion_2_shift_accuracy():
    n = SR
    x = _band_noise(n)
    frames = PLAN.frame_count(n)

    D_int = 7
    out = render_event(MonoClip(x, SR), _delay_field(frames, 2048, D_int), PLAN)
    ref = np.zeros(len(out))
    ref[D_int : D_int + n] = x
    int_err = max(
        float(np.abs(out.left - ref).max()), float(np.abs(out.right - ref).max())
    )

    D_frac = 2.5
    out = render_event(MonoClip(x, SR), _delay_field(frames, 2048, D_frac), PLAN)
    oracle = _oracle_delay(x, D_frac)
    m = min(len(oracle), len(out))
    s, e = 300, m - 300
    err = out.left[s:e] - oracle[s:e]
    snr = 10.0 * np.log10(np.sum(oracle[s:e] ** 2) / np.sum(err**2))

    ok = int_err < 1e-12 and snr > 60.0
    assert _report(
        2, ok,
        f"integer delay error {int_err:.2e} (< 1e-12), fractional delay "
        f"2.5 samples at {snr:.1f} dB SNR vs windowed-sinc oracle (> 60 dB)",
    )


def test_criterion_3_inverse_square_energy():
    n = SR
    x = _band_noise(n)
    frames = PLAN.frame_count(n)

    def energy_at(dist):
        field = parametric_field(_pose(30.0, 0.0, dist), frames, 2048, SR)
        out = render_event(MonoClip(x, SR), field, PLAN)
        return float(np.sum(out.channels**2))

    ratio = energy_at(1.0) / energy_at(2.0)
    ok = abs(ratio - 4.0) <= 0.04
    assert _report(
        3, ok,
        f"doubling distance quarters energy: ratio {ratio:.6f} (4.0 +/- 1%)",
    )


def test_criterion_4_itd_matches_woodworth():
    record = "noise@1.0@90, 0@1.0@0.0"
    event = parse_scene_line(record)
    x = _band_noise(SR, seed=3)
    frames = PLAN.frame_count(SR)
    field = parametric_field(event_pose(event), frames, 2048, SR)
    out = render_event(MonoClip(x, SR), field, PLAN)
    tau, _ = gcc_phat(out.left, out.right, max_lag_samples=40)
    # independent prediction: a * (pi/2 + sin(pi/2)) / c seconds
    predicted = 0.0875 * (math.pi / 2 + 1.0) / 343.0 * SR
    err = abs(abs(tau) - predicted)
    ok = err <= 1.0
    assert _report(
        4, ok,
        f"lateral source delay {abs(tau):.3f} samples vs spherical-head "
        f"prediction {predicted:.3f} (|diff| {err:.3f} <= 1 sample)",
    )


def test_criterion_5_metric_identity_and_linearity():
    rng = np.random.default_rng(5)
    zeros_exact = True
    for _ in range(100):
        n = int(rng.integers(1024, 8192))
        left = 0.4 * rng.standard_normal(n)
        right = 0.4 * rng.standard_normal(n)
        clip = BinauralClip(left, right, SR)
        rep = eval_pair(clip, clip)
        if not (
            rep.l2 == 0.0 and rep.phase_l1 == 0.0 and rep.iid_l2 == 0.0
            and rep.stft == 0.0 and rep.mag_l1 == 0.0 and rep.total == 0.0
        ):
            zeros_exact = False
            break

    linear = True
    for seed in range(5):
        r2 = np.random.default_rng(100 + seed)
        pred = BinauralClip(
            0.4 * r2.standard_normal(5000), 0.4 * r2.standard_normal(5000), SR
        )
        ref = BinauralClip(
            0.4 * r2.standard_normal(5000), 0.4 * r2.standard_normal(5000), SR
        )
        w = (
            float(r2.uniform(0.1, 2000)), float(r2.uniform(0.1, 5)),
            float(r2.uniform(0.1, 50)), float(r2.uniform(0.1, 5)),
        )
        rep = eval_pair(pred, ref, MetricConfig(
            w_l2=w[0], w_phase=w[1], w_iid=w[2], w_stft=w[3],
        ))
        explicit = (
            w[0] * rep.l2 + w[1] * rep.phase_l1
            + w[2] * rep.iid_l2 + w[3] * rep.stft
        )
        if abs(rep.total - explicit) > 1e-12:
            linear = False
            break

    ok = zeros_exact and linear
    assert _report(
        5, ok,
        "self-evaluation exactly zero on 100 random clips; total equals the "
        "weighted term sum to 1e-12",
    )


def test_criterion_6_direction_grid():
    clip = synth_test_signal("noise", 1.0, SR, seed=5)
    frames = PLAN.frame_count(len(clip.samples))
    azimuths = np.linspace(-165.0, 165.0, 30)
    t0 = time.perf_counter()
    correct = 0
    for az in azimuths:
        field = parametric_field(_pose(float(az), 0.0, 1.0), frames, 2048, SR)
        out = render_event(clip, field, PLAN)
        est = estimate_direction(out)
        truth = "right" if az > 0 else "left"
        correct += est.left_right == truth
    elapsed = time.perf_counter() - t0
    ok = correct >= 29 and elapsed < 30.0
    assert _report(
        6, ok,
        f"left/right recovered for {correct}/30 grid directions "
        f"(>= 29) in {elapsed:.1f} s (< 30 s)",
    )


def test_criterion_7_mixer_superposition_and_determinism():
    rng = np.random.default_rng(7)
    clips = []
    for i in range(8):
        n = int(rng.integers(400, 3000))
        left = 0.2 * rng.standard_normal(n)
        right = 0.2 * rng.standard_normal(n)
        start = float(rng.uniform(0, 0.5))
        clips.append((left, right, start))

    timeline = Timeline(SR)
    for left, right, start in clips:
        timeline.add(BinauralClip(left, right, SR), start)
    result = mix(timeline)

    # independent accumulation with plain loops, folding in the mixer's
    # documented order (ascending start, insertion index as tie-break)
    total = max(int(round(s * SR)) + len(l) for l, _, s in clips)
    expected = np.zeros((total, 2))
    fold_order = sorted(
        range(len(clips)), key=lambda i: (int(round(clips[i][2] * SR)), i)
    )
    for i in fold_order:
        left, right, start = clips[i]
        at = int(round(start * SR))
        expected[at : at + len(left), 0] += left
        expected[at : at + len(right), 1] += right
    peak = np.abs(expected).max()
    if peak > 1.0:
        expected *= 0.99 / peak
    superposed = np.array_equal(result.clip.channels, expected)

    cfg = RunConfig(
        scene="tone 500@0.4@30, 0@1@0.0\nnoise@0.3@-80, 10@2@0.2", seed=9
    )
    a, _, _ = run_render(cfg)
    b, _, _ = run_render(cfg)
    identical = a.channels.tobytes() == b.channels.tobytes()

    ok = superposed and identical
    assert _report(
        7, ok,
        "eight-clip mix equals loop-accumulated superposition sample-exactly; "
        "repeated renders are byte-identical",
    )


def test_criterion_8_record_round_trips_and_typed_errors():
    rng = np.random.default_rng(8)
    round_trips = 0
    for _ in range(200):
        ev = SceneEvent(
            "evt " + str(rng.integers(0, 10**6)),
            float(rng.uniform(0.01, 90)),
            float(rng.uniform(-180, 180)),
            float(rng.uniform(-90, 90)),
            float(rng.uniform(0.02, 80)),
            float(rng.uniform(0, 500)),
        )
        round_trips += parse_scene_line(serialize_event(ev)) == ev

    malformed = [
        "", "@@@@", "a@b@c@d@e", "x@1.0@0@1@0", "x@1.0@0, 0, 0@1@0",
        "x@-1@0, 0@1@0", "x@0@0, 0@1@0", "x@1@0, 99@1@0", "x@1@0, -91@1@0",
        "x@1@0, 0@0@0", "x@1@0, 0@-3@0", "x@1@0, 0@1@-1", "x@1e2@0, 0@1@0",
        "x@nan@0, 0@1@0", "x@inf@0, 0@1@0", "x@1@0x10, 0@1@0",
        "x@1@0, 0@1", "x@1@0, 0@1@0@9", "x@ @0, 0@1@0", "x@1@,@1@0",
    ]
    typed = 0
    for line in malformed:
        try:
            parse_scene_line(line)
        except SceneFormatError as err:
            typed += isinstance(err, PipelineError) and err.stage == "scene-core"
        except Exception:
            pass

    ok = round_trips == 200 and typed == len(malformed)
    assert _report(
        8, ok,
        f"{round_trips}/200 records round-trip losslessly; "
        f"{typed}/{len(malformed)} malformed inputs raise typed stage errors",
    )


def test_criterion_9_hrir_fidelity():
    hs = synthetic_hrir_set()
    interp_err = 0.0
    for ai, az in enumerate(hs.azimuths):
        for ei, el in enumerate(hs.elevations):
            got = hs.interpolate(float(az), float(el))
            interp_err = max(
                interp_err, float(np.abs(got - hs.responses[ai, ei]).max())
            )

    clip = synth_test_signal("noise", 1.0, SR, seed=5)
    frames = PLAN.frame_count(len(clip.samples))
    pose = _pose(30.0, 0.0, 1.0)
    rendered = render_event(clip, hrir_field(pose, frames, 2048, hs, SR), PLAN)
    matched = reference_render(clip, pose, hs)
    mismatched = reference_render(clip, _pose(-120.0, 20.0, 1.0), hs)
    m_same = eval_pair(*_pad_pair(rendered, matched)).mag_l1
    m_other = eval_pair(*_pad_pair(rendered, mismatched)).mag_l1

    ok = interp_err <= 1e-9 and m_same < m_other
    assert _report(
        9, ok,
        f"on-grid interpolation error {interp_err:.2e} (<= 1e-9); spectral "
        f"distance to the matching direction {m_same:.5f} < mismatched "
        f"{m_other:.5f}",
    )
