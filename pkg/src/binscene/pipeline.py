"""End-to-end runs: scene in, mixed binaural audio plus a report out.

RunConfig is the single serializable description of a run; the CLI, the
HTTP service and tests all build one and call run_render. Event rendering
fans out over a thread pool (numpy releases the GIL in the transforms) and
results fold back in event order, so worker count never changes output.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor

from pydantic import BaseModel, Field, model_validator

from .errors import SpatializerError
from .mix import Timeline, mix
from .render import FramePlan, render_event, wola_roundtrip
from .segment import SegmenterConfig, segment_text
from .sources import MonoClip, fetch_mono, make_backend
from .spatial import (
    DISTANCE_FLOOR,
    HEAD_RADIUS,
    SPEED_OF_SOUND,
    hrir_field,
    load_hrir_dir,
    parametric_field,
)
from .scene import (
    DEFAULT_SAMPLE_RATE,
    Scene,
    event_pose,
    events_from_json,
    events_to_json,
    parse_scene,
)


class RunConfig(BaseModel):
    """Everything a render run needs; JSON round-trips reproduce it exactly."""

    scene: str | None = None          # @-record text
    scene_json: list | None = None    # list of event objects
    prose: str | None = None          # free text for the segmenter
    segmenter: str = "offline"        # "offline" or a service URL
    source: str = "synth"             # synth | corpus:<dir> | service:<url>
    spatializer: str = "parametric"   # parametric | hrir:<dir>
    sample_rate: int | None = None    # overrides the scene header
    frame_length: int = 1024
    hop: int = 512
    fft_size: int = 2048
    head_radius: float = HEAD_RADIUS
    c_sound: float = SPEED_OF_SOUND
    distance_floor: float = DISTANCE_FLOOR
    seed: int = 0
    workers: int = Field(default=1, ge=1, le=64)
    timeout: float = 60.0
    defaults_table: dict[str, tuple[float, float, float]] | None = None
    debug_spectra_dir: str | None = None

    @model_validator(mode="after")
    def _one_input(self):
        given = [
            x for x in (self.scene, self.scene_json, self.prose) if x is not None
        ]
        if len(given) != 1:
            raise ValueError(
                "exactly one of scene, scene_json or prose must be given"
            )
        return self


def build_scene(config):
    """Materialize the Scene named by a RunConfig."""
    if config.scene is not None:
        return parse_scene(config.scene, sample_rate=config.sample_rate)
    if config.scene_json is not None:
        events = events_from_json(config.scene_json)
        return Scene(tuple(events), config.sample_rate or DEFAULT_SAMPLE_RATE)
    seg_cfg = SegmenterConfig(endpoint=config.segmenter,
                                          timeout=config.timeout)
    if config.defaults_table:
        seg_cfg.defaults_table = {
            k: tuple(v) for k, v in config.defaults_table.items()
        }
    scene = segment_text(config.prose, seg_cfg)
    if config.sample_rate:
        scene = Scene(scene.events, config.sample_rate)
    return scene


def _make_spatializer(config, plan, sample_rate):
    spec = config.spatializer
    if spec == "parametric":
        def build(pose, frames):
            return parametric_field(
                pose, frames, plan.fft_size, sample_rate,
                head_radius=config.head_radius, c_sound=config.c_sound,
                distance_floor=config.distance_floor,
            )
        return build
    if spec.startswith("hrir:"):
        hrir_set = load_hrir_dir(spec.split(":", 1)[1])
        def build(pose, frames):
            return hrir_field(
                pose, frames, plan.fft_size, hrir_set, sample_rate,
                c_sound=config.c_sound, distance_floor=config.distance_floor,
            )
        return build
    raise SpatializerError(
        f"unknown spatializer {spec!r}; expected parametric or hrir:<dir>"
    )


def run_render(config):
    """Execute a full render. Returns (BinauralClip, report dict, MixResult)."""
    t0 = time.perf_counter()
    timings = {}

    t = time.perf_counter()
    scene = build_scene(config)
    timings["scene_s"] = time.perf_counter() - t

    sample_rate = config.sample_rate or scene.sample_rate
    plan = FramePlan(config.frame_length, config.hop, config.fft_size)
    backend = make_backend(
        config.source, seed=config.seed, timeout=config.timeout
    )
    spatialize = _make_spatializer(config, plan, sample_rate)

    stage_acc = {"source_s": 0.0, "field_s": 0.0, "render_s": 0.0}

    def render_one(idx_event):
        idx, event = idx_event
        t1 = time.perf_counter()
        clip = fetch_mono(event, backend, sample_rate, seed=config.seed)
        t2 = time.perf_counter()
        pose = event_pose(event)
        field = spatialize(pose, plan.frame_count(len(clip)))
        t3 = time.perf_counter()
        debug_dir = None
        if config.debug_spectra_dir:
            debug_dir = f"{config.debug_spectra_dir}/event{idx:03d}"
        rendered = render_event(clip, field, plan, debug_dir=debug_dir)
        t4 = time.perf_counter()
        return idx, rendered, (t2 - t1, t3 - t2, t4 - t3)

    jobs = list(enumerate(scene.events))
    if config.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(render_one, jobs))
    else:
        results = [render_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    timeline = Timeline(sample_rate)
    for (idx, rendered, spans), event in zip(results, scene.events):
        stage_acc["source_s"] += spans[0]
        stage_acc["field_s"] += spans[1]
        stage_acc["render_s"] += spans[2]
        timeline.add(rendered, event.start_time)

    t = time.perf_counter()
    result = mix(timeline)
    timings["mix_s"] = time.perf_counter() - t
    timings.update(stage_acc)
    timings["total_s"] = time.perf_counter() - t0

    report = {
        "sample_rate": sample_rate,
        "timeline_samples": len(result.clip),
        "timeline_seconds": len(result.clip) / sample_rate,
        "mix_peak": result.peak,
        "applied_gain": result.applied_gain,
        "events": [
            {
                "label": e.label,
                "start_time": e.start_time,
                "duration": e.duration,
                "azimuth": e.azimuth,
                "elevation": e.elevation,
                "distance": e.distance,
                "peak": result.event_peaks[i],
            }
            for i, e in enumerate(scene.events)
        ],
        "stage_seconds": {k: round(v, 6) for k, v in timings.items()},
        "config": json.loads(config.model_dump_json(exclude_none=True)),
    }
    return result.clip, report, result


def run_parse(config):
    """Scene/prose to normalized events, both record and JSON form."""
    scene = build_scene(config)
    from .scene import serialize_event

    return {
        "sample_rate": config.sample_rate or scene.sample_rate,
        "timeline_seconds": scene.timeline_seconds,
        "events": events_to_json(scene.events),
        "records": [serialize_event(e) for e in scene.events],
    }


def run_selftest(frame_length=1024, hop=512, fft_size=2048,
                 duration=1.0, sample_rate=16000, seed=0):
    """Analysis/synthesis identity check on white noise."""
    import numpy as np

    plan = FramePlan(frame_length, hop, fft_size)
    rng = np.random.default_rng(seed)
    x = 0.5 * rng.standard_normal(int(duration * sample_rate))
    clip = MonoClip(np.clip(x, -1, 1), sample_rate)
    t0 = time.perf_counter()
    back = wola_roundtrip(clip, plan)
    elapsed = time.perf_counter() - t0
    err = np.abs(back.samples - clip.samples)
    max_err = float(err.max())
    noise = float(np.mean(err**2))
    signal = float(np.mean(clip.samples**2))
    snr_db = 10.0 * np.log10(signal / noise) if noise > 0 else float("inf")
    return {
        "samples": len(clip),
        "max_abs_error": max_err,
        "snr_db": snr_db,
        "elapsed_s": elapsed,
        "passed": bool(max_err < 1e-6),
    }
