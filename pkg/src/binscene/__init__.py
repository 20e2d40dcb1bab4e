"""binscene: compile structured sound scenes into binaural audio.

Scene records (or free prose run through a segmenter) name sound events
with duration, direction, distance and start time. Each event is sourced
as a mono clip, spatialized through a per-ear transfer field, rendered
frame-wise in the Fourier domain with overlap-add synthesis, and mixed
onto a stereo timeline. A metric suite scores rendered pairs and estimates
apparent direction.
"""

__version__ = "0.1.0"

from .errors import PipelineError
from .metrics import (
    DirectionEstimate,
    MetricConfig,
    MetricReport,
    estimate_direction,
    eval_pair,
    reference_render,
)
from .mix import MixResult, Placement, Timeline, mix
from .pipeline import RunConfig, run_parse, run_render, run_selftest
from .render import BinauralClip, FramePlan, apply_transfer, render_event, wola_roundtrip
from .scene import (
    Scene,
    SceneEvent,
    SourcePose,
    event_pose,
    normalize_azimuth,
    parse_scene,
    parse_scene_line,
    serialize_event,
    serialize_scene,
)
from .segment import SegmenterConfig, rule_fallback, segment_text
from .sources import MonoClip, fit_duration, make_backend, synth_test_signal
from .spatial import (
    HrirSet,
    TransferField,
    geometric_delay,
    hrir_field,
    identity_field,
    load_hrir_dir,
    parametric_field,
    save_hrir_dir,
    synthetic_hrir_set,
    woodworth_itd,
)

__all__ = [
    "__version__",
    "PipelineError",
    "Scene",
    "SceneEvent",
    "SourcePose",
    "parse_scene",
    "parse_scene_line",
    "serialize_event",
    "serialize_scene",
    "normalize_azimuth",
    "event_pose",
    "SegmenterConfig",
    "segment_text",
    "rule_fallback",
    "MonoClip",
    "fit_duration",
    "synth_test_signal",
    "make_backend",
    "TransferField",
    "HrirSet",
    "geometric_delay",
    "parametric_field",
    "hrir_field",
    "identity_field",
    "load_hrir_dir",
    "save_hrir_dir",
    "synthetic_hrir_set",
    "woodworth_itd",
    "FramePlan",
    "BinauralClip",
    "apply_transfer",
    "render_event",
    "wola_roundtrip",
    "Timeline",
    "Placement",
    "MixResult",
    "mix",
    "MetricConfig",
    "MetricReport",
    "DirectionEstimate",
    "eval_pair",
    "estimate_direction",
    "reference_render",
    "RunConfig",
    "run_render",
    "run_parse",
    "run_selftest",
]
