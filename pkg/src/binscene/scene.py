"""Scene data model and the @-separated record format.

A scene file is UTF-8 text, one record per line:

    <sound event>@<duration>@<azimuth, elevation>@<distance>@<start time>

``#`` starts a comment, blank lines are skipped, and an optional first
content line ``sr=<hertz>`` overrides the default 16000 Hz sample rate.
Angles are degrees, durations/starts seconds, distance meters. Azimuth is
normalized into [-180, 180) with positive azimuth to the listener's right;
elevation must lie in [-90, 90]. The head faces +x, +y is right, +z is up.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptySceneError,
    FieldCountError,
    NumberParseError,
    RangeViolationError,
    SceneFormatError,
)

DEFAULT_SAMPLE_RATE = 16000

# Plain decimal literals only. Scientific notation, inf and nan are rejected
# so that records stay readable and locale-proof.
_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)$")
_SR_RE = re.compile(r"^sr\s*=\s*(\d+)$")

_FIELD_NAMES = ("sound event", "duration", "azimuth, elevation", "distance", "start time")

_JSON_KEYS = ("label", "duration", "azimuth", "elevation", "distance", "start_time")


def normalize_azimuth(azimuth):
    """Fold an azimuth in degrees into [-180, 180)."""
    return ((float(azimuth) + 180.0) % 360.0) - 180.0


def _parse_number(text, field_name):
    text = text.strip()
    if not _NUMBER_RE.match(text):
        raise NumberParseError(
            f"field '{field_name}' is not a plain decimal number: {text!r}",
            field=field_name,
            value=text,
        )
    return float(text)


@dataclass(frozen=True)
class SceneEvent:
    """One sound event: what, for how long, from where, starting when."""

    label: str
    duration: float
    azimuth: float
    elevation: float
    distance: float
    start_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "label", str(self.label))
        object.__setattr__(self, "azimuth", normalize_azimuth(self.azimuth))
        object.__setattr__(self, "elevation", float(self.elevation))
        object.__setattr__(self, "duration", float(self.duration))
        object.__setattr__(self, "distance", float(self.distance))
        object.__setattr__(self, "start_time", float(self.start_time))
        if not self.duration > 0:
            raise RangeViolationError(
                f"duration must be positive, got {self.duration}", field="duration"
            )
        if not self.distance > 0:
            raise RangeViolationError(
                f"distance must be positive, got {self.distance}", field="distance"
            )
        if self.start_time < 0:
            raise RangeViolationError(
                f"start time must be >= 0, got {self.start_time}", field="start time"
            )
        if not -90.0 <= self.elevation <= 90.0:
            raise RangeViolationError(
                f"elevation must lie in [-90, 90], got {self.elevation}",
                field="azimuth, elevation",
            )

    @property
    def end_time(self):
        return self.start_time + self.duration


@dataclass(frozen=True)
class Scene:
    """An ordered collection of events sharing one sample rate."""

    events: tuple
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not self.events:
            raise EmptySceneError("scene contains no events")
        if self.sample_rate <= 0:
            raise RangeViolationError(
                f"sample rate must be positive, got {self.sample_rate}", field="sr"
            )

    @property
    def timeline_seconds(self):
        return max(e.end_time for e in self.events)


def _format_number(x):
    # Shortest positional decimal that round-trips; never scientific notation,
    # so serialize -> parse is lossless for any representable value.
    return np.format_float_positional(float(x), unique=True, trim="0")


def serialize_event(event):
    """Render one event as an @-record line."""
    return "@".join(
        [
            event.label,
            _format_number(event.duration),
            f"{_format_number(event.azimuth)}, {_format_number(event.elevation)}",
            _format_number(event.distance),
            _format_number(event.start_time),
        ]
    )


def serialize_scene(scene):
    lines = []
    if scene.sample_rate != DEFAULT_SAMPLE_RATE:
        lines.append(f"sr={scene.sample_rate}")
    lines.extend(serialize_event(e) for e in scene.events)
    return "\n".join(lines) + "\n"


def parse_scene_line(line):
    """Parse one @-record into a SceneEvent.

    Raises FieldCountError / NumberParseError / RangeViolationError, each
    naming the offending field; callers add line numbers via with_context.
    """
    fields = line.split("@")
    if len(fields) != 5:
        raise FieldCountError(
            f"expected 5 @-separated fields, got {len(fields)}",
            field_count=len(fields),
            line_text=line,
        )
    label = fields[0].strip()
    duration = _parse_number(fields[1], _FIELD_NAMES[1])
    direction = fields[2].split(",")
    if len(direction) != 2:
        raise NumberParseError(
            f"field '{_FIELD_NAMES[2]}' must hold two comma-separated numbers, "
            f"got {fields[2].strip()!r}",
            field=_FIELD_NAMES[2],
            value=fields[2].strip(),
        )
    azimuth = _parse_number(direction[0], _FIELD_NAMES[2])
    elevation = _parse_number(direction[1], _FIELD_NAMES[2])
    distance = _parse_number(fields[3], _FIELD_NAMES[3])
    start_time = _parse_number(fields[4], _FIELD_NAMES[4])
    try:
        return SceneEvent(label, duration, azimuth, elevation, distance, start_time)
    except SceneFormatError as err:
        raise err.with_context(line_text=line)


def parse_scene(text, sample_rate=None):
    """Parse scene text (records, comments, optional sr= header) into a Scene.

    ``sample_rate`` overrides any header value when given.
    """
    events = []
    header_rate = None
    seen_record = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SR_RE.match(line)
        if m:
            if seen_record or header_rate is not None:
                raise SceneFormatError(
                    "sr= header must be the first record line", line=lineno
                )
            header_rate = int(m.group(1))
            continue
        seen_record = True
        try:
            events.append(parse_scene_line(line))
        except SceneFormatError as err:
            raise err.with_context(line=lineno)
    if not events:
        raise EmptySceneError("no records found in scene text")
    rate = sample_rate or header_rate or DEFAULT_SAMPLE_RATE
    return Scene(tuple(events), rate)


def events_to_json(events):
    """Events as a list of plain dicts (the JSON form of the record format)."""
    return [
        {
            "label": e.label,
            "duration": e.duration,
            "azimuth": e.azimuth,
            "elevation": e.elevation,
            "distance": e.distance,
            "start_time": e.start_time,
        }
        for e in events
    ]


def events_from_json(data):
    if not isinstance(data, list):
        raise SceneFormatError("JSON scene must be an array of event objects")
    events = []
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise SceneFormatError(f"event {i} is not an object", index=i)
        missing = [k for k in _JSON_KEYS if k not in obj]
        if missing:
            raise FieldCountError(
                f"event {i} is missing keys: {', '.join(missing)}", index=i
            )
        try:
            events.append(
                SceneEvent(
                    str(obj["label"]),
                    float(obj["duration"]),
                    float(obj["azimuth"]),
                    float(obj["elevation"]),
                    float(obj["distance"]),
                    float(obj["start_time"]),
                )
            )
        except (TypeError, ValueError):
            raise NumberParseError(f"event {i} holds a non-numeric field", index=i)
        except SceneFormatError as err:
            raise err.with_context(index=i)
    if not events:
        raise EmptySceneError("JSON scene holds no events")
    return events


@dataclass(eq=False)
class SourcePose:
    """Cartesian position (meters) plus orientation quaternion (w, x, y, z)."""

    position: np.ndarray
    orientation: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0])
    )

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.orientation = np.asarray(self.orientation, dtype=float)
        if self.position.shape != (3,):
            raise ValueError("position must be a 3-vector")
        if self.orientation.shape != (4,):
            raise ValueError("orientation must be a quaternion (w, x, y, z)")
        n = float(np.linalg.norm(self.orientation))
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"orientation quaternion must be unit length, |q|={n}")

    @property
    def distance(self):
        return float(np.linalg.norm(self.position))


def event_pose(event):
    """Spherical (azimuth, elevation, distance) to a Cartesian SourcePose.

    x = d cos(el) cos(az) points ahead, y = d cos(el) sin(az) to the right,
    z = d sin(el) up. Sources are static, orientation is identity.
    """
    az = math.radians(event.azimuth)
    el = math.radians(event.elevation)
    d = event.distance
    position = np.array(
        [
            d * math.cos(el) * math.cos(az),
            d * math.cos(el) * math.sin(az),
            d * math.sin(el),
        ]
    )
    return SourcePose(position)
