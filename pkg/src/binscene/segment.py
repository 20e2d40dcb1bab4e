"""Prose to scene segmentation.

Two modes share one output contract (a Scene):

* service mode POSTs {"prompt": ...} to an endpoint whose JSON reply
  {"text": ...} holds one @-record per line, and
* offline mode applies deterministic splitting and keyword rules, so a
  prompt always compiles without a network.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import httpx

from .errors import (
    MalformedServiceReplyError,
    NoEventsFoundError,
    SceneFormatError,
    SegmenterError,
    ServiceUnreachableError,
)
from .scene import DEFAULT_SAMPLE_RATE, Scene, SceneEvent, parse_scene_line

DEFAULT_DURATION = 5.0
DEFAULT_DISTANCE = 1.5

PROMPT_TEMPLATE = (
    "Split the following description into sound events. Reply with one line "
    "per event, no prose, in the exact form\n"
    "<sound event>@<duration seconds>@<azimuth degrees, elevation degrees>@"
    "<distance meters>@<start seconds>\n"
    "Azimuth is positive to the listener's right, elevation positive upward.\n\n"
)

# keyword -> (azimuth, elevation); None leaves the axis untouched
_DIRECTION_WORDS = {
    "left": (-90.0, None),
    "right": (90.0, None),
    "front": (0.0, None),
    "ahead": (0.0, None),
    "behind": (180.0, None),
    "back": (180.0, None),
    "rear": (180.0, None),
    "above": (None, 45.0),
    "overhead": (None, 45.0),
    "up": (None, 45.0),
    "upper": (None, 45.0),
    "below": (None, -45.0),
    "under": (None, -45.0),
    "beneath": (None, -45.0),
    "lower": (None, -45.0),
    "down": (None, -45.0),
}

# label keyword -> (azimuth, elevation, distance) applied when no explicit
# direction was given; ordinary sources sit low or high where they belong
DEFAULT_PLACEMENTS = {
    "dog": (0.0, -30.0, 2.0),
    "bird": (0.0, 45.0, 3.0),
    "thunder": (180.0, 30.0, 50.0),
    "footsteps": (0.0, -40.0, 1.0),
}

_NUM = r"[-+]?\d+(?:\.\d+)?"
_DURATION_RE = re.compile(rf"\bfor\s+({_NUM})\s*s(?:ec(?:ond)?s?)?\b", re.I)
_START_RE = re.compile(rf"\bstart(?:ing|s)?\s+at\s+({_NUM})\s*s(?:ec(?:ond)?s?)?\b", re.I)
_DISTANCE_RE = re.compile(rf"\b({_NUM})\s*(?:m|meters?|metres?)\b", re.I)
_AZIMUTH_RE = re.compile(rf"\bazimuth\s+(?:of\s+)?({_NUM})\b", re.I)
_ELEVATION_RE = re.compile(rf"\belevation\s+(?:of\s+)?({_NUM})\b", re.I)

# a period inside a decimal number ("1.5 s") is not a sentence boundary
_SPLIT_RE = re.compile(
    r"(?:[;!?]+|\.(?!\d)|\bthen\b|\bwhile\b|\bfollowed by\b)", re.I
)
_ARTICLES = {"a", "an", "the", "some", "of", "to", "on", "in", "at", "from", "and"}


@dataclass
class SegmenterConfig:
    """Where to segment and how to fill in unstated parameters."""

    endpoint: str = "offline"
    prompt_template: str = PROMPT_TEMPLATE
    timeout: float = 30.0
    defaults_table: dict = field(default_factory=lambda: dict(DEFAULT_PLACEMENTS))
    api_key: str | None = None


def load_defaults_table(path):
    """Read "keyword = az, el, dist" lines into a placements table."""
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SegmenterError(
                    f"defaults table line {lineno} is not 'keyword = az, el, dist'"
                )
            key, rest = line.split("=", 1)
            parts = [p.strip() for p in rest.split(",")]
            if len(parts) != 3:
                raise SegmenterError(
                    f"defaults table line {lineno} needs three numbers, got {rest!r}"
                )
            try:
                table[key.strip().lower()] = tuple(float(p) for p in parts)
            except ValueError:
                raise SegmenterError(
                    f"defaults table line {lineno} holds a non-numeric value"
                )
    return table


def _extract(pattern, text):
    m = pattern.search(text)
    if not m:
        return None, text
    value = float(m.group(1))
    return value, text[: m.start()] + " " + text[m.end() :]


def _segment_events(prose, defaults_table):
    events = []
    cursor = 0.0
    for chunk in _SPLIT_RE.split(prose):
        text = chunk.strip()
        if not text:
            continue
        duration, text = _extract(_DURATION_RE, text)
        start, text = _extract(_START_RE, text)
        distance, text = _extract(_DISTANCE_RE, text)
        azimuth, text = _extract(_AZIMUTH_RE, text)
        elevation, text = _extract(_ELEVATION_RE, text)

        words = re.findall(r"[a-zA-Z']+", text.lower())
        label_words = []
        for w in words:
            if w in _DIRECTION_WORDS:
                az_kw, el_kw = _DIRECTION_WORDS[w]
                if az_kw is not None and azimuth is None:
                    azimuth = az_kw
                if el_kw is not None and elevation is None:
                    elevation = el_kw
            elif w not in _ARTICLES:
                label_words.append(w)
        if not label_words:
            continue
        label = " ".join(label_words)

        if azimuth is None and elevation is None:
            for key, (az_d, el_d, dist_d) in defaults_table.items():
                if key in label_words:
                    azimuth, elevation = az_d, el_d
                    if distance is None:
                        distance = dist_d
                    break

        event = SceneEvent(
            label=label,
            duration=DEFAULT_DURATION if duration is None else duration,
            azimuth=0.0 if azimuth is None else azimuth,
            elevation=0.0 if elevation is None else elevation,
            distance=DEFAULT_DISTANCE if distance is None else distance,
            start_time=cursor if start is None else start,
        )
        events.append(event)
        cursor = event.end_time
    return events


def rule_fallback(prose, config=None):
    """Deterministic offline segmentation; same prose, same Scene, always."""
    config = config or SegmenterConfig()
    events = _segment_events(prose, config.defaults_table)
    if not events:
        raise NoEventsFoundError(
            "no sound events recognized in prompt", prompt=prose[:500]
        )
    return Scene(tuple(events), DEFAULT_SAMPLE_RATE)


def _segment_via_service(prose, config, transport=None):
    headers = {}
    key = config.api_key or os.environ.get("BINSCENE_API_KEY")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    try:
        with httpx.Client(timeout=config.timeout, transport=transport) as client:
            resp = client.post(
                config.endpoint,
                json={"prompt": config.prompt_template + prose},
                headers=headers,
            )
    except httpx.HTTPError as exc:
        raise ServiceUnreachableError(
            f"segmenter service request failed: {exc}", url=config.endpoint
        )
    if resp.status_code != 200:
        raise ServiceUnreachableError(
            f"segmenter service returned HTTP {resp.status_code}", url=config.endpoint
        )
    try:
        reply = resp.json()
        text = reply["text"]
    except Exception:
        raise MalformedServiceReplyError(
            "segmenter reply is not JSON with a 'text' field",
            raw_reply=resp.text,
        )
    events = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            events.append(parse_scene_line(line))
        except SceneFormatError as err:
            raise MalformedServiceReplyError(
                f"segmenter reply line is not a valid record: {err}",
                raw_reply=text,
            )
    if not events:
        raise NoEventsFoundError("segmenter service returned no records")
    return Scene(tuple(events), DEFAULT_SAMPLE_RATE)


def segment_text(prose, config=None, transport=None):
    """Turn prose into a Scene via the configured endpoint.

    endpoint == "offline" runs the rule-based segmenter; anything else is
    treated as a service URL. ``transport`` is a test seam for httpx.
    """
    config = config or SegmenterConfig()
    if not prose or not prose.strip():
        raise NoEventsFoundError("empty prompt")
    if config.endpoint == "offline":
        return rule_fallback(prose, config)
    return _segment_via_service(prose, config, transport=transport)
