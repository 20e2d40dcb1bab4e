"""Typed errors for every pipeline stage.

Each error knows which stage raised it so the CLI and the HTTP service can
attribute failures without string matching. ``to_json()`` is the single
wire format used on stderr and in HTTP error bodies.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class; subclasses set ``stage`` to their owning module."""

    stage = "pipeline"

    def __init__(self, message, stage=None, **details):
        super().__init__(message)
        if stage is not None:
            self.stage = stage
        self.details = {k: v for k, v in details.items() if v is not None}

    def with_context(self, **details):
        """Attach extra context (line numbers etc.) and return self."""
        for k, v in details.items():
            self.details.setdefault(k, v)
        return self

    def to_json(self):
        payload = {
            "error": type(self).__name__,
            "stage": self.stage,
            "message": str(self),
        }
        if self.details:
            payload["details"] = self.details
        return payload


# scene-core

class SceneFormatError(PipelineError):
    stage = "scene-core"


class FieldCountError(SceneFormatError):
    pass


class NumberParseError(SceneFormatError):
    pass


class RangeViolationError(SceneFormatError):
    pass


class EmptySceneError(SceneFormatError):
    pass


# segmenter

class SegmenterError(PipelineError):
    stage = "segmenter"


class NoEventsFoundError(SegmenterError):
    pass


class MalformedServiceReplyError(SegmenterError):
    """Service replied but the body could not be parsed into records."""

    def __init__(self, message, raw_reply=None, **details):
        super().__init__(message, **details)
        self.raw_reply = raw_reply
        if raw_reply is not None:
            self.details["raw_reply"] = raw_reply[:2000]


# source-provider

class SourceError(PipelineError):
    stage = "source-provider"


class LabelNotFoundError(SourceError):
    pass


class BadAudioPayloadError(SourceError):
    pass


class ServiceUnreachableError(PipelineError):
    """Raised by any stage that talks to an HTTP backend."""

    stage = "segmenter"


# spatializer

class SpatializerError(PipelineError):
    stage = "spatializer"


class DegenerateDistanceError(SpatializerError):
    pass


class GridTooSparseError(SpatializerError):
    pass


class ResponseTooLongError(SpatializerError):
    pass


# renderer

class RendererError(PipelineError):
    stage = "renderer"


class ShapeMismatchError(RendererError):
    pass


class PlanMismatchError(RendererError):
    pass


# mixer

class MixerError(PipelineError):
    stage = "mixer"


class SampleRateMismatchError(MixerError):
    pass


# metrics

class MetricsError(PipelineError):
    stage = "metrics"


class LengthMismatchError(MetricsError):
    pass


class RateMismatchError(MetricsError):
    pass


class TooShortError(MetricsError):
    pass
