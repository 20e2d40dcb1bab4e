"""Prose segmentation: offline rules and the service protocol."""

import json
import random
import string

import httpx
import pytest

from binscene.errors import (
    MalformedServiceReplyError,
    NoEventsFoundError,
    SegmenterError,
    ServiceUnreachableError,
)
from binscene.scene import serialize_scene
from binscene.segment import (
    DEFAULT_DISTANCE,
    DEFAULT_DURATION,
    SegmenterConfig,
    load_defaults_table,
    rule_fallback,
    segment_text,
)


def test_direction_words():
    scene = segment_text("a dog barks to the left")
    ev = scene.events[0]
    assert ev.azimuth == -90.0
    assert ev.elevation == 0.0
    scene = segment_text("a bell rings on the right")
    assert scene.events[0].azimuth == 90.0
    scene = segment_text("thunder rumbles behind")
    assert abs(scene.events[0].azimuth) == 180.0
    scene = segment_text("a plane passes overhead")
    assert scene.events[0].elevation == 45.0
    scene = segment_text("water drips below")
    assert scene.events[0].elevation == -45.0


def test_defaults_applied_without_direction():
    scene = segment_text("a dog barks")
    ev = scene.events[0]
    # placement table entry for "dog", not the generic defaults
    assert (ev.azimuth, ev.elevation, ev.distance) == (0.0, -30.0, 2.0)


def test_generic_defaults():
    scene = segment_text("an anvil clangs")
    ev = scene.events[0]
    assert ev.duration == DEFAULT_DURATION
    assert ev.distance == DEFAULT_DISTANCE
    assert ev.azimuth == 0.0


def test_explicit_parameters_win():
    scene = segment_text(
        "a horn honks at azimuth 30, elevation 10, 2 m away, "
        "starting at 1.5 s for 3 seconds"
    )
    ev = scene.events[0]
    assert ev.azimuth == 30.0
    assert ev.elevation == 10.0
    assert ev.distance == 2.0
    assert ev.start_time == 1.5
    assert ev.duration == 3.0


def test_sequential_packing():
    scene = segment_text(
        "a dog barks for 3 seconds, then a bell rings for 5 seconds"
    )
    assert len(scene.events) == 2
    assert scene.events[0].start_time == 0.0
    assert scene.events[0].duration == 3.0
    assert scene.events[1].start_time == 3.0
    assert scene.events[1].duration == 5.0


def test_splitting_on_connectives_and_punctuation():
    scene = segment_text("rain falls. wind howls; a door slams!")
    assert len(scene.events) == 3


def test_segmentation_is_deterministic():
    prose = "a dog barks to the left, then thunder rumbles behind for 4 seconds"
    a = serialize_scene(segment_text(prose))
    b = serialize_scene(segment_text(prose))
    assert a == b


def test_empty_prompt_rejected():
    with pytest.raises(NoEventsFoundError):
        segment_text("")
    with pytest.raises(NoEventsFoundError):
        segment_text("   \n  ")


def test_no_events_in_contentless_prompt():
    with pytest.raises(NoEventsFoundError):
        rule_fallback("the and of a . ; then")


def test_fuzzed_prose_never_raises_untyped():
    rng = random.Random(1234)
    alphabet = string.ascii_letters + string.digits + " .,;!?@then"
    for _ in range(200):
        prose = "".join(
            rng.choice(alphabet) for _ in range(rng.randrange(0, 80))
        )
        try:
            scene = segment_text(prose)
        except SegmenterError:
            continue
        assert len(scene.events) >= 1
        for ev in scene.events:
            assert ev.duration > 0
            assert -180.0 <= ev.azimuth < 180.0
            assert -90.0 <= ev.elevation <= 90.0
            assert ev.distance > 0
            assert ev.start_time >= 0


def test_load_defaults_table(tmp_path):
    path = tmp_path / "table.txt"
    path.write_text(
        "# keyword placements\n"
        "owl = -20, 60, 12\n"
        "train = 90, 0, 30  # passing by\n"
    )
    table = load_defaults_table(path)
    assert table["owl"] == (-20.0, 60.0, 12.0)
    assert table["train"] == (90.0, 0.0, 30.0)
    scene = segment_text(
        "an owl hoots", SegmenterConfig(defaults_table=table)
    )
    assert scene.events[0].elevation == 60.0


def test_load_defaults_table_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("owl = 1, 2\n")
    with pytest.raises(SegmenterError):
        load_defaults_table(path)
    path.write_text("owl: 1, 2, 3\n")
    with pytest.raises(SegmenterError):
        load_defaults_table(path)


def _remote_config():
    return SegmenterConfig(endpoint="http://segmenter.test/v1")


def test_service_segmentation_round_trip():
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.read())
        return httpx.Response(
            200,
            json={"text": "dog bark@2.0@-90, 0@1.5@0.0\nthunder@4@170, 20@30@2.0"},
        )

    scene = segment_text(
        "a dog barks left then thunder far right",
        _remote_config(),
        transport=httpx.MockTransport(handler),
    )
    assert len(scene.events) == 2
    assert scene.events[0].label == "dog bark"
    assert scene.events[1].distance == 30.0
    assert "a dog barks left" in seen["body"]["prompt"]


def test_service_malformed_reply():
    def handler(request):
        return httpx.Response(200, json={"text": "this is not a record"})

    with pytest.raises(MalformedServiceReplyError) as err:
        segment_text(
            "anything", _remote_config(), transport=httpx.MockTransport(handler)
        )
    assert "not a record" in err.value.raw_reply


def test_service_reply_missing_text_field():
    def handler(request):
        return httpx.Response(200, json={"wrong": "shape"})

    with pytest.raises(MalformedServiceReplyError):
        segment_text(
            "anything", _remote_config(), transport=httpx.MockTransport(handler)
        )


def test_service_http_failure():
    def handler(request):
        raise httpx.ConnectError("no route")

    with pytest.raises(ServiceUnreachableError):
        segment_text(
            "anything", _remote_config(), transport=httpx.MockTransport(handler)
        )


def test_service_non_200():
    def handler(request):
        return httpx.Response(503, text="overloaded")

    with pytest.raises(ServiceUnreachableError):
        segment_text(
            "anything", _remote_config(), transport=httpx.MockTransport(handler)
        )


def test_service_sends_bearer_token(monkeypatch):
    monkeypatch.setenv("BINSCENE_API_KEY", "hunter2")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"text": "x@1@0, 0@1@0"})

    segment_text("x", _remote_config(), transport=httpx.MockTransport(handler))
    assert seen["auth"] == "Bearer hunter2"
