"""Command-line client for the render service.

Subcommands build the same pydantic requests the HTTP service accepts and
dispatch them in-process by default, so offline runs never touch a socket
and rerunning a config byte-identically reproduces its WAV. Passing
--server URL (or setting BINSCENE_SERVER) sends the identical JSON to a
remote instance instead. Errors print as one JSON object on stderr with
the failing stage named, and the process exits nonzero.
"""

from __future__ import annotations

import argparse
import base64
import csv
import json
import os
import sys

import httpx
from pydantic import ValidationError

from . import __version__, audio_io
from .errors import PipelineError, ServiceUnreachableError
from .pipeline import RunConfig
from .segment import load_defaults_table
from . import service as service_mod

_HANDLERS = {
    "/render": lambda payload: service_mod.handle_render(RunConfig(**payload)),
    "/parse": lambda payload: service_mod.handle_parse(
        service_mod.ParseRequest(**payload)
    ),
    "/eval": lambda payload: service_mod.handle_eval(
        service_mod.EvalRequest(**payload)
    ),
    "/localize": lambda payload: service_mod.handle_localize(
        service_mod.LocalizeRequest(**payload)
    ),
    "/selftest": lambda payload: service_mod.handle_selftest(
        service_mod.SelftestRequest(**payload)
    ),
}


def _dispatch(path, payload, server, timeout=300.0):
    """Run a request in-process, or POST it to a remote server when given."""
    if not server:
        response = _HANDLERS[path](payload)
        return json.loads(response.model_dump_json())
    url = server.rstrip("/") + path
    try:
        resp = httpx.post(url, json=payload, timeout=timeout)
    except httpx.HTTPError as exc:
        raise ServiceUnreachableError(
            f"server request failed: {exc}", stage="cli", url=url
        )
    if resp.status_code != 200:
        try:
            body = resp.json()
        except Exception:
            body = {"error": "HTTPError", "stage": "cli",
                    "message": f"HTTP {resp.status_code} from {url}"}
        raise PipelineError(
            body.get("message", f"HTTP {resp.status_code}"),
            stage=body.get("stage", "cli"),
            **{k: v for k, v in body.items() if k not in ("message", "stage")},
        )
    return resp.json()


def _read_scene_arg(path):
    """A scene file is @-records or the JSON array form; sniff by content."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("[") or stripped.startswith("{"):
        return None, json.loads(text)
    return text, None


def _resolve_segmenter(value):
    if value in (None, "offline"):
        return "offline"
    if value == "url":
        url = os.environ.get("BINSCENE_SEGMENTER_URL", "")
        if not url:
            raise PipelineError(
                "--segmenter url needs BINSCENE_SEGMENTER_URL in the environment",
                stage="cli",
            )
        return url
    return value  # explicit URL


def _build_config(args):
    data = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data.update(json.load(fh))
    if args.scene:
        scene_text, scene_json = _read_scene_arg(args.scene)
        data.pop("scene", None)
        data.pop("scene_json", None)
        data.pop("prose", None)
        if scene_json is not None:
            data["scene_json"] = scene_json
        else:
            data["scene"] = scene_text
    if args.prose:
        data.pop("scene", None)
        data.pop("scene_json", None)
        data["prose"] = args.prose
    if args.segmenter is not None:
        data["segmenter"] = _resolve_segmenter(args.segmenter)
    for flag, key in (
        ("source", "source"),
        ("spatializer", "spatializer"),
        ("sr", "sample_rate"),
        ("frame", "frame_length"),
        ("hop", "hop"),
        ("fft", "fft_size"),
        ("seed", "seed"),
        ("workers", "workers"),
        ("timeout", "timeout"),
        ("debug_spectra", "debug_spectra_dir"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value
    if getattr(args, "defaults", None):
        data["defaults_table"] = {
            k: list(v) for k, v in load_defaults_table(args.defaults).items()
        }
    return data


def _write_wav_b64(wav_b64, out_path, pcm16=False):
    raw = base64.b64decode(wav_b64)
    if pcm16:
        samples, rate = audio_io.decode_wav(raw)
        raw = audio_io.encode_wav(samples, rate, fmt="pcm16")
    with open(out_path, "wb") as fh:
        fh.write(raw)


def cmd_render(args):
    payload = _build_config(args)
    reply = _dispatch("/render", payload, args.server)
    if args.out:
        _write_wav_b64(reply["wav_base64"], args.out, pcm16=args.pcm16)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(reply["report"], fh, indent=2, sort_keys=True)
            fh.write("\n")
    report = reply["report"]
    print(
        f"rendered {report['timeline_seconds']:.3f} s at {report['sample_rate']} Hz"
        + (f" -> {args.out}" if args.out else "")
    )
    return 0


def cmd_parse(args):
    payload = {"sample_rate": args.sr}
    if args.scene:
        scene_text, scene_json = _read_scene_arg(args.scene)
        payload["scene"] = scene_text
        payload["scene_json"] = scene_json
    elif args.prose:
        payload["prose"] = args.prose
        payload["segmenter"] = _resolve_segmenter(args.segmenter)
    else:
        raise PipelineError("parse needs --scene or --prose", stage="cli")
    reply = _dispatch("/parse", payload, args.server)
    if args.to == "json":
        text = json.dumps(reply["events"], indent=2) + "\n"
    else:
        text = "\n".join(reply["records"]) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _wav_b64_from_file(path):
    with open(path, "rb") as fh:
        return base64.b64encode(fh.read()).decode("ascii")


def cmd_eval(args):
    payload = {
        "pred_wav_base64": _wav_b64_from_file(args.pred),
        "ref_wav_base64": _wav_b64_from_file(args.ref),
        "w_l2": args.w_l2,
        "w_phase": args.w_phase,
        "w_iid": args.w_iid,
        "w_stft": args.w_stft,
    }
    reply = _dispatch("/eval", payload, args.server)
    print(json.dumps(reply["metrics"], indent=2, sort_keys=True))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(reply, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.csv:
        fields = ["pred", "ref", "l2", "phase_l1", "iid_l2", "stft", "mag_l1", "total"]
        row = {"pred": args.pred, "ref": args.ref, **reply["metrics"]}
        new_file = not os.path.exists(args.csv)
        with open(args.csv, "a", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            if new_file:
                writer.writeheader()
            writer.writerow(row)
    return 0


def cmd_localize(args):
    payload = {"wav_base64": _wav_b64_from_file(args.input)}
    if args.hrir:
        payload["hrir_dir"] = args.hrir
    reply = _dispatch("/localize", payload, args.server)
    print(json.dumps(reply, indent=2, sort_keys=True))
    return 0


def cmd_selftest(args):
    payload = {
        "frame_length": args.frame,
        "hop": args.hop,
        "fft_size": args.fft,
        "duration": args.duration,
        "sample_rate": args.sr,
    }
    payload = {k: v for k, v in payload.items() if v is not None}
    reply = _dispatch("/selftest", payload, args.server)
    print(json.dumps(reply, indent=2, sort_keys=True))
    return 0 if reply["passed"] else 1


def cmd_serve(args):
    import uvicorn

    uvicorn.run("binscene.service:app", host=args.host, port=args.port)
    return 0


def _add_server_flag(p):
    p.add_argument(
        "--server",
        default=os.environ.get("BINSCENE_SERVER") or None,
        help="remote service URL; default runs in-process",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="binscene",
        description="Compile sound-scene descriptions into binaural audio.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a scene or prose prompt to WAV")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scene", help="scene file (@-records or JSON array)")
    src.add_argument("--prose", help="free-text description to segment")
    p.add_argument("--segmenter", help="offline | url | explicit service URL")
    p.add_argument("--source", help="synth | corpus:<dir> | service:<url>")
    p.add_argument("--spatializer", help="parametric | hrir:<dir>")
    p.add_argument("--out", help="output WAV path")
    p.add_argument("--report", help="write the render report JSON here")
    p.add_argument("--pcm16", action="store_true", help="write 16-bit PCM")
    p.add_argument("--sr", type=int, help="sample rate override")
    p.add_argument("--frame", type=int, help="analysis frame length")
    p.add_argument("--hop", type=int, help="analysis hop")
    p.add_argument("--fft", type=int, help="transform size")
    p.add_argument("--seed", type=int, help="seed for synthetic sources")
    p.add_argument("--workers", type=int, help="parallel event renders")
    p.add_argument("--timeout", type=float, help="backend HTTP timeout seconds")
    p.add_argument("--config", help="JSON run config; explicit flags win")
    p.add_argument("--defaults", help="keyword placement table file")
    p.add_argument("--debug-spectra", dest="debug_spectra",
                   help="dump per-frame spectra CSVs under this directory")
    _add_server_flag(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("parse", help="normalize a scene (or prose) to records/JSON")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scene", help="scene file (@-records or JSON array)")
    src.add_argument("--prose", help="free-text description to segment")
    p.add_argument("--segmenter", help="offline | url | explicit service URL")
    p.add_argument("--sr", type=int, help="sample rate override")
    p.add_argument("--to", choices=("records", "json"), default="records")
    p.add_argument("--out", help="write here instead of stdout")
    _add_server_flag(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="score a rendered WAV against a reference")
    p.add_argument("--pred", required=True, help="predicted stereo WAV")
    p.add_argument("--ref", required=True, help="reference stereo WAV")
    p.add_argument("--w-l2", type=float, default=1000.0)
    p.add_argument("--w-phase", type=float, default=1.0)
    p.add_argument("--w-iid", type=float, default=10.0)
    p.add_argument("--w-stft", type=float, default=1.0)
    p.add_argument("--json", help="write the full reply JSON here")
    p.add_argument("--csv", help="append a one-row CSV summary here")
    _add_server_flag(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("localize", help="estimate direction labels for a WAV")
    p.add_argument("--in", dest="input", required=True, help="stereo WAV")
    p.add_argument("--hrir", help="HRIR directory for spectral templates")
    _add_server_flag(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser(
        "roundtrip-selftest", help="verify the analysis/synthesis identity"
    )
    p.add_argument("--frame", type=int)
    p.add_argument("--hop", type=int)
    p.add_argument("--fft", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--sr", type=int)
    _add_server_flag(p)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as err:
        print(json.dumps(err.to_json(), sort_keys=True), file=sys.stderr)
        return 1
    except ValidationError as err:
        payload = {
            "error": "ValidationError",
            "stage": "cli",
            "message": "; ".join(e["msg"] for e in err.errors()),
        }
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return 2
    except OSError as err:
        payload = {"error": type(err).__name__, "stage": "cli", "message": str(err)}
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
