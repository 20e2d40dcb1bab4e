"""HTTP service over the render pipeline.

Every endpoint takes and returns JSON; audio travels base64-encoded so
requests stay self-contained. The handler functions are plain callables:
the CLI invokes them in-process by default, FastAPI routes them when the
service runs behind uvicorn, and both paths share the pydantic models.
"""

from __future__ import annotations

import base64

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from . import audio_io, metrics, pipeline, spatial
from .errors import PipelineError, ServiceUnreachableError
from .render import BinauralClip

app = FastAPI(title="binscene", version=__version__)


class RenderResponse(BaseModel):
    sample_rate: int
    wav_base64: str
    report: dict


class ParseRequest(BaseModel):
    scene: str | None = None
    scene_json: list | None = None
    prose: str | None = None
    segmenter: str = "offline"
    sample_rate: int | None = None


class ParseResponse(BaseModel):
    sample_rate: int
    timeline_seconds: float
    events: list[dict]
    records: list[str]


class EvalRequest(BaseModel):
    pred_wav_base64: str
    ref_wav_base64: str
    w_l2: float = 1000.0
    w_phase: float = 1.0
    w_iid: float = 10.0
    w_stft: float = 1.0


class EvalResponse(BaseModel):
    metrics: dict
    sample_rate: int
    samples: int


class LocalizeRequest(BaseModel):
    wav_base64: str
    hrir_dir: str | None = None


class LocalizeResponse(BaseModel):
    left_right: str
    front_rear: str
    above_below: str
    confidence: float
    itd_seconds: float
    ild_db: float
    matched_azimuth: float | None = None
    matched_elevation: float | None = None


class SelftestRequest(BaseModel):
    frame_length: int = 1024
    hop: int = 512
    fft_size: int = 2048
    duration: float = Field(default=1.0, gt=0, le=60)
    sample_rate: int = 16000


class SelftestResponse(BaseModel):
    samples: int
    max_abs_error: float
    snr_db: float
    elapsed_s: float
    passed: bool


def _decode_binaural(wav_b64, what):
    try:
        samples, rate = audio_io.decode_wav(base64.b64decode(wav_b64))
    except Exception:
        raise PipelineError(f"{what} is not decodable WAV data", stage="metrics")
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise PipelineError(f"{what} must be stereo", stage="metrics")
    return BinauralClip(samples[:, 0], samples[:, 1], rate)


@app.get("/health")
def handle_health():
    return {"status": "ok", "version": __version__}


@app.post("/render", response_model=RenderResponse)
def handle_render(config: pipeline.RunConfig) -> RenderResponse:
    clip, report, _ = pipeline.run_render(config)
    wav = audio_io.encode_wav(clip.channels, clip.sample_rate, fmt="float32")
    return RenderResponse(
        sample_rate=clip.sample_rate,
        wav_base64=base64.b64encode(wav).decode("ascii"),
        report=report,
    )


@app.post("/parse", response_model=ParseResponse)
def handle_parse(req: ParseRequest) -> ParseResponse:
    config = pipeline.RunConfig(
        scene=req.scene,
        scene_json=req.scene_json,
        prose=req.prose,
        segmenter=req.segmenter,
        sample_rate=req.sample_rate,
    )
    return ParseResponse(**pipeline.run_parse(config))


@app.post("/eval", response_model=EvalResponse)
def handle_eval(req: EvalRequest) -> EvalResponse:
    pred = _decode_binaural(req.pred_wav_base64, "prediction")
    ref = _decode_binaural(req.ref_wav_base64, "reference")
    config = metrics.MetricConfig(
        w_l2=req.w_l2, w_phase=req.w_phase, w_iid=req.w_iid, w_stft=req.w_stft
    )
    report = metrics.eval_pair(pred, ref, config)
    return EvalResponse(
        metrics=report.to_dict(), sample_rate=pred.sample_rate, samples=len(pred)
    )


@app.post("/localize", response_model=LocalizeResponse)
def handle_localize(req: LocalizeRequest) -> LocalizeResponse:
    clip = _decode_binaural(req.wav_base64, "input")
    hrir_set = spatial.load_hrir_dir(req.hrir_dir) if req.hrir_dir else None
    estimate = metrics.estimate_direction(clip, hrir_set)
    return LocalizeResponse(**estimate.to_dict())


@app.post("/selftest", response_model=SelftestResponse)
def handle_selftest(req: SelftestRequest) -> SelftestResponse:
    result = pipeline.run_selftest(
        frame_length=req.frame_length,
        hop=req.hop,
        fft_size=req.fft_size,
        duration=req.duration,
        sample_rate=req.sample_rate,
    )
    return SelftestResponse(**result)


@app.exception_handler(PipelineError)
def _pipeline_error_handler(request, exc: PipelineError):
    status = 502 if isinstance(exc, ServiceUnreachableError) else 422
    return JSONResponse(status_code=status, content=exc.to_json())
