"""WAV reading and writing: 16-bit PCM and 32-bit IEEE float, mono or stereo."""

from __future__ import annotations

import io

import numpy as np
from scipy.io import wavfile


def decode_wav(data):
    """Decode WAV bytes to (samples, sample_rate), samples float64 in [-1, 1].

    Shape is (n,) for mono, (n, channels) otherwise.
    """
    rate, samples = wavfile.read(io.BytesIO(data))
    if samples.dtype == np.int16:
        samples = samples.astype(np.float64) / 32768.0
    elif samples.dtype == np.int32:
        samples = samples.astype(np.float64) / 2147483648.0
    elif samples.dtype == np.uint8:
        samples = (samples.astype(np.float64) - 128.0) / 128.0
    else:
        samples = samples.astype(np.float64)
    return samples, int(rate)


def read_wav(path):
    with open(path, "rb") as fh:
        return decode_wav(fh.read())


def encode_wav(samples, sample_rate, fmt="float32"):
    """Encode samples (shape (n,) or (n, channels)) as WAV bytes."""
    samples = np.asarray(samples)
    buf = io.BytesIO()
    if fmt == "float32":
        wavfile.write(buf, int(sample_rate), samples.astype(np.float32))
    elif fmt == "pcm16":
        clipped = np.clip(samples, -1.0, 32767.0 / 32768.0)
        wavfile.write(
            buf, int(sample_rate), np.round(clipped * 32768.0).astype(np.int16)
        )
    else:
        raise ValueError(f"unknown WAV format {fmt!r}, expected float32 or pcm16")
    return buf.getvalue()


def write_wav(path, samples, sample_rate, fmt="float32"):
    with open(path, "wb") as fh:
        fh.write(encode_wav(samples, sample_rate, fmt))
