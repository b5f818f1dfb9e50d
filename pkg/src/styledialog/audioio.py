"""16-bit PCM mono WAV reading/writing via the stdlib wave module.

quantize_int16 is applied both when writing WAVs and when rendering corpus
audio in memory, so a clip compared against its own file round-trip is
bit-identical.
"""

from __future__ import annotations

import wave

import numpy as np

from .dialog import AudioClip


def quantize_int16(samples: np.ndarray) -> np.ndarray:
    """Round-trip float samples through int16, like a WAV write+read."""
    ints = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype(np.int16)
    return ints.astype(np.float64) / 32767.0


def write_wav(path, clip: AudioClip) -> None:
    ints = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype(np.int16)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(clip.sample_rate)
        fh.writeframes(ints.tobytes())


def read_wav(path, source_id: str | None = None) -> AudioClip:
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()} bits")
        sr = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype=np.int16).astype(np.float64) / 32767.0
    return AudioClip(sample_rate=sr, samples=samples, source_id=source_id)
