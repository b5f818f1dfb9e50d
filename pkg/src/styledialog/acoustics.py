"""DSP feature extraction: pitch, energy, harmonicity, rate, and the toy
style encoder / speaker embedding.

Pitch and harmonicity come from the normalized cross-correlation (NCCF) of
each frame within the lag band of the search range, with parabolic peak
refinement.  A frame is voiced when the refined peak exceeds 0.30 and the
frame RMS clears the silence floor (1e-4, about -80 dBFS).  Both constants
are deliberate fixed defaults so every downstream test is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dialog import STYLE_DIM, AudioClip, StyleVector

SILENCE_FLOOR_RMS = 1e-4
VOICING_THRESHOLD = 0.30
HNR_DB_MIN = -20.0
HNR_DB_MAX = 40.0

# Style normalization spans, chosen so every component is O(1).
PITCH_NORM_HZ = 500.0
PITCH_STD_NORM_HZ = 100.0
HNR_SPAN_DB = 60.0
RATE_CAP_PER_S = 20.0
DURATION_CAP_S = 60.0

EMBED_DIM = 16


@dataclass(frozen=True)
class FrameSpec:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    window: str = "hann"  # "rectangular" | "hann"

    def __post_init__(self):
        if not 0 < self.hop_ms <= self.frame_ms:
            raise ValueError(f"need 0 < hop_ms <= frame_ms, got {self.hop_ms}/{self.frame_ms}")
        if self.window not in ("rectangular", "hann"):
            raise ValueError(f"unknown window {self.window!r}")

    def frame_len(self, sample_rate: int) -> int:
        return max(1, int(round(sample_rate * self.frame_ms / 1000.0)))

    def hop_len(self, sample_rate: int) -> int:
        return max(1, int(round(sample_rate * self.hop_ms / 1000.0)))


@dataclass(frozen=True)
class AcousticSummary:
    """The per-clip feature row used for acoustic correlation reports."""

    pitch_mean: float
    pitch_std: float
    energy_mean: float
    energy_std: float
    hnr_db: float
    duration_s: float
    voiced_fraction: float

    def as_dict(self) -> dict:
        return {
            "pitch_mean": self.pitch_mean,
            "pitch_std": self.pitch_std,
            "energy_mean": self.energy_mean,
            "energy_std": self.energy_std,
            "hnr_db": self.hnr_db,
            "duration_s": self.duration_s,
            "voiced_fraction": self.voiced_fraction,
        }


def _frames(samples: np.ndarray, frame_len: int, hop_len: int) -> np.ndarray:
    """(n_frames, frame_len) view; a clip shorter than one frame yields one
    zero-padded frame so short clips still have defined energy."""
    n = len(samples)
    if n == 0:
        return np.zeros((0, frame_len))
    if n < frame_len:
        padded = np.zeros(frame_len)
        padded[:n] = samples
        return padded[None, :]
    n_frames = 1 + (n - frame_len) // hop_len
    idx = hop_len * np.arange(n_frames)[:, None] + np.arange(frame_len)[None, :]
    return samples[idx]


def frame_rms(clip: AudioClip, spec: FrameSpec | None = None) -> np.ndarray:
    spec = spec or FrameSpec()
    frames = _frames(clip.samples, spec.frame_len(clip.sample_rate), spec.hop_len(clip.sample_rate))
    if frames.shape[0] == 0:
        return np.zeros(0)
    return np.sqrt(np.mean(frames ** 2, axis=1))


def _nccf_peak(frame: np.ndarray, lag_min: int, lag_max: int):
    """Refined (lag, peak_value) of the frame's normalized cross-correlation
    within [lag_min, lag_max].  Returns (0.0, 0.0) for degenerate frames."""
    n = len(frame)
    lag_max = min(lag_max, n - 2)
    if lag_max <= lag_min:
        return 0.0, 0.0
    # numerator(tau) = sum_t x[t] x[t+tau]; denominator from running energies
    full = np.correlate(frame, frame, mode="full")
    num = full[n - 1 + lag_min - 1: n - 1 + lag_max + 2]  # lags lag_min-1 .. lag_max+1
    sq = frame ** 2
    csum = np.concatenate(([0.0], np.cumsum(sq)))
    lags = np.arange(lag_min - 1, lag_max + 2)
    e_head = csum[n - lags]              # energy of x[0 : n-tau]
    e_tail = csum[n] - csum[lags]        # energy of x[tau : n]
    denom = np.sqrt(e_head * e_tail)
    r = np.where(denom > 1e-20, num / np.maximum(denom, 1e-20), 0.0)
    # score local maxima with a small octave cost so lag multiples of the
    # true period (subharmonics with near-equal correlation) do not win
    band = r[1:-1]
    band_lags = lags[1:-1].astype(np.float64)
    is_max = (band >= np.roll(r, 1)[1:-1]) & (band >= np.roll(r, -1)[1:-1])
    candidates = np.flatnonzero(is_max)
    if candidates.size:
        scores = band[candidates] - 0.03 * np.log2(band_lags[candidates] / lag_min)
        i = int(candidates[np.argmax(scores)]) + 1
    else:
        i = int(np.argmax(band)) + 1
    r0, rm, rp = r[i], r[i - 1], r[i + 1]
    lag = float(lags[i])
    peak = float(r0)
    curv = rm - 2.0 * r0 + rp
    if curv < 0:
        shift = 0.5 * (rm - rp) / curv
        if -1.0 < shift < 1.0:
            lag += shift
            peak = float(r0 - 0.25 * (rm - rp) * shift)
    return lag, min(peak, 1.0 - 1e-12)


def _track(clip: AudioClip, spec: FrameSpec, f_min: float, f_max: float):
    """Per-frame (f0, nccf peak, voiced). Shared by pitch_track and hnr."""
    sr = clip.sample_rate
    if not 0 < f_min < f_max <= sr / 2:
        raise ValueError(f"invalid pitch band [{f_min}, {f_max}] at {sr} Hz")
    frame_len = spec.frame_len(sr)
    hop_len = spec.hop_len(sr)
    if len(clip.samples) < frame_len:
        return np.zeros(0), np.zeros(0), np.zeros(0, dtype=bool)
    frames = _frames(clip.samples, frame_len, hop_len)
    lag_min = max(2, int(math.floor(sr / f_max)))
    lag_max = int(math.ceil(sr / f_min))
    f0 = np.zeros(len(frames))
    peak = np.zeros(len(frames))
    voiced = np.zeros(len(frames), dtype=bool)
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    for i, frame in enumerate(frames):
        if rms[i] <= SILENCE_FLOOR_RMS:
            continue
        lag, p = _nccf_peak(frame, lag_min, lag_max)
        peak[i] = p
        if lag > 0:
            f0[i] = sr / lag
        voiced[i] = p > VOICING_THRESHOLD and rms[i] > SILENCE_FLOOR_RMS
    return f0, peak, voiced


def pitch_track(clip: AudioClip, spec: FrameSpec | None = None,
                f_min: float = 50.0, f_max: float = 500.0):
    """Per-frame (f0_hz, voiced) arrays. Shorter than one frame -> empty track."""
    spec = spec or FrameSpec()
    f0, _, voiced = _track(clip, spec, f_min, f_max)
    return f0, voiced


def energy_stats(clip: AudioClip, spec: FrameSpec | None = None):
    """(mean, population std) of the per-frame RMS."""
    rms = frame_rms(clip, spec)
    if rms.size == 0:
        return 0.0, 0.0
    return float(np.mean(rms)), float(np.std(rms))


def hnr(clip: AudioClip, spec: FrameSpec | None = None,
        f_min: float = 50.0, f_max: float = 500.0) -> float:
    """Mean over voiced frames of 10*log10(r/(1-r)), clamped to [-20, 40]."""
    spec = spec or FrameSpec()
    _, peak, voiced = _track(clip, spec, f_min, f_max)
    if not np.any(voiced):
        return HNR_DB_MIN
    r = np.clip(peak[voiced], 1e-12, 1.0 - 1e-12)
    per_frame = np.clip(10.0 * np.log10(r / (1.0 - r)), HNR_DB_MIN, HNR_DB_MAX)
    return float(np.clip(np.mean(per_frame), HNR_DB_MIN, HNR_DB_MAX))


def _count_energy_peaks(rms: np.ndarray) -> int:
    """Syllable-proxy events: local RMS maxima gated by an interleaving valley.

    A new peak is only accepted after the envelope has dipped below 45% of
    the loudest frame, which keeps micro-ripple on a rising slope from
    double counting one syllable bump.
    """
    if rms.size < 3:
        return 1 if rms.size and rms.max() > SILENCE_FLOOR_RMS else 0
    top = rms.max()
    if top <= SILENCE_FLOOR_RMS:
        return 0
    count = 0
    armed = True
    for i in range(1, len(rms) - 1):
        if not armed and rms[i] < 0.45 * top:
            armed = True
        if armed and rms[i] >= rms[i - 1] and rms[i] > rms[i + 1] and rms[i] > 0.5 * top:
            count += 1
            armed = False
    if count == 0:
        count = 1  # some audible energy but no interior maximum (monotone envelope)
    return count


def speaking_rate(clip: AudioClip, spec: FrameSpec | None = None) -> float:
    """Energy-peak events per second, capped at RATE_CAP_PER_S."""
    if clip.duration_seconds <= 0:
        return 0.0
    rms = frame_rms(clip, spec)
    rate = _count_energy_peaks(rms) / clip.duration_seconds
    return min(rate, RATE_CAP_PER_S)


def encode_style(clip: AudioClip) -> StyleVector:
    """Encode a clip into the 8-dim prosodic style vector.

    Layout: [pitch_mean/500, pitch_std/100, energy_mean, energy_std,
    (hnr+20)/60, rate/20, log(1+dur)/log(61), voiced_fraction].
    Silence is legal input and yields zero pitch components with
    voiced_fraction 0; an empty clip is an error.
    """
    if len(clip.samples) == 0:
        raise ValueError("cannot encode an empty clip")
    spec = FrameSpec()
    f0, _, voiced = _track(clip, spec, 50.0, 500.0)
    if np.any(voiced):
        pitch_mean = float(np.mean(f0[voiced]))
        # capped so the component stays within its documented bound even
        # when stray noise frames lock onto scattered pitches
        pitch_std = min(float(np.std(f0[voiced])), 1.3 * PITCH_STD_NORM_HZ)
        voiced_fraction = float(np.mean(voiced))
    else:
        pitch_mean = pitch_std = voiced_fraction = 0.0
    e_mean, e_std = energy_stats(clip, spec)
    hnr_db = hnr(clip, spec)
    rate = speaking_rate(clip, spec)
    dur = min(clip.duration_seconds, DURATION_CAP_S)
    values = (
        pitch_mean / PITCH_NORM_HZ,
        pitch_std / PITCH_STD_NORM_HZ,
        e_mean,
        e_std,
        (hnr_db - HNR_DB_MIN) / HNR_SPAN_DB,
        rate / RATE_CAP_PER_S,
        math.log1p(dur) / math.log1p(DURATION_CAP_S),
        voiced_fraction,
    )
    return StyleVector(values=values, kind="prosodic")


def _mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def acoustic_embedding(clip: AudioClip) -> np.ndarray:
    """L2-normalized band-energy ratios over 16 mel-spaced bands (50 Hz..Nyquist)."""
    if len(clip.samples) == 0:
        raise ValueError("cannot embed an empty clip")
    spec = FrameSpec()
    frame_len = spec.frame_len(clip.sample_rate)
    frames = _frames(clip.samples, frame_len, spec.hop_len(clip.sample_rate))
    win = np.hanning(frame_len)
    power = np.mean(np.abs(np.fft.rfft(frames * win, axis=1)) ** 2, axis=0)
    freqs = np.fft.rfftfreq(frame_len, d=1.0 / clip.sample_rate)
    edges = _mel_inv(np.linspace(_mel(50.0), _mel(clip.sample_rate / 2.0), EMBED_DIM + 1))
    bands = np.zeros(EMBED_DIM)
    for b in range(EMBED_DIM):
        mask = (freqs >= edges[b]) & (freqs < edges[b + 1])
        bands[b] = power[mask].sum() if np.any(mask) else 0.0
    total = bands.sum()
    if total <= 1e-30:
        bands = np.ones(EMBED_DIM)  # silence: flat profile, still unit norm
    else:
        bands = bands / total
    return bands / np.linalg.norm(bands)


def summarize(clip: AudioClip) -> AcousticSummary:
    """Aggregate every per-clip feature into one summary row."""
    if len(clip.samples) == 0:
        return AcousticSummary(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    spec = FrameSpec()
    f0, _, voiced = _track(clip, spec, 50.0, 500.0)
    if np.any(voiced):
        pitch_mean = float(np.mean(f0[voiced]))
        pitch_std = float(np.std(f0[voiced]))
        voiced_fraction = float(np.mean(voiced))
    else:
        pitch_mean = pitch_std = voiced_fraction = 0.0
    e_mean, e_std = energy_stats(clip, spec)
    return AcousticSummary(
        pitch_mean=pitch_mean,
        pitch_std=pitch_std,
        energy_mean=e_mean,
        energy_std=e_std,
        hnr_db=hnr(clip, spec),
        duration_s=clip.duration_seconds,
        voiced_fraction=voiced_fraction,
    )
