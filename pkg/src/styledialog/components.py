"""Deterministic toy components: corpus-lookup recognizer with controllable
WER, oracle/markov responder, and a harmonic synthesizer whose output can be
re-encoded into the style it was asked to render.

Component instances are immutable after construction; per-turn state flows
through the conversation context, which is what lets the scheduler run ASR
and style extraction in the background during playback.
"""

from __future__ import annotations

import hashlib
import math
import random
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import acoustics
from .dialog import AudioClip, Conversation, StyleVector

START_TOKEN = "<s>"
END_TOKEN = "</s>"
MARKOV_MAX_TOKENS = 60

SYNTH_SAMPLE_RATE = 16000
MIN_TOKEN_RATE = 2.0         # tokens per second floor when decoding rate
ENVELOPE_FLOOR = 0.35        # per-token envelope floor, keeps frames voiced
HARMONIC_BASE = (1.0, 0.45, 0.30, 0.20, 0.13, 0.08)


@dataclass(frozen=True)
class LatencyModel:
    """Affine cost: fixed + a*input_audio_s + b*output_tokens + c*output_audio_s."""

    fixed_s: float = 0.0
    per_input_audio_s: float = 0.0
    per_output_token_s: float = 0.0
    per_output_audio_s: float = 0.0

    def __post_init__(self):
        for name in ("fixed_s", "per_input_audio_s", "per_output_token_s", "per_output_audio_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def evaluate(self, input_dur: float, out_tokens: int, out_dur: float) -> float:
        return (self.fixed_s + self.per_input_audio_s * input_dur
                + self.per_output_token_s * out_tokens
                + self.per_output_audio_s * out_dur)

    @classmethod
    def from_dict(cls, d: dict) -> "LatencyModel":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class RecognitionResult:
    text: str
    latency_s: float


@dataclass(frozen=True)
class ResponderOutput:
    text: str
    prosodic_style: StyleVector
    latency_s: float


@dataclass(frozen=True)
class MarkovTable:
    """Add-one-smoothed bigram counts over whitespace tokens."""

    counts: dict          # prev token -> Counter of successors
    totals: dict          # prev token -> total observed successors
    vocab: tuple          # sorted successor vocabulary, END_TOKEN included

    def probability(self, prev: str, token: str) -> float:
        c = self.counts.get(prev, {}).get(token, 0)
        total = self.totals.get(prev, 0)
        return (c + 1) / (total + len(self.vocab))

    def sample(self, rng: random.Random, max_tokens: int = MARKOV_MAX_TOKENS) -> str:
        out = []
        prev = START_TOKEN
        weights_cache = {}
        while len(out) < max_tokens:
            if prev not in weights_cache:
                weights_cache[prev] = [self.probability(prev, w) for w in self.vocab]
            token = rng.choices(self.vocab, weights=weights_cache[prev])[0]
            if token == END_TOKEN:
                break
            out.append(token)
            prev = token
        return " ".join(out)


def train_markov(corpus: list[Conversation]) -> MarkovTable:
    """Bigram table with start/end markers over every turn in the corpus."""
    counts: dict[str, Counter] = {}
    totals: dict[str, int] = {}
    vocab = set()
    n_turns = 0
    for conv in corpus:
        for turn in conv.turns:
            tokens = turn.text.split()
            if not tokens:
                continue
            n_turns += 1
            seq = [START_TOKEN] + tokens + [END_TOKEN]
            for prev, nxt in zip(seq, seq[1:]):
                counts.setdefault(prev, Counter())[nxt] += 1
                totals[prev] = totals.get(prev, 0) + 1
                vocab.add(nxt)
    if n_turns == 0:
        raise RuntimeError("cannot train a bigram table on an empty corpus")
    return MarkovTable(counts=counts, totals=totals, vocab=tuple(sorted(vocab)))


class ToyRecognizer:
    """Looks the transcript up in the corpus and injects word substitutions
    to hit the target WER exactly (substitution-only noise)."""

    def __init__(self, corpus_index, latency: LatencyModel | None = None):
        self._index = corpus_index
        self._latency = latency or LatencyModel()

    def recognize(self, clip: AudioClip, target_wer: float = 0.0,
                  rng_seed: int = 0) -> RecognitionResult:
        if not 0.0 <= target_wer <= 1.0:
            raise ValueError(f"target_wer must be in [0, 1], got {target_wer}")
        if clip.source_id is None or clip.source_id not in self._index:
            raise KeyError(f"unknown audio source {clip.source_id!r}")
        truth = self._index[clip.source_id]
        words = truth.split()
        n_sub = math.ceil(target_wer * len(words))
        if n_sub:
            rng = random.Random(f"{rng_seed}:{clip.source_id}")
            for j, pos in enumerate(sorted(rng.sample(range(len(words)), n_sub))):
                words[pos] = f"zzsub{j}zz"
        latency = self._latency.evaluate(clip.duration_seconds, len(words), 0.0)
        return RecognitionResult(text=" ".join(words), latency_s=latency)


class ToyResponder:
    """Generates the next turn's text and prosodic style.

    Text modes: oracle (corpus ground truth) or markov (seeded bigram
    sampling).  Style modes: oracle, context_average, last_same_speaker.
    """

    def __init__(self, target_index, latency: LatencyModel | None = None,
                 markov: MarkovTable | None = None):
        # target_index: source_id -> (target_text, target_style, target_speaker)
        self._targets = target_index
        self._latency = latency or LatencyModel()
        self._markov = markov

    def _target(self, clip: AudioClip):
        if clip.source_id is None or clip.source_id not in self._targets:
            raise KeyError(f"no ground-truth target for source {clip.source_id!r}")
        return self._targets[clip.source_id]

    def respond(self, clip: AudioClip, context, mode: str = "oracle",
                style_mode: str = "oracle", rng_seed: int = 0,
                response_speaker: str | None = None) -> ResponderOutput:
        if mode == "oracle":
            text, target_style, target_speaker = self._target(clip)
        elif mode == "markov":
            if self._markov is None:
                raise RuntimeError("markov mode requires a trained bigram table")
            text = self._markov.sample(random.Random(f"{rng_seed}:{clip.source_id}"))
            target_style = target_speaker = None
        else:
            raise ValueError(f"unknown responder mode {mode!r}")

        speaker = response_speaker or target_speaker
        if style_mode == "oracle":
            if target_style is None:
                _, target_style, _ = self._target(clip)
            style = target_style
        elif style_mode in ("context_average", "last_same_speaker"):
            style = self._context_style(context, style_mode, speaker)
        else:
            raise ValueError(f"unknown style mode {style_mode!r}")

        latency = self._latency.evaluate(clip.duration_seconds, len(text.split()), 0.0)
        return ResponderOutput(text=text, prosodic_style=style, latency_s=latency)

    @staticmethod
    def _context_style(context, style_mode, speaker):
        if style_mode == "last_same_speaker" and speaker is not None:
            for entry in reversed(context.entries):
                if entry.speaker == speaker:
                    return entry.style
        if context.entries:
            mean = np.mean([e.style.as_array() for e in context.entries], axis=0)
            return StyleVector(values=tuple(mean), kind="prosodic")
        if speaker is not None and speaker in context.reference_styles:
            return context.reference_styles[speaker][0]
        raise ValueError("empty context and no reference style to fall back on")


def _synthesis_seed(text: str, prosodic: StyleVector, acoustic: StyleVector) -> int:
    payload = repr((text, prosodic.values, acoustic.values)).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


class ToySynthesizer:
    """Renders text as a harmonic tone with one amplitude bump per token.

    Prosodic components drive pitch mean/std, energy, harmonicity, and
    token rate; the acoustic style sets the harmonic amplitude weights
    (timbre).  Output is deterministic given (text, styles).
    """

    def __init__(self, latency: LatencyModel | None = None,
                 sample_rate: int = SYNTH_SAMPLE_RATE):
        self._latency = latency or LatencyModel()
        self.sample_rate = sample_rate

    def latency_for(self, input_dur: float, out_tokens: int, out_dur: float) -> float:
        return self._latency.evaluate(input_dur, out_tokens, out_dur)

    def synthesize(self, text: str, prosodic: StyleVector,
                   acoustic: StyleVector) -> AudioClip:
        if not text.split():
            raise ValueError("cannot synthesize empty text")
        if prosodic.kind != "prosodic":
            raise ValueError("first style must be prosodic")
        if acoustic.kind != "acoustic":
            raise ValueError("second style must be acoustic")
        sr = self.sample_rate
        tokens = text.split()
        p = prosodic.values
        rate = max(MIN_TOKEN_RATE, p[5] * acoustics.RATE_CAP_PER_S)
        duration = len(tokens) / rate
        n = int(round(duration * sr))
        rng = np.random.default_rng(_synthesis_seed(text, prosodic, acoustic))

        f0 = self._pitch_contour(rng, n, sr,
                                 mean_hz=float(np.clip(p[0] * acoustics.PITCH_NORM_HZ, 70.0, 450.0)),
                                 std_hz=float(np.clip(p[1] * acoustics.PITCH_STD_NORM_HZ, 0.0, 40.0)))
        phase = 2.0 * math.pi * np.cumsum(f0) / sr

        weights = [HARMONIC_BASE[0]]
        for k in range(1, len(HARMONIC_BASE)):
            a = abs(acoustic.values[k - 1]) if k - 1 < len(acoustic.values) else 0.0
            weights.append(HARMONIC_BASE[k] * (0.25 + min(a, 1.0)))
        harmonic = np.zeros(n)
        for k, w in enumerate(weights, start=1):
            harmonic += w * np.sin(k * phase)

        hnr_db = p[4] * acoustics.HNR_SPAN_DB + acoustics.HNR_DB_MIN
        harmonic_power = sum(w * w for w in weights) / 2.0
        sigma = math.sqrt(harmonic_power * 10.0 ** (-hnr_db / 10.0))
        signal = harmonic + sigma * rng.standard_normal(n)

        # one raised-cosine bump per token so the rate is recoverable from
        # the energy envelope
        t = np.arange(n) / sr
        u = (t * rate) % 1.0
        envelope = ENVELOPE_FLOOR + (1.0 - ENVELOPE_FLOOR) * np.sin(math.pi * u) ** 2
        signal *= envelope

        # scale so the mean frame RMS matches the requested energy component
        target = max(p[2], 1e-3)
        spec = acoustics.FrameSpec()
        frames = acoustics._frames(signal, spec.frame_len(sr), spec.hop_len(sr))
        mean_rms = float(np.mean(np.sqrt(np.mean(frames ** 2, axis=1))))
        if mean_rms > 0:
            signal *= target / mean_rms
        # hard-limit stray noise peaks; clipping the tail barely moves the
        # frame RMS, whereas rescaling the whole clip would break the energy
        # component of the style round trip
        signal = np.clip(signal, -0.99, 0.99)
        return AudioClip(sample_rate=sr, samples=signal)

    @staticmethod
    def _pitch_contour(rng, n, sr, mean_hz, std_hz):
        """Mean-reverting random walk at a 100 Hz control rate, interpolated."""
        ctrl_hz = 100.0
        n_ctrl = max(2, int(math.ceil(n / sr * ctrl_hz)) + 1)
        # slow walk: within one analysis frame the pitch is effectively
        # constant, so the injected noise floor alone sets the measured HNR
        rho = math.exp(-1.0 / (ctrl_hz * 8.0))
        innov = std_hz * math.sqrt(1.0 - rho * rho)
        walk = np.empty(n_ctrl)
        walk[0] = mean_hz + std_hz * rng.standard_normal()
        for i in range(1, n_ctrl):
            walk[i] = mean_hz + rho * (walk[i - 1] - mean_hz) + innov * rng.standard_normal()
        walk = np.clip(walk, 60.0, 480.0)
        ctrl_t = np.arange(n_ctrl) / ctrl_hz
        return np.interp(np.arange(n) / sr, ctrl_t, walk)
