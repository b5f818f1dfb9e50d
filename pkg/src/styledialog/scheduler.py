"""Discrete-event simulation of the three pipeline topologies over a
logical clock, plus turn-end detection and the stall-free delay rule.

Delay is defined as the earliest playback start with no audio underrun.
Only the synthesis stage of the cascade and style-talker topologies
streams (its per-output-audio term produces audio linearly after the
non-streaming prefix); the e2e topology generates its speech units before
any playback, so its delay equals its full generation span.  Unfinished
background work is charged to the next turn's delay (carryover), never
dropped, so the context stays correct.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import acoustics
from .acoustics import FrameSpec
from .components import LatencyModel
from .dialog import AudioClip, Turn, context_from_turns


class Topology(str, Enum):
    CASCADE = "cascade"
    STYLE_TALKER = "style_talker"
    E2E_SPEECH = "e2e_speech"

    @classmethod
    def parse(cls, name: str) -> "Topology":
        aliases = {"cascade": cls.CASCADE, "style-talker": cls.STYLE_TALKER,
                   "style_talker": cls.STYLE_TALKER, "e2e": cls.E2E_SPEECH,
                   "e2e_speech": cls.E2E_SPEECH}
        if name not in aliases:
            raise ValueError(f"unknown topology {name!r}")
        return aliases[name]


# stage names each topology requires in the latency map
STAGES = {
    Topology.CASCADE: ("asr", "llm", "tts"),
    Topology.STYLE_TALKER: ("audio_llm", "tts", "asr", "style_enc"),
    Topology.E2E_SPEECH: ("e2e",),
}


@dataclass(frozen=True)
class StageEvent:
    stage: str
    start_s: float
    end_s: float
    turn_index: int
    lane: str  # "critical" | "background"

    def __post_init__(self):
        if self.end_s < self.start_s:
            raise ValueError("event ends before it starts")


@dataclass(frozen=True)
class SimReport:
    rtf: float
    delay_s: float
    timeline: tuple[StageEvent, ...]
    carryover_s: float

    def __post_init__(self):
        object.__setattr__(self, "timeline", tuple(self.timeline))


class ConfigurationError(ValueError):
    pass


def detect_turn_end(clip: AudioClip, silence_floor_rms: float = 1e-3,
                    min_silence_ms: float = 700.0) -> int | None:
    """First sample index s with every frame covering [s, s+min_silence]
    below the floor; None when no such silent run exists."""
    if min_silence_ms <= 0:
        raise ValueError("min_silence_ms must be positive")
    spec = FrameSpec()
    sr = clip.sample_rate
    rms = acoustics.frame_rms(clip, spec)
    if rms.size == 0:
        return None
    hop = spec.hop_len(sr)
    frame_len = spec.frame_len(sr)
    min_silence = int(round(min_silence_ms / 1000.0 * sr))
    silent = rms < silence_floor_rms
    run_start = None
    for i, s in enumerate(silent):
        if s and run_start is None:
            run_start = i
        elif not s:
            run_start = None
        if run_start is not None:
            covered = (i * hop + frame_len) - run_start * hop
            if covered >= min_silence:
                return run_start * hop
    return None


def stall_free_delay(production: list[tuple[float, float]], out_dur: float) -> float:
    """Earliest playback start d with produced(d + t) >= t for all t in
    [0, out_dur], at or after the production start time.

    `production` is a non-decreasing piecewise-linear (wall_s, audio_s)
    breakpoint list that must reach out_dur.
    """
    pts = sorted(production)
    if not pts or pts[-1][1] < out_dur - 1e-12:
        raise ValueError("production never reaches the requested duration")
    walls = [w for w, _ in pts]
    audio = [a for _, a in pts]
    if any(a2 < a1 - 1e-12 for a1, a2 in zip(audio, audio[1:])):
        raise ValueError("production must be non-decreasing")

    def inverse(a: float) -> float:
        """Earliest wall time with produced >= a."""
        for (w1, a1), (w2, a2) in zip(pts, pts[1:]):
            if a2 >= a:
                if a2 == a1:
                    continue
                if a <= a1:
                    return w1
                return w1 + (w2 - w1) * (a - a1) / (a2 - a1)
        return walls[-1]

    pre_stream = inverse(np.nextafter(0.0, 1.0))  # wall time production starts
    # the constraint d >= inverse(t) - t is piecewise-linear in t; its
    # maximum is attained at a breakpoint audio value (or at t = out_dur)
    candidates = [a for a in audio if 0.0 < a <= out_dur] + [out_dur]
    d = pre_stream
    for a in candidates:
        d = max(d, inverse(a) - a)
    return max(d, 0.0)


def _cost(latencies: dict, stage: str, input_dur: float, out_tokens: int,
          out_dur: float) -> float:
    if stage not in latencies:
        raise ConfigurationError(f"no latency model for stage {stage!r}")
    return latencies[stage].evaluate(input_dur, out_tokens, out_dur)


def simulate_turn(topology: Topology, input_dur: float, out_tokens: int,
                  out_dur: float, latencies: dict,
                  prev_carryover: float = 0.0, turn_index: int = 0) -> SimReport:
    """Simulate one turn and report RTF, stall-free delay, and carryover."""
    topology = Topology(topology)
    if input_dur < 0 or out_dur < 0:
        raise ValueError("durations must be >= 0")
    if out_dur == 0:
        raise ValueError("out_dur is 0: RTF is undefined")
    for stage in STAGES[topology]:
        if stage not in latencies:
            raise ConfigurationError(f"topology {topology.value} needs a latency model "
                                     f"for stage {stage!r}")

    events: list[StageEvent] = []
    t = prev_carryover  # unfinished background work blocks the critical lane

    def run_stage(stage, cost, lane="critical", start=None):
        nonlocal t
        s = t if start is None else start
        events.append(StageEvent(stage=stage, start_s=s, end_s=s + cost,
                                 turn_index=turn_index, lane=lane))
        if lane == "critical":
            t = s + cost
        return s + cost

    def stream_tts(tts: LatencyModel):
        """Run the synthesis stage; returns (generation_end, production curve)."""
        pre = tts.fixed_s + tts.per_input_audio_s * input_dur + tts.per_output_token_s * out_tokens
        stream = tts.per_output_audio_s * out_dur
        end = run_stage("tts", pre + stream)
        start = end - stream
        return [(0.0, 0.0), (start, 0.0), (end, out_dur)]

    if topology is Topology.CASCADE:
        run_stage("asr", _cost(latencies, "asr", input_dur, out_tokens, out_dur))
        run_stage("llm", _cost(latencies, "llm", input_dur, out_tokens, out_dur))
        production = stream_tts(latencies["tts"])
        delay = stall_free_delay(production, out_dur)
        generation = t - prev_carryover
        carryover = 0.0
    elif topology is Topology.STYLE_TALKER:
        run_stage("audio_llm", _cost(latencies, "audio_llm", input_dur, out_tokens, out_dur))
        production = stream_tts(latencies["tts"])
        delay = stall_free_delay(production, out_dur)
        generation = t - prev_carryover
        # background ASR + style extraction start at playback start
        bg = delay
        bg = run_stage("asr", _cost(latencies, "asr", input_dur, out_tokens, out_dur),
                       lane="background", start=bg)
        bg = run_stage("style_enc", _cost(latencies, "style_enc", input_dur, out_tokens, out_dur),
                       lane="background", start=bg)
        carryover = max(0.0, bg - (delay + out_dur))
    else:  # E2E_SPEECH: non-streaming single stage over speech units
        end = run_stage("e2e", _cost(latencies, "e2e", input_dur, out_tokens, out_dur))
        production = [(0.0, 0.0), (end, 0.0), (end, out_dur)]
        delay = stall_free_delay(production, out_dur)
        generation = t - prev_carryover
        carryover = 0.0

    return SimReport(rtf=generation / out_dur, delay_s=delay,
                     timeline=tuple(events), carryover_s=carryover)


@dataclass(frozen=True)
class TurnResult:
    report: SimReport
    generated: Turn
    recognized_text: str


def run_dialog(topology: Topology, crops, components, latencies: dict,
               config: dict | None = None) -> list[TurnResult]:
    """Run the pipeline over a crop list, chaining background carryover.

    `components` needs .recognizer, .responder, .synthesizer and
    .reference_styles(conversation_id).  For style_talker the generation
    context excludes the incoming turn's text/style (they are only
    aggregated by the background lane); the cascade recognizes the incoming
    turn on the critical path and appends it with the speaker's reference
    prosodic style.
    """
    topology = Topology(topology)
    config = config or {}
    mode = config.get("responder_mode", "oracle")
    style_mode = config.get("style_mode", "oracle")
    target_wer = config.get("target_wer", 0.0)
    seed = config.get("seed", 0)

    results = []
    carryover = 0.0
    for i, crop in enumerate(crops):
        try:
            refs = components.reference_styles(crop.conversation_id)
            context = context_from_turns(crop.context_turns[:-1], refs)
            incoming = crop.incoming_turn
            clip = incoming.audio
            if clip is None:
                raise ValueError("incoming turn has no audio")
            speaker_out = crop.target_turn.speaker

            recognition = components.recognizer.recognize(clip, target_wer=target_wer,
                                                          rng_seed=seed)
            if topology is Topology.CASCADE:
                # ASR on the critical path: recognized text joins the context now
                from .dialog import append_turn
                gen_context = append_turn(context, incoming.speaker, recognition.text,
                                          refs[incoming.speaker][0])
            else:
                gen_context = context

            response = components.responder.respond(clip, gen_context, mode=mode,
                                                    style_mode=style_mode, rng_seed=seed,
                                                    response_speaker=speaker_out)
            acoustic = refs[speaker_out][1]
            audio = components.synthesizer.synthesize(response.text,
                                                      response.prosodic_style, acoustic)
            report = simulate_turn(topology, clip.duration_seconds,
                                   len(response.text.split()), audio.duration_seconds,
                                   latencies, prev_carryover=carryover, turn_index=i)
            carryover = report.carryover_s
            generated = Turn(speaker=speaker_out, text=response.text, audio=audio,
                             prosodic_style=response.prosodic_style)
            results.append(TurnResult(report=report, generated=generated,
                                      recognized_text=recognition.text))
        except Exception as exc:
            raise RuntimeError(f"turn {i} (conversation {crop.conversation_id!r}) failed") from exc
    return results
