"""Corpus ingestion and generation.

File format: one conversation per JSON line,
  {"id": str, "split": "train|validation|test",
   "turns": [{"speaker": str, "text": str, "audio": path-or-null,
              "synth": {...optional synthesis parameters...}}]}
Audio paths are relative to the corpus file's directory and point at 16-bit
PCM mono WAVs.  A turn with audio null but synth parameters present is
rendered deterministically by the toy synthesizer at load time (and passed
through int16 quantization so it is bit-identical to a WAV round-trip).

Also implements the diarization-filtering and verbatim-normalization steps
used when ingesting re-transcribed podcast data, plus deterministic
conversation-level splits and the bundled synthetic corpus generator.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audioio
from .components import ToySynthesizer
from .dialog import AudioClip, Conversation, StyleVector, Turn
from .metrics import NormalizationPolicy

SPEAKER_INDICATOR_RE = re.compile(r"\[S\d+\]")


@dataclass
class LoadReport:
    loaded: int = 0
    rejects: list = field(default_factory=list)  # (line_number, reason)
    stripped_indicators: int = 0


def _source_id(conv_id: str, turn_idx: int) -> str:
    return f"{conv_id}/{turn_idx}"


def _turn_from_record(rec: dict, conv_id: str, idx: int, root: Path,
                      synthesizer: ToySynthesizer) -> Turn:
    if "speaker" not in rec:
        raise ValueError("record missing 'speaker'")
    if "text" not in rec:
        raise ValueError("record missing 'text'")
    speaker = str(rec["speaker"])
    text = str(rec["text"])
    synth = rec.get("synth")
    style = None
    audio = None
    sid = _source_id(conv_id, idx)
    if synth is not None:
        style = StyleVector(values=tuple(synth["prosodic_style"]), kind="prosodic")
    if rec.get("audio"):
        audio = audioio.read_wav(root / rec["audio"], source_id=sid)
    elif synth is not None and "acoustic_style" in synth and synthesizer is not None:
        acoustic = StyleVector(values=tuple(synth["acoustic_style"]), kind="acoustic")
        rendered = synthesizer.synthesize(text, style, acoustic)
        audio = AudioClip(sample_rate=rendered.sample_rate,
                          samples=audioio.quantize_int16(rendered.samples),
                          source_id=sid)
    return Turn(speaker=speaker, text=text, audio=audio, prosodic_style=style)


def load_corpus(path, render_audio: bool = True):
    """Parse a corpus file; malformed records go to the report, valid
    conversations are returned.  Raises when nothing valid is left."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"corpus file not found: {path}")
    root = path.parent
    synthesizer = ToySynthesizer()
    report = LoadReport()
    conversations = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                turns = tuple(
                    _turn_from_record(t, rec["id"], i, root,
                                      synthesizer if render_audio else None)
                    for i, t in enumerate(rec["turns"]))
                conversations.append(Conversation(id=str(rec["id"]), turns=turns,
                                                  split=rec.get("split", "train")))
                report.loaded += 1
            except (KeyError, ValueError, TypeError, OSError) as exc:
                report.rejects.append((line_no, str(exc)))
    if not conversations:
        raise ValueError(f"no valid conversations in {path} "
                         f"({len(report.rejects)} rejected)")
    return conversations, report


def save_corpus(path, conversations, write_audio: bool = False) -> None:
    """Write the JSONL file; optionally materialize per-turn WAVs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    root = path.parent
    lines = []
    for conv in conversations:
        turns = []
        for i, turn in enumerate(conv.turns):
            rec = {"speaker": turn.speaker, "text": turn.text, "audio": None}
            if write_audio and turn.audio is not None:
                rel = f"audio/{conv.id}_{i}.wav"
                (root / "audio").mkdir(exist_ok=True)
                audioio.write_wav(root / rel, turn.audio)
                rec["audio"] = rel
            if turn.prosodic_style is not None:
                rec["synth"] = {"prosodic_style": list(turn.prosodic_style.values)}
            turns.append(rec)
        lines.append(json.dumps({"id": conv.id, "split": conv.split, "turns": turns}))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)


def filter_diarization(transcript: str) -> bool:
    """True = keep. Discard iff two or more distinct [S<digits>] indicators."""
    return len(set(SPEAKER_INDICATOR_RE.findall(transcript))) < 2


def strip_leading_indicator(transcript: str) -> tuple[str, bool]:
    """Drop a single leading speaker-indicator token from a kept transcript."""
    stripped = transcript.lstrip()
    m = SPEAKER_INDICATOR_RE.match(stripped)
    if m:
        return stripped[m.end():].lstrip(), True
    return transcript, False


def normalize_verbatim(text: str, policy: NormalizationPolicy | None = None) -> str:
    return (policy or NormalizationPolicy()).apply(text)


def split_corpus(conversations, ratios, seed: int):
    """Assign splits at the conversation level with largest-remainder
    rounding; deterministic per seed."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {sum(ratios)}")
    names = ("train", "validation", "test")
    n = len(conversations)
    nonzero = sum(1 for r in ratios if r > 0)
    if n < nonzero:
        raise ValueError(f"{n} conversations cannot fill {nonzero} non-empty splits")
    exact = [r * n for r in ratios]
    counts = [int(e) for e in exact]
    order = sorted(range(3), key=lambda i: exact[i] - counts[i], reverse=True)
    for i in order:
        if sum(counts) == n:
            break
        counts[i] += 1
    rng = random.Random(seed)
    shuffled = list(conversations)
    rng.shuffle(shuffled)
    out = []
    cursor = 0
    for name, count in zip(names, counts):
        for conv in shuffled[cursor:cursor + count]:
            out.append(Conversation(id=conv.id, turns=conv.turns, split=name))
        cursor += count
    out.sort(key=lambda c: c.id)
    return out


# --- synthetic corpus -------------------------------------------------------

_TEMPLATE_WORDS = [
    "well", "so", "today", "we", "talked", "about", "the", "weather", "and",
    "music", "that", "sounds", "really", "interesting", "tell", "me", "more",
    "please", "what", "do", "you", "think", "of", "this", "new", "plan",
    "honestly", "it", "could", "work", "but", "needs", "time", "right",
    "maybe", "later", "sure", "thanks", "for", "sharing", "your", "idea",
]


def _sample_speaker_prior(rng: random.Random):
    """Per-speaker prosodic style prior: a mean vector plus a small spread."""
    mean = [
        rng.uniform(0.20, 0.60),   # pitch mean (100..300 Hz)
        rng.uniform(0.03, 0.12),   # pitch std
        rng.uniform(0.05, 0.18),   # energy mean
        rng.uniform(0.02, 0.06),   # energy std
        rng.uniform(0.45, 0.75),   # hnr (7..25 dB)
        rng.uniform(0.15, 0.40),   # rate (3..8 tokens/s)
        0.05,                      # log-duration; overwritten per turn
        rng.uniform(0.90, 1.00),   # voiced fraction
    ]
    spread = [0.02, 0.01, 0.015, 0.005, 0.03, 0.02, 0.0, 0.01]
    return mean, spread


def _sample_acoustic_style(rng: random.Random) -> StyleVector:
    return StyleVector(values=tuple(rng.uniform(0.0, 1.0) for _ in range(8)),
                       kind="acoustic")


def generate_synthetic_corpus(n_conversations: int, seed: int):
    """Deterministic corpus of 4-8 turn conversations between 2-3 speakers.

    Each turn carries template text, a prosodic style sampled from the
    speaker's prior, and audio rendered by the toy synthesizer, so audio,
    text, and style are mutually consistent.
    """
    if n_conversations < 1:
        raise ValueError("need at least one conversation")
    rng = random.Random(seed)
    synthesizer = ToySynthesizer()
    conversations = []
    acoustic_records = {}
    for c in range(n_conversations):
        conv_id = f"synth{c:03d}"
        n_speakers = rng.choice([2, 2, 3])
        speakers = [f"spk{c:03d}{chr(ord('a') + s)}" for s in range(n_speakers)]
        priors = {s: _sample_speaker_prior(rng) for s in speakers}
        acoustics_by_spk = {s: _sample_acoustic_style(rng) for s in speakers}
        turns = []
        for t in range(rng.randint(4, 8)):
            # adjacent turns may repeat a speaker (podcast style)
            speaker = rng.choice(speakers)
            n_words = rng.randint(4, 9)
            text = " ".join(rng.choice(_TEMPLATE_WORDS) for _ in range(n_words))
            mean, spread = priors[speaker]
            values = [min(max(m + rng.gauss(0.0, sd), 0.0), 1.0)
                      for m, sd in zip(mean, spread)]
            style = StyleVector(values=tuple(values), kind="prosodic")
            clip = synthesizer.synthesize(text, style, acoustics_by_spk[speaker])
            audio = AudioClip(sample_rate=clip.sample_rate,
                              samples=audioio.quantize_int16(clip.samples),
                              source_id=_source_id(conv_id, t))
            turns.append(Turn(speaker=speaker, text=text, audio=audio,
                              prosodic_style=style))
        conversations.append(Conversation(id=conv_id, turns=tuple(turns), split="test"))
        acoustic_records[conv_id] = {s: list(v.values)
                                     for s, v in acoustics_by_spk.items()}
    return conversations, acoustic_records


def save_synthetic_corpus(path, conversations, acoustic_records) -> None:
    """Serialize a synthetic corpus as JSONL with synth parameters only
    (audio rendered on load), so the bundled corpus stays tiny."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for conv in conversations:
        turns = []
        for turn in conv.turns:
            turns.append({
                "speaker": turn.speaker,
                "text": turn.text,
                "audio": None,
                "synth": {
                    "prosodic_style": list(turn.prosodic_style.values),
                    "acoustic_style": acoustic_records[conv.id][turn.speaker],
                },
            })
        lines.append(json.dumps({"id": conv.id, "split": conv.split, "turns": turns}))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)


class CorpusIndex:
    """Lookup tables keyed by audio source_id, shared by the toy components."""

    def __init__(self, conversations):
        self.conversations = {c.id: c for c in conversations}
        self.transcripts = {}
        self.targets = {}
        self._acoustics = {}
        for conv in conversations:
            for i, turn in enumerate(conv.turns):
                sid = _source_id(conv.id, i)
                self.transcripts[sid] = turn.text
                if i + 1 < len(conv.turns):
                    nxt = conv.turns[i + 1]
                    self.targets[sid] = (nxt.text, nxt.prosodic_style, nxt.speaker)

    def acoustic_style(self, conv_id: str, speaker: str) -> StyleVector:
        key = (conv_id, speaker)
        if key not in self._acoustics:
            raise KeyError(f"no acoustic style for {speaker!r} in {conv_id!r}")
        return self._acoustics[key]

    def set_acoustic_styles(self, acoustic_records: dict) -> None:
        for conv_id, by_speaker in acoustic_records.items():
            for speaker, values in by_speaker.items():
                self._acoustics[(conv_id, speaker)] = StyleVector(
                    values=tuple(values), kind="acoustic")

    def reference_styles(self, conv_id: str) -> dict:
        """speaker -> (prosodic reference, acoustic style).  The prosodic
        reference is the speaker's mean style over the conversation."""
        conv = self.conversations[conv_id]
        by_speaker = {}
        for turn in conv.turns:
            if turn.prosodic_style is not None:
                by_speaker.setdefault(turn.speaker, []).append(turn.prosodic_style.as_array())
        refs = {}
        for speaker, styles in by_speaker.items():
            mean = np.mean(styles, axis=0)
            refs[speaker] = (StyleVector(values=tuple(mean), kind="prosodic"),
                             self.acoustic_style(conv_id, speaker))
        return refs


def load_corpus_with_index(path):
    """Load a synthetic-format corpus and build the component index."""
    conversations, report = load_corpus(path)
    index = CorpusIndex(conversations)
    # recover acoustic styles from the synth records
    records = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            by_speaker = {}
            for turn in rec.get("turns", []):
                synth = turn.get("synth") or {}
                if "acoustic_style" in synth:
                    by_speaker[turn["speaker"]] = synth["acoustic_style"]
            if by_speaker:
                records[rec["id"]] = by_speaker
    index.set_acoustic_styles(records)
    return conversations, index, report
