"""Core dialog types: audio clips, style vectors, turns, conversations,
and the rolling conversation context shared by every other module.

All types are immutable after construction (value semantics); the context
operations return new objects and never mutate their inputs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

STYLE_DIM = 8

# Index layout of a prosodic style vector.  Every component is normalized
# to roughly [0, 1]; see acoustics.encode_style for the exact scaling.
STYLE_PITCH_MEAN = 0
STYLE_PITCH_STD = 1
STYLE_ENERGY_MEAN = 2
STYLE_ENERGY_STD = 3
STYLE_HNR = 4
STYLE_RATE = 5
STYLE_LOG_DURATION = 6
STYLE_VOICED_FRACTION = 7


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform. Samples are finite floats in [-1, 1]."""

    sample_rate: int
    samples: np.ndarray
    source_id: str | None = None

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be a 1-D array")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if samples.size and (samples.min() < -1.0 or samples.max() > 1.0):
            raise ValueError("samples must lie in [-1, 1]")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class StyleVector:
    """Fixed-length paralinguistic summary.

    Prosodic styles are predicted per utterance; acoustic styles are
    pre-computed per speaker and carry the timbre.  The kind tag is
    preserved through every operation.
    """

    values: tuple[float, ...]
    kind: str  # "prosodic" | "acoustic"

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if len(values) != STYLE_DIM:
            raise ValueError(f"style vector must have {STYLE_DIM} entries, got {len(values)}")
        if not all(np.isfinite(v) for v in values):
            raise ValueError("style entries must be finite")
        if self.kind not in ("prosodic", "acoustic"):
            raise ValueError(f"unknown style kind {self.kind!r}")
        object.__setattr__(self, "values", values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64)


@dataclass(frozen=True)
class Turn:
    """One utterance: who spoke, what was said, and (optionally) how."""

    speaker: str
    text: str
    audio: AudioClip | None = None
    prosodic_style: StyleVector | None = None

    def __post_init__(self):
        if self.text is None:
            raise ValueError("turn text may be empty but not None")
        if self.prosodic_style is not None and self.prosodic_style.kind != "prosodic":
            raise ValueError("turn style must be prosodic")


@dataclass(frozen=True)
class Conversation:
    id: str
    turns: tuple[Turn, ...]
    split: str = "train"  # "train" | "validation" | "test"

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if self.split not in ("train", "validation", "test"):
            raise ValueError(f"unknown split {self.split!r}")


@dataclass(frozen=True)
class ContextEntry:
    speaker: str
    text: str
    style: StyleVector

    def __post_init__(self):
        if self.style.kind != "prosodic":
            raise ValueError("context entries carry prosodic styles only")


@dataclass(frozen=True)
class ConversationContext:
    """Ordered (speaker, text, prosodic style) history plus per-speaker
    reference styles (prosodic, acoustic)."""

    entries: tuple[ContextEntry, ...] = ()
    reference_styles: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        for speaker, (pro, aco) in self.reference_styles.items():
            if pro.kind != "prosodic" or aco.kind != "acoustic":
                raise ValueError(f"reference styles for {speaker!r} must be (prosodic, acoustic)")


@dataclass(frozen=True)
class DialogCrop:
    """A training/evaluation unit: every turn before the crop point as
    context, the last context turn as the incoming audio, and the next
    turn as the prediction target."""

    conversation_id: str
    context_turns: tuple[Turn, ...]
    target_turn: Turn
    incoming_turn: Turn

    def __post_init__(self):
        object.__setattr__(self, "context_turns", tuple(self.context_turns))
        if len(self.context_turns) < 1:
            raise ValueError("a crop needs at least one context turn")
        if self.context_turns[-1] is not self.incoming_turn and self.context_turns[-1] != self.incoming_turn:
            raise ValueError("incoming turn must be the last context turn")


def append_turn(context: ConversationContext, speaker: str, text: str,
                style: StyleVector) -> ConversationContext:
    """Return a new context with one more entry appended; the input is untouched."""
    if style.kind != "prosodic":
        raise ValueError(f"appended style must be prosodic, got kind {style.kind!r}")
    entry = ContextEntry(speaker=speaker, text=text, style=style)
    return ConversationContext(entries=context.entries + (entry,),
                               reference_styles=dict(context.reference_styles))


def make_crop(conv: Conversation, k: int) -> DialogCrop:
    """Crop at 1-based turn index k: context = turns 1..k, target = turn k+1."""
    n = len(conv.turns)
    if not 1 <= k <= n - 1:
        raise IndexError(f"crop index {k} out of range for a {n}-turn conversation")
    context = conv.turns[:k]
    return DialogCrop(conversation_id=conv.id, context_turns=context,
                      target_turn=conv.turns[k], incoming_turn=context[-1])


def window(context: ConversationContext, max_turns: int) -> ConversationContext:
    """Keep only the last max_turns entries; reference styles are preserved."""
    if max_turns < 1:
        raise ValueError(f"max_turns must be >= 1, got {max_turns}")
    return ConversationContext(entries=context.entries[-max_turns:],
                               reference_styles=dict(context.reference_styles))


def sample_crop_index(conv: Conversation, rng_seed: int) -> int:
    """Uniform crop index in [1, len(turns) - 1], deterministic per seed."""
    n = len(conv.turns)
    if n < 2:
        raise ValueError(f"conversation {conv.id!r} has {n} turn(s); no valid crop")
    rng = random.Random(rng_seed)
    return rng.randint(1, n - 1)


def context_from_turns(turns, reference_styles) -> ConversationContext:
    """Build a context from fully processed turns (each must carry a style)."""
    ctx = ConversationContext(reference_styles=dict(reference_styles))
    for turn in turns:
        if turn.prosodic_style is None:
            raise ValueError(f"turn by {turn.speaker!r} has no prosodic style")
        ctx = append_turn(ctx, turn.speaker, turn.text, turn.prosodic_style)
    return ctx
