from pathlib import Path

import numpy as np
import pytest

from styledialog.dialog import (AudioClip, Conversation, ConversationContext,
                                StyleVector, Turn, context_from_turns, make_crop)
from styledialog.prompts import (INPUT_STYLE_TOKEN, OUTPUT_STYLE_TOKEN,
                                 PromptVariant, build_prompt, count_tokens,
                                 default_tokenizer, truncate_to_budget)

GOLDEN = Path(__file__).parent / "golden"


def _turn(speaker, text, pitch):
    p = np.zeros(8)
    p[0] = pitch; p[2] = 0.1; p[4] = 0.6; p[5] = 0.3; p[7] = 1.0
    audio = AudioClip(samples=np.zeros(1600), sample_rate=16000,
                      source_id=f"fix/{speaker}")
    return Turn(speaker=speaker, text=text, audio=audio,
                prosodic_style=StyleVector(values=tuple(p), kind="prosodic"))


def fixture_crop():
    conv = Conversation(id="fix", turns=(
        _turn("alice", "good morning how did the trip go", 0.40),
        _turn("bob", "pretty well thanks the train was on time", 0.28),
        _turn("alice", "that is great did you see the new station", 0.42),
        _turn("bob", "yes it looked really modern inside", 0.30),
    ), split="test")
    crop = make_crop(conv, 3)
    refs = {"alice": (conv.turns[0].prosodic_style,
                      StyleVector(values=(0.1,) * 8, kind="acoustic")),
            "bob": (conv.turns[1].prosodic_style,
                    StyleVector(values=(0.2,) * 8, kind="acoustic"))}
    context = context_from_turns(crop.context_turns[:-1], refs)
    return crop, context


class TestGoldenFiles:
    @pytest.mark.parametrize("variant", list(PromptVariant))
    def test_byte_identical(self, variant):
        crop, context = fixture_crop()
        built = build_prompt(crop, context, variant, "fix_2.wav")
        golden = (GOLDEN / f"prompt_{variant.value}.txt").read_bytes()
        assert built.text.encode("utf-8") == golden


class TestSlots:
    def test_full_slot_layout(self):
        crop, context = fixture_crop()
        built = build_prompt(crop, context, PromptVariant.FULL, "a.wav")
        assert built.text.count(INPUT_STYLE_TOKEN) == len(built.input_style_slots)
        assert built.text.count(OUTPUT_STYLE_TOKEN) == 1
        # header references come before context slots
        kinds = [s.ref_kind for s in built.input_style_slots]
        assert kinds == ["reference", "reference", "context", "context"]
        for slot in built.input_style_slots:
            assert built.text[slot.offset:slot.offset + len(INPUT_STYLE_TOKEN)] == INPUT_STYLE_TOKEN
        off = built.output_style_slot
        assert built.text[off:off + len(OUTPUT_STYLE_TOKEN)] == OUTPUT_STYLE_TOKEN

    def test_no_style_variant_zero_input_slots(self):
        crop, context = fixture_crop()
        built = build_prompt(crop, context, PromptVariant.NO_STYLE_CONTEXT, "a.wav")
        assert built.input_style_slots == ()
        assert built.text.count(INPUT_STYLE_TOKEN) == 0
        assert built.text.count(OUTPUT_STYLE_TOKEN) == 1

    @pytest.mark.parametrize("variant", list(PromptVariant))
    def test_bijection_all_variants(self, variant):
        crop, context = fixture_crop()
        built = build_prompt(crop, context, variant, "a.wav")
        assert built.text.count(INPUT_STYLE_TOKEN) == len(built.input_style_slots)
        assert built.text.count(OUTPUT_STYLE_TOKEN) == 1

    def test_empty_context_full(self):
        crop, context = fixture_crop()
        empty = ConversationContext(reference_styles=dict(context.reference_styles))
        built = build_prompt(crop, empty, PromptVariant.FULL, "a.wav")
        # 2 header references, no context lines
        assert len(built.input_style_slots) == 2
        assert "TEXT: good morning" not in built.text

    def test_missing_reference_style(self):
        crop, context = fixture_crop()
        bare = ConversationContext(entries=context.entries, reference_styles={})
        with pytest.raises(KeyError):
            build_prompt(crop, bare, PromptVariant.FULL, "a.wav")

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            PromptVariant.parse("nonsense")


class TestVariantDiffs:
    def test_full_vs_asr_plus_style(self):
        crop, context = fixture_crop()
        full = build_prompt(crop, context, PromptVariant.FULL, "a.wav").text
        asr = build_prompt(crop, context, PromptVariant.ASR_PLUS_STYLE, "a.wav").text
        # asr variant = full plus one appended incoming-turn line
        incoming_line = (f"{crop.incoming_turn.speaker}: STYLE: {INPUT_STYLE_TOKEN} "
                         f"TEXT: {crop.incoming_turn.text}\n")
        assert asr.replace(incoming_line, "", 1) == full

    def test_no_audio_vs_asr_plus_style(self):
        crop, context = fixture_crop()
        asr = build_prompt(crop, context, PromptVariant.ASR_PLUS_STYLE, "a.wav").text
        no_audio = build_prompt(crop, context, PromptVariant.NO_AUDIO_INPUT, "a.wav").text
        assert asr == f"Audio 1:<audio>a.wav</audio>\n\n{no_audio}"


class TestTokenCount:
    def test_empty(self):
        assert count_tokens("") == 0

    def test_placeholder_line(self):
        assert count_tokens(f"STYLE: {INPUT_STYLE_TOKEN} TEXT: hi") == 4

    def test_matches_brute_force(self):
        crop, context = fixture_crop()
        built = build_prompt(crop, context, PromptVariant.FULL, "a.wav")
        assert built.token_count == len(built.text.split())


class TestTruncation:
    def _long_context(self, crop, refs, n_turns=10, words=30):
        ctx = ConversationContext(reference_styles=dict(refs))
        from styledialog.dialog import append_turn
        style = refs["alice"][0]
        for i in range(n_turns):
            ctx = append_turn(ctx, "alice", " ".join(f"w{i}x{j}" for j in range(words)), style)
        return ctx

    def test_identity_when_fitting(self):
        crop, context = fixture_crop()
        out = truncate_to_budget(context, 1536, crop=crop, variant=PromptVariant.FULL,
                                 audio_path="a.wav")
        assert out.entries == context.entries

    def test_drops_oldest_whole_turns(self):
        crop, context = fixture_crop()
        refs = context.reference_styles
        ctx = self._long_context(crop, refs)
        scaffold = build_prompt(
            crop, ConversationContext(reference_styles=dict(refs)),
            PromptVariant.FULL, "a.wav").token_count
        per_turn = 33  # speaker + STYLE: + placeholder + TEXT: + 30 words... measured below
        built_full = build_prompt(crop, ctx, PromptVariant.FULL, "a.wav").token_count
        per_turn = (built_full - scaffold) // 10
        budget = scaffold + 3 * per_turn
        out = truncate_to_budget(ctx, budget, crop=crop, variant=PromptVariant.FULL,
                                 audio_path="a.wav")
        assert len(out.entries) == 3
        assert out.entries == ctx.entries[-3:]

    def test_idempotent(self):
        crop, context = fixture_crop()
        refs = context.reference_styles
        ctx = self._long_context(crop, refs)
        budget = 200
        once = truncate_to_budget(ctx, budget, crop=crop, variant=PromptVariant.FULL,
                                  audio_path="a.wav")
        twice = truncate_to_budget(once, budget, crop=crop, variant=PromptVariant.FULL,
                                   audio_path="a.wav")
        assert once.entries == twice.entries

    def test_budget_below_scaffold(self):
        crop, context = fixture_crop()
        with pytest.raises(ValueError):
            truncate_to_budget(context, 5, crop=crop, variant=PromptVariant.FULL,
                               audio_path="a.wav")
