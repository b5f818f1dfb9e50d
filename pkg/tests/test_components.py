import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from styledialog.acoustics import acoustic_embedding, encode_style
from styledialog.components import (LatencyModel, MarkovTable, ToyRecognizer,
                                    ToyResponder, ToySynthesizer, train_markov,
                                    END_TOKEN, START_TOKEN)
from styledialog.dialog import ConversationContext, StyleVector, append_turn
from styledialog.metrics import wer, NormalizationPolicy
from conftest import acoustic, make_conversation, prosodic, simple_style
from oracles import perplexity_of_table


class TestLatencyModel:
    def test_affine_evaluation(self):
        m = LatencyModel(fixed_s=0.5, per_input_audio_s=0.1,
                         per_output_token_s=0.02, per_output_audio_s=0.3)
        assert m.evaluate(10.0, 30, 10.0) == pytest.approx(0.5 + 1.0 + 0.6 + 3.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            LatencyModel(fixed_s=-0.1)

    def test_from_dict(self):
        m = LatencyModel.from_dict({"fixed_s": 0.2, "per_output_token_s": 0.04})
        assert m.fixed_s == 0.2 and m.per_output_token_s == 0.04


class TestRecognizer:
    def _setup(self, conv):
        index = {t.audio.source_id: t.text for t in conv.turns}
        return ToyRecognizer(index, LatencyModel(per_input_audio_s=0.1))

    def test_zero_wer_exact(self, conv):
        rec = self._setup(conv)
        for t in conv.turns:
            assert rec.recognize(t.audio).text == t.text

    def test_target_wer_hit_exactly(self, conv):
        rec = self._setup(conv)
        raw = NormalizationPolicy(lowercase=False, strip_punctuation=False,
                                  filler_list=frozenset())
        for target in (0.25, 0.5, 1.0):
            for t in conv.turns:
                out = rec.recognize(t.audio, target_wer=target, rng_seed=3).text
                n_words = len(t.text.split())
                expect = math.ceil(target * n_words) / n_words
                assert wer(t.text, out, raw) == pytest.approx(expect)

    def test_deterministic(self, conv):
        rec = self._setup(conv)
        clip = conv.turns[0].audio
        a = rec.recognize(clip, target_wer=0.5, rng_seed=7).text
        b = rec.recognize(clip, target_wer=0.5, rng_seed=7).text
        assert a == b

    def test_unknown_source(self, conv):
        rec = self._setup(conv)
        from conftest import sine_clip
        with pytest.raises(KeyError):
            rec.recognize(sine_clip(220.0, source_id="nope/0"))

    def test_invalid_wer(self, conv):
        rec = self._setup(conv)
        with pytest.raises(ValueError):
            rec.recognize(conv.turns[0].audio, target_wer=1.5)

    def test_latency_accounting(self, conv):
        rec = self._setup(conv)
        t = conv.turns[0]
        result = rec.recognize(t.audio)
        assert result.latency_s == pytest.approx(0.1 * t.audio.duration_seconds)


class TestResponder:
    def _setup(self, conv):
        targets = {}
        for i, t in enumerate(conv.turns[:-1]):
            nxt = conv.turns[i + 1]
            targets[t.audio.source_id] = (nxt.text, nxt.prosodic_style, nxt.speaker)
        return ToyResponder(targets, LatencyModel(per_output_token_s=0.04))

    def test_oracle_exact(self, conv):
        resp = self._setup(conv)
        ctx = ConversationContext()
        for i, t in enumerate(conv.turns[:-1]):
            out = resp.respond(t.audio, ctx)
            assert out.text == conv.turns[i + 1].text
            assert out.prosodic_style == conv.turns[i + 1].prosodic_style

    def test_context_average(self, conv):
        resp = self._setup(conv)
        ctx = ConversationContext()
        ctx = append_turn(ctx, "a", "x", prosodic([0.0] * 8))
        ctx = append_turn(ctx, "b", "y", prosodic([1.0] * 8))
        out = resp.respond(conv.turns[0].audio, ctx, style_mode="context_average")
        assert out.prosodic_style.values == (0.5,) * 8

    def test_last_same_speaker(self, conv):
        resp = self._setup(conv)
        ctx = ConversationContext()
        s_alice = prosodic([0.2] * 8)
        ctx = append_turn(ctx, "alice", "x", s_alice)
        ctx = append_turn(ctx, "bob", "y", prosodic([0.9] * 8))
        out = resp.respond(conv.turns[0].audio, ctx, style_mode="last_same_speaker",
                           response_speaker="alice")
        assert out.prosodic_style == s_alice

    def test_empty_context_falls_back_to_reference(self, conv):
        resp = self._setup(conv)
        refs = {"alice": (simple_style(0.33), acoustic([0.5] * 8))}
        ctx = ConversationContext(reference_styles=refs)
        out = resp.respond(conv.turns[0].audio, ctx, style_mode="context_average",
                           response_speaker="alice")
        assert out.prosodic_style == refs["alice"][0]

    def test_markov_requires_table(self, conv):
        resp = self._setup(conv)
        with pytest.raises(RuntimeError):
            resp.respond(conv.turns[0].audio, ConversationContext(), mode="markov")

    def test_markov_deterministic(self, conv):
        table = train_markov([conv])
        targets = {t.audio.source_id: (t.text, t.prosodic_style, t.speaker)
                   for t in conv.turns}
        resp = ToyResponder(targets, markov=table)
        a = resp.respond(conv.turns[0].audio, ConversationContext(), mode="markov",
                         rng_seed=5)
        b = resp.respond(conv.turns[0].audio, ConversationContext(), mode="markov",
                         rng_seed=5)
        assert a.text == b.text

    def test_unknown_modes(self, conv):
        resp = self._setup(conv)
        with pytest.raises(ValueError):
            resp.respond(conv.turns[0].audio, ConversationContext(), mode="gpt5")
        with pytest.raises(ValueError):
            resp.respond(conv.turns[0].audio, ConversationContext(), style_mode="nope")


class TestMarkov:
    def test_add_one_formula(self):
        from styledialog.dialog import Conversation, Turn
        conv = Conversation(id="m", turns=(Turn(speaker="s", text="a b"),))
        table = train_markov([conv])
        v = len(table.vocab)
        assert table.probability("a", "b") == pytest.approx((1 + 1) / (1 + v))

    def test_deterministic_table(self, conv):
        t1 = train_markov([conv])
        t2 = train_markov([conv])
        assert t1.vocab == t2.vocab and t1.totals == t2.totals

    def test_empty_corpus(self):
        with pytest.raises(RuntimeError):
            train_markov([])

    def test_beats_uniform_perplexity(self, conv):
        table = train_markov([conv])
        ppl = perplexity_of_table(table, [conv])
        assert ppl <= len(table.vocab)  # uniform model's perplexity

    def test_first_token_distribution(self, conv):
        table = train_markov([conv])
        n = 10_000
        counts = {}
        for s in range(n):
            text = table.sample(random.Random(s))
            first = text.split()[0] if text.split() else END_TOKEN
            counts[first] = counts.get(first, 0) + 1
        for w in table.vocab:
            p = table.probability(START_TOKEN, w)
            sigma = math.sqrt(n * p * (1 - p))
            observed = counts.get(w, 0)
            assert abs(observed - n * p) < 4 * sigma + 1


class TestSynthesizer:
    def test_duration_rule(self):
        synth = ToySynthesizer()
        style = prosodic([0.4, 0.02, 0.15, 0.01, 0.7, 0.1, 0.2, 1.0])  # rate 2/s
        clip = synth.synthesize(" ".join(["tok"] * 10), style, acoustic([0.3] * 8))
        assert clip.duration_seconds == pytest.approx(5.0, abs=0.03)

    def test_pitch_roundtrip_fixture(self):
        synth = ToySynthesizer()
        style = prosodic([0.44, 0.05, 0.15, 0.02, 0.75, 0.25, 0.2, 1.0])
        clip = synth.synthesize("hello there my friend how are you", style,
                                acoustic([0.0] * 8))
        got = encode_style(clip).values[0]
        assert abs(got - 0.44) <= 0.03

    def test_empty_text_rejected(self):
        synth = ToySynthesizer()
        with pytest.raises(ValueError):
            synth.synthesize("   ", simple_style(), acoustic([0.0] * 8))

    def test_kind_checks(self):
        synth = ToySynthesizer()
        with pytest.raises(ValueError):
            synth.synthesize("hi", acoustic([0.0] * 8), acoustic([0.0] * 8))
        with pytest.raises(ValueError):
            synth.synthesize("hi", simple_style(), simple_style())

    def test_deterministic(self):
        synth = ToySynthesizer()
        a = synth.synthesize("hi there", simple_style(), acoustic([0.5] * 8))
        b = synth.synthesize("hi there", simple_style(), acoustic([0.5] * 8))
        assert np.array_equal(a.samples, b.samples)

    def test_timbre_separates_speakers(self):
        synth = ToySynthesizer()
        style = simple_style()
        text = "one two three four five six"
        a1 = synth.synthesize(text, style, acoustic([0.9, 0.1, 0.8, 0.2, 0.7, 0.1, 0.6, 0.3]))
        a2 = synth.synthesize(text + " ", style, acoustic([0.9, 0.1, 0.8, 0.2, 0.7, 0.1, 0.6, 0.3]))
        b = synth.synthesize(text, style, acoustic([0.05] * 8))
        same = float(acoustic_embedding(a1) @ acoustic_embedding(a2))
        cross = float(acoustic_embedding(a1) @ acoustic_embedding(b))
        assert cross < same

    def test_latency_accounting(self):
        synth = ToySynthesizer(LatencyModel(fixed_s=0.2, per_output_audio_s=0.25))
        assert synth.latency_for(0.0, 10, 4.0) == pytest.approx(0.2 + 1.0)


class TestRoundTrip:
    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_controlled_components(self, seed):
        rng = np.random.default_rng(seed)
        synth = ToySynthesizer()
        p = np.zeros(8)
        p[0] = rng.uniform(120, 350) / 500
        p[1] = rng.uniform(0.0, 0.15)
        p[2] = rng.uniform(0.05, 0.3)
        p[3] = rng.uniform(0.0, 0.1)
        p[4] = (rng.uniform(5, 35) + 20) / 60
        p[5] = rng.uniform(3, 9) / 20
        p[6] = 0.2
        p[7] = 1.0
        a = acoustic(rng.uniform(-1, 1, 8))
        clip = synth.synthesize("the quick brown fox jumps over dogs", prosodic(p), a)
        q = encode_style(clip).values
        for c in (0, 2, 4, 5):
            assert abs(q[c] - p[c]) <= 0.08
