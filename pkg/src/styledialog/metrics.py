"""Text-generation and statistical evaluation metrics.

These are re-implementations of the canonical formulas (word-level WER,
BLEU-4 with add-one smoothing on zero counts, ROUGE-L F1, exact-match
METEOR, greedy embedding F1) pinned against brute-force oracles in the
test suite.  All text metrics return percentages in [0, 100] except wer,
which returns a fraction.
"""

from __future__ import annotations

import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

DEFAULT_FILLERS = frozenset({"um", "uh", "uhm", "er", "ah"})
# multiword/ambiguous fillers; off by default to keep WER conservative
OPTIONAL_FILLERS = ("like", "you know")

_PUNCT = set(string.punctuation) - {"-"}


@dataclass(frozen=True)
class NormalizationPolicy:
    lowercase: bool = True
    strip_punctuation: bool = True
    filler_list: frozenset = DEFAULT_FILLERS

    def apply(self, text: str) -> str:
        if self.lowercase:
            text = text.lower()
        if self.strip_punctuation:
            # keep hyphens only between word characters ("than-thank")
            text = re.sub(r"(?<=\w)-(?=\w)", "\x00", text)
            text = "".join(c for c in text if c not in _PUNCT and c != "-")
            text = text.replace("\x00", "-")
        tokens = [t for t in text.split() if t not in self.filler_list]
        return " ".join(tokens)


@dataclass(frozen=True)
class MetricReport:
    semantic: dict       # metric name -> percentage (wer stored as percent)
    acoustic: dict       # feature name -> Pearson r or None when undefined
    speaker_similarity: float
    timing: dict | None = None
    notes: tuple = ()


def word_edit_distance(ref_words, hyp_words) -> int:
    n, m = len(ref_words), len(hyp_words)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ref_words[i - 1] != hyp_words[j - 1])
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, sub)
        prev = cur
    return prev[m]


def wer(ref: str, hyp: str, policy: NormalizationPolicy | None = None) -> float:
    """Word error rate after normalization.  Empty reference with a
    non-empty hypothesis falls back to the insertions/1 convention."""
    policy = policy or NormalizationPolicy()
    ref_words = policy.apply(ref).split()
    hyp_words = policy.apply(hyp).split()
    if not ref_words:
        return 0.0 if not hyp_words else float(len(hyp_words))
    return word_edit_distance(ref_words, hyp_words) / len(ref_words)


def _ngrams(words, n):
    return Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1))


def bleu(refs: list[str], hyp: str, max_n: int = 4) -> float:
    """BLEU with clipped n-gram precisions, add-one smoothing on zero
    counts, and the closest-reference brevity penalty; percentage."""
    if not refs or not any(r.split() for r in refs):
        raise ValueError("bleu needs at least one non-empty reference")
    hyp_words = hyp.split()
    if not hyp_words:
        return 0.0
    ref_word_lists = [r.split() for r in refs]
    log_precisions = []
    for n in range(1, max_n + 1):
        hyp_ngrams = _ngrams(hyp_words, n)
        total = sum(hyp_ngrams.values())
        if total == 0:
            continue  # hypothesis shorter than n: order undefined, skipped
        max_ref = Counter()
        for ref_words in ref_word_lists:
            for gram, count in _ngrams(ref_words, n).items():
                max_ref[gram] = max(max_ref[gram], count)
        clipped = sum(min(c, max_ref[g]) for g, c in hyp_ngrams.items())
        if clipped == 0:
            p = (clipped + 1) / (total + 1)
        else:
            p = clipped / total
        log_precisions.append(math.log(p))
    if not log_precisions:
        return 0.0
    geo = math.exp(sum(log_precisions) / len(log_precisions))
    c = len(hyp_words)
    r = min((abs(len(rw) - c), len(rw)) for rw in ref_word_lists)[1]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return 100.0 * bp * geo


def _lcs_len(a, b) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l_f1(ref: str, hyp: str) -> float:
    ref_words, hyp_words = ref.split(), hyp.split()
    if not ref_words and not hyp_words:
        return 0.0
    lcs = _lcs_len(ref_words, hyp_words) if ref_words and hyp_words else 0
    if lcs == 0:
        return 0.0
    p = lcs / len(hyp_words)
    r = lcs / len(ref_words)
    return 100.0 * 2 * p * r / (p + r)


def _min_chunks(hyp_words, ref_words) -> tuple[int, int]:
    """(matches, minimal chunk count) for the exact-match unigram alignment.

    Matches are fixed at sum_w min(count_hyp, count_ref); a bounded DFS
    over per-word occurrence assignments finds the chunk-minimal alignment.
    """
    ref_counts = Counter(ref_words)
    hyp_counts = Counter(hyp_words)
    quota = {w: min(hyp_counts[w], ref_counts[w]) for w in hyp_counts}
    matches = sum(quota.values())
    if matches == 0:
        return 0, 0
    ref_positions = {}
    for j, w in enumerate(ref_words):
        ref_positions.setdefault(w, []).append(j)

    best = [matches]  # upper bound: every match its own chunk

    def dfs(i, remaining_quota, used, last_ref, chunks, matched_left):
        if chunks >= best[0]:
            return
        if matched_left == 0:
            best[0] = min(best[0], chunks)
            return
        if i >= len(hyp_words):
            return
        w = hyp_words[i]
        q = remaining_quota.get(w, 0)
        skippable = hyp_counts[w] - q  # hyp occurrences of w we may leave unmatched
        if q:
            for j in ref_positions[w]:
                if j in used:
                    continue
                remaining_quota[w] = q - 1
                used.add(j)
                extend = (last_ref is not None and j == last_ref + 1)
                dfs(i + 1, remaining_quota, used, j,
                    chunks + (0 if extend else 1), matched_left - 1)
                used.discard(j)
                remaining_quota[w] = q
        if skippable > 0 or q == 0:
            hyp_counts[w] -= 1
            dfs(i + 1, remaining_quota, used, last_ref, chunks, matched_left)
            hyp_counts[w] += 1

    dfs(0, dict(quota), set(), None, 0, matches)
    return matches, best[0]


def meteor_exact(ref: str, hyp: str) -> float:
    """Exact-match METEOR: F_mean = 10PR/(R+9P), chunk penalty
    0.5*(chunks/matches)^3; percentage."""
    ref_words, hyp_words = ref.split(), hyp.split()
    if not ref_words or not hyp_words:
        return 0.0
    matches, chunks = _min_chunks(hyp_words, ref_words)
    if matches == 0:
        return 0.0
    p = matches / len(hyp_words)
    r = matches / len(ref_words)
    f_mean = 10.0 * p * r / (r + 9.0 * p)
    penalty = 0.5 * (chunks / matches) ** 3
    return 100.0 * f_mean * (1.0 - penalty)


TRIGRAM_EMBED_DIM = 64


def trigram_embedder(token: str) -> np.ndarray:
    """Hashed character-trigram profile, L2-normalized; deterministic."""
    padded = f"#{token}#"
    vec = np.zeros(TRIGRAM_EMBED_DIM)
    for i in range(len(padded) - 2):
        tri = padded[i:i + 3]
        h = 0
        for ch in tri:
            h = (h * 1000003 + ord(ch)) & 0xFFFFFFFF
        vec[h % TRIGRAM_EMBED_DIM] += 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def greedy_embed_score(ref: str, hyp: str, embedder=trigram_embedder) -> float:
    """Greedy max-cosine matching in both directions; F1 as a percentage."""
    ref_words, hyp_words = ref.split(), hyp.split()
    if not ref_words or not hyp_words:
        return 0.0
    ref_vecs = np.stack([embedder(w) for w in ref_words])
    hyp_vecs = np.stack([embedder(w) for w in hyp_words])
    sims = hyp_vecs @ ref_vecs.T
    p = float(np.mean(sims.max(axis=1)))
    r = float(np.mean(sims.max(axis=0)))
    if p + r <= 0:
        return 0.0
    return 100.0 * 2 * p * r / (p + r)


class UndefinedStatisticError(ValueError):
    pass


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("pearson needs two equal-length vectors of length >= 2")
    xd = x - x.mean()
    yd = y - y.mean()
    denom = math.sqrt(float(xd @ xd) * float(yd @ yd))
    if denom == 0.0:
        raise UndefinedStatisticError("zero variance: correlation undefined")
    return float(xd @ yd) / denom


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("cosine needs equal dimensions")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine undefined for zero vectors")
    return float(a @ b) / (na * nb)


ACOUSTIC_FEATURES = ("pitch_mean", "pitch_std", "energy_mean", "energy_std",
                     "hnr_db", "duration_s")


def assemble_report(generated, reference, policy: NormalizationPolicy | None = None,
                    timing: dict | None = None) -> MetricReport:
    """Score aligned (generated, ground-truth) turn pairs.

    Semantic metrics are averaged per pair on normalized text (WER uses
    pooled edit distance over pooled reference length).  Acoustic Pearson r
    pairs per-crop feature values; zero-variance cells come back as None.
    Speaker similarity is the mean embedding cosine.
    """
    from . import acoustics

    policy = policy or NormalizationPolicy()
    if len(generated) != len(reference):
        raise ValueError(f"misaligned lists: {len(generated)} generated vs "
                         f"{len(reference)} reference turns")
    if not generated:
        raise ValueError("nothing to score")

    bleu_scores, rouge_scores, meteor_scores, embed_scores = [], [], [], []
    edits = 0
    ref_len = 0
    for gen, ref in zip(generated, reference):
        g = policy.apply(gen.text)
        r = policy.apply(ref.text)
        bleu_scores.append(bleu([r], g) if r.split() else 0.0)
        rouge_scores.append(rouge_l_f1(r, g))
        meteor_scores.append(meteor_exact(r, g))
        embed_scores.append(greedy_embed_score(r, g))
        edits += word_edit_distance(r.split(), g.split())
        ref_len += len(r.split())
    semantic = {
        "bleu": float(np.mean(bleu_scores)),
        "rouge_l": float(np.mean(rouge_scores)),
        "meteor": float(np.mean(meteor_scores)),
        "embed_f1": float(np.mean(embed_scores)),
        "wer": 100.0 * edits / max(ref_len, 1),
    }

    acoustic = {}
    sims = []
    gen_summaries = []
    ref_summaries = []
    for gen, ref in zip(generated, reference):
        if gen.audio is None or ref.audio is None:
            continue
        gen_summaries.append(acoustics.summarize(gen.audio).as_dict())
        ref_summaries.append(acoustics.summarize(ref.audio).as_dict())
        sims.append(cosine(acoustics.acoustic_embedding(gen.audio),
                           acoustics.acoustic_embedding(ref.audio)))
    if gen_summaries:
        for feature in ACOUSTIC_FEATURES:
            gx = [s[feature] for s in gen_summaries]
            ry = [s[feature] for s in ref_summaries]
            try:
                acoustic[feature] = pearson(gx, ry)
            except (UndefinedStatisticError, ValueError):
                acoustic[feature] = None
    similarity = float(np.mean(sims)) if sims else float("nan")
    return MetricReport(semantic=semantic, acoustic=acoustic,
                        speaker_similarity=similarity, timing=timing)
