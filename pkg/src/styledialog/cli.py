"""Single entry point tying every module into reproducible experiments.

Exit codes: 0 success, 1 check failure, 2 usage/config error.  Every
subcommand is deterministic given --seed; outputs are plain files written
atomically (write-then-rename); each run embeds its resolved configuration
for provenance.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from . import objectives
from .components import LatencyModel, ToyRecognizer, ToyResponder, ToySynthesizer, train_markov
from .dialog import Turn, context_from_turns, make_crop, sample_crop_index
from .prompts import PromptVariant, build_prompt
from .scheduler import Topology, run_dialog, simulate_turn

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


class CliError(Exception):
    pass


def calibration_path() -> Path:
    return Path(resources.files("styledialog").joinpath("data/calibration.json"))


def bundled_corpus_path() -> Path:
    return Path(resources.files("styledialog").joinpath("data/corpus.jsonl"))


def _load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}")


def _latency_map(config: dict, topology: Topology) -> dict:
    latency = config.get("latency", {})
    if topology.value not in latency:
        raise CliError(f"config has no latency section for topology {topology.value!r}")
    return {stage: LatencyModel.from_dict(d)
            for stage, d in latency[topology.value].items()}


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


# --- subcommands ------------------------------------------------------------

def cmd_ingest(args) -> int:
    conversations, index, report = None, None, None
    try:
        conversations, report = corpus_mod.load_corpus(args.corpus)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    policy = metrics_mod.NormalizationPolicy()
    kept = []
    discarded = 0
    stripped = 0
    for conv in conversations:
        turns = []
        for turn in conv.turns:
            if args.filter_diarization and not corpus_mod.filter_diarization(turn.text):
                discarded += 1
                continue
            text = turn.text
            if args.filter_diarization:
                text, did = corpus_mod.strip_leading_indicator(text)
                stripped += int(did)
            text = corpus_mod.normalize_verbatim(text, policy)
            turns.append(Turn(speaker=turn.speaker, text=text, audio=turn.audio,
                              prosodic_style=turn.prosodic_style))
        if turns:
            kept.append(type(conv)(id=conv.id, turns=tuple(turns), split=conv.split))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus_mod.save_corpus(out / "corpus.jsonl", kept, write_audio=args.write_audio)
    summary = {
        "loaded": report.loaded,
        "rejected_records": report.rejects,
        "discarded_multi_speaker": discarded,
        "stripped_leading_indicators": stripped,
        "seed": args.seed,
    }
    _write_atomic(out / "ingest_report.json", json.dumps(summary, indent=2) + "\n")
    print(f"ingest: {report.loaded} conversations, {len(report.rejects)} rejects, "
          f"{discarded} discarded segments, {stripped} stripped indicators")
    return EXIT_OK if not report.rejects else EXIT_OK


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    topology = Topology.parse(args.topology)
    latencies = _latency_map(config, topology)
    tokens_per_s = config.get("tokens_per_output_second", 3)
    out_tokens = int(round(tokens_per_s * args.output_dur))
    try:
        report = simulate_turn(topology, args.input_dur, out_tokens, args.output_dur,
                               latencies)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{'Model':<14} {'RTF':>8} {'Delay':>9}")
    print(f"{topology.value:<14} {report.rtf:>8.4f} {report.delay_s:>8.2f} s")
    payload = {"topology": topology.value, "input_dur": args.input_dur,
               "output_dur": args.output_dur, "rtf": report.rtf,
               "delay_s": report.delay_s, "carryover_s": report.carryover_s,
               "timeline": [vars(e) | {} for e in report.timeline],
               "config": config}
    if args.out:
        _write_atomic(Path(args.out), json.dumps(payload, default=str, indent=2) + "\n")
    return EXIT_OK


def _build_components(conversations, index, config, latencies):
    markov = None
    if config.get("responder_mode") == "markov":
        markov = train_markov(conversations)
    recognizer = ToyRecognizer(index.transcripts, latencies.get("asr", LatencyModel()))
    responder_latency = latencies.get("audio_llm") or latencies.get("llm") or LatencyModel()
    responder = ToyResponder(index.targets, responder_latency, markov=markov)
    synthesizer = ToySynthesizer(latencies.get("tts", LatencyModel()))

    class Bundle:
        pass

    bundle = Bundle()
    bundle.recognizer = recognizer
    bundle.responder = responder
    bundle.synthesizer = synthesizer
    bundle.reference_styles = index.reference_styles
    return bundle


def cmd_run(args) -> int:
    config = _load_config(args.components) if args.components else {}
    topology = Topology.parse(args.topology)
    try:
        conversations, index, _ = corpus_mod.load_corpus_with_index(args.corpus)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    latencies = ({stage: LatencyModel.from_dict(d)
                  for stage, d in config.get("latency", {}).get(topology.value, {}).items()}
                 if config.get("latency") else
                 {s: LatencyModel() for s in ("asr", "llm", "audio_llm", "tts",
                                              "style_enc", "e2e")})
    run_cfg = {"responder_mode": config.get("responder_mode", "oracle"),
               "style_mode": config.get("style_mode", "oracle"),
               "target_wer": config.get("target_wer", 0.0),
               "seed": args.seed}
    bundle = _build_components(conversations, index, run_cfg | config, latencies)

    crops = []
    eligible = [c for c in conversations if len(c.turns) >= 2]
    for i in range(args.crops):
        conv = eligible[i % len(eligible)]
        k = sample_crop_index(conv, args.seed + i)
        crops.append(make_crop(conv, k))

    results = run_dialog(topology, crops, bundle, latencies, run_cfg)
    out = Path(args.out)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    from . import audioio
    lines = []
    for i, (crop, result) in enumerate(zip(crops, results)):
        wav_rel = f"audio/gen_{i:04d}.wav"
        audioio.write_wav(out / wav_rel, result.generated.audio)
        lines.append(json.dumps({
            "crop": i,
            "conversation_id": crop.conversation_id,
            "k": len(crop.context_turns),
            "speaker": result.generated.speaker,
            "text": result.generated.text,
            "style": list(result.generated.prosodic_style.values),
            "audio": wav_rel,
            "recognized_incoming": result.recognized_text,
            "rtf": result.report.rtf,
            "delay_s": result.report.delay_s,
            "carryover_s": result.report.carryover_s,
        }))
    header = json.dumps({"_config": run_cfg | {"topology": topology.value}})
    _write_atomic(out / "generated.jsonl", header + "\n" + "\n".join(lines) + "\n")
    print(f"run: {len(results)} turns -> {out / 'generated.jsonl'}")
    return EXIT_OK


def _load_generated(path: Path):
    rows = []
    with open(path / "generated.jsonl", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if "_config" in rec:
                continue
            rows.append(rec)
    return rows


def cmd_evaluate(args) -> int:
    from . import audioio
    gen_dir = Path(args.generated)
    try:
        rows = _load_generated(gen_dir)
        conversations, index, _ = corpus_mod.load_corpus_with_index(args.reference)
    except (FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    policy = metrics_mod.NormalizationPolicy()
    if args.policy:
        pol_cfg = _load_config(args.policy).get("normalization", {})
        policy = metrics_mod.NormalizationPolicy(
            lowercase=pol_cfg.get("lowercase", True),
            strip_punctuation=pol_cfg.get("strip_punctuation", True),
            filler_list=frozenset(pol_cfg.get("fillers", metrics_mod.DEFAULT_FILLERS)))
    generated, reference = [], []
    for row in rows:
        conv = index.conversations.get(row["conversation_id"])
        if conv is None or row["k"] >= len(conv.turns):
            print(f"error: crop {row['crop']} references unknown "
                  f"conversation/turn {row['conversation_id']}:{row['k']}",
                  file=sys.stderr)
            return EXIT_USAGE
        target = conv.turns[row["k"]]
        clip = audioio.read_wav(gen_dir / row["audio"])
        generated.append(Turn(speaker=row["speaker"], text=row["text"], audio=clip))
        reference.append(target)
    report = metrics_mod.assemble_report(generated, reference, policy)
    print(f"{'metric':<12} {'value':>8}")
    for name, value in report.semantic.items():
        print(f"{name:<12} {value:>8.2f}")
    for name, value in report.acoustic.items():
        cell = "undef" if value is None else f"{value:.4f}"
        print(f"r[{name}]".ljust(16) + f" {cell:>8}")
    print(f"{'speaker_sim':<12} {report.speaker_similarity:>8.4f}")
    if args.out:
        payload = {"semantic": report.semantic, "acoustic": report.acoustic,
                   "speaker_similarity": report.speaker_similarity}
        _write_atomic(Path(args.out), json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.trials < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    rng = np.random.default_rng(args.seed)
    from .dialog import STYLE_DIM, StyleVector

    def fd(f, x, eps=1e-5):
        g = np.zeros_like(x)
        flat = x.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f()
            flat[i] = orig - eps
            lo = f()
            flat[i] = orig
            gf[i] = (hi - lo) / (2 * eps)
        return g

    max_style_err = 0.0
    max_text_err = 0.0
    H = 6
    for _ in range(args.trials):
        w = rng.normal(size=(STYLE_DIM, H))
        b = rng.normal(size=STYLE_DIM)
        h = rng.normal(size=H)
        target = StyleVector(values=tuple(rng.normal(size=STYLE_DIM)), kind="prosodic")

        def loss():
            proj = objectives.ProjectionOut(weights=w.copy(), bias=b.copy())
            return objectives.style_loss(objectives.project_out(h, proj), target)

        proj = objectives.ProjectionOut(weights=w.copy(), bias=b.copy())
        pred = objectives.project_out(h, proj)
        gw, gb = objectives.grad_style_loss(pred, target, h, proj)
        if args.inject_error:
            gw = -gw
        diff = pred.as_array() - target.as_array()
        mask_w = np.abs(diff)[:, None] > 1e-6 * np.ones((1, H))
        num_w = fd(loss, w)
        num_b = fd(loss, b)
        denom = np.maximum(np.abs(num_w), 1e-8)
        err_w = np.max(np.abs(gw - num_w)[mask_w] / denom[mask_w]) if mask_w.any() else 0.0
        mask_b = np.abs(diff) > 1e-6
        err_b = (np.max(np.abs(gb - num_b)[mask_b] / np.maximum(np.abs(num_b[mask_b]), 1e-8))
                 if mask_b.any() else 0.0)
        max_style_err = max(max_style_err, err_w, err_b)

        T, V = 5, 7
        logits = rng.normal(size=(T, V))
        targets = rng.integers(1, V + 1, size=T)
        g = objectives.grad_text_loss(logits, targets)
        num = fd(lambda: objectives.text_loss(logits, targets), logits, eps=1e-6)
        err = np.max(np.abs(g - num) / np.maximum(np.abs(num), 1e-6))
        max_text_err = max(max_text_err, err)

    print(f"{'loss':<8} {'max rel err':>12} {'threshold':>10}")
    print(f"{'style':<8} {max_style_err:>12.3e} {1e-4:>10.0e}")
    print(f"{'text':<8} {max_text_err:>12.3e} {1e-6:>10.0e}")
    ok = max_style_err < 1e-4 and max_text_err < 1e-6
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_extract_styles(args) -> int:
    from . import acoustics
    try:
        conversations, _ = corpus_mod.load_corpus(args.corpus)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    lines = []
    for conv in conversations:
        for i, turn in enumerate(conv.turns):
            if turn.audio is None:
                continue
            sid = turn.audio.source_id or f"{conv.id}/{i}"
            style = acoustics.encode_style(turn.audio)
            summary = acoustics.summarize(turn.audio)
            lines.append(json.dumps({"source_id": sid,
                                     "style": list(style.values),
                                     "summary": summary.as_dict()}))
    if not lines:
        print("error: no audio to extract styles from", file=sys.stderr)
        return EXIT_USAGE
    text = "\n".join(lines) + "\n"
    if args.out:
        _write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    print(f"extract-styles: {len(lines)} utterances", file=sys.stderr)
    return EXIT_OK


def cmd_build_prompt(args) -> int:
    try:
        conversations, index, _ = corpus_mod.load_corpus_with_index(args.corpus)
        variant = PromptVariant.parse(args.variant)
        conv_id, _, k_str = args.crop_id.partition(":")
        conv = index.conversations[conv_id]
        crop = make_crop(conv, int(k_str))
    except (KeyError, ValueError, IndexError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    refs = index.reference_styles(crop.conversation_id)
    context = context_from_turns(crop.context_turns[:-1], refs)
    audio_path = f"{crop.conversation_id}_{len(crop.context_turns) - 1}.wav"
    built = build_prompt(crop, context, variant, audio_path)
    sys.stdout.write(built.text)
    sys.stdout.write("\n---\n")
    print(f"{'offset':>7}  slot")
    for slot in built.input_style_slots:
        print(f"{slot.offset:>7}  input  {slot.ref_kind}:{slot.ref_id}")
    print(f"{built.output_style_slot:>7}  output")
    print(f"tokens: {built.token_count}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="styledialog")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate, filter, and normalize a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--filter-diarization", action="store_true")
    p.add_argument("--write-audio", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", help="latency report for one topology")
    p.add_argument("--topology", required=True)
    p.add_argument("--config", default=str(calibration_path()))
    p.add_argument("--input-dur", type=float, default=10.0)
    p.add_argument("--output-dur", type=float, default=10.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run the pipeline over sampled crops")
    p.add_argument("--corpus", required=True)
    p.add_argument("--topology", default="style-talker")
    p.add_argument("--components", help="component/latency config file")
    p.add_argument("--crops", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="score generated turns against ground truth")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--policy")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-error", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("extract-styles", help="encode per-utterance styles and summaries")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract_styles)

    p = sub.add_parser("build-prompt", help="print a prompt and its slot table")
    p.add_argument("--corpus", default=str(bundled_corpus_path()))
    p.add_argument("--crop-id", required=True, help="conversation:crop-index")
    p.add_argument("--variant", default="full")
    p.set_defaults(func=cmd_build_prompt)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
