"""Command-line entry point: ingest, preprocess, train, convert, evaluate,
and serve, driven by one YAML config with dotted-path flag overrides.

Every command resolves its configuration first, persists it with a run log
into the output directory, and only returns exit status 0 on full success.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import corpus, dsp, evaluation, figures, synthesis, vad
from .config import (
    PipelineConfig,
    apply_overrides,
    load_config,
    save_config,
)
from .gan import convert_mel, load_checkpoint, train_speaker

log = logging.getLogger("w2n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML pipeline config")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="global RNG seed")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config override, e.g. train.mask.window_frames=128",
    )

    parser = argparse.ArgumentParser(
        prog="w2n",
        description="Whisper-to-normal speech conversion pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kwargs):
        return sub.add_parser(name, parents=[common], **kwargs)

    p = add_parser("ingest", help="scan a corpus tree into a manifest")
    p.add_argument("--root", type=Path, help="corpus root directory")
    p.add_argument("--site", choices=["US", "SG", "all"], help="site filter")

    p = add_parser("preprocess", help="VAD-trim utterances and write labels")
    p.add_argument("--manifest", type=Path, required=True)

    p = add_parser("train", help="train one speaker's conversion model")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--speaker", required=True)
    p.add_argument("--window", type=int, help="mask window frames")
    p.add_argument("--mask", type=float, help="mask fraction (0..1)")
    p.add_argument("--epochs", type=int)
    vadgrp = p.add_mutually_exclusive_group()
    vadgrp.add_argument("--vad", dest="vad", action="store_true", default=None)
    vadgrp.add_argument("--no-vad", dest="vad", action="store_false")

    p = add_parser("convert", help="convert test utterances through a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument(
        "--direction",
        default="whisper_to_normal",
        choices=["whisper_to_normal", "normal_to_whisper"],
    )
    p.add_argument("--split", default="test", choices=["test", "train", "all"])
    p.add_argument("--figures", type=int, default=0, help="triptych figures for first N utterances")

    p = add_parser("evaluate", help="score converted runs and render the results table")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--runs", type=Path, nargs="+", required=True, help="run directories")

    p = add_parser("serve", help="host the listening-test service")
    p.add_argument("--clips", type=Path, required=True, help="directory of converted WAVs")
    p.add_argument("--data", type=Path, required=True, help="rating store directory")
    p.add_argument("--port", type=int)
    p.add_argument("--host")
    return parser


def resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"override {item!r} is not KEY=VALUE")
        overrides[key] = value
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides["train.seed"] = args.seed
    if getattr(args, "window", None) is not None:
        overrides["train.mask.window_frames"] = args.window
    if getattr(args, "mask", None) is not None:
        overrides["train.mask.mask_fraction"] = args.mask
    if getattr(args, "epochs", None) is not None:
        overrides["train.epochs"] = args.epochs
    if getattr(args, "vad", None) is not None:
        overrides["vad.enabled"] = args.vad
    if getattr(args, "root", None) is not None:
        overrides["corpus.root"] = str(args.root)
    if getattr(args, "site", None) is not None:
        overrides["corpus.site_filter"] = None if args.site == "all" else args.site
    apply_overrides(cfg, overrides)
    return cfg.validate()


def _start_run(cfg: PipelineConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "resolved_config.yaml")
    handler = logging.FileHandler(out_dir / "run.log")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.getLogger().addHandler(handler)


def cmd_ingest(cfg: PipelineConfig, args) -> int:
    out = Path(cfg.out_dir)
    _start_run(cfg, out)
    manifest, report = corpus.ingest(cfg.corpus.root, cfg.corpus)
    manifest = corpus.assign_split(
        manifest, cfg.corpus.test_fraction, cfg.corpus.split_seed, cfg.corpus.test_list
    )
    manifest, remainder = corpus.pair_utterances(manifest)
    corpus.save_manifest(manifest, out / "manifest.jsonl")
    (out / "ingest_report.txt").write_text("\n".join(report.lines()) + "\n", encoding="utf-8")
    (out / "remainder_report.txt").write_text(
        "\n".join(f"{r.speaker_id} {r.utterance_id} {r.style}: no counterpart" for r in remainder)
        + ("\n" if remainder else ""),
        encoding="utf-8",
    )
    log.info(
        "ingested %d records, %d pairs, %d unpaired, %d errors",
        len(manifest.records),
        len(manifest.pairs),
        len(remainder),
        len(report.errors),
    )
    return 0


def cmd_preprocess(cfg: PipelineConfig, args) -> int:
    out = Path(cfg.out_dir)
    _start_run(cfg, out)
    manifest = corpus.load_manifest(args.manifest)
    trimmed_dir = out / "trimmed"
    labels_dir = out / "labels"
    new_records = []
    warnings = []
    for rec in manifest.records:
        w = dsp.load_audio(rec.audio_path, cfg.analysis.sample_rate)
        labels = vad.classify(w, rec.style, cfg.vad, cfg.analysis)
        result = vad.trim_silence(w, labels, cfg.analysis)
        stem = f"{rec.speaker_id}_{rec.style}_{rec.utterance_id}"
        (labels_dir / f"{stem}.txt").parent.mkdir(parents=True, exist_ok=True)
        (labels_dir / f"{stem}.txt").write_text(labels.to_chars() + "\n", encoding="utf-8")
        if result.no_speech:
            warnings.append(f"{stem}: no speech found, left untrimmed")
        out_wav = trimmed_dir / f"{stem}.wav"
        dsp.save_audio(out_wav, result.waveform)
        new_records.append(
            corpus.UtteranceRecord(
                speaker_id=rec.speaker_id,
                utterance_id=rec.utterance_id,
                style=rec.style,
                site=rec.site,
                audio_path=str(out_wav),
                duration_s=result.waveform.duration_s,
            )
        )
    new_manifest = corpus.CorpusManifest(records=new_records, split=dict(manifest.split))
    new_manifest, _ = corpus.pair_utterances(new_manifest)
    corpus.save_manifest(new_manifest, out / "manifest.jsonl")
    (out / "preprocess_report.txt").write_text(
        f"trimmed {len(new_records)} utterances\n" + "\n".join(warnings) + ("\n" if warnings else ""),
        encoding="utf-8",
    )
    log.info("preprocessed %d utterances (%d warnings)", len(new_records), len(warnings))
    return 0


def cmd_train(cfg: PipelineConfig, args) -> int:
    run_dir = Path(cfg.out_dir) / f"train_{args.speaker}"
    _start_run(cfg, run_dir)
    manifest = corpus.load_manifest(args.manifest)
    result = train_speaker(manifest, args.speaker, cfg, run_dir)
    figures.save_loss_curves(result.loss_log_path, run_dir / "loss_curves.png")
    log.info(
        "trained %s for %d epochs (%d iterations); final checkpoint %s",
        args.speaker,
        result.epochs_run,
        result.iterations_run,
        result.checkpoint_path,
    )
    return 0


def cmd_convert(cfg: PipelineConfig, args) -> int:
    ckpt = load_checkpoint(args.checkpoint)  # fail before touching the output dir
    manifest = corpus.load_manifest(args.manifest)
    out = Path(cfg.out_dir)
    _start_run(cfg, out)
    conv_dir = out / "converted"
    adapter = synthesis.load_adapter(cfg.vocoder, cfg.analysis.mel_bins, cfg.analysis.sample_rate)

    view = corpus.speaker_view(manifest, ckpt.speaker_id)
    if args.split != "all" and view.split:
        view = corpus.subset_by_split(view, args.split)
    src_style = "whisper" if args.direction == "whisper_to_normal" else "normal"
    records = view.records_for(ckpt.speaker_id, src_style)
    if not records:
        raise corpus.CorpusError(
            f"no {src_style} records in split {args.split!r} for speaker {ckpt.speaker_id!r}"
        )
    made_figures = 0
    for rec in records:
        w = dsp.load_audio(rec.audio_path, cfg.analysis.sample_rate)
        if cfg.vad.enabled:
            labels = vad.classify(w, rec.style, cfg.vad, cfg.analysis)
            w = vad.trim_silence(w, labels, cfg.analysis).waveform
        spec = dsp.mel_spectrogram(w, cfg.analysis)
        converted = convert_mel(spec, ckpt, args.direction)
        out_wav = conv_dir / f"{rec.speaker_id}_{rec.utterance_id}.wav"
        dsp.save_audio(out_wav, synthesis.vocode(converted, adapter))
        if made_figures < args.figures:
            pair = [p for p in view.pairs if p.utterance_id == rec.utterance_id]
            if pair:
                other = pair[0].normal if src_style == "whisper" else pair[0].whisper
                ow = dsp.load_audio(other.audio_path, cfg.analysis.sample_rate)
                figures.save_spectrogram_triptych(
                    spec,
                    converted,
                    dsp.mel_spectrogram(ow, cfg.analysis),
                    out / "figures" / f"{rec.speaker_id}_{rec.utterance_id}.png",
                )
                made_figures += 1
    log.info("converted %d utterances to %s", len(records), conv_dir)
    return 0


def cmd_evaluate(cfg: PipelineConfig, args) -> int:
    out = Path(cfg.out_dir)
    _start_run(cfg, out)
    manifest = corpus.load_manifest(args.manifest)
    scorer = None
    if evaluation.PesqScorer.available(cfg.evaluation):
        scorer = evaluation.PesqScorer.resolve(cfg.evaluation)
    else:
        log.warning("PESQ scorer unavailable; reporting PESQ as 'unavailable'")

    reports = []
    for run_dir in args.runs:
        run_cfg = load_config(run_dir / "resolved_config.yaml")
        report = evaluation.QualityReport(
            mask_percent=int(round(run_cfg.train.mask.mask_fraction * 100)),
            window_frames=run_cfg.train.mask.window_frames,
            vad_enabled=run_cfg.vad.enabled,
        )
        loss_log = run_dir / "loss_log.jsonl"
        if loss_log.exists():
            report.final_g_loss = evaluation.final_epoch_g_loss(loss_log)
        for wav_path in sorted((run_dir / "converted").glob("*.wav")):
            speaker_id, _, utterance_id = wav_path.stem.partition("_")
            ref_rec = next(
                (
                    r
                    for r in manifest.records
                    if r.speaker_id == speaker_id
                    and r.utterance_id == utterance_id
                    and r.style == "normal"
                ),
                None,
            )
            if ref_rec is None:
                log.warning("no normal reference for %s; skipping", wav_path.stem)
                continue
            deg = dsp.load_audio(wav_path, cfg.analysis.sample_rate)
            ref = dsp.load_audio(ref_rec.audio_path, cfg.analysis.sample_rate)
            if cfg.vad.enabled:  # align rough offsets by trimming both sides
                ref = vad.trim_silence(
                    ref, vad.classify(ref, "normal", cfg.vad, cfg.analysis), cfg.analysis
                ).waveform
            score = scorer.score(ref, deg) if scorer else None
            mcd_db = evaluation.mcd(
                dsp.mel_spectrogram(ref, cfg.analysis),
                dsp.mel_spectrogram(deg, cfg.analysis),
                cfg.evaluation.mcd_coefficients,
            )
            report.utterances.append(
                evaluation.UtteranceScore(utterance_id=utterance_id, pesq=score, mcd=mcd_db)
            )
        reports.append(report)

    rows = evaluation.results_rows(reports)
    text = evaluation.render_results_text(rows)
    (out / "results.txt").write_text(text, encoding="utf-8")
    evaluation.write_results_tsv(rows, out / "results.tsv")
    figures.save_results_chart(rows, out / "results.png")
    sys.stdout.write(text)
    return 0


def cmd_serve(cfg: PipelineConfig, args) -> int:
    import uvicorn

    from .mos import RatingStore, create_app

    if args.port is not None:
        cfg.mos.port = args.port
    if args.host is not None:
        cfg.mos.host = args.host
    store = RatingStore(args.data, seed=cfg.mos.seed)
    clips = sorted(Path(args.clips).glob("*.wav"))
    if not clips:
        raise SystemExit(f"no WAV clips found under {args.clips}")
    store.register_clips(clips)
    app = create_app(
        store,
        clips_per_session=cfg.mos.clips_per_session,
        fixed_clips=cfg.mos.fixed_clips,
        results_token=cfg.mos.results_token,
    )
    _start_run(cfg, Path(cfg.out_dir))
    log.info("serving %d clips on %s:%d", len(clips), cfg.mos.host, cfg.mos.port)
    uvicorn.run(app, host=cfg.mos.host, port=cfg.mos.port, log_level="info")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "convert": cmd_convert,
    "evaluate": cmd_evaluate,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except Exception as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
