"""Command-line interface: pipeline stages, synthetic data generation, the
experiment runner and report formatting.

Exit codes: 0 success, 1 sample-level failures occurred (skips), 2
configuration or IO error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import audio as audiomod
from . import eeg as eegmod
from . import gateway as gwmod
from . import harness, synth
from .prompts import build_few_shot, build_zero_shot, render_text
from .topomap import render_snapshot_montage

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SAMPLE_FAILURES = 1
EXIT_CONFIG = 2


def _parse_window(text: str) -> eegmod.TimeWindow:
    try:
        start, end = text.split(":")
        return eegmod.TimeWindow(float(start), float(end))
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(f"window must be start:end seconds, got {text!r}")


def cmd_preprocess(args) -> int:
    rec = eegmod.read_eeg_csv(args.eeg, args.sfreq)
    spec = eegmod.FilterSpec(args.f_low, args.f_high)
    taps = eegmod.design_bandpass_fir(spec, args.sfreq)
    rec = eegmod.average_reference(eegmod.apply_fir(rec, taps))
    if args.window is not None:
        lo = int(round(args.window.start_s * args.sfreq))
        hi = int(round(args.window.end_s * args.sfreq))
        rec = eegmod.EegRecording(rec.channel_names, rec.sfreq, rec.data[lo:hi])
    eegmod.write_eeg_csv(rec, args.out)
    return EXIT_OK


def cmd_topomap(args) -> int:
    rec = eegmod.read_eeg_csv(args.eeg, args.sfreq)
    spec = eegmod.FilterSpec(args.f_low, args.f_high)
    taps = eegmod.design_bandpass_fir(spec, args.sfreq)
    rec = eegmod.average_reference(eegmod.apply_fir(rec, taps))
    if args.per_timestamp_images:
        from .topomap import interpolate_scalp, project_layout, render

        times = eegmod.equidistant_timestamps(args.window, args.timestamps)
        snaps = eegmod.snapshot(rec, times)
        coords = project_layout(rec.channel_names)
        out = Path(args.out)
        for i, t in enumerate(times):
            field = interpolate_scalp(coords, snaps.values[i])
            path = out.with_name(f"{out.stem}-{i:02d}{out.suffix}")
            path.write_bytes(render(field).png)
            print(path)
    else:
        image = render_snapshot_montage(rec, args.window, k=args.timestamps)
        Path(args.out).write_bytes(image.png)
        print(args.out)
    return EXIT_OK


def cmd_features(args) -> int:
    clip = audiomod.load_wav(args.audio)
    frames = audiomod.stft(clip)
    mel = audiomod.mel_spectrogram(frames, clip.sfreq)
    coeffs = audiomod.mfcc(mel)
    chroma = audiomod.chroma_stft(frames, clip.sfreq)
    summary = audiomod.summarize(coeffs, mel, chroma)
    out = Path(args.out)
    if out.suffix == ".json":
        payload = {
            "mfcc_mean": list(summary.mfcc_mean),
            "mfcc_std": list(summary.mfcc_std),
            "mel_mean": list(summary.mel_mean),
            "mel_std": list(summary.mel_std),
            "chroma_mean": dict(zip(audiomod.PITCH_CLASSES, summary.chroma_mean)),
        }
        out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    else:
        out.write_text(audiomod.textualize(summary).text + "\n", encoding="utf-8")
    print(out)
    return EXIT_OK


def cmd_synth(args) -> int:
    manifest_path = synth.generate_dataset(
        args.out, n_classes=args.classes, n_samples=args.samples, seed=args.seed
    )
    print(manifest_path)
    return EXIT_OK


def cmd_prompt(args) -> int:
    manifest = harness.load_manifest(args.manifest)
    loader = harness.SampleLoader(manifest)
    subset = _parse_modalities(args.modalities, manifest)
    sample = next((s for s in manifest.samples if s.id == args.sample), None)
    if sample is None:
        raise FileNotFoundError(f"sample {args.sample!r} not in manifest")
    prompt = build_zero_shot(loader.descriptors(sample, subset), manifest.task)
    if args.strategy == "few":
        import numpy as np

        rng = np.random.default_rng(args.seed)
        pool = [s for s in manifest.samples if s.id != sample.id]
        picks = rng.choice(len(pool), size=args.shots, replace=False)
        from .prompts import ShotExample

        shots = tuple(
            ShotExample(tuple(loader.descriptors(pool[i], subset)), pool[i].label)
            for i in sorted(picks)
        )
        prompt = build_few_shot(prompt, shots, manifest.task)
    print(render_text(prompt))
    return EXIT_OK


def _parse_modalities(text: str, manifest: harness.DatasetManifest) -> tuple[str, ...]:
    if text == "all":
        return manifest.modalities
    subset = tuple(m.strip() for m in text.split(",") if m.strip())
    for m in subset:
        if m not in harness.MODALITY_ORDER:
            raise ValueError(f"unknown modality {m!r}")
        if m not in manifest.modalities:
            raise ValueError(f"modality {m!r} not available in dataset {manifest.name}")
    if not subset:
        raise ValueError("empty modality list")
    return subset


def _make_gateway(args, run_dir: Path | None):
    if args.gateway == "oracle":
        return gwmod.OracleGateway()
    if args.gateway == "uniform":
        return gwmod.UniformGateway(seed=args.uniform_seed)
    if args.gateway == "scripted":
        if not args.scripted_replies:
            raise ValueError("--scripted-replies is required with --gateway scripted")
        replies = Path(args.scripted_replies).read_text(encoding="utf-8").splitlines()
        return gwmod.ScriptedGateway(replies)
    config = gwmod.GatewayConfig(
        endpoint=args.endpoint,
        model=args.model,
        temperature=args.temperature,
        max_tokens=args.max_tokens,
    )
    request_log = None
    if run_dir is not None:
        log_path = run_dir / "llm_requests.jsonl"

        def request_log(entry):
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry) + "\n")

    return gwmod.OpenAIGateway(config, request_log=request_log)


def cmd_run(args) -> int:
    manifest = harness.load_manifest(args.manifest)
    run_dir = Path(args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    gateway = _make_gateway(args, run_dir)
    loader = harness.SampleLoader(manifest)
    strategies = {
        "zero": ["zero-shot"],
        "few": ["few-shot"],
        "both": ["zero-shot", "few-shot"],
    }[args.strategy]
    subsets = (
        harness.modality_subsets(manifest.modalities)
        if args.modalities == "all"
        else [_parse_modalities(args.modalities, manifest)]
    )
    base = harness.TrialConfig(
        shots=args.shots, repeats=args.repeats, seed=args.seed, strict=args.strict
    )
    (run_dir / "config.json").write_text(
        json.dumps(
            {
                "manifest": str(args.manifest),
                "strategies": strategies,
                "subsets": [list(s) for s in subsets],
                "shots": args.shots,
                "repeats": args.repeats,
                "seed": args.seed,
                "gateway": args.gateway,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )

    baseline = harness.majority_vote_baseline(manifest)
    cells = []
    skipped_total = 0
    with open(run_dir / "trials.jsonl", "w", encoding="utf-8") as trials_fh:
        for strategy in strategies:
            cells.append(
                harness.CellStats(strategy=strategy, modalities=(), mean=baseline, std=0.0)
            )
            for subset in subsets:
                config = replace(base, strategy=strategy, modality_subset=subset)
                cell, trials = harness.run_experiment(config, manifest, gateway, loader=loader)
                cells.append(cell)
                skipped_total += cell.skipped
                for trial in trials:
                    trials_fh.write(
                        json.dumps(
                            {
                                "strategy": strategy,
                                "modalities": list(subset),
                                "trial_seed": trial.trial_seed,
                                "shot_ids": list(trial.shot_ids),
                                "accuracy": trial.accuracy,
                                "verdicts": {
                                    sid: {"label": v.label, "raw": v.raw_text}
                                    for sid, v in sorted(trial.verdicts.items())
                                },
                            }
                        )
                        + "\n"
                    )
    report = harness.RunReport(
        dataset=manifest.name, symptom=manifest.symptom, cells=tuple(cells)
    )
    (run_dir / "report.json").write_text(
        json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8"
    )
    (run_dir / "report.md").write_text(harness.emit_report(report, "markdown"), encoding="utf-8")
    print(harness.emit_report(report, "markdown"))
    if skipped_total:
        print(f"warning: {skipped_total} sample evaluations skipped", file=sys.stderr)
        return EXIT_SAMPLE_FAILURES
    return EXIT_OK


def cmd_report(args) -> int:
    report_path = Path(args.run) / "report.json"
    report = harness.RunReport.from_json(json.loads(report_path.read_text(encoding="utf-8")))
    text = harness.emit_report(report, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(args.out)
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mindmodal",
        description="Multimodal EEG/face/audio mental-state classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="bandpass-filter and average-reference an EEG CSV")
    p.add_argument("--eeg", required=True)
    p.add_argument("--sfreq", type=float, required=True)
    p.add_argument("--window", type=_parse_window, default=None)
    p.add_argument("--f-low", type=float, default=0.1)
    p.add_argument("--f-high", type=float, default=45.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("topomap", help="render scalp topography PNG(s) from an EEG CSV")
    p.add_argument("--eeg", required=True)
    p.add_argument("--sfreq", type=float, required=True)
    p.add_argument("--window", type=_parse_window, required=True)
    p.add_argument("--timestamps", type=int, default=10)
    p.add_argument("--f-low", type=float, default=0.1)
    p.add_argument("--f-high", type=float, default=45.0)
    p.add_argument("--per-timestamp-images", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_topomap)

    p = sub.add_parser("features", help="extract audio features to JSON or text")
    p.add_argument("--audio", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("synth", help="generate a balanced synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--samples", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prompt", help="print an assembled prompt without any network call")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--modalities", default="all")
    p.add_argument("--strategy", choices=["zero", "few"], default="zero")
    p.add_argument("--shots", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dry-run", action="store_true",
                   help="accepted for compatibility; prompt never calls the network")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("run", help="run the repeated-trial evaluation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--strategy", choices=["zero", "few", "both"], default="both")
    p.add_argument("--shots", type=int, default=1)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--modalities", default="all")
    p.add_argument("--gateway", choices=["real", "oracle", "uniform", "scripted"],
                   default="oracle")
    p.add_argument("--uniform-seed", type=int, default=0)
    p.add_argument("--scripted-replies", default=None)
    p.add_argument("--endpoint", default="https://api.openai.com/v1/chat/completions")
    p.add_argument("--model", default="gpt-4o-2024-05-13")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="format a stored run report")
    p.add_argument("--run", required=True)
    p.add_argument("--format", choices=["md", "markdown", "csv"], default="md")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except gwmod.AuthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
