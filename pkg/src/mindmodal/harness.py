"""Evaluation protocol: dataset manifests, repeated-trial experiments over
strategy x modality-subset cells, majority-vote baselines, and Table-style
report emission.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import audio as audiomod
from . import eeg as eegmod
from .gateway import QueryContext, TransportError, Verdict, parse_label
from .prompts import (
    AUDIO_FEATURES,
    EEG_IMAGE,
    FACE_IMAGE,
    TRANSCRIPT,
    ClassLabel,
    ModalityDescriptor,
    ShotExample,
    TaskSpec,
    build_few_shot,
    build_zero_shot,
)
from .topomap import render_snapshot_montage

log = logging.getLogger(__name__)

__all__ = [
    "MODALITY_ORDER",
    "SampleRecord",
    "DatasetManifest",
    "TrialConfig",
    "TrialResult",
    "CellStats",
    "RunReport",
    "ModalityMissingError",
    "SampleLoader",
    "load_manifest",
    "save_manifest",
    "majority_vote_baseline",
    "run_trial",
    "run_experiment",
    "ablation_grid",
    "emit_report",
]

MODALITY_ORDER = ("eeg", "face", "audio")
MODALITY_TITLES = {"eeg": "EEG", "face": "Facial Expression", "audio": "Audio"}

# Default "collected through XXX / visualized in XXX" clauses per modality.
_CLAUSES = {
    EEG_IMAGE: ("scalp electrodes in the standard 10-20 layout",
                "topographic scalp map image"),
    FACE_IMAGE: ("a camera facing the participant", "image"),
    AUDIO_FEATURES: ("a microphone recording of the participant's speech",
                     "summary statistics text"),
    TRANSCRIPT: ("automatic speech recognition of the recorded speech",
                 "plain text"),
}


class ModalityMissingError(RuntimeError):
    def __init__(self, sample_id: str, modality: str, path):
        super().__init__(f"sample {sample_id}: missing {modality} file {path}")
        self.sample_id = sample_id
        self.modality = modality


@dataclass(frozen=True)
class SampleRecord:
    id: str
    label: int
    eeg_csv: str | None = None
    sfreq: float | None = None
    window: eegmod.TimeWindow | None = None
    face_image: str | None = None
    audio_wav: str | None = None
    transcript: str | None = None

    def __post_init__(self):
        if not any((self.eeg_csv, self.face_image, self.audio_wav, self.transcript)):
            raise ValueError(f"sample {self.id}: no modality paths present")


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    symptom: str
    task: TaskSpec
    samples: tuple[SampleRecord, ...]
    default_window: eegmod.TimeWindow
    default_sfreq: float
    modalities: tuple[str, ...]
    root: Path = Path(".")

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "modalities", tuple(self.modalities))
        object.__setattr__(self, "root", Path(self.root))
        if len(self.samples) < 2:
            raise ValueError("a manifest needs at least 2 samples")
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("sample ids must be unique")
        for s in self.samples:
            if not 0 <= s.label < self.task.n_classes:
                raise ValueError(f"sample {s.id}: label {s.label} out of range")
        for m in self.modalities:
            if m not in MODALITY_ORDER:
                raise ValueError(f"unknown modality {m!r}")

    def resolve(self, rel: str) -> Path:
        return self.root / rel


def _window_to_json(w: eegmod.TimeWindow | None):
    return None if w is None else {"start_s": w.start_s, "end_s": w.end_s}


def _window_from_json(obj) -> eegmod.TimeWindow | None:
    return None if obj is None else eegmod.TimeWindow(obj["start_s"], obj["end_s"])


def load_manifest(path) -> DatasetManifest:
    """JSON-lines manifest: one header object, then one sample per line."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    task = TaskSpec(
        symptom=header["symptom"],
        classes=tuple(
            ClassLabel(c["index"], c["name"], c.get("description", c["name"]))
            for c in header["classes"]
        ),
    )
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from None
        samples.append(
            SampleRecord(
                id=str(obj["id"]),
                label=int(obj["label"]),
                eeg_csv=obj.get("eeg_csv"),
                sfreq=obj.get("sfreq"),
                window=_window_from_json(obj.get("window")),
                face_image=obj.get("face_image"),
                audio_wav=obj.get("audio_wav"),
                transcript=obj.get("transcript"),
            )
        )
    return DatasetManifest(
        name=header["name"],
        symptom=header["symptom"],
        task=task,
        samples=tuple(samples),
        default_window=_window_from_json(header["window"]),
        default_sfreq=float(header["sfreq"]),
        modalities=tuple(header["modalities"]),
        root=path.parent,
    )


def save_manifest(manifest: DatasetManifest, path) -> None:
    header = {
        "name": manifest.name,
        "symptom": manifest.symptom,
        "classes": [
            {"index": c.index, "name": c.name, "description": c.description}
            for c in manifest.task.classes
        ],
        "window": _window_to_json(manifest.default_window),
        "sfreq": manifest.default_sfreq,
        "modalities": list(manifest.modalities),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for s in manifest.samples:
            obj = {"id": s.id, "label": s.label}
            if s.eeg_csv:
                obj["eeg_csv"] = s.eeg_csv
            if s.sfreq is not None:
                obj["sfreq"] = s.sfreq
            if s.window is not None:
                obj["window"] = _window_to_json(s.window)
            if s.face_image:
                obj["face_image"] = s.face_image
            if s.audio_wav:
                obj["audio_wav"] = s.audio_wav
            if s.transcript:
                obj["transcript"] = s.transcript
            fh.write(json.dumps(obj) + "\n")


class SampleLoader:
    """Builds (and caches) per-sample modality payloads.

    EEG goes through the full preprocessing + topomap pipeline once per
    sample; the cache keeps ablation grids from re-rendering identical
    payloads for every cell and trial.
    """

    def __init__(self, manifest: DatasetManifest, filter_spec: eegmod.FilterSpec | None = None,
                 k_snapshots: int = 10):
        self.manifest = manifest
        self.filter_spec = filter_spec or eegmod.FilterSpec(0.1, 45.0)
        self.k_snapshots = k_snapshots
        self._cache: dict[tuple[str, str], tuple[ModalityDescriptor, ...]] = {}
        self._lock = threading.Lock()

    def _require(self, sample: SampleRecord, modality: str, rel: str | None) -> Path:
        if not rel:
            raise ModalityMissingError(sample.id, modality, "<unset>")
        path = self.manifest.resolve(rel)
        if not path.exists():
            raise ModalityMissingError(sample.id, modality, path)
        return path

    def _build(self, sample: SampleRecord, modality: str) -> tuple[ModalityDescriptor, ...]:
        if modality == "eeg":
            path = self._require(sample, "eeg", sample.eeg_csv)
            sfreq = sample.sfreq or self.manifest.default_sfreq
            rec = eegmod.read_eeg_csv(path, sfreq)
            taps = eegmod.design_bandpass_fir(self.filter_spec, sfreq)
            rec = eegmod.average_reference(eegmod.apply_fir(rec, taps))
            window = sample.window or self.manifest.default_window
            image = render_snapshot_montage(rec, window, k=self.k_snapshots)
            return (ModalityDescriptor(EEG_IMAGE, *_CLAUSES[EEG_IMAGE], image.png),)
        if modality == "face":
            path = self._require(sample, "face", sample.face_image)
            return (ModalityDescriptor(FACE_IMAGE, *_CLAUSES[FACE_IMAGE], path.read_bytes()),)
        if modality == "audio":
            wav = self._require(sample, "audio", sample.audio_wav)
            feats = audiomod.extract_feature_text(audiomod.load_wav(wav))
            txt_path = self._require(sample, "audio", sample.transcript)
            transcript = audiomod.load_transcript(txt_path)
            return (
                ModalityDescriptor(AUDIO_FEATURES, *_CLAUSES[AUDIO_FEATURES], feats.text),
                ModalityDescriptor(TRANSCRIPT, *_CLAUSES[TRANSCRIPT], transcript),
            )
        raise ValueError(f"unknown modality {modality!r}")

    def descriptors(self, sample: SampleRecord, subset) -> list[ModalityDescriptor]:
        out: list[ModalityDescriptor] = []
        for modality in MODALITY_ORDER:
            if modality not in subset:
                continue
            key = (sample.id, modality)
            with self._lock:
                cached = self._cache.get(key)
            if cached is None:
                cached = self._build(sample, modality)
                with self._lock:
                    self._cache[key] = cached
            out.extend(cached)
        return out


@dataclass(frozen=True)
class TrialConfig:
    strategy: str = "zero-shot"  # "zero-shot" | "few-shot"
    shots: int = 1
    repeats: int = 5
    seed: int = 0
    modality_subset: tuple[str, ...] = ("eeg",)
    strict: bool = False
    max_workers: int = 1

    def __post_init__(self):
        if self.strategy not in ("zero-shot", "few-shot"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "few-shot" and self.shots < 1:
            raise ValueError("few-shot needs shots >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        object.__setattr__(self, "modality_subset", tuple(self.modality_subset))


@dataclass(frozen=True)
class TrialResult:
    trial_seed: int
    shot_ids: tuple[str, ...]
    verdicts: dict
    accuracy: float
    correct: int
    tested: int
    invalid: int
    skipped: int


@dataclass(frozen=True)
class CellStats:
    strategy: str
    modalities: tuple[str, ...]
    mean: float | None
    std: float
    trial_accuracies: tuple[float, ...] = ()
    invalid: int = 0
    skipped: int = 0


@dataclass(frozen=True)
class RunReport:
    dataset: str
    symptom: str
    cells: tuple[CellStats, ...]

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "symptom": self.symptom,
            "cells": [
                {
                    "strategy": c.strategy,
                    "modalities": list(c.modalities),
                    "mean": c.mean,
                    "std": c.std,
                    "trial_accuracies": list(c.trial_accuracies),
                    "invalid": c.invalid,
                    "skipped": c.skipped,
                }
                for c in self.cells
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunReport":
        return cls(
            dataset=obj["dataset"],
            symptom=obj["symptom"],
            cells=tuple(
                CellStats(
                    strategy=c["strategy"],
                    modalities=tuple(c["modalities"]),
                    mean=c["mean"],
                    std=c["std"],
                    trial_accuracies=tuple(c["trial_accuracies"]),
                    invalid=c["invalid"],
                    skipped=c["skipped"],
                )
                for c in obj["cells"]
            ),
        )


def majority_vote_baseline(manifest: DatasetManifest) -> float:
    """100 * (count of most frequent label) / N, ties toward the lowest index."""
    counts = Counter(s.label for s in manifest.samples)
    best = max(counts.values())
    return 100.0 * best / len(manifest.samples)


def _evaluate_sample(sample: SampleRecord, config: TrialConfig, manifest: DatasetManifest,
                     gateway, loader: SampleLoader, shots: tuple[ShotExample, ...],
                     trial_seed: int) -> Verdict | None:
    """None means the sample was skipped for a missing modality file."""
    try:
        descriptors = loader.descriptors(sample, config.modality_subset)
    except ModalityMissingError as exc:
        if config.strict:
            raise
        log.warning("skipping: %s", exc)
        return None
    prompt = build_zero_shot(descriptors, manifest.task)
    if shots:
        prompt = build_few_shot(prompt, shots, manifest.task)
    context = QueryContext(
        sample_id=sample.id,
        true_label=sample.label,
        task=manifest.task,
        trial_seed=trial_seed,
    )
    try:
        raw = gateway.respond(prompt, context)
    except TransportError as exc:
        return Verdict(label=None, raw_text="", explanation="", error=str(exc))
    return parse_label(raw, manifest.task)


def run_trial(config: TrialConfig, manifest: DatasetManifest, gateway,
              loader: SampleLoader | None = None,
              trial_seed: int | None = None) -> TrialResult:
    """One pass over the dataset; few-shot draws and excludes M shot samples."""
    loader = loader or SampleLoader(manifest)
    trial_seed = config.seed if trial_seed is None else trial_seed
    samples = list(manifest.samples)
    shot_samples: list[SampleRecord] = []
    if config.strategy == "few-shot":
        if len(samples) <= config.shots:
            raise ValueError(
                f"few-shot needs more samples ({len(samples)}) than shots ({config.shots})"
            )
        rng = np.random.default_rng(trial_seed)
        picks = rng.choice(len(samples), size=config.shots, replace=False)
        shot_samples = [samples[i] for i in sorted(picks)]
        shot_ids = {s.id for s in shot_samples}
        samples = [s for s in samples if s.id not in shot_ids]
    shots = tuple(
        ShotExample(
            modalities=tuple(loader.descriptors(s, config.modality_subset)),
            true_label=s.label,
        )
        for s in shot_samples
    )

    def work(sample):
        return sample.id, _evaluate_sample(
            sample, config, manifest, gateway, loader, shots, trial_seed
        )

    if config.max_workers > 1:
        with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
            results = list(pool.map(work, samples))
    else:
        results = [work(s) for s in samples]

    verdicts = {sid: v for sid, v in results if v is not None}
    skipped = sum(1 for _, v in results if v is None)
    labels = {s.id: s.label for s in samples}
    correct = sum(1 for sid, v in verdicts.items() if v.label == labels[sid])
    invalid = sum(1 for v in verdicts.values() if v.is_invalid)
    tested = len(verdicts)
    accuracy = 100.0 * correct / tested if tested else 0.0
    return TrialResult(
        trial_seed=trial_seed,
        shot_ids=tuple(s.id for s in shot_samples),
        verdicts=verdicts,
        accuracy=accuracy,
        correct=correct,
        tested=tested,
        invalid=invalid,
        skipped=skipped,
    )


def run_experiment(config: TrialConfig, manifest: DatasetManifest, gateway,
                   loader: SampleLoader | None = None) -> tuple[CellStats, list[TrialResult]]:
    """``repeats`` trials with per-trial seeds seed + i; population std."""
    loader = loader or SampleLoader(manifest)
    trials = [
        run_trial(config, manifest, gateway, loader=loader, trial_seed=config.seed + i)
        for i in range(config.repeats)
    ]
    accs = np.array([t.accuracy for t in trials])
    cell = CellStats(
        strategy=config.strategy,
        modalities=config.modality_subset,
        mean=float(accs.mean()),
        std=float(accs.std()),
        trial_accuracies=tuple(accs),
        invalid=sum(t.invalid for t in trials),
        skipped=sum(t.skipped for t in trials),
    )
    return cell, trials


def modality_subsets(modalities) -> list[tuple[str, ...]]:
    """Non-empty subsets in canonical order, singletons first."""
    mods = [m for m in MODALITY_ORDER if m in modalities]
    out = []
    for size in range(1, len(mods) + 1):
        out.extend(itertools.combinations(mods, size))
    return out


def ablation_grid(manifest: DatasetManifest, strategies, gateway,
                  base_config: TrialConfig | None = None,
                  loader: SampleLoader | None = None) -> RunReport:
    """Baseline plus every non-empty modality subset, for each strategy."""
    base_config = base_config or TrialConfig()
    loader = loader or SampleLoader(manifest)
    baseline = majority_vote_baseline(manifest)
    cells: list[CellStats] = []
    for strategy in strategies:
        cells.append(CellStats(strategy=strategy, modalities=(), mean=baseline, std=0.0))
        for subset in modality_subsets(manifest.modalities):
            config = replace(base_config, strategy=strategy, modality_subset=subset)
            cell, _ = run_experiment(config, manifest, gateway, loader=loader)
            cells.append(cell)
    return RunReport(dataset=manifest.name, symptom=manifest.symptom, cells=tuple(cells))


def _cell_text(cell: CellStats) -> str:
    if cell.mean is None:
        return "--"
    return f"{cell.mean:.2f}±{cell.std:.2f}"


def emit_report(report: RunReport, fmt: str = "markdown") -> str:
    """Render the ablation grid; deterministic bytes for identical reports."""
    if fmt in ("markdown", "md"):
        return _emit_markdown(report)
    if fmt == "csv":
        return _emit_csv(report)
    raise ValueError(f"unknown report format {fmt!r}")


def _best_cells(report: RunReport) -> set[int]:
    best: set[int] = set()
    for strategy in dict.fromkeys(c.strategy for c in report.cells):
        indexed = [
            (i, c) for i, c in enumerate(report.cells)
            if c.strategy == strategy and c.modalities and c.mean is not None
        ]
        if indexed:
            best.add(max(indexed, key=lambda ic: ic[1].mean)[0])
    return best


def _emit_markdown(report: RunReport) -> str:
    best = _best_cells(report)
    lines = [
        f"# {report.dataset}: {report.symptom} ablation",
        "",
        "| Strategy | " + " | ".join(MODALITY_TITLES[m] for m in MODALITY_ORDER)
        + " | Accuracy (%) |",
        "|---|---|---|---|---|",
    ]
    for i, cell in enumerate(report.cells):
        marks = ["✓" if m in cell.modalities else "×" for m in MODALITY_ORDER]
        acc = _cell_text(cell)
        if i in best:
            acc = f"**{acc}**"
        lines.append(f"| {cell.strategy} | " + " | ".join(marks) + f" | {acc} |")
    return "\n".join(lines) + "\n"


def _emit_csv(report: RunReport) -> str:
    lines = ["strategy,eeg,face,audio,mean,std,trials,invalid,skipped"]
    for cell in report.cells:
        marks = ["1" if m in cell.modalities else "0" for m in MODALITY_ORDER]
        mean = "--" if cell.mean is None else f"{cell.mean:.2f}"
        trials = ";".join(f"{a:.2f}" for a in cell.trial_accuracies)
        lines.append(
            f"{cell.strategy},{','.join(marks)},{mean},{cell.std:.2f},"
            f"{trials},{cell.invalid},{cell.skipped}"
        )
    return "\n".join(lines) + "\n"
