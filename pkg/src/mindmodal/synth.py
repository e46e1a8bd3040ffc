"""Synthetic mini-dataset generator: class-balanced EEG / audio / face /
transcript files plus a JSON-lines manifest, for self-contained demos and
offline acceptance runs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy.io import wavfile

from .eeg import EegRecording, TimeWindow, default_num_taps, write_eeg_csv
from .harness import DatasetManifest, SampleRecord, save_manifest
from .prompts import ClassLabel, TaskSpec

__all__ = ["class_set_for", "generate_dataset"]

EEG_CHANNELS = ("Fp1", "Fp2", "F3", "F4", "C3", "C4", "O1", "O2")
AUDIO_SFREQ = 22050
# One pitch per class (A3, C4, E4, G4, A4, C5, D5).
PITCHES = (220.0, 261.63, 329.63, 392.0, 440.0, 523.25, 587.33)
FACE_COLORS = (
    (200, 200, 200), (250, 220, 120), (120, 140, 230), (230, 120, 120),
    (120, 230, 140), (230, 140, 230), (140, 230, 230),
)
MOODS = ("neutral", "bright", "downcast", "tense", "calm", "startled", "flat")


def class_set_for(n_classes: int) -> tuple[str, list[tuple[str, str]]]:
    """(symptom, [(name, description), ...]) matching the usual label sets."""
    if n_classes == 2:
        return "depression", [("healthy", "healthy"), ("MDD", "MDD")]
    if n_classes == 3:
        return "emotion", [("neutral", "neutral"), ("happy", "happy"), ("sadness", "sadness")]
    if n_classes == 7:
        return "emotion", [
            (n, n)
            for n in ("anger", "fear", "disgust", "sadness", "happiness", "surprise", "neutral")
        ]
    return "emotion", [(f"class-{i}", f"class {i}") for i in range(n_classes)]


def _synth_eeg(rng: np.random.Generator, label: int, sfreq: float, duration_s: float) -> EegRecording:
    t = np.arange(int(duration_s * sfreq)) / sfreq
    freq = 6.0 + 2.0 * label  # class-dependent band power
    data = np.empty((t.size, len(EEG_CHANNELS)))
    for ch in range(len(EEG_CHANNELS)):
        amp = 10.0 + 5.0 * np.sin(2.0 * np.pi * ch / len(EEG_CHANNELS) + label)
        phase = rng.uniform(0, 2 * np.pi)
        data[:, ch] = amp * np.sin(2 * np.pi * freq * t + phase) + rng.normal(0, 1.0, t.size)
    return EegRecording(EEG_CHANNELS, sfreq, data)


def _synth_audio(rng: np.random.Generator, label: int, duration_s: float = 1.2) -> np.ndarray:
    t = np.arange(int(duration_s * AUDIO_SFREQ)) / AUDIO_SFREQ
    pitch = PITCHES[label % len(PITCHES)]
    wave = 0.6 * np.sin(2 * np.pi * pitch * t) + rng.normal(0, 0.01, t.size)
    return (np.clip(wave, -1, 1) * 32767).astype(np.int16)


def generate_dataset(out_dir, n_classes: int = 3, n_samples: int = 30, seed: int = 0,
                     sfreq: float = 128.0,
                     modalities: tuple[str, ...] = ("eeg", "face", "audio")) -> Path:
    """Write a balanced synthetic dataset; returns the manifest path.

    Labels are assigned round-robin so every class count differs by at most
    one; ``n_samples`` divisible by ``n_classes`` gives an exactly balanced
    manifest. All bytes are deterministic in ``seed``.
    """
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if n_samples < n_classes:
        raise ValueError("need at least one sample per class")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    symptom, classes = class_set_for(n_classes)
    task = TaskSpec(
        symptom=symptom,
        classes=tuple(ClassLabel(i, name, desc) for i, (name, desc) in enumerate(classes)),
    )
    window = TimeWindow(4.0, 9.0)
    # Recordings must be at least one default filter length long.
    duration_s = max(12.0, 1.2 * default_num_taps(0.1, 45.0, sfreq) / sfreq)

    samples = []
    for i in range(n_samples):
        label = i % n_classes
        sid = f"s{i:03d}"
        record = {"id": sid, "label": label}
        if "eeg" in modalities:
            rel = f"{sid}_eeg.csv"
            write_eeg_csv(_synth_eeg(rng, label, sfreq, duration_s), out_dir / rel)
            record["eeg_csv"] = rel
        if "face" in modalities:
            rel = f"{sid}_face.png"
            img = Image.new("RGB", (64, 64), FACE_COLORS[label % len(FACE_COLORS)])
            img.save(out_dir / rel, format="PNG")
            record["face_image"] = rel
        if "audio" in modalities:
            rel = f"{sid}_audio.wav"
            wavfile.write(out_dir / rel, AUDIO_SFREQ, _synth_audio(rng, label))
            record["audio_wav"] = rel
            txt = f"The participant sounds {MOODS[label % len(MOODS)]} in sample {sid}."
            (out_dir / f"{sid}_transcript.txt").write_text(txt + "\n", encoding="utf-8")
            record["transcript"] = f"{sid}_transcript.txt"
        samples.append(
            SampleRecord(
                id=record["id"],
                label=record["label"],
                eeg_csv=record.get("eeg_csv"),
                face_image=record.get("face_image"),
                audio_wav=record.get("audio_wav"),
                transcript=record.get("transcript"),
            )
        )

    manifest = DatasetManifest(
        name=f"synthetic-c{n_classes}",
        symptom=symptom,
        task=task,
        samples=tuple(samples),
        default_window=window,
        default_sfreq=sfreq,
        modalities=tuple(m for m in ("eeg", "face", "audio") if m in modalities),
        root=out_dir,
    )
    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(manifest, manifest_path)
    return manifest_path
