"""STFT-based audio features (mel spectrogram, MFCC, chroma), their
statistical summary and prompt-ready text rendering, plus WAV/transcript IO.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct
from scipy.io import wavfile

log = logging.getLogger(__name__)

__all__ = [
    "AudioClip",
    "SpectralFrames",
    "FeatureSummary",
    "FeatureTextBlock",
    "load_wav",
    "stft",
    "mel_filterbank",
    "mel_spectrogram",
    "mfcc",
    "chroma_stft",
    "summarize",
    "textualize",
    "extract_feature_text",
    "load_transcript",
]

LOG_FLOOR = 1e-10
PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")


@dataclass(frozen=True)
class AudioClip:
    """Mono audio in [-1, 1]."""

    sfreq: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if not np.isfinite(samples).all():
            raise ValueError("clip contains non-finite samples")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class SpectralFrames:
    """Magnitude spectra: (n_frames, n_fft // 2 + 1), no padding or centring."""

    n_fft: int
    hop: int
    magnitudes: np.ndarray


@dataclass(frozen=True)
class FeatureSummary:
    mfcc_mean: tuple[float, ...]
    mfcc_std: tuple[float, ...]
    mel_mean: tuple[float, ...]
    mel_std: tuple[float, ...]
    chroma_mean: tuple[float, ...]  # keyed C..B


@dataclass(frozen=True)
class FeatureTextBlock:
    text: str


def load_wav(path) -> AudioClip:
    """Load PCM 16/24/32-bit or float WAV; stereo is downmixed by mean."""
    sfreq, data = wavfile.read(path)
    data = np.asarray(data)
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        samples = data.astype(np.float64)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioClip(float(sfreq), samples)


def _hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(clip: AudioClip, n_fft: int = 2048, hop: int = 512) -> SpectralFrames:
    """Hann-windowed magnitude spectrogram with the no-padding frame rule."""
    x = clip.samples
    if x.size < n_fft:
        raise ValueError(f"clip has {x.size} samples; at least {n_fft} required")
    n_frames = 1 + (x.size - n_fft) // hop
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[:: hop][:n_frames]
    spectra = np.fft.rfft(frames * _hann(n_fft), axis=1)
    return SpectralFrames(n_fft=n_fft, hop=hop, magnitudes=np.abs(spectra))


def _hz_to_mel(f):
    """Slaney scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=np.float64)
    mel = f * 3.0 / 200.0
    log_region = f >= 1000.0
    mel = np.where(log_region, 15.0 + 27.0 * np.log(np.maximum(f, 1e-30) / 1000.0) / np.log(6.4), mel)
    return mel


def _mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f = m * 200.0 / 3.0
    log_region = m >= 15.0
    return np.where(log_region, 1000.0 * np.exp((m - 15.0) * np.log(6.4) / 27.0), f)


def mel_filterbank(n_fft: int, sfreq: float, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """(n_mels, n_fft // 2 + 1) triangular filters on the Slaney mel scale."""
    if fmax > sfreq / 2:
        raise ValueError(f"fmax {fmax} Hz exceeds Nyquist ({sfreq / 2} Hz)")
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sfreq)
    mel_pts = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2))
    fb = np.zeros((n_mels, freqs.size))
    for i in range(n_mels):
        lo, mid, hi = mel_pts[i], mel_pts[i + 1], mel_pts[i + 2]
        up = (freqs - lo) / max(mid - lo, 1e-30)
        down = (hi - freqs) / max(hi - mid, 1e-30)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
        if not fb[i].any():
            raise ValueError(
                f"mel filter {i} is empty: n_mels={n_mels} is too large for "
                f"n_fft={n_fft} at {sfreq} Hz"
            )
    return fb


def mel_spectrogram(frames: SpectralFrames, sfreq: float, n_mels: int = 128,
                    fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Mel-band energies of the power spectra: (n_frames, n_mels)."""
    if fmax is None:
        fmax = sfreq / 2
    fb = mel_filterbank(frames.n_fft, sfreq, n_mels, fmin, fmax)
    return frames.magnitudes**2 @ fb.T


def mfcc(mel: np.ndarray, n_mfcc: int = 13) -> np.ndarray:
    """Orthonormal DCT-II of log(mel + 1e-10) along the mel axis."""
    mel = np.asarray(mel, dtype=np.float64)
    if n_mfcc > mel.shape[1]:
        raise ValueError(f"n_mfcc={n_mfcc} exceeds n_mels={mel.shape[1]}")
    return dct(np.log(mel + LOG_FLOOR), type=2, norm="ortho", axis=1)[:, :n_mfcc]


def chroma_stft(frames: SpectralFrames, sfreq: float) -> np.ndarray:
    """Pitch-class energy profile (12, n_frames), max-normalized per frame.

    Bin frequencies fold to pitch classes with A4 = 440 Hz, index 0 = C.
    Frames with no energy stay all-zero.
    """
    freqs = np.fft.rfftfreq(frames.n_fft, d=1.0 / sfreq)
    power = frames.magnitudes**2
    chroma = np.zeros((12, power.shape[0]))
    voiced = freqs > 0
    classes = (np.rint(12.0 * np.log2(freqs[voiced] / 440.0)).astype(np.int64) + 9) % 12
    for pc in range(12):
        cols = voiced.nonzero()[0][classes == pc]
        if cols.size:
            chroma[pc] = power[:, cols].sum(axis=1)
    peaks = chroma.max(axis=0)
    nonzero = peaks > 0
    chroma[:, nonzero] /= peaks[nonzero]
    return chroma


def summarize(mfcc_mat: np.ndarray, mel: np.ndarray, chroma: np.ndarray) -> FeatureSummary:
    """Per-dimension mean and population std across frames."""
    for name, mat in (("mfcc", mfcc_mat), ("mel", mel), ("chroma", chroma)):
        if np.asarray(mat).size == 0:
            raise ValueError(f"{name} matrix is empty")
    return FeatureSummary(
        mfcc_mean=tuple(np.mean(mfcc_mat, axis=0)),
        mfcc_std=tuple(np.std(mfcc_mat, axis=0)),
        mel_mean=tuple(np.mean(mel, axis=0)),
        mel_std=tuple(np.std(mel, axis=0)),
        chroma_mean=tuple(np.mean(chroma, axis=1)),
    )


def _fmt(values) -> str:
    return ", ".join(f"{v:.4f}" for v in values)


def textualize(summary: FeatureSummary) -> FeatureTextBlock:
    """Deterministic fixed-order rendering: MFCC -> Mel -> Chroma, 4 decimals."""
    chroma = ", ".join(
        f"{name}={v:.4f}" for name, v in zip(PITCH_CLASSES, summary.chroma_mean)
    )
    lines = [
        "Audio feature summary:",
        f"MFCC mean: {_fmt(summary.mfcc_mean)}",
        f"MFCC std: {_fmt(summary.mfcc_std)}",
        f"Mel spectrogram mean: {_fmt(summary.mel_mean)}",
        f"Mel spectrogram std: {_fmt(summary.mel_std)}",
        f"Chroma mean: {chroma}",
    ]
    return FeatureTextBlock(text="\n".join(lines))


def extract_feature_text(clip: AudioClip, n_fft: int = 2048, hop: int = 512,
                         n_mels: int = 128, n_mfcc: int = 13) -> FeatureTextBlock:
    """Convenience pipeline: clip -> STFT -> mel/MFCC/chroma -> text block."""
    frames = stft(clip, n_fft=n_fft, hop=hop)
    mel = mel_spectrogram(frames, clip.sfreq, n_mels=n_mels)
    coeffs = mfcc(mel, n_mfcc=n_mfcc)
    chroma = chroma_stft(frames, clip.sfreq)
    return textualize(summarize(coeffs, mel, chroma))


def load_transcript(path) -> str:
    """Read a UTF-8 transcript file, trimmed; empty transcripts are allowed."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read().strip()
    except FileNotFoundError:
        raise FileNotFoundError(f"transcript file not found: {path}") from None
    if not text:
        log.warning("transcript %s is empty", path)
    return text
