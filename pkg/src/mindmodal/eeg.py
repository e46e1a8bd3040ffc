"""EEG preprocessing: FIR bandpass filtering, average re-referencing,
elicitation windowing and equidistant snapshot extraction.

All operations are pure functions on immutable inputs; recordings are never
modified in place.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "EegRecording",
    "FilterSpec",
    "TimeWindow",
    "SnapshotSet",
    "default_num_taps",
    "design_bandpass_fir",
    "apply_fir",
    "average_reference",
    "equidistant_timestamps",
    "snapshot",
    "read_eeg_csv",
    "write_eeg_csv",
]


@dataclass(frozen=True)
class EegRecording:
    """Multichannel EEG time series in microvolts.

    ``data`` is an (n_samples, n_channels) array; column order matches
    ``channel_names``.
    """

    channel_names: tuple[str, ...]
    sfreq: float
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("data must be a 2-D (n_samples, n_channels) array")
        if data.shape[1] != len(self.channel_names):
            raise ValueError(
                f"data has {data.shape[1]} columns but {len(self.channel_names)} "
                "channel names were given"
            )
        if self.sfreq <= 0:
            raise ValueError("sfreq must be positive")
        if not np.isfinite(data).all():
            raise ValueError("recording contains non-finite samples")
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sfreq


@dataclass(frozen=True)
class FilterSpec:
    """Bandpass specification; cutoffs are half-amplitude (-6 dB) points.

    ``n_taps`` of None selects an automatic odd length from the Hamming
    transition-width rule (see :func:`default_num_taps`).
    """

    f_low: float
    f_high: float
    n_taps: int | None = None
    window: str = "hamming"


@dataclass(frozen=True)
class TimeWindow:
    start_s: float
    end_s: float

    def __post_init__(self):
        if not (0 <= self.start_s < self.end_s):
            raise ValueError(
                f"invalid window [{self.start_s}, {self.end_s}]: need 0 <= start < end"
            )

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class SnapshotSet:
    """Per-channel amplitudes at a list of timestamps (k x n_channels)."""

    timestamps: tuple[float, ...]
    values: np.ndarray
    channel_names: tuple[str, ...] = field(default=())


def default_num_taps(f_low: float, f_high: float, sfreq: float) -> int:
    """Smallest odd tap count from the Hamming rule n ~ 3.3 / (df / sfreq).

    The transition width is min(2 Hz, 2 * f_low): the low edge must finish
    its transition above 0 Hz, otherwise DC is never attenuated (a 0.1 Hz
    cutoff inside a 2 Hz transition leaves DC at about -2 dB).
    """
    df = min(2.0, 2.0 * f_low)
    n = math.ceil(3.3 * sfreq / df)
    return n if n % 2 == 1 else n + 1


def _validate_spec(spec: FilterSpec, sfreq: float) -> int:
    if not (0 < spec.f_low < spec.f_high):
        raise ValueError(f"need 0 < f_low < f_high, got ({spec.f_low}, {spec.f_high})")
    if spec.f_high >= sfreq / 2:
        raise ValueError(
            f"high cutoff {spec.f_high} Hz must be below Nyquist ({sfreq / 2} Hz)"
        )
    n_taps = spec.n_taps if spec.n_taps is not None else default_num_taps(
        spec.f_low, spec.f_high, sfreq
    )
    if n_taps <= 0 or n_taps % 2 == 0:
        raise ValueError(f"n_taps must be odd and positive, got {n_taps}")
    return n_taps


def design_bandpass_fir(spec: FilterSpec, sfreq: float) -> np.ndarray:
    """Design a linear-phase (type-I) Hamming-windowed sinc bandpass filter.

    The kernel is the difference of two windowed low-pass sinc kernels,
    scaled to unit gain at the passband centre. Taps are computed on a
    symmetric index grid so c[i] == c[n-1-i] holds bit-exactly.
    """
    n_taps = _validate_spec(spec, sfreq)
    if spec.window.lower() != "hamming":
        raise ValueError(f"unsupported window {spec.window!r}")
    half = (n_taps - 1) // 2
    m = np.arange(n_taps) - half  # symmetric integer offsets

    def lowpass(fc: float) -> np.ndarray:
        return (2.0 * fc / sfreq) * np.sinc(2.0 * fc / sfreq * m)

    taps = lowpass(spec.f_high) - lowpass(spec.f_low)
    taps *= 0.54 + 0.46 * np.cos(2.0 * np.pi * m / (n_taps - 1))
    # Unit gain at the passband centre (response is real for symmetric taps).
    f_mid = 0.5 * (spec.f_low + spec.f_high)
    gain = np.sum(taps * np.cos(2.0 * np.pi * f_mid / sfreq * m))
    return taps / gain


def apply_fir(recording: EegRecording, taps: np.ndarray) -> EegRecording:
    """Filter every channel, delay-compensated, with reflect-padded edges.

    Output length equals input length and is aligned with the input
    (the (n_taps-1)/2 group delay is removed by trimming the padding).
    """
    taps = np.asarray(taps, dtype=np.float64)
    n_taps = taps.shape[0]
    if recording.n_samples < n_taps:
        raise ValueError(
            f"recording has {recording.n_samples} samples but the filter needs "
            f"at least {n_taps}"
        )
    pad = (n_taps - 1) // 2
    padded = np.pad(recording.data, ((pad, pad), (0, 0)), mode="reflect")
    filtered = fftconvolve(padded, taps[:, None], mode="valid", axes=0)
    return EegRecording(recording.channel_names, recording.sfreq, filtered)


def average_reference(recording: EegRecording) -> EegRecording:
    """Subtract the instantaneous cross-channel mean from every channel."""
    if recording.n_channels < 2:
        raise ValueError("average reference needs at least 2 channels")
    data = recording.data - recording.data.mean(axis=1, keepdims=True)
    return EegRecording(recording.channel_names, recording.sfreq, data)


def equidistant_timestamps(window: TimeWindow, k: int = 10) -> list[float]:
    """k centred-bin times t_i = start + (i + 0.5) * (end - start) / k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    step = window.length_s / k
    return [window.start_s + (i + 0.5) * step for i in range(k)]


def snapshot(recording: EegRecording, timestamps: list[float]) -> SnapshotSet:
    """Per-channel amplitudes at the nearest sample to each timestamp."""
    values = np.empty((len(timestamps), recording.n_channels))
    for row, t in enumerate(timestamps):
        idx = int(round(t * recording.sfreq))
        if t < 0 or idx >= recording.n_samples:
            raise ValueError(
                f"timestamp {t} s is outside the recording "
                f"(duration {recording.duration_s:.3f} s)"
            )
        values[row] = recording.data[idx]
    return SnapshotSet(tuple(timestamps), values, recording.channel_names)


def read_eeg_csv(path, sfreq: float) -> EegRecording:
    """Read a UTF-8 CSV with a channel-name header and numeric rows in uV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        names = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(names)} values, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric value") from None
    if not rows:
        raise ValueError(f"{path}: no sample rows")
    return EegRecording(tuple(names), sfreq, np.array(rows))


def write_eeg_csv(recording: EegRecording, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(recording.channel_names)
        for row in recording.data:
            writer.writerow([f"{v:.6f}" for v in row])
