import math

import numpy as np
import pytest

from mindmodal.eeg import (
    EegRecording,
    FilterSpec,
    TimeWindow,
    apply_fir,
    average_reference,
    default_num_taps,
    design_bandpass_fir,
    equidistant_timestamps,
    read_eeg_csv,
    snapshot,
    write_eeg_csv,
)


def freq_response(taps, f, sfreq):
    """Independent oracle: direct DFT of the taps at frequency f."""
    n = np.arange(len(taps))
    return abs(np.sum(taps * np.exp(-2j * np.pi * f * n / sfreq)))


@pytest.fixture(scope="module")
def default_taps():
    return design_bandpass_fir(FilterSpec(0.1, 45.0), 250.0)


class TestDesignBandpassFir:
    def test_dc_is_killed(self, default_taps):
        assert freq_response(default_taps, 0.0, 250.0) < 0.01

    def test_midband_unit_gain(self, default_taps):
        assert freq_response(default_taps, 22.5, 250.0) == pytest.approx(1.0, abs=0.012)

    def test_half_amplitude_at_cutoffs(self, default_taps):
        assert freq_response(default_taps, 45.0, 250.0) == pytest.approx(0.5, rel=0.12)
        assert freq_response(default_taps, 0.1, 250.0) == pytest.approx(0.5, rel=0.12)

    def test_taps_exactly_symmetric(self, default_taps):
        assert np.array_equal(default_taps, default_taps[::-1])

    def test_tap_count_is_odd(self, default_taps):
        assert len(default_taps) % 2 == 1
        assert len(default_taps) == default_num_taps(0.1, 45.0, 250.0)

    def test_cutoff_above_nyquist_rejected(self):
        with pytest.raises(ValueError, match="Nyquist"):
            design_bandpass_fir(FilterSpec(0.1, 130.0), 250.0)

    def test_even_taps_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            design_bandpass_fir(FilterSpec(0.1, 45.0, n_taps=100), 250.0)

    def test_inverted_cutoffs_rejected(self):
        with pytest.raises(ValueError):
            design_bandpass_fir(FilterSpec(45.0, 0.1), 250.0)


def _recording(data, sfreq=250.0):
    data = np.asarray(data, dtype=float)
    names = tuple(f"ch{i}" for i in range(data.shape[1]))
    return EegRecording(names, sfreq, data)


@pytest.fixture(scope="module")
def taps():
    # A short explicit filter keeps these tests direct; the default-length
    # filter is exercised in the design tests above.
    return design_bandpass_fir(FilterSpec(1.0, 45.0, n_taps=831), 250.0)


class TestApplyFir:
    sfreq = 250.0

    def test_dc_suppressed(self, taps):
        n = 4000
        rec = _recording(np.full((n, 2), 50.0), self.sfreq)
        out = apply_fir(rec, taps)
        assert np.abs(out.data).max() < 0.5  # 1% of the 50 uV input

    def test_passband_sine_preserved(self, taps):
        n = 5000
        t = np.arange(n) / self.sfreq
        x = np.sin(2 * np.pi * 10.0 * t)
        rec = _recording(x[:, None], self.sfreq)
        out = apply_fir(rec, taps).data[:, 0]
        interior = slice(len(taps), n - len(taps))
        amp = out[interior].max()
        assert amp == pytest.approx(1.0, rel=0.02)
        # Delay compensation: output aligned with input.
        err = np.abs(out[interior] - x[interior]).max()
        assert err < 0.05

    def test_impulse_recovers_taps(self, taps):
        n = 4000
        x = np.zeros((n, 1))
        centre = n // 2
        x[centre, 0] = 1.0
        out = apply_fir(_recording(x, self.sfreq), taps).data[:, 0]
        half = (len(taps) - 1) // 2
        np.testing.assert_allclose(
            out[centre - half: centre + half + 1], taps, atol=1e-12
        )

    def test_output_length_equals_input(self, taps):
        rec = _recording(np.random.default_rng(0).normal(size=(1200, 3)), self.sfreq)
        assert apply_fir(rec, taps).data.shape == rec.data.shape

    def test_too_short_recording_names_minimum(self, taps):
        rec = _recording(np.zeros((100, 2)), self.sfreq)
        with pytest.raises(ValueError, match=str(len(taps))):
            apply_fir(rec, taps)


class TestAverageReference:
    def test_zero_mean_input_unchanged(self):
        rec = _recording(np.tile([5.0, -5.0], (20, 1)))
        np.testing.assert_array_equal(average_reference(rec).data, rec.data)

    def test_mean_subtracted(self):
        rec = _recording(np.tile([10.0, 0.0], (4, 1)))
        np.testing.assert_allclose(average_reference(rec).data, np.tile([5.0, -5.0], (4, 1)))

    def test_per_sample_mean_is_zero(self):
        rng = np.random.default_rng(42)
        rec = _recording(rng.normal(size=(500, 8)) * 30)
        out = average_reference(rec)
        assert np.abs(out.data.mean(axis=1)).max() < 1e-9

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        rec = _recording(rng.normal(size=(300, 5)))
        once = average_reference(rec)
        twice = average_reference(once)
        np.testing.assert_allclose(twice.data, once.data, atol=1e-9)

    def test_linear(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(100, 4))
        y = rng.normal(size=(100, 4))
        lhs = average_reference(_recording(2.5 * x + 0.5 * y)).data
        rhs = 2.5 * average_reference(_recording(x)).data + 0.5 * average_reference(_recording(y)).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_single_channel_rejected(self):
        rec = EegRecording(("Cz",), 250.0, np.zeros((10, 1)))
        with pytest.raises(ValueError, match="2 channels"):
            average_reference(rec)

    def test_commutes_with_filtering(self):
        sfreq = 250.0
        taps = design_bandpass_fir(FilterSpec(1.0, 45.0, n_taps=415), sfreq)
        rng = np.random.default_rng(11)
        rec = _recording(rng.normal(size=(2000, 4)), sfreq)
        a = average_reference(apply_fir(rec, taps)).data
        b = apply_fir(average_reference(rec), taps).data
        np.testing.assert_allclose(a, b, atol=1e-6)


class TestEquidistantTimestamps:
    def test_centred_bins(self):
        assert equidistant_timestamps(TimeWindow(0, 5), 10) == pytest.approx(
            [0.25 + 0.5 * i for i in range(10)]
        )

    def test_single_midpoint(self):
        assert equidistant_timestamps(TimeWindow(0, 530), 1) == [265.0]

    def test_offset_window(self):
        times = equidistant_timestamps(TimeWindow(1.65, 4.15), 10)
        assert times[0] == pytest.approx(1.775)
        assert times[-1] == pytest.approx(4.025)

    def test_constant_spacing(self):
        times = np.array(equidistant_timestamps(TimeWindow(0.3, 7.7), 13))
        steps = np.diff(times)
        assert np.abs(steps - (7.7 - 0.3) / 13).max() < 1e-12
        assert (steps > 0).all()

    def test_zero_k_rejected(self):
        with pytest.raises(ValueError):
            equidistant_timestamps(TimeWindow(0, 5), 0)


class TestSnapshot:
    def test_exact_sample(self):
        data = np.arange(100, dtype=float)[:, None] * [1.0, 2.0]
        rec = _recording(data, sfreq=10.0)
        snap = snapshot(rec, [2.0])
        np.testing.assert_array_equal(snap.values[0], [20.0, 40.0])

    def test_nearest_index(self):
        data = np.arange(1000, dtype=float)[:, None].repeat(2, axis=1)
        rec = _recording(data, sfreq=250.0)
        assert snapshot(rec, [0.1]).values[0, 0] == 25.0

    def test_constant_recording(self):
        rec = _recording(np.full((500, 3), 7.0))
        snap = snapshot(rec, equidistant_timestamps(TimeWindow(0, 1.5), 10))
        np.testing.assert_array_equal(snap.values, np.full((10, 3), 7.0))

    def test_out_of_range_names_time(self):
        rec = _recording(np.zeros((10, 2)), sfreq=10.0)
        with pytest.raises(ValueError, match="99"):
            snapshot(rec, [99.0])


class TestCsvIo:
    def test_round_trip(self, tmp_path):
        rec = _recording(np.random.default_rng(0).normal(size=(50, 3)))
        path = tmp_path / "eeg.csv"
        write_eeg_csv(rec, path)
        back = read_eeg_csv(path, rec.sfreq)
        assert back.channel_names == rec.channel_names
        np.testing.assert_allclose(back.data, rec.data, atol=1e-6)

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1.0,2.0\n3.0,oops\n")
        with pytest.raises(ValueError, match="line 3"):
            read_eeg_csv(path, 100.0)

    def test_column_count_mismatch_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1.0,2.0\n3.0\n")
        with pytest.raises(ValueError, match="line 3"):
            read_eeg_csv(path, 100.0)


class TestEegRecording:
    def test_column_mismatch_rejected(self):
        with pytest.raises(ValueError):
            EegRecording(("a", "b"), 100.0, np.zeros((5, 3)))

    def test_non_finite_rejected(self):
        data = np.zeros((5, 2))
        data[0, 0] = np.nan
        with pytest.raises(ValueError):
            EegRecording(("a", "b"), 100.0, data)

    def test_negative_sfreq_rejected(self):
        with pytest.raises(ValueError):
            EegRecording(("a", "b"), -1.0, np.zeros((5, 2)))
