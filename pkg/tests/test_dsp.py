import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from crackprobe import dsp, tactile, wavelets
from crackprobe.errors import InvalidInputError, InvalidLengthError, InvalidLevelsError
from crackprobe.imaging import BinaryMask


def direct_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.array([np.sum(x * np.exp(-2j * np.pi * f * k / n)) for f in range(n // 2 + 1)])


def trace_of(x, rate=400.0):
    x = np.asarray(x, float)
    return tactile.TactileTrace(rate, 10, 10, np.vstack([x] * 4), len(x) // 2)


def symmetric_index(i, n):
    """Half-sample symmetric reflection: ... x1 x0 | x0 x1 ... x_{n-1} | x_{n-1} x_{n-2} ..."""
    period = 2 * n
    i = i % period
    return i if i < n else period - 1 - i


def dwt_level_oracle(x, family):
    lo, hi = wavelets.analysis_filters(family)
    f, n = len(lo), len(x)
    m = (n + f - 1) // 2
    out_lo, out_hi = np.zeros(m), np.zeros(m)
    for o in range(m):
        for j in range(f):
            v = x[symmetric_index(2 * o + 1 - j, n)]
            out_lo[o] += lo[j] * v
            out_hi[o] += hi[j] * v
    return out_lo, out_hi


class TestPreprocess:
    def test_constant_has_zero_derivative(self):
        ft = dsp.preprocess(trace_of(np.full(200, 3.7)))
        assert np.all(ft.channels == 0)
        assert ft.rate == 800

    def test_passband_derivative(self):
        t = np.arange(1600) / 400
        ft = dsp.preprocess(trace_of(np.sin(2 * np.pi * 5 * t)))
        tt = np.arange(ft.channels.shape[1]) / 800
        expect = 2 * np.pi * 5 * np.cos(2 * np.pi * 5 * tt)
        mid = slice(400, -400)
        err = np.abs(ft.channel("P")[mid] - expect[mid]).max() / (2 * np.pi * 5)
        assert err < 0.02

    def test_stopband_attenuation(self):
        t = np.arange(1600) / 400
        amp = []
        for f in (5, 100):
            ft = dsp.preprocess(trace_of(np.sin(2 * np.pi * f * t)))
            amp.append(np.abs(ft.channel("P")[400:-400]).max())
        assert 20 * np.log10(amp[0] / amp[1]) > 35

    def test_filter_gains(self):
        sos = dsp.butter_lowpass(30, 800, 4)
        w, h = signal.sosfreqz(sos, worN=[0.0, 30.0], fs=800)
        assert abs(abs(h[0]) - 1) < 1e-6
        assert abs(abs(h[1]) - 1 / math.sqrt(2)) < 1e-3

    def test_too_short(self):
        with pytest.raises(InvalidLengthError):
            dsp.preprocess(trace_of(np.zeros(15)))

    def test_upsample_doubles_rate(self):
        ft = dsp.preprocess(trace_of(np.arange(100.0)))
        assert ft.channels.shape[1] == 199
        assert ft.direction_split == 100


class TestFft:
    def test_constant(self):
        s = dsp.fft(np.full(16, -2.5), 100)
        assert s.magnitudes[0] == pytest.approx(40)
        assert np.allclose(s.magnitudes[1:], 0, atol=1e-12)

    def test_exact_bin_sinusoid(self):
        n, k = 128, 9
        s = dsp.fft(np.sin(2 * np.pi * k * np.arange(n) / n), 128)
        assert int(np.argmax(s.magnitudes)) == k
        assert s.magnitudes[k] == pytest.approx(n / 2)
        assert np.diff(s.frequencies) == pytest.approx(np.full(n // 2, 1.0))

    @given(st.integers(2, 512), st.integers(0, 2 ** 31))
    @settings(max_examples=40, deadline=None)
    def test_matches_direct_dft(self, n, seed):
        x = np.random.default_rng(seed).normal(size=n)
        ref = np.abs(direct_dft(x))
        got = dsp.fft(x, 1.0).magnitudes
        assert np.max(np.abs(got - ref)) <= 1e-9 * np.max(ref)

    @given(st.integers(2, 512), st.integers(0, 2 ** 31))
    @settings(max_examples=40, deadline=None)
    def test_parseval(self, n, seed):
        x = np.random.default_rng(seed).normal(size=n)
        mags = dsp.fft(x, 1.0).magnitudes
        weights = np.full(len(mags), 2.0)
        weights[0] = 1.0
        if n % 2 == 0:
            weights[-1] = 1.0
        energy = np.sum(weights * mags ** 2) / n
        assert energy == pytest.approx(np.sum(x ** 2), rel=1e-9)

    def test_zero_padding_recorded(self):
        s = dsp.fft(np.ones(100), 10, pad_pow2=True)
        assert s.n_fft == 128 and s.padded


class TestSpectrogram:
    def test_constant_is_zero(self):
        assert np.all(dsp.spectrogram(np.full(512, 4.0), 200) == 0)

    def test_tone_row(self):
        rate = 200.0
        x = np.sin(2 * np.pi * 10 * np.arange(2000) / rate)
        img = dsp.spectrogram(x, rate)
        assert img.shape == (150, 150) and img.min() == 0 and img.max() == 1
        bins = np.fft.rfftfreq(64, 1 / rate)
        target = int(np.argmin(np.abs(bins - 10)))
        rows = img.argmax(axis=0)
        assert np.all(np.rint(rows * (len(bins) - 1) / 149) == target)

    def test_chirp_ridge_rises(self):
        rate = 200.0
        t = np.arange(4000) / rate
        x = signal.chirp(t, 1, t[-1], 30)
        rows = dsp.spectrogram(x, rate).argmax(axis=0)
        # allow one bin of jitter (about 4.7 image rows)
        assert np.all(np.maximum.accumulate(rows) - rows <= 5)
        # 1 Hz to 30 Hz spans 29/100 of the 149-row frequency axis
        assert rows[-1] - rows[0] >= 0.8 * 149 * 29 / 100

    def test_short_signal(self):
        with pytest.raises(InvalidLengthError):
            dsp.spectrogram(np.ones(63), 100)

    @pytest.mark.parametrize("k", [0.5, 2, 10])
    def test_amplitude_invariance(self, k):
        x = np.random.default_rng(0).normal(size=600)
        assert np.allclose(dsp.spectrogram(k * x, 800), dsp.spectrogram(x, 800), atol=1e-12)
        assert np.allclose(wavelets.scalogram(k * x), wavelets.scalogram(x), atol=1e-12)


class TestDwt:
    def test_db2_closed_form(self):
        s3 = math.sqrt(3)
        ref = np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * math.sqrt(2))
        assert np.allclose(wavelets.daubechies(2), ref, atol=1e-15)

    @pytest.mark.parametrize("order", range(1, 12))
    def test_filters_are_orthonormal_with_vanishing_moments(self, order):
        h = wavelets.daubechies(order)
        assert len(h) == 2 * order
        assert h.sum() == pytest.approx(math.sqrt(2), abs=1e-13)
        for shift in range(0, order):
            dot = np.dot(h[2 * shift:], h[:len(h) - 2 * shift])
            assert dot == pytest.approx(1.0 if shift == 0 else 0.0, abs=1e-12)
        k = np.arange(len(h), dtype=float)
        g = (-1) ** k * h[::-1]
        for m in range(order):
            assert abs(np.sum(g * (k / len(h)) ** m)) < 1e-10

    def test_haar_constant(self):
        c = wavelets.dwt([1, 1, 1, 1], "haar", 1)
        assert np.allclose(c.approximation, [math.sqrt(2)] * 2)
        assert np.allclose(c.details[0], [0, 0])

    @pytest.mark.parametrize("family", ["db11", "db4", "haar"])
    def test_single_level_matches_convolution(self, family):
        x = np.random.default_rng(1).normal(size=137)
        lo, hi = wavelets.dwt_step(x, *wavelets.analysis_filters(family))
        rlo, rhi = dwt_level_oracle(x, family)
        assert np.max(np.abs(lo - rlo)) <= 1e-10
        assert np.max(np.abs(hi - rhi)) <= 1e-10

    @pytest.mark.parametrize("n", [64, 128, 256, 512, 1024, 2048, 4096])
    def test_perfect_reconstruction(self, n):
        x = np.random.default_rng(n).normal(size=n)
        levels = min(4, wavelets.max_levels(n, "db11"))
        back = wavelets.idwt(wavelets.dwt(x, "db11", levels))
        assert np.linalg.norm(back - x) / np.linalg.norm(x) <= 1e-8

    @given(st.integers(8, 700), st.integers(1, 11), st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_reconstruction_any_length(self, n, order, seed):
        family = f"db{order}"
        levels = wavelets.max_levels(n, family)
        if levels < 1:
            return
        x = np.random.default_rng(seed).normal(size=n)
        back = wavelets.idwt(wavelets.dwt(x, family, levels))
        assert np.linalg.norm(back - x) <= 1e-8 * np.linalg.norm(x)

    def test_too_many_levels(self):
        with pytest.raises(InvalidLevelsError):
            wavelets.dwt(np.ones(64), "db11", 2)
        with pytest.raises(InvalidLevelsError):
            wavelets.dwt(np.ones(64), "db11", 0)


class TestCwt:
    def test_zero_signal(self):
        assert np.all(wavelets.scalogram(np.zeros(300)) == 0)

    def test_wavelet_is_unit_norm(self):
        t = np.linspace(-8, 8, 200001)
        psi = wavelets.cgau1(t)
        assert np.trapezoid(np.abs(psi) ** 2, t) == pytest.approx(1.0, rel=1e-9)

    @pytest.mark.parametrize("freq", [4.0, 10.0, 25.0])
    def test_matched_scale(self, freq):
        rate = 800.0
        x = np.sin(2 * np.pi * freq * np.arange(4000) / rate)
        scales = wavelets.default_scales(rate, n=128)
        power = np.abs(wavelets.cwt(x, scales))[:, 1500:2500].mean(axis=1)
        best = scales[int(np.argmax(power))]
        matched = wavelets.frequency_to_scale(freq, rate)
        step = scales[1] / scales[0]
        assert abs(math.log(best / matched)) <= math.log(step)

    def test_linearity(self):
        x = np.random.default_rng(2).normal(size=400)
        s = wavelets.default_scales(800, 16)
        assert np.allclose(np.abs(wavelets.cwt(2 * x, s)), 2 * np.abs(wavelets.cwt(x, s)))

    def test_bad_scales(self):
        with pytest.raises(ValueError):
            wavelets.cwt(np.ones(10), [1.0, 0.0])
        with pytest.raises(ValueError):
            wavelets.cwt(np.ones(10), [])


class TestPeaks:
    def test_examples(self):
        assert dsp.peak_features([0, 1, 0, 3, 0]) == {"n_peaks": 2, "max_peak": 3, "min_peak": 1}
        assert dsp.peak_features(np.arange(10.0)) == {"n_peaks": 0, "max_peak": 0, "min_peak": 0}
        assert dsp.peak_features(np.ones(10)) == {"n_peaks": 0, "max_peak": 0, "min_peak": 0}

    def test_small_bumps_ignored(self):
        y = [0, 10, 0, 0.2, 0.1, 0, 0]
        assert dsp.peak_features(y)["n_peaks"] == 1

    def test_plateau_is_not_strict(self):
        assert dsp.peak_features([0, 2, 2, 0])["n_peaks"] == 0

    def test_short(self):
        with pytest.raises(InvalidLengthError):
            dsp.peak_features([1, 2])


class TestFeaturize:
    def flat(self):
        from types import SimpleNamespace
        m = BinaryMask(np.zeros((200, 400), bool), 0.1)
        s = SimpleNamespace(start=np.array([5.0, 10.0]), end=np.array([25.0, 10.0]))
        return tactile.simulate_scan(m, s, 10, 400, tactile.SimParams(noise_sigma=0))

    def test_flat_trace_is_zero(self):
        v = dsp.featurize(self.flat(), "P,D1,D2,D3")
        assert v.values.shape == (24,)
        assert np.all(v.values == 0)

    def test_dimensions_and_order(self):
        assert len(dsp.featurize(self.flat(), "P").values) == 6
        v = dsp.featurize(self.flat(), "D3,P,D2")
        assert len(v.values) == 18
        assert v.selection == ("P", "D2", "D3")
        assert v.names[:3] == ["P_FFT_NPEAKS", "P_FFT_MAXPEAK", "P_FFT_MINPEAK"]
        assert v.names[3] == "P_DWT_NPEAKS"
        assert v.names[6] == "D2_FFT_NPEAKS"

    def test_empty_selection(self):
        with pytest.raises(InvalidInputError):
            dsp.featurize(self.flat(), "")
        with pytest.raises(InvalidInputError):
            dsp.parse_selection("P,D7")

    def test_deterministic_and_order_free(self, synthetic_set):
        samples, _ = synthetic_set
        picks = [samples[i].trace for i in (0, 7, 160, 299)]
        a = [dsp.featurize(t, "P,D1,D2,D3").values for t in picks]
        b = [dsp.featurize(t, "P,D1,D2,D3").values for t in reversed(picks)][::-1]
        for u, v in zip(a, b):
            assert np.array_equal(u, v)
            assert np.all(np.isfinite(u))

    def test_images(self, synthetic_set):
        spec, scal = dsp.trace_images(synthetic_set[0][0].trace, "P")
        for img in (spec, scal):
            assert img.shape == (150, 150)
            assert img.min() == 0 and img.max() == 1
