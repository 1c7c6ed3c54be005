"""Tests for mask upsampling, masking, resynthesis and ideal ratio masks."""

import numpy as np
import pytest

from wsed.dsp import Waveform, mel_filterbank, stft
from wsed.separation import (
    apply_mask,
    ideal_ratio_mask,
    mel_downsample_mask,
    separate_class,
    synthesize,
    upsample_mask,
)


def normalized_correlation(a, b):
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-12))


@pytest.fixture(scope="module")
def mixture_500_4000():
    sr = 16000
    t = np.arange(sr * 2) / sr
    low = np.sin(2 * np.pi * 500 * t)
    high = 0.8 * np.sin(2 * np.pi * 4000 * t)
    return sr, low, high, Waveform(low + high, sr)


class TestUpsampleMask:
    def test_constant_mask(self):
        fbank = mel_filterbank(16000, 1024, 40)
        mask = np.full((7, 40), 0.42)
        out = upsample_mask(mask, fbank, 513, 16000, 1024)
        assert out.shape == (7, 513)
        np.testing.assert_allclose(out, 0.42)

    def test_full_scale_shape(self):
        fbank = mel_filterbank(32000, 2048, 64, 0, 16000)
        mask = np.random.default_rng(0).uniform(0, 1, (311, 64))
        out = upsample_mask(mask, fbank, 1025, 32000, 2048)
        assert out.shape == (311, 1025)

    def test_midpoint_interpolation(self):
        fbank = mel_filterbank(16000, 1024, 10)
        mask = np.zeros((1, 10))
        mask[0, 3] = 0.0
        mask[0, 4] = 1.0
        out = upsample_mask(mask, fbank, 513, 16000, 1024)
        mid_freq = 0.5 * (fbank.band_centers[3] + fbank.band_centers[4])
        value = np.interp(mid_freq, np.arange(513) * 16000 / 1024, out[0])
        assert value == pytest.approx(0.5, abs=0.02)

    def test_range_preserved_per_frame(self):
        rng = np.random.default_rng(1)
        fbank = mel_filterbank(16000, 1024, 24)
        mask = rng.uniform(0.2, 0.8, (5, 24))
        out = upsample_mask(mask, fbank, 513, 16000, 1024)
        for t in range(5):
            assert out[t].min() >= mask[t].min() - 1e-12
            assert out[t].max() <= mask[t].max() + 1e-12

    def test_dimension_mismatch(self):
        fbank = mel_filterbank(16000, 1024, 24)
        with pytest.raises(ValueError, match="mel bands"):
            upsample_mask(np.zeros((5, 40)), fbank, 513, 16000, 1024)


class TestApplyMask:
    def test_identity_mask(self, mixture_500_4000):
        sr, _, _, mix = mixture_500_4000
        spec = stft(mix, 1024, 512)
        np.testing.assert_allclose(
            apply_mask(np.ones(spec.frames.shape), spec), np.abs(spec.frames))

    def test_zero_mask(self, mixture_500_4000):
        sr, _, _, mix = mixture_500_4000
        spec = stft(mix, 1024, 512)
        assert np.all(apply_mask(np.zeros(spec.frames.shape), spec) == 0)

    def test_half_mask(self, mixture_500_4000):
        sr, _, _, mix = mixture_500_4000
        spec = stft(mix, 1024, 512)
        np.testing.assert_allclose(
            apply_mask(np.full(spec.frames.shape, 0.5), spec),
            0.5 * np.abs(spec.frames))


class TestSynthesize:
    def test_identity_mask_reconstructs_mixture(self, mixture_500_4000):
        sr, _, _, mix = mixture_500_4000
        spec = stft(mix, 1024, 512)
        out = synthesize(apply_mask(np.ones(spec.frames.shape), spec), spec)
        lo, hi = 1024, len(out.samples) - 1024
        x = mix.samples[lo:hi]
        err = np.linalg.norm(out.samples[lo:hi] - x) / np.linalg.norm(x)
        assert err < 1e-6

    def test_zero_mask_silent(self, mixture_500_4000):
        sr, _, _, mix = mixture_500_4000
        spec = stft(mix, 1024, 512)
        out = synthesize(apply_mask(np.zeros(spec.frames.shape), spec), spec)
        assert np.all(out.samples == 0)

    def test_band_mask_recovers_low_tone(self, mixture_500_4000):
        sr, low, high, mix = mixture_500_4000
        spec = stft(mix, 1024, 512)
        freqs = spec.bin_frequencies()
        mask = np.zeros(spec.frames.shape)
        mask[:, freqs < 2000] = 1.0
        out = synthesize(apply_mask(mask, spec), spec)
        lo, hi = 1024, len(out.samples) - 1024
        assert normalized_correlation(out.samples[lo:hi], low[lo:hi]) > 0.99

    def test_masked_energy_bounded_by_mixture(self, mixture_500_4000):
        sr, _, _, mix = mixture_500_4000
        spec = stft(mix, 1024, 512)
        rng = np.random.default_rng(2)
        mask = rng.uniform(0, 1, spec.frames.shape)
        masked = apply_mask(mask, spec)
        assert np.all(masked <= np.abs(spec.frames) + 1e-12)


class TestIdealRatioMask:
    def test_event_equals_mixture(self, mixture_500_4000):
        sr, _, _, mix = mixture_500_4000
        spec = stft(mix, 1024, 512)
        irm = ideal_ratio_mask(spec, spec)
        strong = np.abs(spec.frames) > 1e-6
        np.testing.assert_allclose(irm[strong], 1.0)

    def test_silent_event(self, mixture_500_4000):
        sr, _, _, mix = mixture_500_4000
        spec = stft(mix, 1024, 512)
        silent = stft(Waveform(np.zeros(len(mix.samples)), sr), 1024, 512)
        assert np.all(ideal_ratio_mask(silent, spec) == 0)

    def test_disjoint_bands(self, mixture_500_4000):
        sr, low, high, mix = mixture_500_4000
        mix_spec = stft(mix, 1024, 512)
        low_spec = stft(Waveform(low, sr), 1024, 512)
        irm = ideal_ratio_mask(low_spec, mix_spec)
        freqs = mix_spec.bin_frequencies()
        low_bin = np.argmin(np.abs(freqs - 500))
        high_bin = np.argmin(np.abs(freqs - 4000))
        assert np.all(irm[:, low_bin] > 0.95)
        assert np.all(irm[:, high_bin] < 0.05)

    def test_clipped_to_unit_interval(self, mixture_500_4000):
        sr, low, _, mix = mixture_500_4000
        irm = ideal_ratio_mask(stft(Waveform(2 * low, sr), 1024, 512),
                               stft(mix, 1024, 512))
        assert np.all(irm <= 1.0) and np.all(irm >= 0.0)


class TestMelDownsample:
    def test_constant_mask_unchanged(self):
        fbank = mel_filterbank(16000, 1024, 24)
        out = mel_downsample_mask(np.full((6, 513), 0.7), fbank)
        np.testing.assert_allclose(out, 0.7)

    def test_roundtrip_smooth_mask(self):
        # downsampling an upsampled smooth mask approximately recovers it
        fbank = mel_filterbank(16000, 1024, 24)
        mask = 0.5 + 0.4 * np.sin(np.linspace(0, np.pi, 24))[None, :]
        linear = upsample_mask(mask, fbank, 513, 16000, 1024)
        back = mel_downsample_mask(linear, fbank)
        np.testing.assert_allclose(back, mask, atol=0.05)


class TestSeparateClass:
    def test_band_limited_mel_mask(self, mixture_500_4000):
        sr, low, high, mix = mixture_500_4000
        spec = stft(mix, 1024, 512)
        fbank = mel_filterbank(sr, 1024, 40)
        mel_mask = np.zeros((spec.num_frames, 40))
        mel_mask[:, fbank.band_centers < 1500] = 1.0
        out = separate_class(mel_mask, spec, fbank)
        lo, hi = 1024, len(out.samples) - 1024
        assert normalized_correlation(out.samples[lo:hi], low[lo:hi]) > 0.95
