"""Mask-based source separation in the linear-frequency STFT domain.

Masks learned at mel resolution are upsampled to the linear spectrum,
multiplied with the mixture magnitude and resynthesized with the mixture
phase via inverse STFT overlap-add.  Ground-truth ideal ratio masks are
computed here as well for evaluating the learned masks.
"""

import numpy as np

from .dsp import ComplexSpectrogram, MelFilterbank, Waveform, istft

IRM_EPS = 1e-8


def upsample_mask(mask: np.ndarray, filterbank: MelFilterbank,
                  n_linear_bins: int, sample_rate: int,
                  window_size: int) -> np.ndarray:
    """Per-frame linear interpolation from mel bands to linear bins.

    Mask values are samples at the filterbank band centers; each linear
    bin takes the interpolated value at its own frequency, clamping to the
    edge value outside the outermost centers.  The time axis is untouched.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.shape[1] != filterbank.n_mels:
        raise ValueError(
            f"mask shape {mask.shape} does not match {filterbank.n_mels} "
            f"mel bands"
        )
    bin_freqs = np.arange(n_linear_bins) * sample_rate / window_size
    out = np.empty((mask.shape[0], n_linear_bins), dtype=mask.dtype)
    for t in range(mask.shape[0]):
        out[t] = np.interp(bin_freqs, filterbank.band_centers, mask[t])
    return out


def apply_mask(mask: np.ndarray, spec: ComplexSpectrogram) -> np.ndarray:
    """Element-wise product of a [0,1] mask with the spectrogram magnitude."""
    mask = np.asarray(mask)
    if mask.shape != spec.frames.shape:
        raise ValueError(
            f"mask shape {mask.shape} vs spectrogram {spec.frames.shape}"
        )
    return mask * np.abs(spec.frames)


def synthesize(magnitudes: np.ndarray, phase_source: ComplexSpectrogram,
               window: np.ndarray = None) -> Waveform:
    """Combine masked magnitudes with the mixture phase, then inverse STFT."""
    magnitudes = np.asarray(magnitudes)
    if magnitudes.shape != phase_source.frames.shape:
        raise ValueError(
            f"magnitude shape {magnitudes.shape} vs spectrogram "
            f"{phase_source.frames.shape}"
        )
    phase = np.angle(phase_source.frames)
    frames = magnitudes * np.exp(1j * phase)
    spec = ComplexSpectrogram(frames, phase_source.sample_rate,
                              phase_source.window_size, phase_source.hop)
    return istft(spec, window)


def ideal_ratio_mask(event_spec: ComplexSpectrogram,
                     mix_spec: ComplexSpectrogram,
                     eps: float = IRM_EPS) -> np.ndarray:
    """|event| / max(|mixture|, eps), clipped to [0, 1].

    Spectral leakage can push the raw ratio above 1; clipping keeps the
    mask a valid ratio mask.
    """
    if event_spec.frames.shape != mix_spec.frames.shape:
        raise ValueError("event and mixture spectrogram shapes differ")
    ratio = np.abs(event_spec.frames) / np.maximum(np.abs(mix_spec.frames), eps)
    return np.clip(ratio, 0.0, 1.0)


def mel_downsample_mask(linear_mask: np.ndarray,
                        filterbank: MelFilterbank) -> np.ndarray:
    """Filterbank-weighted average of a linear-frequency mask per mel band."""
    linear_mask = np.asarray(linear_mask)
    if linear_mask.shape[1] != filterbank.weights.shape[1]:
        raise ValueError(
            f"mask has {linear_mask.shape[1]} bins, filterbank covers "
            f"{filterbank.weights.shape[1]}"
        )
    weights = filterbank.weights
    return (linear_mask @ weights.T) / weights.sum(axis=1)


def separate_class(mask_mel: np.ndarray, mix_spec: ComplexSpectrogram,
                   filterbank: MelFilterbank) -> Waveform:
    """Upsample one mel-resolution mask, mask the mixture and resynthesize."""
    linear = upsample_mask(mask_mel, filterbank, mix_spec.num_bins,
                           mix_spec.sample_rate, mix_spec.window_size)
    return synthesize(apply_mask(linear, mix_spec), mix_spec)
