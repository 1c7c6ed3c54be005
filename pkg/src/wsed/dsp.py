"""Audio I/O, STFT/ISTFT with overlap-add, mel filterbanks and log-mel features."""

from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

# Envelope values below this are treated as zero during overlap-add division.
_ENVELOPE_EPS = 1e-8


@dataclass
class Waveform:
    """Mono audio signal with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform must be mono (1-D samples)")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class ComplexSpectrogram:
    """Complex STFT frames, shape (frames, window_size // 2 + 1)."""

    frames: np.ndarray
    sample_rate: int
    window_size: int
    hop: int

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_bins(self) -> int:
        return self.frames.shape[1]

    def bin_frequencies(self) -> np.ndarray:
        """Center frequency in Hz of each retained FFT bin."""
        return np.arange(self.num_bins) * self.sample_rate / self.window_size


@dataclass
class MelFilterbank:
    """Triangular mel filters as a (n_mels, n_linear_bins) weight matrix."""

    weights: np.ndarray
    band_centers: np.ndarray

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


@dataclass
class LogMelSpectrogram:
    """Log mel energies, shape (frames, n_mels)."""

    values: np.ndarray
    frame_rate: float


@dataclass
class FeatureConfig:
    """Front-end settings shared by training and inference."""

    sample_rate: int = 16000
    window_size: int = 1024
    hop: int = 512
    n_mels: int = 40
    f_min: float = 0.0
    f_max: float = None
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.f_max is None:
            self.f_max = self.sample_rate / 2

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "window_size": self.window_size,
            "hop": self.hop,
            "n_mels": self.n_mels,
            "f_min": self.f_min,
            "f_max": self.f_max,
            "log_floor": self.log_floor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**d)


def read_wav(path) -> Waveform:
    """Read a mono PCM16 or float32 WAV file, scaling samples to [-1, 1]."""
    try:
        sample_rate, data = wavfile.read(path)
    except ValueError as exc:
        raise ValueError(f"malformed WAV file {path}: {exc}") from exc
    if data.ndim != 1:
        raise ValueError(
            f"{path}: expected mono audio, got {data.shape[1]} channels"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, int(sample_rate))


def write_wav(path, waveform: Waveform, encoding: str = "float32") -> None:
    """Write a mono WAV file as IEEE float32 or PCM16."""
    if encoding == "float32":
        wavfile.write(path, waveform.sample_rate,
                      waveform.samples.astype(np.float32))
    elif encoding == "pcm16":
        # scale by 32768 so read (which divides by 32768) round-trips
        # within half an LSB; +1.0 clamps to the int16 maximum
        q = np.clip(np.round(waveform.samples * 32768.0), -32768, 32767)
        wavfile.write(path, waveform.sample_rate, q.astype(np.int16))
    else:
        raise ValueError(f"unknown encoding {encoding!r}")


def hann_window(window_size: int) -> np.ndarray:
    """Periodic Hann window; exact overlap-add at 50% hop."""
    n = np.arange(window_size)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / window_size))


def stft(waveform: Waveform, window_size: int, hop: int,
         window: np.ndarray = None) -> ComplexSpectrogram:
    """Short-time Fourier transform keeping bins 0..window_size/2.

    Frame t covers samples [t*hop, t*hop + window_size); no padding is
    applied, so every frame lies fully inside the signal.
    """
    x = waveform.samples
    if len(x) < window_size:
        raise ValueError(
            f"signal of {len(x)} samples shorter than one window "
            f"({window_size})"
        )
    if window is None:
        window = hann_window(window_size)
    window = np.asarray(window, dtype=np.float64)
    if len(window) != window_size:
        raise ValueError("window length must equal window_size")
    num_frames = (len(x) - window_size) // hop + 1
    starts = np.arange(num_frames) * hop
    segments = x[starts[:, None] + np.arange(window_size)[None, :]]
    frames = np.fft.rfft(segments * window[None, :], axis=1)
    return ComplexSpectrogram(frames, waveform.sample_rate, window_size, hop)


def istft(spec: ComplexSpectrogram, window: np.ndarray = None) -> Waveform:
    """Inverse STFT via windowed overlap-add.

    Each frame is inverse-transformed, windowed again, and accumulated; the
    result is divided by the accumulated squared-window envelope wherever it
    is nonzero.  With a Hann window at 50% overlap this reconstructs the
    interior of the original signal exactly.
    """
    if window is None:
        window = hann_window(spec.window_size)
    window = np.asarray(window, dtype=np.float64)
    if len(window) != spec.window_size:
        raise ValueError("window length must equal window_size")
    if spec.frames.shape[1] != spec.window_size // 2 + 1:
        raise ValueError(
            f"frame length {spec.frames.shape[1]} inconsistent with "
            f"window_size {spec.window_size}"
        )
    num_frames = spec.num_frames
    out_len = (num_frames - 1) * spec.hop + spec.window_size
    out = np.zeros(out_len)
    envelope = np.zeros(out_len)
    segments = np.fft.irfft(spec.frames, n=spec.window_size, axis=1)
    win_sq = window * window
    for t in range(num_frames):
        start = t * spec.hop
        out[start:start + spec.window_size] += segments[t] * window
        envelope[start:start + spec.window_size] += win_sq
    nonzero = envelope > _ENVELOPE_EPS
    out[nonzero] /= envelope[nonzero]
    out[~nonzero] = 0.0
    return Waveform(out, spec.sample_rate)


def hz_to_mel(freq_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, window_size: int, n_mels: int,
                   f_min: float = 0.0, f_max: float = None) -> MelFilterbank:
    """Build triangular filters with centers equally spaced on the mel scale.

    Filter m rises linearly (in Hz) from the previous center to its own and
    falls to the next; the outermost anchors are f_min and f_max.
    """
    if f_max is None:
        f_max = sample_rate / 2
    if not (0 <= f_min < f_max <= sample_rate / 2):
        raise ValueError("need 0 <= f_min < f_max <= sample_rate / 2")
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    n_bins = window_size // 2 + 1
    anchors_hz = mel_to_hz(
        np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    )
    bin_freqs = np.arange(n_bins) * sample_rate / window_size
    weights = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, center, right = anchors_hz[m], anchors_hz[m + 1], anchors_hz[m + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.where(weights.sum(axis=1) == 0.0)[0]
    if empty.size:
        raise ValueError(
            f"filter {empty[0]} has no nonzero bin; n_mels={n_mels} too "
            f"large for window_size={window_size}"
        )
    return MelFilterbank(weights, anchors_hz[1:-1])


def log_mel(spec: ComplexSpectrogram, filterbank: MelFilterbank,
            log_floor: float = 1e-10) -> LogMelSpectrogram:
    """Log of floor-clamped mel-weighted power, shape (frames, n_mels)."""
    if filterbank.weights.shape[1] != spec.num_bins:
        raise ValueError(
            f"filterbank covers {filterbank.weights.shape[1]} bins, "
            f"spectrogram has {spec.num_bins}"
        )
    power = np.abs(spec.frames) ** 2
    mel_power = power @ filterbank.weights.T
    values = np.log(np.maximum(mel_power, log_floor))
    return LogMelSpectrogram(values, spec.sample_rate / spec.hop)


def extract_logmel(waveform: Waveform, config: FeatureConfig) -> LogMelSpectrogram:
    """Waveform -> log mel spectrogram using one shared configuration."""
    spec = stft(waveform, config.window_size, config.hop)
    fbank = mel_filterbank(config.sample_rate, config.window_size,
                           config.n_mels, config.f_min, config.f_max)
    return log_mel(spec, fbank, config.log_floor)
