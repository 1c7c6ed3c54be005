"""Synthetic mixtures of parametric sound events over noise backgrounds.

Each clip gets three non-overlapping events drawn from spectrally distinct
synthesis families, scaled to a target SNR against the background measured
over the event's active interval.  Mixtures, per-event sources and a
JSON-lines manifest are written so that ideal-ratio-mask ground truth is
exact at evaluation time.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import Waveform, write_wav
from .manifest import ClipRecord, ManifestEvent, save_manifest
from .postprocess import EventAnnotation

FADE_SECONDS = 0.01
BACKGROUND_RMS = 0.05
PEAK_LIMIT = 0.99


@dataclass
class EventClassSpec:
    """One synthetic sound class: family plus parameter ranges."""

    name: str
    family: str  # tone | chirp | am_tone | harmonic_stack | noise_burst | click_train
    f_low: float
    f_high: float
    dur_low: float = 0.6
    dur_high: float = 1.3
    mod_low: float = 6.0
    mod_high: float = 14.0
    harmonics: int = 8


# The first four (the desk-scale defaults) are band-limited so that max
# pooling learns point-like masks whose frequency-mean stays under the
# event threshold while rank pooling spreads over the event's band, and
# each carries a distinct LOCAL texture (line stack / smooth flutter /
# steady noise / pulsed band).  A convolution stack is translation
# equivariant along frequency, so classes that differ only by absolute
# band position (two pure tones, say) are not separable per T-F unit;
# texture is what the network can actually use.  Swept and broadband
# families sit further down the list.
DEFAULT_CLASSES = [
    EventClassSpec("purr", "harmonic_stack", 180, 260, dur_low=0.7,
                   dur_high=1.5, harmonics=3),
    EventClassSpec("warble", "am_tone", 2100, 2600, dur_low=0.9,
                   dur_high=1.6, mod_low=10, mod_high=18),
    EventClassSpec("hiss", "noise_burst", 3800, 5600, dur_low=0.7,
                   dur_high=1.5),
    EventClassSpec("ticker", "click_train", 6200, 7800, dur_low=0.9,
                   dur_high=1.6, mod_low=8, mod_high=14),
    EventClassSpec("tone", "tone", 1100, 1400),
    EventClassSpec("sweep", "chirp", 2800, 3600),
    EventClassSpec("whistle", "tone", 1500, 1900),
    EventClassSpec("hum", "harmonic_stack", 300, 420),
]


@dataclass
class Placement:
    class_index: int
    onset: float
    duration: float
    event_seed: int


@dataclass
class ClipRecipe:
    background_kind: str
    background_seed: int
    placements: list
    snr_db: float
    clip_seconds: float = 5.0


@dataclass
class MixResult:
    mixture: Waveform
    events: list
    weak_labels: np.ndarray
    sources: list
    background: Waveform


def _fade_edges(x: np.ndarray, sample_rate: int) -> np.ndarray:
    n_fade = int(FADE_SECONDS * sample_rate)
    if n_fade == 0 or len(x) < 2 * n_fade:
        return x
    ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(n_fade) / n_fade))
    x[:n_fade] *= ramp
    x[-n_fade:] *= ramp[::-1]
    return x


def _normalize_rms(x: np.ndarray, sample_rate: int) -> np.ndarray:
    """Unit RMS measured away from the fade edges."""
    n_fade = int(FADE_SECONDS * sample_rate)
    core = x[n_fade:-n_fade] if len(x) > 2 * n_fade else x
    rms = np.sqrt(np.mean(core**2))
    if rms == 0:
        raise ValueError("cannot normalize a silent event")
    return x / rms


def synth_event(spec: EventClassSpec, seed: int, duration: float,
                sample_rate: int) -> Waveform:
    """Deterministic event waveform, faded at the edges, unit RMS."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(spec.f_low, spec.f_high)
    phase = rng.uniform(0, 2 * np.pi)
    if spec.family == "tone":
        x = np.sin(2 * np.pi * f0 * t + phase)
    elif spec.family == "chirp":
        f1 = rng.uniform(spec.f_low, spec.f_high)
        x = np.sin(2 * np.pi * (f0 * t + (f1 - f0) / (2 * duration) * t**2)
                   + phase)
    elif spec.family == "am_tone":
        rate = rng.uniform(spec.mod_low, spec.mod_high)
        # full-depth modulation: the flutter is the class's signature
        envelope = 0.5 + 0.5 * np.sin(2 * np.pi * rate * t)
        x = envelope * np.sin(2 * np.pi * f0 * t + phase)
    elif spec.family == "harmonic_stack":
        x = np.zeros(n)
        for h in range(1, spec.harmonics + 1):
            if h * f0 >= sample_rate / 2:
                break
            x += np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi)) / h
    elif spec.family == "noise_burst":
        white = rng.standard_normal(n)
        spectrum = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
        spectrum[(freqs < spec.f_low) | (freqs > spec.f_high)] = 0.0
        x = np.fft.irfft(spectrum, n=n)
    elif spec.family == "click_train":
        # impulsive bursts at the mod rate, spectrally confined to the
        # class band so the event stays narrow on the mel axis
        rate = rng.uniform(spec.mod_low, spec.mod_high)
        click_len = int(0.005 * sample_rate)
        decay = np.exp(-np.arange(click_len) / (0.0015 * sample_rate))
        x = np.zeros(n)
        pos = 0.0
        while pos < duration:
            start = int(pos * sample_rate)
            end = min(start + click_len, n)
            x[start:end] += rng.standard_normal(end - start) * decay[:end - start]
            pos += 1.0 / rate
        spectrum = np.fft.rfft(x)
        freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
        spectrum[(freqs < spec.f_low) | (freqs > spec.f_high)] = 0.0
        x = np.fft.irfft(spectrum, n=n)
    else:
        raise ValueError(f"unknown synthesis family {spec.family!r}")
    x = _normalize_rms(_fade_edges(x, sample_rate), sample_rate)
    return Waveform(x, sample_rate)


def synth_background(kind: str, seed: int, duration: float,
                     sample_rate: int) -> Waveform:
    """Colored noise texture (pink or brown), unit RMS."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    if kind == "pink":
        alpha = 0.5  # amplitude 1/f^0.5 -> power 1/f, -3 dB per octave
    elif kind == "brown":
        alpha = 1.0  # power 1/f^2, -6 dB per octave
    else:
        raise ValueError(f"unknown background kind {kind!r}")
    with np.errstate(divide="ignore"):
        shaping = np.where(freqs > 0, freqs**-alpha, 0.0)
    x = np.fft.irfft(spectrum * shaping, n=n)
    x /= np.sqrt(np.mean(x**2))
    return Waveform(x, sample_rate)


def mix_clip(recipe: ClipRecipe, class_specs: list,
             sample_rate: int) -> MixResult:
    """Scale each event against the background power over its own interval.

    The event gain solves 10*log10(P_event / P_background) = snr_db with
    both powers measured over [onset, offset).  If the summed mixture would
    clip, everything (background and sources alike) is scaled down
    together, which preserves SNR and additivity.
    """
    n = int(round(recipe.clip_seconds * sample_rate))
    for a in recipe.placements:
        if a.onset < 0 or a.onset + a.duration > recipe.clip_seconds + 1e-9:
            raise ValueError(
                f"placement at {a.onset:.3f}s/{a.duration:.3f}s falls outside "
                f"the {recipe.clip_seconds}s clip"
            )
    spans = sorted((a.onset, a.onset + a.duration) for a in recipe.placements)
    for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
        if s1 < e0 - 1e-9:
            raise ValueError(f"overlapping placements at {s1:.3f}s")

    background = synth_background(recipe.background_kind,
                                  recipe.background_seed,
                                  recipe.clip_seconds, sample_rate)
    bg = background.samples * BACKGROUND_RMS
    sources = []
    events = []
    weak = np.zeros(len(class_specs), dtype=np.float32)
    for placement in recipe.placements:
        spec = class_specs[placement.class_index]
        event = synth_event(spec, placement.event_seed, placement.duration,
                            sample_rate)
        start = int(round(placement.onset * sample_rate))
        end = start + len(event.samples)
        interval_bg_power = np.mean(bg[start:end] ** 2)
        event_power = np.mean(event.samples**2)
        gain = np.sqrt(interval_bg_power * 10.0 ** (recipe.snr_db / 10.0)
                       / event_power)
        source = np.zeros(n)
        source[start:end] = gain * event.samples
        sources.append(source)
        events.append(EventAnnotation(spec.name, placement.onset,
                                      placement.onset + placement.duration))
        weak[placement.class_index] = 1.0

    mixture = bg + np.sum(sources, axis=0)
    peak = np.max(np.abs(mixture))
    if peak > PEAK_LIMIT:
        scale = PEAK_LIMIT / peak
        mixture *= scale
        bg = bg * scale
        sources = [s * scale for s in sources]
    return MixResult(
        mixture=Waveform(mixture, sample_rate),
        events=events,
        weak_labels=weak,
        sources=[Waveform(s, sample_rate) for s in sources],
        background=Waveform(bg, sample_rate),
    )


def make_recipe(rng: np.random.Generator, class_specs: list, snr_db: float,
                clip_seconds: float = 5.0, n_events: int = 3) -> ClipRecipe:
    """Draw distinct classes and non-overlapping placements for one clip."""
    k = len(class_specs)
    chosen = rng.choice(k, size=min(n_events, k), replace=False)
    durations = []
    for ci in chosen:
        spec = class_specs[ci]
        durations.append(rng.uniform(spec.dur_low, min(spec.dur_high, 2.0)))
    total = sum(durations)
    if total >= clip_seconds:
        durations = [d * 0.9 * clip_seconds / total for d in durations]
        total = sum(durations)
    free = clip_seconds - total
    shares = rng.uniform(0.2, 1.0, size=len(chosen) + 1)
    gaps = free * shares / shares.sum()
    onsets = []
    cursor = 0.0
    for gap, duration in zip(gaps, durations):
        cursor += gap
        onsets.append(cursor)
        cursor += duration
    placements = [
        Placement(int(ci), float(onset), float(duration),
                  int(rng.integers(0, 2**31)))
        for ci, onset, duration in zip(chosen, onsets, durations)
    ]
    kind = "pink" if rng.uniform() < 0.5 else "brown"
    return ClipRecipe(kind, int(rng.integers(0, 2**31)), placements, snr_db,
                      clip_seconds)


def make_dataset(out_dir, n_classes: int, n_clips: int, snrs: list,
                 folds: int, seed: int, sample_rate: int = 16000,
                 clip_seconds: float = 5.0) -> Path:
    """Generate a dataset and return the manifest path.

    Fold assignment is round-robin by clip index and the whole dataset is
    a deterministic function of the seed.
    """
    if not 1 <= n_classes <= len(DEFAULT_CLASSES):
        raise ValueError(
            f"n_classes must be in 1..{len(DEFAULT_CLASSES)}"
        )
    class_specs = DEFAULT_CLASSES[:n_classes]
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    (out_dir / "sources").mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n_clips):
        rng = np.random.default_rng([seed, i])
        snr = float(snrs[i % len(snrs)])
        recipe = make_recipe(rng, class_specs, snr, clip_seconds)
        result = mix_clip(recipe, class_specs, sample_rate)
        clip_id = f"clip_{i:05d}"
        mixture_rel = f"audio/{clip_id}.wav"
        write_wav(out_dir / mixture_rel, result.mixture)
        manifest_events = []
        for event, source in zip(result.events, result.sources):
            source_rel = f"sources/{clip_id}__{event.label}.wav"
            write_wav(out_dir / source_rel, source)
            manifest_events.append(ManifestEvent(
                event.label, round(event.onset, 6), round(event.offset, 6),
                source_rel))
        records.append(ClipRecord(clip_id, mixture_rel, i % folds, snr,
                                  manifest_events))
    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(records, manifest_path)
    return manifest_path
