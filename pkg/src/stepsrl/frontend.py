"""MFCC extraction and silence padding for 16 kHz PCM word segments."""
from __future__ import annotations

import logging
import wave
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.fft import dct

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
PRE_EMPHASIS = 0.97


class ConfigError(ValueError):
    pass


class WavFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MfccConfig:
    d_mfcc: int = 13
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 512
    n_mels: int | None = None  # None -> max(40, d_mfcc)
    log_floor: float = 1e-10

    @property
    def mels(self) -> int:
        return self.n_mels if self.n_mels is not None else max(40, self.d_mfcc)

    @property
    def frame_len(self) -> int:
        return int(round(self.frame_ms * SAMPLE_RATE / 1000))

    @property
    def hop_len(self) -> int:
        return int(round(self.hop_ms * SAMPLE_RATE / 1000))

    def validate(self) -> list[str]:
        errs = []
        if self.d_mfcc < 1:
            errs.append(f"d_mfcc must be positive, got {self.d_mfcc}")
        if self.d_mfcc > self.mels:
            errs.append(f"d_mfcc ({self.d_mfcc}) exceeds n_mels ({self.mels})")
        if self.frame_len < 1 or self.hop_len < 1:
            errs.append("frame_ms and hop_ms must cover at least one sample")
        if self.frame_len > self.n_fft:
            errs.append(f"frame of {self.frame_len} samples exceeds n_fft={self.n_fft}")
        if self.log_floor <= 0:
            errs.append("log_floor must be positive")
        return errs


@dataclass
class Waveform:
    samples: np.ndarray  # int16
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.int16)
        if self.sample_rate != SAMPLE_RATE:
            raise WavFormatError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise WavFormatError("waveform must be a non-empty mono sample vector")


@dataclass
class AcousticSegment:
    frames: np.ndarray  # n x d_mfcc
    valid_frame_count: int = field(default=0)

    @property
    def n(self) -> int:
        return self.frames.shape[0]


def read_wav(path) -> Waveform:
    """Read a PCM16 little-endian mono 16 kHz RIFF/WAVE file."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            channels, width, rate = fh.getnchannels(), fh.getsampwidth(), fh.getframerate()
            comp = fh.getcomptype()
            raw = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        raise WavFormatError(f"{path}: not a PCM RIFF/WAVE file ({exc})") from None
    if comp != "NONE" or width != 2:
        raise WavFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit {comp}")
    if channels != 1:
        raise WavFormatError(f"{path}: expected mono audio, got {channels} channels")
    if rate != SAMPLE_RATE:
        raise WavFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
    return Waveform(np.frombuffer(raw, dtype="<i2").astype(np.int16), rate)


def write_wav(path, samples) -> None:
    samples = np.asarray(samples, dtype="<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(SAMPLE_RATE)
        fh.writeframes(samples.tobytes())


def frame_count(num_samples: int, config: MfccConfig) -> int:
    """Frames produced for ``num_samples``: 1 + floor((L - W) / H), at least 1."""
    w, h = config.frame_len, config.hop_len
    if num_samples <= w:
        return 1
    return 1 + (num_samples - w) // h


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=16)
def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int = SAMPLE_RATE,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters (n_mels x n_fft//2+1) with mel-spaced edges, unit peak."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def _frames(signal: np.ndarray, config: MfccConfig) -> np.ndarray:
    w, h = config.frame_len, config.hop_len
    if signal.size < w:
        signal = np.pad(signal, (0, w - signal.size))
    count = frame_count(signal.size, config)
    idx = np.arange(w)[None, :] + h * np.arange(count)[:, None]
    return signal[idx]


def mfcc(w: Waveform | np.ndarray, config: MfccConfig) -> np.ndarray:
    """MFCC matrix (frames x d_mfcc) for a PCM16 waveform."""
    errs = config.validate()
    if errs:
        raise ConfigError("; ".join(errs))
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w)
    x = samples.astype(np.float64) / 32768.0
    emphasized = np.append(x[:1], x[1:] - PRE_EMPHASIS * x[:-1])
    frames = _frames(emphasized, config) * np.hamming(config.frame_len)
    spectrum = np.abs(np.fft.rfft(frames, n=config.n_fft))
    energies = spectrum @ mel_filterbank(config.mels, config.n_fft).T
    logmel = np.log(np.maximum(energies, config.log_floor))
    return dct(logmel, type=2, norm="ortho", axis=-1)[:, :config.d_mfcc]


@lru_cache(maxsize=16)
def _silence(config: MfccConfig) -> np.ndarray:
    vec = mfcc(np.zeros(config.frame_len, dtype=np.int16), config)[0]
    vec.setflags(write=False)
    return vec


def silence_vector(config: MfccConfig) -> np.ndarray:
    """MFCC of a zero frame, used as the padding row."""
    return _silence(config).copy()


def pad_to_n(frames: np.ndarray, n: int, config: MfccConfig) -> AcousticSegment:
    rows = frames.shape[0]
    if rows > n:
        log.warning("segment of %d frames truncated to n=%d", rows, n)
        return AcousticSegment(np.array(frames[:n], copy=True), n)
    if rows == n:
        return AcousticSegment(np.array(frames, copy=True), n)
    pad = np.broadcast_to(_silence(config), (n - rows, frames.shape[1]))
    return AcousticSegment(np.concatenate([frames, pad], axis=0), rows)


def silence_segment(n: int, config: MfccConfig) -> AcousticSegment:
    return AcousticSegment(np.tile(_silence(config), (n, 1)), 0)
