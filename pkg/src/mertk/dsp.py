"""Audio decoding and spectral front-ends: STFT, log-Mel, MFCC and framing.

Every function here is pure; nothing holds state between calls.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.fft import dct
from scipy.signal import resample_poly

from .errors import (
    ClipShorterThanWindow,
    ClipTooShort,
    CorruptContainer,
    DegenerateBank,
    EmptyAudio,
    TooFewFrames,
    UnsupportedFormat,
)

N_MFCC = 20

_WAVE_PCM = 0x0001
_WAVE_FLOAT = 0x0003
_WAVE_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip must be mono (1-D samples)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class SpectrogramConfig:
    """Framing and Mel parameters.

    ``padding`` controls how the clip is extended before framing:
    ``"none"`` frames the raw samples, ``"center"`` reflects ``n_fft // 2``
    samples at both ends and ``"end"`` appends ``n_fft - hop`` zeros so that every
    hop-aligned segment of the clip starts a frame.
    """

    n_fft: int = 2048
    hop: int = 512
    window: str = "hann"
    n_mels: int = 128
    f_min: float = 0.0
    f_max: float | None = None
    log_floor: float = 1e-10
    padding: str = "none"

    def validate(self, sample_rate: float | None = None) -> None:
        if self.n_fft <= 0 or not (0 < self.hop <= self.n_fft):
            raise ValueError(f"need 0 < hop <= n_fft, got hop={self.hop} n_fft={self.n_fft}")
        if self.window not in ("hann", "rectangular"):
            raise ValueError(f"unknown window {self.window!r}")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.padding not in ("none", "center", "end"):
            raise ValueError(f"unknown padding {self.padding!r}")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        if sample_rate is not None:
            f_max = self.resolved_f_max(sample_rate)
            if not (0 <= self.f_min < f_max <= sample_rate / 2):
                raise ValueError(f"need f_min < f_max <= sr/2, got {self.f_min}, {f_max}")

    def resolved_f_max(self, sample_rate: float) -> float:
        return sample_rate / 2 if self.f_max is None else self.f_max

    def n_frames(self, n_samples: int) -> int:
        n = n_samples + self._pad_total()
        if n < self.n_fft:
            return 0
        return 1 + (n - self.n_fft) // self.hop

    def _pad_total(self) -> int:
        if self.padding == "center":
            return 2 * (self.n_fft // 2)
        if self.padding == "end":
            return self.n_fft - self.hop
        return 0


@dataclass(frozen=True)
class Frontend:
    """A named front-end: target sample rate, STFT/Mel config and window length."""

    name: str
    sample_rate: int
    config: SpectrogramConfig
    window_s: float | None = None


L3NET_FRONTEND = Frontend(
    "l3net",
    48000,
    SpectrogramConfig(n_fft=2048, hop=242, n_mels=256, f_min=0.0, f_max=None, padding="center"),
    window_s=1.0,
)
VGGISH_FRONTEND = Frontend(
    "vggish",
    16000,
    SpectrogramConfig(n_fft=400, hop=160, n_mels=64, f_min=125.0, f_max=7500.0, padding="end"),
    window_s=0.96,
)
MFCC_FRONTEND = Frontend(
    "mfcc",
    22050,
    SpectrogramConfig(n_fft=2048, hop=441, n_mels=128, f_min=0.0, f_max=None, padding="center"),
)


def l3net_frontend(n_mels: int = 256) -> Frontend:
    return replace(L3NET_FRONTEND, config=replace(L3NET_FRONTEND.config, n_mels=n_mels))


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray  # [n_mels, n_frames]
    config: SpectrogramConfig

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class MfccMatrix:
    coeffs: np.ndarray  # [20, n_frames]
    deltas: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape[0] != N_MFCC or self.coeffs.shape != self.deltas.shape:
            raise ValueError(f"MFCC matrices must be [{N_MFCC} x n_frames] with matching deltas")

    @property
    def n_frames(self) -> int:
        return self.coeffs.shape[1]


# --------------------------------------------------------------------------
# WAV I/O


def _parse_fmt(body: bytes):
    if len(body) < 16:
        raise CorruptContainer("fmt chunk too short")
    tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
    if tag == _WAVE_EXTENSIBLE:
        if len(body) < 40:
            raise CorruptContainer("extensible fmt chunk too short")
        tag = struct.unpack("<H", body[24:26])[0]
    return tag, channels, rate, bits


def load_audio(path) -> AudioClip:
    """Decode a RIFF/WAVE file (PCM16 or float32, mono or stereo) to a mono clip."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise CorruptContainer(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        size = struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body_start = pos + 8
        if body_start + size > len(raw):
            raise CorruptContainer(f"{path}: chunk {cid!r} declares {size} bytes, "
                                   f"only {len(raw) - body_start} present")
        body = raw[body_start:body_start + size]
        if cid == b"fmt ":
            fmt = _parse_fmt(body)
        elif cid == b"data":
            data = body
        pos = body_start + size + (size & 1)
    if fmt is None or data is None:
        raise CorruptContainer(f"{path}: missing fmt or data chunk")

    tag, channels, rate, bits = fmt
    if tag == _WAVE_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _WAVE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedFormat(f"{path}: format tag {tag:#06x} with {bits}-bit samples")
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{path}: {channels} channels")
    if rate <= 0:
        raise CorruptContainer(f"{path}: sample rate {rate}")

    frame_bytes = dtype.itemsize * channels
    if len(data) % frame_bytes:
        raise CorruptContainer(f"{path}: data length {len(data)} not a multiple of {frame_bytes}")
    if not data:
        raise EmptyAudio(f"{path}: no samples")

    x = np.frombuffer(data, dtype=dtype).astype(np.float64) * scale
    x = x.reshape(-1, channels).mean(axis=1)
    if not np.all(np.isfinite(x)):
        raise CorruptContainer(f"{path}: non-finite samples")
    return AudioClip(np.clip(x, -1.0, 1.0), rate, source_id=path.stem)


def wav_duration(path) -> float:
    """Duration in seconds read from the WAV header without decoding samples."""
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(12)
        if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
            raise CorruptContainer(f"{path}: not a RIFF/WAVE file")
        fmt = None
        while True:
            hdr = fh.read(8)
            if len(hdr) < 8:
                raise CorruptContainer(f"{path}: missing fmt or data chunk")
            cid, size = hdr[:4], struct.unpack("<I", hdr[4:])[0]
            if cid == b"fmt ":
                fmt = _parse_fmt(fh.read(size))
                fh.seek(size & 1, 1)
            elif cid == b"data":
                if fmt is None:
                    raise CorruptContainer(f"{path}: data chunk before fmt")
                _, channels, rate, bits = fmt
                return size / (channels * (bits // 8) * rate)
            else:
                fh.seek(size + (size & 1), 1)


def write_wav(path, samples, sample_rate: int, *, subtype: str = "pcm16") -> None:
    """Write mono (1-D) or multi-channel ([n, channels]) samples as WAV."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    channels = x.shape[1]
    if subtype == "pcm16":
        payload = np.clip(np.round(x * 32767.0), -32768, 32767).astype("<i2").tobytes()
        tag, bits = _WAVE_PCM, 16
    elif subtype == "float32":
        payload = x.astype("<f4").tobytes()
        tag, bits = _WAVE_FLOAT, 32
    else:
        raise ValueError(f"unknown subtype {subtype!r}")
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, sample_rate, sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


# --------------------------------------------------------------------------
# resampling and framing


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited rate conversion using a Kaiser-windowed sinc polyphase filter."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return clip
    ratio = Fraction(int(target_rate), int(clip.sample_rate))
    n_out = int(round(len(clip.samples) * target_rate / clip.sample_rate))
    y = resample_poly(clip.samples, ratio.numerator, ratio.denominator)
    if len(y) >= n_out:
        y = y[:n_out]
    else:
        y = np.pad(y, (0, n_out - len(y)))
    return AudioClip(y, int(target_rate), clip.source_id)


def _window_count(n_samples: int, win: int, hop: float) -> int:
    # tolerance absorbs binary representation error in hop_s * sample_rate
    return 1 + int(math.floor((n_samples - win) / hop + 1e-9))


def frame_windows(clip: AudioClip, window_s: float, hop_s: float) -> list[AudioClip]:
    """Cut a clip into fixed-length windows; window i starts at floor(i * hop_s * sr)."""
    if window_s <= 0 or hop_s <= 0:
        raise ValueError("window_s and hop_s must be positive")
    sr = clip.sample_rate
    win = int(round(window_s * sr))
    hop = hop_s * sr
    if win > len(clip.samples):
        raise ClipShorterThanWindow(
            f"clip of {clip.duration:.3f} s is shorter than the {window_s} s window")
    count = _window_count(len(clip.samples), win, hop)
    out = []
    for i in range(count):
        start = int(math.floor(i * hop + 1e-9))
        out.append(AudioClip(clip.samples[start:start + win], sr, f"{clip.source_id}#{i}"))
    return out


# --------------------------------------------------------------------------
# spectral analysis


def _window(kind: str, n: int) -> np.ndarray:
    if kind == "rectangular":
        return np.ones(n)
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _padded(samples: np.ndarray, config: SpectrogramConfig) -> np.ndarray:
    if config.padding == "center":
        # reflect, so a stationary signal gives identical edge frames
        p = config.n_fft // 2
        return np.pad(samples, (p, p), mode="reflect")
    if config.padding == "end":
        return np.pad(samples, (0, config.n_fft - config.hop))
    return samples


def stft(clip: AudioClip, config: SpectrogramConfig) -> np.ndarray:
    """Complex STFT, shape [n_fft/2 + 1, n_frames]."""
    config.validate()
    x = _padded(clip.samples, config)
    if len(x) < config.n_fft:
        raise ClipTooShort(f"{len(clip.samples)} samples cannot fill one {config.n_fft}-point frame")
    frames = np.lib.stride_tricks.sliding_window_view(x, config.n_fft)[::config.hop]
    return np.fft.rfft(frames * _window(config.window, config.n_fft), axis=1).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _triangle_integral(x, lo, mid, hi):
    """Integral of the unit-peak triangle (lo, mid, hi) from -inf to x."""
    x = np.clip(x, lo, hi)
    rise = np.where(x <= mid, (x - lo) ** 2 / (2 * (mid - lo)), (mid - lo) / 2)
    fall = np.where(x > mid, (hi - mid) / 2 - (hi - x) ** 2 / (2 * (hi - mid)), 0.0)
    return rise + fall


def mel_filterbank(config: SpectrogramConfig, sample_rate: float) -> np.ndarray:
    """Triangular Mel filterbank, shape [n_mels, n_fft/2 + 1].

    Filter peaks sit at Mel-equally-spaced frequencies between f_min and f_max.
    Each weight is the mean of the triangle over the bin's frequency cell
    [f_k - df/2, f_k + df/2], so filters narrower than one FFT bin still
    receive weight instead of vanishing between bin centres.
    """
    config.validate(sample_rate)
    f_max = config.resolved_f_max(sample_rate)
    n_bins = config.n_fft // 2 + 1
    df = sample_rate / config.n_fft
    centres = np.arange(n_bins) * df
    edges_lo, edges_hi = centres - df / 2, centres + df / 2

    hz = mel_to_hz(np.linspace(hz_to_mel(config.f_min), hz_to_mel(f_max), config.n_mels + 2))
    lo, mid, hi = hz[:-2, None], hz[1:-1, None], hz[2:, None]
    if np.any(mid <= lo) or np.any(hi <= mid):
        raise DegenerateBank("Mel band edges collapse; reduce n_mels")
    fb = (_triangle_integral(edges_hi, lo, mid, hi) - _triangle_integral(edges_lo, lo, mid, hi)) / df
    fb = np.maximum(fb, 0.0)
    empty = np.flatnonzero(fb.sum(axis=1) <= 0)
    if empty.size:
        raise DegenerateBank(f"{empty.size} Mel filters have no spectral support (first: {empty[0]})")
    return fb


def log_mel_spectrogram(clip: AudioClip, config: SpectrogramConfig) -> MelSpectrogram:
    power = np.abs(stft(clip, config)) ** 2
    mel = mel_filterbank(config, clip.sample_rate) @ power
    return MelSpectrogram(np.log(np.maximum(mel, config.log_floor)), config)


def frontend_mel(clip: AudioClip, frontend: Frontend) -> MelSpectrogram:
    """Resample to the front-end's rate, then compute its log-Mel spectrogram."""
    return log_mel_spectrogram(resample(clip, frontend.sample_rate), frontend.config)


def deltas(x: np.ndarray) -> np.ndarray:
    """Centred first difference along time with edge replication."""
    padded = np.concatenate([x[:, :1], x, x[:, -1:]], axis=1)
    return (padded[:, 2:] - padded[:, :-2]) / 2.0


def mfcc(clip: AudioClip, config: SpectrogramConfig = MFCC_FRONTEND.config) -> MfccMatrix:
    """20 DCT-II (orthonormal) coefficients per log-Mel frame, plus their deltas."""
    if config.n_mels < N_MFCC:
        raise ValueError(f"need at least {N_MFCC} Mel bands for MFCC, got {config.n_mels}")
    mel = log_mel_spectrogram(clip, config).values
    coeffs = dct(mel, type=2, axis=0, norm="ortho")[:N_MFCC]
    return MfccMatrix(coeffs, deltas(coeffs))


def mfcc_summary(m: MfccMatrix, *, include_delta2: bool = False) -> np.ndarray:
    """Mean and population std over time of the static and delta coefficients.

    Layout: [mean(coeffs), std(coeffs), mean(deltas), std(deltas)] and, with
    ``include_delta2``, the same two blocks for delta-deltas appended.
    """
    if m.n_frames < 2:
        raise TooFewFrames(f"need >= 2 frames, got {m.n_frames}")
    blocks = [m.coeffs, m.deltas]
    if include_delta2:
        blocks.append(deltas(m.deltas))
    stats = []
    for b in blocks:
        # std is shift invariant; shifting by the first frame makes constant rows exactly 0
        stats += [b.mean(axis=1), (b - b[:, :1]).std(axis=1)]
    return np.concatenate(stats)


def mfcc_features(clip: AudioClip, frontend: Frontend = MFCC_FRONTEND) -> np.ndarray:
    """The 80-dimensional MFCC baseline vector for one clip."""
    return mfcc_summary(mfcc(resample(clip, frontend.sample_rate), frontend.config))
