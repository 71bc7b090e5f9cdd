"""Framing, STFT/iSTFT, log power spectrum and log mel filterbank energies.

Waveforms are plain float arrays whose last axis is time, so an
``(M, L)`` multichannel signal transforms into an ``(M, T, F)`` spectrogram.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True)
class StftConfig:
    """Frame geometry of a short-time Fourier transform.

    Parameters
    ----------
    window_len : int
        Analysis window length in samples.
    hop : int
        Frame advance in samples.
    fft_size : int
        DFT length, ``>= window_len``. Frames are zero-padded up to it.
    window_kind : str
        Only ``"sqrt_hann"`` (periodic) is supported.
    """

    window_len: int
    hop: int
    fft_size: int
    window_kind: str = "sqrt_hann"

    def __post_init__(self):
        if self.window_len < 2 or self.hop < 1:
            raise ValueError(f"invalid frame geometry: window_len={self.window_len}, hop={self.hop}")
        if self.fft_size < self.window_len:
            raise ValueError(f"fft_size {self.fft_size} < window_len {self.window_len}")
        if self.window_kind != "sqrt_hann":
            raise ValueError(f"unsupported window kind {self.window_kind!r}")
        # a periodic sqrt-Hann has a zero at n=0, so hop == window_len leaves holes
        if self.hop >= self.window_len:
            raise ValueError(
                f"hop {self.hop} must be smaller than window_len {self.window_len} for overlap-add"
            )

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window(self) -> np.ndarray:
        n = np.arange(self.window_len)
        return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.window_len))

    def n_frames(self, n_samples: int) -> int:
        """Frames start at ``t * hop``; the tail is zero-padded so no sample is dropped."""
        if n_samples <= 0:
            raise ValueError("empty signal")
        return 1 + max(0, math.ceil((n_samples - self.window_len) / self.hop))

    def as_dict(self) -> dict:
        return {
            "window_len": self.window_len,
            "hop": self.hop,
            "fft_size": self.fft_size,
            "window_kind": self.window_kind,
        }

    @classmethod
    def from_ms(cls, window_ms: float, hop_ms: float, sample_rate: int, fft_size: int | None = None):
        win = int(round(window_ms * sample_rate / 1000.0))
        hop = int(round(hop_ms * sample_rate / 1000.0))
        return cls(win, hop, fft_size or win)


# 32 ms / 16 ms at 16 kHz with a 512-point FFT (separation front-end)
PIPELINED = StftConfig(512, 256, 512)
# 25 ms / 10 ms at 16 kHz with a 400-point FFT (ASR front-end)
ALL_IN_ONE = StftConfig(400, 160, 400)


@dataclass
class Spectrogram:
    """Complex STFT of one or more channels, shape ``(..., T, F)``."""

    data: np.ndarray
    config: StftConfig
    sample_rate: int
    n_samples: int | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_frames(self) -> int:
        return self.data.shape[-2]

    def channel(self, m: int) -> "Spectrogram":
        return Spectrogram(self.data[m], self.config, self.sample_rate, self.n_samples)

    def with_data(self, data: np.ndarray) -> "Spectrogram":
        return Spectrogram(data, self.config, self.sample_rate, self.n_samples)


def frame_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Cut ``x`` (..., L) into zero-padded frames (..., T, window_len)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    n_frames = cfg.n_frames(n)
    padded_len = (n_frames - 1) * cfg.hop + cfg.window_len
    pad = [(0, 0)] * (x.ndim - 1) + [(0, padded_len - n)]
    xp = np.pad(x, pad)
    idx = np.arange(n_frames)[:, None] * cfg.hop + np.arange(cfg.window_len)[None, :]
    return xp[..., idx]


def stft(x, cfg: StftConfig, sample_rate: int = 16000) -> Spectrogram:
    """Windowed one-sided DFT of every frame.

    ``data[..., t, k] = sum_n x[t*hop + n] w[n] exp(-2j*pi*k*n/fft_size)``.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0 or x.shape[-1] == 0:
        raise ValueError("cannot transform an empty signal")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains NaN or Inf")
    if sample_rate <= 0:
        raise ValueError(f"sample_rate must be positive, got {sample_rate}")
    frames = frame_signal(x, cfg) * cfg.window()
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=-1)
    return Spectrogram(spec, cfg, sample_rate, x.shape[-1])


def _synthesis_norm(cfg: StftConfig, n_frames: int) -> np.ndarray:
    w2 = cfg.window() ** 2
    total = (n_frames - 1) * cfg.hop + cfg.window_len
    wsum = np.zeros(total)
    for t in range(n_frames):
        wsum[t * cfg.hop : t * cfg.hop + cfg.window_len] += w2
    # steady-state level of the summed squared window; edges are never boosted past it
    steady = np.zeros(cfg.window_len + cfg.hop)
    for start in range(0, len(steady), cfg.hop):
        seg = w2[: len(steady) - start]
        steady[start : start + len(seg)] += seg
    floor = steady[cfg.window_len - cfg.hop : cfg.window_len].min()
    return np.maximum(wsum, floor)


def istft(spec: Spectrogram, length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`.

    Synthesis uses the same sqrt-Hann window and divides by the summed
    squared window, so any hop below the window length works. Samples
    covered by a full set of frames (see :func:`interior`) are
    reconstructed exactly.
    """
    cfg = spec.config
    data = np.asarray(spec.data)
    n_frames = data.shape[-2]
    frames = np.fft.irfft(data, n=cfg.fft_size, axis=-1)[..., : cfg.window_len]
    frames = frames * cfg.window()
    total = (n_frames - 1) * cfg.hop + cfg.window_len
    out = np.zeros(data.shape[:-2] + (total,))
    for t in range(n_frames):
        out[..., t * cfg.hop : t * cfg.hop + cfg.window_len] += frames[..., t, :]
    out /= _synthesis_norm(cfg, n_frames)
    if length is None:
        length = spec.n_samples if spec.n_samples is not None else total
    if length > total:
        out = np.pad(out, [(0, 0)] * (out.ndim - 1) + [(0, length - total)])
    return out[..., :length]


def interior(cfg: StftConfig, n_samples: int) -> slice:
    """Samples at least one window away from either end of the signal."""
    return slice(cfg.window_len, max(cfg.window_len, n_samples - cfg.window_len))


def lps(spec: Spectrogram | np.ndarray, floor_eps: float = DEFAULT_FLOOR) -> np.ndarray:
    """Log power spectrum ``log(max(|Y|^2, floor_eps))``."""
    if floor_eps <= 0:
        raise ValueError("floor_eps must be positive")
    data = spec.data if isinstance(spec, Spectrogram) else np.asarray(spec)
    return np.log(np.maximum(np.abs(data) ** 2, floor_eps))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray
    fmin: float
    fmax: float

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def centers_hz(self) -> np.ndarray:
        edges = mel_to_hz(np.linspace(hz_to_mel(self.fmin), hz_to_mel(self.fmax), self.n_mels + 2))
        return edges[1:-1]


def mel_filterbank(
    n_mels: int = 40,
    fft_size: int = 400,
    sample_rate: int = 16000,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> MelFilterbank:
    """Triangular filters equally spaced on the HTK mel scale.

    A filter narrower than one DFT bin would come out all-zero; such a
    filter is given unit weight at its nearest bin instead.
    """
    fmax = sample_rate / 2.0 if fmax is None else fmax
    if not 0.0 <= fmin < fmax <= sample_rate / 2.0:
        raise ValueError(f"invalid band [{fmin}, {fmax}] for sample rate {sample_rate}")
    n_bins = fft_size // 2 + 1
    freqs = np.arange(n_bins) * sample_rate / fft_size
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    weights = np.zeros((n_mels, n_bins))
    for j in range(n_mels):
        lo, mid, hi = edges[j], edges[j + 1], edges[j + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        weights[j] = np.maximum(0.0, np.minimum(rising, falling))
        if not weights[j].any():
            weights[j, int(np.argmin(np.abs(freqs - mid)))] = 1.0
    return MelFilterbank(weights, fmin, fmax)


def lfb(spec: Spectrogram | np.ndarray, fb: MelFilterbank, floor_eps: float = DEFAULT_FLOOR) -> np.ndarray:
    """Log mel filterbank energies, shape ``(..., T, n_mels)``."""
    if floor_eps <= 0:
        raise ValueError("floor_eps must be positive")
    data = spec.data if isinstance(spec, Spectrogram) else np.asarray(spec)
    if data.shape[-1] != fb.weights.shape[1]:
        raise ValueError(
            f"spectrogram has {data.shape[-1]} bins but filterbank expects {fb.weights.shape[1]}"
        )
    energy = (np.abs(data) ** 2) @ fb.weights.T
    return np.log(np.maximum(energy, floor_eps))
