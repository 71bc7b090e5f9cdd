"""Seeded speech-like test signals.

Clean-speech corpora are not bundled, so scenes can be driven by a
synthetic talker: syllable-rate bursts of a glottal-like harmonic series
shaped by three formant resonances, with short fricative noise bursts and
pauses. What matters for masking experiments is that the energy is sparse
and moves in time and frequency the way speech does, so that two talkers
rarely dominate the same bin.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, sosfilt


def _formant_gain(freqs, formants, bandwidths):
    g = np.zeros_like(freqs)
    for fc, bw in zip(formants, bandwidths):
        g += 1.0 / (1.0 + ((freqs - fc) / (0.5 * bw)) ** 2)
    return g


def synthetic_speech(seed: int, duration: float = 3.0, sample_rate: int = 16000) -> np.ndarray:
    """Return a speech-like waveform of ``duration`` seconds at RMS 0.1."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    out = np.zeros(n)
    f0_base = rng.uniform(90.0, 240.0)
    t = int(rng.uniform(0.02, 0.15) * sample_rate)
    nyq = sample_rate / 2.0
    while t < n:
        seg = int(rng.uniform(0.10, 0.32) * sample_rate)
        seg = min(seg, n - t)
        if seg < 32:
            break
        tt = np.arange(seg) / sample_rate
        env = np.sin(np.pi * np.arange(seg) / seg) ** 0.7
        if rng.random() < 0.8:
            glide = rng.uniform(-0.25, 0.25)
            f0 = f0_base * (1.0 + glide * tt / tt[-1]) * (1.0 + 0.01 * rng.standard_normal())
            phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
            formants = (rng.uniform(300, 900), rng.uniform(900, 2400), rng.uniform(2400, 3600))
            bws = (rng.uniform(60, 120), rng.uniform(80, 160), rng.uniform(120, 250))
            n_harm = int(nyq / f0.max())
            k = np.arange(1, n_harm + 1)
            amp = _formant_gain(k * f0.mean(), formants, bws) / k**0.5
            burst = (amp[:, None] * np.sin(k[:, None] * phase[None, :])).sum(axis=0)
        else:
            lo = rng.uniform(1500, 4000)
            hi = min(lo * rng.uniform(1.5, 2.5), nyq * 0.95)
            sos = butter(4, [lo, hi], "bandpass", fs=sample_rate, output="sos")
            burst = sosfilt(sos, rng.standard_normal(seg))
            burst *= 0.5
        burst /= np.sqrt(np.mean(burst**2)) + 1e-12
        out[t : t + seg] += env * burst * rng.uniform(0.4, 1.0)
        t += seg + int(rng.exponential(0.08) * sample_rate) + int(0.02 * sample_rate)
    rms = np.sqrt(np.mean(out**2))
    if rms == 0:
        out[n // 2] = 1.0
        rms = np.sqrt(np.mean(out**2))
    return out / rms * 0.1


def resolve_signal(ref: str, duration: float = 3.0, sample_rate: int = 16000) -> np.ndarray:
    """Materialise a ``"synth:<seed>:<index>"`` signal reference."""
    kind, _, rest = ref.partition(":")
    if kind != "synth":
        raise ValueError(f"cannot synthesise signal reference {ref!r}")
    seed, _, index = rest.partition(":")
    return synthetic_speech(int(seed) * 1000 + int(index or 0), duration, sample_rate)
