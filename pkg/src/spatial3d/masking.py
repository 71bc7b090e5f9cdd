"""Time-frequency masks, resynthesis and separation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import Spectrogram, istft, lps
from .features import active_bins

METRIC_CLAMP_DB = 60.0


def _magnitudes(spec):
    return np.abs(spec.data if isinstance(spec, Spectrogram) else np.asarray(spec))


def ideal_ratio_mask(target_spec, interf_spec, eps: float = 1e-8) -> np.ndarray:
    """``|S_t| / (|S_t| + |S_i| + eps)``."""
    st, si = _magnitudes(target_spec), _magnitudes(interf_spec)
    if st.shape != si.shape:
        raise ValueError(f"shape mismatch: {st.shape} vs {si.shape}")
    return st / (st + si + eps)


def sf_mask(sf: np.ndarray, n_pairs: int, sharpness: float = 10.0, threshold: float = 0.5) -> np.ndarray:
    """Logistic mask ``sigmoid(sharpness * (SF / P - threshold))``."""
    if sharpness <= 0:
        raise ValueError("sharpness must be positive")
    z = sharpness * (np.asarray(sf, dtype=float) / n_pairs - threshold)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def apply_mask(mix_spec: Spectrogram, mask: np.ndarray, length: int | None = None) -> np.ndarray:
    """Resynthesise ``mask * mix_spec`` (a single-channel spectrogram)."""
    mask = np.asarray(mask, dtype=float)
    if mask.shape != mix_spec.data.shape:
        raise ValueError(f"mask shape {mask.shape} != spectrogram shape {mix_spec.data.shape}")
    if mask.size and (mask.min() < 0 or mask.max() > 1):
        raise ValueError("mask values must lie in [0, 1]")
    return istft(mix_spec.with_data(mix_spec.data * mask), length)


def _projection_ratio(estimate, reference, zero_mean: bool) -> float:
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ref.shape}")
    if zero_mean:
        est = est - est.mean()
        ref = ref - ref.mean()
    ref_energy = np.dot(ref, ref)
    if ref_energy == 0:
        raise ValueError("reference signal is zero")
    target = np.dot(est, ref) / ref_energy * ref
    noise = est - target
    t, e = np.dot(target, target), np.dot(noise, noise)
    if t == 0:
        return -METRIC_CLAMP_DB
    if e == 0:
        return METRIC_CLAMP_DB
    return float(np.clip(10.0 * np.log10(t / e), -METRIC_CLAMP_DB, METRIC_CLAMP_DB))


def si_snr(estimate, reference) -> float:
    """Scale-invariant SNR in dB (means removed, clamped to +-60 dB)."""
    return _projection_ratio(estimate, reference, zero_mean=True)


def sdr(estimate, reference) -> float:
    """Projection SDR in dB: like :func:`si_snr` but without removing the means."""
    return _projection_ratio(estimate, reference, zero_mean=False)


def sf_contrast(sf: np.ndarray, target_spec, interf_spec, range_db: float = 40.0) -> float:
    """Mean SF over target-dominated bins minus mean SF over interferer-dominated bins.

    Only bins whose dominant source lies within ``range_db`` of the loudest
    bin of either source count.
    """
    st, si = _magnitudes(target_spec), _magnitudes(interf_spec)
    sf = np.asarray(sf)
    if not st.shape == si.shape == sf.shape:
        raise ValueError(f"shape mismatch: SF {sf.shape}, target {st.shape}, interferer {si.shape}")
    gate = active_bins(lps(np.maximum(st, si)), range_db)
    tgt = gate & (st > si)
    itf = gate & (si > st)
    if not tgt.any() or not itf.any():
        raise ValueError("no active bins dominated by one of the sources")
    return float(sf[tgt].mean() - sf[itf].mean())


@dataclass
class SeparationResult:
    estimate: np.ndarray
    si_snr_db: float
    sdr_db: float
    baseline_si_snr_db: float


def separate(mix_spec: Spectrogram, mask: np.ndarray, reference: np.ndarray, mixture: np.ndarray) -> SeparationResult:
    est = apply_mask(mix_spec, mask, len(reference))
    return SeparationResult(est, si_snr(est, reference), sdr(est, reference), si_snr(mixture, reference))
