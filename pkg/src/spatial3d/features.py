"""IPD, spatial feature (SF) and the two concatenated feature layouts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import Spectrogram, StftConfig, lfb, lps, mel_filterbank, stft
from .geometry import (
    MicPair,
    MicrophoneArray,
    SourceLocation,
    Tpd,
    as_pairs,
    tpd_1d,
    tpd_3d,
)

PIPELINED_LAYOUT = "pipelined_2056"
ALL_IN_ONE_LAYOUT = "all_in_one_241"
CUSTOM_LAYOUT = "custom"

_EXPECTED_MANIFESTS = {
    PIPELINED_LAYOUT: [("LPS", 257), ("IPD", 1542), ("SF", 257)],
    ALL_IN_ONE_LAYOUT: [("LFB", 40), ("SF", 201)],
}


@dataclass
class Ipd:
    """Raw phase differences ``angle(Y[m1]) - angle(Y[m2])``, shape ``(P, T, F)``."""

    data: np.ndarray
    pairs: tuple[MicPair, ...]

    def wrapped(self) -> np.ndarray:
        """Values folded into ``(-pi, pi]``, for display."""
        return wrap_phase(self.data)


def wrap_phase(x):
    x = np.asarray(x)
    w = np.angle(np.exp(1j * x))
    return np.where(w <= -np.pi, w + 2 * np.pi, w)


def ipd(specs, pairs) -> Ipd:
    """Interchannel phase differences of the selected mic pairs.

    ``specs`` is either a multichannel :class:`Spectrogram` of shape
    ``(M, T, F)`` or a sequence of single-channel ones.
    """
    pairs = as_pairs(pairs)
    if isinstance(specs, Spectrogram):
        data = np.asarray(specs.data)
        if data.ndim != 3:
            raise ValueError(f"expected (M, T, F) spectrogram, got shape {data.shape}")
    else:
        specs = list(specs)
        shapes = {s.data.shape for s in specs}
        if len(shapes) != 1:
            raise ValueError(f"channel spectrograms differ in shape: {sorted(shapes)}")
        if len({s.config for s in specs}) != 1:
            raise ValueError("channel spectrograms use different STFT configs")
        data = np.stack([s.data for s in specs])
    n_ch = data.shape[0]
    for p in pairs:
        if p.m1 >= n_ch or p.m2 >= n_ch:
            raise ValueError(f"pair ({p.m1}, {p.m2}) out of range for {n_ch} channels")
    phase = np.angle(data)
    out = np.stack([phase[p.m1] - phase[p.m2] for p in pairs])
    return Ipd(out, pairs)


def spatial_feature(ipd_: Ipd, tpd: Tpd, normalize: bool = False) -> np.ndarray:
    """Sum over pairs of the cosine similarity between TPD and IPD unit phasors.

    Returns a ``(T, F)`` array in ``[-P, P]``, or ``[-1, 1]`` when
    ``normalize`` divides by the pair count.
    """
    if tuple(ipd_.pairs) != tuple(tpd.pairs):
        raise ValueError("IPD and TPD were computed for different mic pairs")
    if ipd_.data.shape[-1] != tpd.data.shape[-1]:
        raise ValueError(
            f"IPD has {ipd_.data.shape[-1]} bins, TPD has {tpd.data.shape[-1]}"
        )
    # <e^a, e^b> = cos a cos b + sin a sin b = cos(a - b)
    sf = np.cos(tpd.data[:, None, :] - ipd_.data).sum(axis=0)
    if normalize:
        sf /= len(tpd.pairs)
    return sf


@dataclass
class FeatureMatrix:
    data: np.ndarray
    layout: str
    manifest: list[tuple[str, int]]

    def __post_init__(self):
        self.manifest = [(str(n), int(d)) for n, d in self.manifest]
        if self.data.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {self.data.shape}")
        width = sum(d for _, d in self.manifest)
        if width != self.data.shape[1]:
            raise ValueError(f"manifest width {width} != data width {self.data.shape[1]}")
        expected = _EXPECTED_MANIFESTS.get(self.layout)
        if expected is not None and self.manifest != expected:
            raise ValueError(f"layout {self.layout} requires manifest {expected}, got {self.manifest}")
        if self.layout not in _EXPECTED_MANIFESTS and self.layout != CUSTOM_LAYOUT:
            raise ValueError(f"unknown layout {self.layout!r}")

    @property
    def shape(self):
        return self.data.shape

    def block(self, name: str) -> np.ndarray:
        start = 0
        for block_name, dim in self.manifest:
            if block_name == name:
                return self.data[:, start : start + dim]
            start += dim
        raise KeyError(f"no block named {name!r}; have {[n for n, _ in self.manifest]}")


def assemble_pipelined(lps: np.ndarray, ipd_: Ipd, sf: np.ndarray) -> FeatureMatrix:
    """``[LPS | IPD pair 1 | ... | IPD pair P | SF]`` for the 512-point front-end."""
    lps = np.asarray(lps)
    n_frames, n_bins = lps.shape
    if n_bins != 257:
        raise ValueError(f"pipelined layout needs 257 bins, got {n_bins}")
    if ipd_.data.shape != (6, n_frames, n_bins):
        raise ValueError(f"IPD shape {ipd_.data.shape} incompatible with ({6}, {n_frames}, {n_bins})")
    if sf.shape != (n_frames, n_bins):
        raise ValueError(f"SF shape {sf.shape} incompatible with LPS {lps.shape}")
    ipd_block = np.transpose(ipd_.data, (1, 0, 2)).reshape(n_frames, -1)
    data = np.concatenate([lps, ipd_block, sf], axis=1)
    return FeatureMatrix(data, PIPELINED_LAYOUT, list(_EXPECTED_MANIFESTS[PIPELINED_LAYOUT]))


def assemble_all_in_one(lfb: np.ndarray, sf: np.ndarray) -> FeatureMatrix:
    """``[LFB(40) | SF(201)]`` for the 400-point front-end."""
    lfb = np.asarray(lfb)
    if sf.shape[-1] != 201:
        raise ValueError(f"all-in-one layout needs SF with 201 bins, got {sf.shape[-1]}")
    if lfb.shape[-1] != 40:
        raise ValueError(f"all-in-one layout needs 40 mel bands, got {lfb.shape[-1]}")
    if lfb.shape[0] != sf.shape[0]:
        raise ValueError(f"frame count mismatch: LFB {lfb.shape[0]} vs SF {sf.shape[0]}")
    data = np.concatenate([lfb, sf], axis=1)
    return FeatureMatrix(data, ALL_IN_ONE_LAYOUT, list(_EXPECTED_MANIFESTS[ALL_IN_ONE_LAYOUT]))


def active_bins(target_lps: np.ndarray, range_db: float = 40.0) -> np.ndarray:
    """Bins whose power lies within ``range_db`` of the loudest bin."""
    drop = range_db * np.log(10.0) / 10.0
    return target_lps > target_lps.max() - drop


def extract_features(
    mixture: np.ndarray,
    array: MicrophoneArray,
    target: SourceLocation,
    cfg: StftConfig,
    pairs,
    tpd_mode: str = "3d",
    sample_rate: int = 16000,
    sound_speed: float = 343.0,
    reference_channel: int = 0,
) -> FeatureMatrix:
    """Feature matrix of an ``(M, L)`` mixture for the given target location.

    A 257-bin front-end gives the pipelined layout, a 201-bin one the
    all-in-one layout.
    """
    if tpd_mode == "1d":
        tpd = tpd_1d(target.azimuth, pairs, array, cfg.n_bins, sample_rate, sound_speed)
    elif tpd_mode == "3d":
        if not target.is_complete:
            raise ValueError("3D TPD needs the target's elevation and distance")
        tpd = tpd_3d(target, pairs, array, cfg.n_bins, sample_rate, sound_speed)
    else:
        raise ValueError(f"unknown TPD mode {tpd_mode!r}")
    spec = stft(mixture, cfg, sample_rate)
    phase = ipd(spec, tpd.pairs)
    sf = spatial_feature(phase, tpd)
    ref = spec.channel(reference_channel)
    if cfg.n_bins == 257:
        return assemble_pipelined(lps(ref), phase, sf)
    if cfg.n_bins == 201:
        fb = mel_filterbank(40, cfg.fft_size, sample_rate)
        return assemble_all_in_one(lfb(ref, fb), sf)
    raise ValueError(f"no feature layout for a {cfg.fft_size}-point FFT")
